//! C ABI over the taxoforge library.
//!
//! Every fallible function returns a [`TfStatus`]; on failure the message is
//! available from [`tf_last_error_message`] on the same thread. Strings
//! returned through out-pointers are owned by the caller and released with
//! [`tf_string_free`]. Handles are opaque and released with their `_free`
//! function; passing NULL to a `_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use taxoforge::classify::Classification;
use taxoforge::config::{Config, ConfigError};
use taxoforge::crawl::{progress_line, Progress};
use taxoforge::eval::topk_accuracy;
use taxoforge::imaging::{self, average_hash, sniff_format, AHash64, ImageFormat, ImagingError, PixelBuffer};
use taxoforge::layout;
use taxoforge::rng::{fnv1a64, Prng};
use taxoforge::store::{StateStore, StoreError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Config = 5,
    Decode = 6,
    Unconvertible = 7,
    CorruptLog = 8,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfImageFormat {
    Jpeg = 0,
    Png = 1,
    GifStatic = 2,
    GifAnimated = 3,
    Bmp = 4,
    Unsupported = 5,
}

impl From<ImageFormat> for TfImageFormat {
    fn from(f: ImageFormat) -> Self {
        match f {
            ImageFormat::Jpeg => TfImageFormat::Jpeg,
            ImageFormat::Png => TfImageFormat::Png,
            ImageFormat::GifStatic => TfImageFormat::GifStatic,
            ImageFormat::GifAnimated => TfImageFormat::GifAnimated,
            ImageFormat::Bmp => TfImageFormat::Bmp,
            ImageFormat::Unsupported => TfImageFormat::Unsupported,
        }
    }
}

/// Opaque loaded configuration.
pub struct TfConfig {
    inner: Config,
}

/// Opaque open state store.
pub struct TfStore {
    inner: StateStore,
}

/// Opaque owned byte buffer.
pub struct TfBuffer {
    bytes: Vec<u8>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(TfStatus, String);

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let status = match e {
            ConfigError::Io { .. } => TfStatus::Io,
            _ => TfStatus::Config,
        };
        Failure(status, e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::CorruptLog(_) => TfStatus::CorruptLog,
            _ => TfStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

impl From<ImagingError> for Failure {
    fn from(e: ImagingError) -> Self {
        let status = match e {
            ImagingError::Unconvertible(_) => TfStatus::Unconvertible,
            ImagingError::BadBuffer { .. } => TfStatus::InvalidArgument,
            _ => TfStatus::Decode,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TfStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TfStatus::NullArgument, format!("{what} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes replaced").into_raw()
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn tf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- config ----

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_config_load(path: *const c_char, out: *mut *mut TfConfig) -> TfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let cfg = Config::load(Path::new(path))?;
        write_out(out, Box::into_raw(Box::new(TfConfig { inner: cfg })), "out")
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_config_from_json(json: *const c_char, out: *mut *mut TfConfig) -> TfStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let cfg = Config::from_json(json)?;
        write_out(out, Box::into_raw(Box::new(TfConfig { inner: cfg })), "out")
    })
}

/// Fully resolved configuration, defaults filled in, as JSON.
///
/// # Safety
/// `cfg` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_config_to_json(cfg: *const TfConfig, out: *mut *mut c_char) -> TfStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        write_out(out, into_c_string(cfg.inner.to_json()), "out")
    })
}

/// # Safety
/// `cfg` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn tf_config_max_dim(cfg: *const TfConfig) -> u32 {
    cfg.as_ref().map_or(0, |c| c.inner.max_dim)
}

/// # Safety
/// `cfg` must be NULL or a handle from `tf_config_*`, freed once.
#[no_mangle]
pub unsafe extern "C" fn tf_config_free(cfg: *mut TfConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// ---- state store ----

/// Opens (or creates) a state log and replays it.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_store_open(path: *const c_char, out: *mut *mut TfStore) -> TfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let store = StateStore::open(Path::new(path))?;
        write_out(out, Box::into_raw(Box::new(TfStore { inner: store })), "out")
    })
}

/// `*inserted` is 1 when the URL was new, 0 otherwise.
///
/// # Safety
/// `store` must be a live handle, `url` a NUL-terminated string, `inserted` valid.
#[no_mangle]
pub unsafe extern "C" fn tf_store_register_url(store: *const TfStore, url: *const c_char, inserted: *mut u8) -> TfStatus {
    guard(|| {
        let store = store.as_ref().ok_or_else(|| null("store"))?;
        let url = str_arg(url, "url")?;
        let fresh = store.inner.register_url(url)?;
        write_out(inserted, fresh as u8, "inserted")
    })
}

/// # Safety
/// `store` must be a live handle, `inserted` valid.
#[no_mangle]
pub unsafe extern "C" fn tf_store_register_hash(store: *const TfStore, hash: u64, inserted: *mut u8) -> TfStatus {
    guard(|| {
        let store = store.as_ref().ok_or_else(|| null("store"))?;
        let fresh = store.inner.register_hash(AHash64(hash))?;
        write_out(inserted, fresh as u8, "inserted")
    })
}

/// Flushes and syncs the log.
///
/// # Safety
/// `store` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tf_store_checkpoint(store: *const TfStore) -> TfStatus {
    guard(|| {
        let store = store.as_ref().ok_or_else(|| null("store"))?;
        Ok(store.inner.checkpoint()?)
    })
}

/// Sizes of the URL and hash registries and the completed-species cursor.
/// Any out-pointer may be NULL.
///
/// # Safety
/// `store` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tf_store_counts(
    store: *const TfStore,
    urls: *mut u64,
    hashes: *mut u64,
    cursor: *mut u64,
) -> TfStatus {
    guard(|| {
        let store = store.as_ref().ok_or_else(|| null("store"))?;
        let snap = store.inner.snapshot();
        if !urls.is_null() {
            urls.write(snap.urls.len() as u64);
        }
        if !hashes.is_null() {
            hashes.write(snap.hashes.len() as u64);
        }
        if !cursor.is_null() {
            cursor.write(snap.cursor);
        }
        Ok(())
    })
}

/// # Safety
/// `store` must be NULL or a handle from `tf_store_open`, freed once.
#[no_mangle]
pub unsafe extern "C" fn tf_store_free(store: *mut TfStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

// ---- imaging ----

/// # Safety
/// `data` must point to `len` readable bytes (or be NULL with `len` 0).
#[no_mangle]
pub unsafe extern "C" fn tf_sniff_format(data: *const u8, len: usize) -> TfImageFormat {
    match bytes_arg(data, len, "data") {
        Ok(b) => sniff_format(b).into(),
        Err(_) => TfImageFormat::Unsupported,
    }
}

/// Average hash of a row-major RGB8 buffer of `width * height * 3` bytes.
///
/// # Safety
/// `rgb` must point to `len` readable bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tf_average_hash_rgb(
    rgb: *const u8,
    len: usize,
    width: u32,
    height: u32,
    out: *mut u64,
) -> TfStatus {
    guard(|| {
        let bytes = bytes_arg(rgb, len, "rgb")?;
        let img = PixelBuffer::new(width as usize, height as usize, bytes.to_vec())?;
        write_out(out, average_hash(&img).0, "out")
    })
}

/// Average hash of an encoded image (JPEG, PNG, static GIF or BMP).
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tf_average_hash_image(data: *const u8, len: usize, out: *mut u64) -> TfStatus {
    guard(|| {
        let bytes = bytes_arg(data, len, "data")?;
        let img = imaging::decode(bytes)?;
        write_out(out, average_hash(&img).0, "out")
    })
}

#[no_mangle]
pub extern "C" fn tf_hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

/// Decodes, bounds to `max_dim` and re-encodes as JPEG.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tf_normalize(data: *const u8, len: usize, max_dim: u32, out: *mut *mut TfBuffer) -> TfStatus {
    guard(|| {
        if max_dim == 0 {
            return Err(Failure(TfStatus::InvalidArgument, "max_dim must be >= 1".into()));
        }
        let bytes = bytes_arg(data, len, "data")?;
        let jpeg = imaging::normalize(bytes, max_dim)?;
        write_out(out, Box::into_raw(Box::new(TfBuffer { bytes: jpeg })), "out")
    })
}

/// Pointer to the buffer contents; `*len` receives the length.
///
/// # Safety
/// `buf` must be a live handle; `len` valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn tf_buffer_data(buf: *const TfBuffer, len: *mut usize) -> *const u8 {
    let Some(buf) = buf.as_ref() else { return ptr::null() };
    if !len.is_null() {
        len.write(buf.bytes.len());
    }
    buf.bytes.as_ptr()
}

/// # Safety
/// `buf` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn tf_buffer_free(buf: *mut TfBuffer) {
    if !buf.is_null() {
        drop(Box::from_raw(buf));
    }
}

// ---- misc ----

/// `"{label} {done}/{total} ({pct}%) elapsed=H:MM:SS eta=H:MM:SS"`.
///
/// # Safety
/// `label` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tf_progress_line(
    done: u64,
    total: u64,
    elapsed_ms: u64,
    label: *const c_char,
    out: *mut *mut c_char,
) -> TfStatus {
    guard(|| {
        let label = str_arg(label, "label")?;
        let line = progress_line(&Progress { done, total, elapsed_ms }, label);
        write_out(out, into_c_string(line), "out")
    })
}

/// Advances the SplitMix64 state in place and returns the next output.
///
/// # Safety
/// `state` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_prng_next(state: *mut u64) -> u64 {
    let Some(s) = state.as_mut() else { return 0 };
    let (v, next) = Prng::new(*s).step();
    *s = next.state();
    v
}

/// # Safety
/// `data` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn tf_fnv1a64(data: *const u8, len: usize) -> u64 {
    bytes_arg(data, len, "data").map_or(0, fnv1a64)
}

/// Top-k accuracy in hundredths of a percent. `ranks[i]` is the 1-based
/// rank of sample i's true label in its prediction, 0 when absent.
///
/// # Safety
/// `ranks` must point to `n` readable values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tf_topk_accuracy(ranks: *const u32, n: usize, k: u32, out: *mut u64) -> TfStatus {
    guard(|| {
        if n == 0 {
            return Err(Failure(TfStatus::InvalidArgument, "empty input".into()));
        }
        if ranks.is_null() {
            return Err(null("ranks"));
        }
        let ranks = std::slice::from_raw_parts(ranks, n);
        let (preds, truths) = ranked_samples(ranks);
        let acc = topk_accuracy(&preds, &truths, k as usize)
            .map_err(|e| Failure(TfStatus::InvalidArgument, e.to_string()))?;
        write_out(out, acc.0, "out")
    })
}

/// Builds one classification per rank with the truth placed at that rank.
fn ranked_samples(ranks: &[u32]) -> (Vec<Classification>, Vec<String>) {
    let depth = ranks.iter().copied().max().unwrap_or(0).max(1) as usize;
    let preds = ranks
        .iter()
        .map(|&r| {
            let mut labels: Vec<String> = (0..depth).map(|i| format!("other{i:06}")).collect();
            if r > 0 {
                labels[r as usize - 1] = "truth".into();
            }
            let n = labels.len() as f64;
            let scores = labels
                .into_iter()
                .enumerate()
                .map(|(i, l)| (l, (n - i as f64) / n))
                .collect();
            Classification::new(scores).expect("distinct labels, scores in range")
        })
        .collect();
    (preds, vec!["truth".to_string(); ranks.len()])
}

/// Dataset statistics as the JSON object `{size_bytes,pictures,categories,avg_pictures}`.
///
/// # Safety
/// `root` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tf_dataset_stats(root: *const c_char, out: *mut *mut c_char) -> TfStatus {
    guard(|| {
        let root = str_arg(root, "root")?;
        let stats = layout::stats(Path::new(root)).map_err(|e| Failure(TfStatus::Io, e.to_string()))?;
        let json = serde_json::to_string(&stats).expect("stats serialize");
        write_out(out, into_c_string(json), "out")
    })
}
