//! Durable crawl state: URL and hash registries, species records and the
//! resume cursor, kept in memory and persisted to an append-only log.
//!
//! Log framing, repeated per record:
//!
//! ```text
//! u32 LE payload length | u8 tag | payload | u32 LE CRC32(tag ++ payload)
//! ```
//!
//! Tags: `U` URL (UTF-8), `H` average hash (u64 LE), `S` species record
//! (JSON), `C` cursor (u64 LE). A torn final record is ignored on replay and
//! cut off when the log is reopened for writing.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use indexmap::IndexMap;
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::AHash64;
use crate::taxonomy::SpeciesEntry;

pub const LOG_FILE_NAME: &str = "state.tflog";

const TAG_URL: u8 = b'U';
const TAG_HASH: u8 = b'H';
const TAG_SPECIES: u8 = b'S';
const TAG_CURSOR: u8 = b'C';

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("state log I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt state log record at byte offset {0}")]
    CorruptLog(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeciesState {
    #[serde(flatten)]
    pub entry: SpeciesEntry,
    pub done: bool,
}

/// In-memory image of the log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StoreSnapshot {
    pub urls: HashSet<String>,
    pub hashes: HashSet<AHash64>,
    pub species: IndexMap<u64, SpeciesState>,
    pub cursor: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Url(String),
    Hash(AHash64),
    Species(SpeciesState),
    Cursor(u64),
}

impl Record {
    pub fn encode(&self, out: &mut Vec<u8>) {
        let (tag, payload): (u8, Vec<u8>) = match self {
            Record::Url(u) => (TAG_URL, u.as_bytes().to_vec()),
            Record::Hash(h) => (TAG_HASH, h.0.to_le_bytes().to_vec()),
            Record::Species(s) => (TAG_SPECIES, serde_json::to_vec(s).expect("species serializes")),
            Record::Cursor(c) => (TAG_CURSOR, c.to_le_bytes().to_vec()),
        };
        let mut crc = crc32fast::Hasher::new();
        crc.update(&[tag]);
        crc.update(&payload);
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.push(tag);
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc.finalize().to_le_bytes());
    }

    fn decode(tag: u8, payload: &[u8]) -> Option<Record> {
        match tag {
            TAG_URL => String::from_utf8(payload.to_vec()).ok().map(Record::Url),
            TAG_HASH => Some(Record::Hash(AHash64(u64::from_le_bytes(payload.try_into().ok()?)))),
            TAG_SPECIES => serde_json::from_slice(payload).ok().map(Record::Species),
            TAG_CURSOR => Some(Record::Cursor(u64::from_le_bytes(payload.try_into().ok()?))),
            _ => None,
        }
    }
}

impl StoreSnapshot {
    pub fn apply(&mut self, record: Record) {
        match record {
            Record::Url(u) => {
                self.urls.insert(u);
            }
            Record::Hash(h) => {
                self.hashes.insert(h);
            }
            Record::Species(s) => {
                self.species.insert(s.entry.species_key, s);
            }
            Record::Cursor(c) => self.cursor = c,
        }
    }

    pub fn done_count(&self) -> u64 {
        self.species.values().filter(|s| s.done).count() as u64
    }

    /// Log bytes that replay to exactly this snapshot.
    pub fn to_log_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for s in self.species.values() {
            Record::Species(s.clone()).encode(&mut out);
        }
        let mut urls: Vec<&String> = self.urls.iter().collect();
        urls.sort();
        for u in urls {
            Record::Url(u.clone()).encode(&mut out);
        }
        let mut hashes: Vec<&AHash64> = self.hashes.iter().collect();
        hashes.sort();
        for h in hashes {
            Record::Hash(*h).encode(&mut out);
        }
        Record::Cursor(self.cursor).encode(&mut out);
        out
    }
}

/// Result of scanning log bytes: the snapshot plus the length of the
/// valid prefix.
#[derive(Debug)]
pub struct Replay {
    pub snapshot: StoreSnapshot,
    pub valid_len: u64,
}

pub fn replay_bytes(data: &[u8]) -> Result<Replay, StoreError> {
    let mut snap = StoreSnapshot::default();
    let mut pos = 0usize;
    while pos < data.len() {
        let rest = &data[pos..];
        if rest.len() < 4 {
            break;
        }
        let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        let total = match len.checked_add(9) {
            Some(t) if t <= rest.len() => t,
            _ => break,
        };
        let tag = rest[4];
        let payload = &rest[5..5 + len];
        let stored = u32::from_le_bytes(rest[5 + len..total].try_into().unwrap());
        let mut crc = crc32fast::Hasher::new();
        crc.update(&[tag]);
        crc.update(payload);
        let is_last = pos + total == data.len();
        let record = if crc.finalize() == stored {
            Record::decode(tag, payload)
        } else {
            None
        };
        match record {
            Some(r) => snap.apply(r),
            None if is_last => break,
            None => return Err(StoreError::CorruptLog(pos as u64)),
        }
        pos += total;
    }
    Ok(Replay {
        snapshot: snap,
        valid_len: pos as u64,
    })
}

pub fn replay(path: &Path) -> Result<StoreSnapshot, StoreError> {
    match std::fs::read(path) {
        Ok(data) => Ok(replay_bytes(&data)?.snapshot),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(StoreSnapshot::default()),
        Err(e) => Err(e.into()),
    }
}

struct Inner {
    snap: StoreSnapshot,
    writer: Option<BufWriter<File>>,
    buf: Vec<u8>,
}

impl Inner {
    fn append(&mut self, record: Record) -> Result<(), StoreError> {
        if let Some(w) = self.writer.as_mut() {
            self.buf.clear();
            record.encode(&mut self.buf);
            w.write_all(&self.buf)?;
        }
        Ok(())
    }

    fn sync(&mut self) -> Result<(), StoreError> {
        if let Some(w) = self.writer.as_mut() {
            w.flush()?;
            w.get_ref().sync_data()?;
        }
        Ok(())
    }
}

/// Thread-safe store. All mutations go through one lock, which also
/// serializes log writes.
pub struct StateStore {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl StateStore {
    /// Opens (or creates) a log, replays it and truncates any torn tail.
    pub fn open(path: &Path) -> Result<StateStore, StoreError> {
        let data = match std::fs::read(path) {
            Ok(d) => d,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let replay = replay_bytes(&data)?;
        if replay.valid_len < data.len() as u64 {
            warn!(
                "discarding {} bytes of torn record at end of {}",
                data.len() as u64 - replay.valid_len,
                path.display()
            );
        }
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let file = OpenOptions::new().create(true).write(true).truncate(false).open(path)?;
        file.set_len(replay.valid_len)?;
        let mut writer = BufWriter::new(file);
        use std::io::Seek;
        writer.seek(io::SeekFrom::End(0))?;
        Ok(StateStore {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner {
                snap: replay.snapshot,
                writer: Some(writer),
                buf: Vec::new(),
            }),
        })
    }

    /// Store without a backing log.
    pub fn in_memory() -> StateStore {
        StateStore {
            path: None,
            inner: Mutex::new(Inner {
                snap: StoreSnapshot::default(),
                writer: None,
                buf: Vec::new(),
            }),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// `true` iff the URL was not yet registered.
    pub fn register_url(&self, url: &str) -> Result<bool, StoreError> {
        let mut inner = self.inner.lock().unwrap();
        if !inner.snap.urls.insert(url.to_string()) {
            return Ok(false);
        }
        inner.append(Record::Url(url.to_string()))?;
        Ok(true)
    }

    pub fn register_hash(&self, hash: AHash64) -> Result<bool, StoreError> {
        let mut inner = self.inner.lock().unwrap();
        if !inner.snap.hashes.insert(hash) {
            return Ok(false);
        }
        inner.append(Record::Hash(hash))?;
        Ok(true)
    }

    pub fn contains_hash(&self, hash: AHash64) -> bool {
        self.inner.lock().unwrap().snap.hashes.contains(&hash)
    }

    /// Adds species not yet known; existing records (and their done
    /// flags) are kept. Returns how many were added.
    pub fn add_species(&self, entries: &[SpeciesEntry]) -> Result<usize, StoreError> {
        let mut inner = self.inner.lock().unwrap();
        let mut added = 0;
        for e in entries {
            if inner.snap.species.contains_key(&e.species_key) {
                continue;
            }
            let state = SpeciesState {
                entry: e.clone(),
                done: false,
            };
            inner.snap.species.insert(e.species_key, state.clone());
            inner.append(Record::Species(state))?;
            added += 1;
        }
        Ok(added)
    }

    /// Flushes buffered records and syncs the log to disk.
    pub fn checkpoint(&self) -> Result<(), StoreError> {
        self.inner.lock().unwrap().sync()
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        self.inner.lock().unwrap().snap.clone()
    }

    pub fn cursor(&self) -> u64 {
        self.inner.lock().unwrap().snap.cursor
    }

    pub fn species(&self) -> Vec<SpeciesState> {
        self.inner.lock().unwrap().snap.species.values().cloned().collect()
    }

    /// Starts a per-species unit of work whose registrations only reach the
    /// log on [`SpeciesTxn::commit`].
    pub fn begin(&self) -> SpeciesTxn<'_> {
        SpeciesTxn {
            store: self,
            urls: Vec::new(),
            hashes: Vec::new(),
            finished: false,
        }
    }
}

/// Registrations made while crawling one species. They are visible to
/// other workers immediately, but are logged together with the species'
/// done flag, so an interrupted species leaves no trace in the log.
pub struct SpeciesTxn<'a> {
    store: &'a StateStore,
    urls: Vec<String>,
    hashes: Vec<AHash64>,
    finished: bool,
}

impl SpeciesTxn<'_> {
    pub fn register_url(&mut self, url: &str) -> bool {
        let mut inner = self.store.inner.lock().unwrap();
        let fresh = inner.snap.urls.insert(url.to_string());
        if fresh {
            self.urls.push(url.to_string());
        }
        fresh
    }

    pub fn register_hash(&mut self, hash: AHash64) -> bool {
        let mut inner = self.store.inner.lock().unwrap();
        let fresh = inner.snap.hashes.insert(hash);
        if fresh {
            self.hashes.push(hash);
        }
        fresh
    }

    /// Logs the pending registrations, marks the species done, advances
    /// the cursor and syncs.
    pub fn commit(mut self, species_key: u64) -> Result<u64, StoreError> {
        self.finished = true;
        let mut inner = self.store.inner.lock().unwrap();
        for u in std::mem::take(&mut self.urls) {
            inner.append(Record::Url(u))?;
        }
        for h in std::mem::take(&mut self.hashes) {
            inner.append(Record::Hash(h))?;
        }
        let cursor = match inner.snap.species.get_mut(&species_key) {
            Some(state) if !state.done => {
                state.done = true;
                let state = state.clone();
                inner.append(Record::Species(state))?;
                inner.snap.cursor += 1;
                let c = inner.snap.cursor;
                inner.append(Record::Cursor(c))?;
                c
            }
            _ => inner.snap.cursor,
        };
        inner.sync()?;
        Ok(cursor)
    }

    /// Forgets the pending registrations.
    pub fn abort(mut self) {
        self.rollback();
    }

    fn rollback(&mut self) {
        if self.finished {
            return;
        }
        self.finished = true;
        let mut inner = self.store.inner.lock().unwrap();
        for u in self.urls.drain(..) {
            inner.snap.urls.remove(&u);
        }
        for h in self.hashes.drain(..) {
            inner.snap.hashes.remove(&h);
        }
    }
}

impl Drop for SpeciesTxn<'_> {
    fn drop(&mut self) {
        self.rollback();
    }
}
