use image::codecs::jpeg::JpegEncoder;
use image::ExtendedColorType;

use super::ahash::block_bounds;
use super::sniff::sniff_format;
use super::{ImagingError, PixelBuffer};

pub const JPEG_QUALITY: u8 = 90;

/// Target dimensions for a bounded resize: unchanged when both sides fit,
/// otherwise scaled by `max_dim / max(w, h)` with half-up rounding and a
/// floor of one pixel. Never upscales.
pub fn fit_dims(width: usize, height: usize, max_dim: usize) -> (usize, usize) {
    let longest = width.max(height);
    let max_dim = max_dim.max(1);
    if longest <= max_dim {
        return (width, height);
    }
    // round_half_up(v * max_dim / longest) = floor((2 v max_dim + longest) / (2 longest))
    let scale = |v: usize| ((2 * v * max_dim + longest) / (2 * longest)).max(1);
    (scale(width), scale(height))
}

/// Box-average downscale using the same floor partition as the hash grid.
/// Channel means round half up.
pub fn box_resize(img: &PixelBuffer, width: usize, height: usize) -> PixelBuffer {
    if (width, height) == (img.width(), img.height()) {
        return img.clone();
    }
    let src_w = img.width();
    let src = img.pixels();
    let mut out = Vec::with_capacity(width * height * 3);
    for i in 0..height {
        let (y0, y1) = block_bounds(i, height, img.height());
        for j in 0..width {
            let (x0, x1) = block_bounds(j, width, src_w);
            let mut sums = [0u64; 3];
            for y in y0..y1 {
                let row = &src[(y * src_w + x0) * 3..(y * src_w + x1) * 3];
                for p in row.chunks_exact(3) {
                    sums[0] += u64::from(p[0]);
                    sums[1] += u64::from(p[1]);
                    sums[2] += u64::from(p[2]);
                }
            }
            let area = ((y1 - y0) * (x1 - x0)) as u64;
            for s in sums {
                out.push(((2 * s + area) / (2 * area)) as u8);
            }
        }
    }
    PixelBuffer::new(width, height, out).expect("dimensions are consistent")
}

/// Decodes any convertible format into RGB8.
pub fn decode(data: &[u8]) -> Result<PixelBuffer, ImagingError> {
    let format = sniff_format(data);
    if !format.is_convertible() {
        return Err(ImagingError::Unconvertible(format));
    }
    let img = image::load_from_memory(data).map_err(|e| ImagingError::Decode(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    PixelBuffer::new(w, h, rgb.into_raw())
}

pub fn encode_jpeg(img: &PixelBuffer) -> Result<Vec<u8>, ImagingError> {
    let mut out = Vec::new();
    JpegEncoder::new_with_quality(&mut out, JPEG_QUALITY)
        .encode(
            img.pixels(),
            img.width() as u32,
            img.height() as u32,
            ExtendedColorType::Rgb8,
        )
        .map_err(|e| ImagingError::Encode(e.to_string()))?;
    Ok(out)
}

/// Resizes an already decoded image to fit `max_dim` and encodes it as
/// baseline JPEG.
pub fn normalize_pixels(img: &PixelBuffer, max_dim: u32) -> Result<Vec<u8>, ImagingError> {
    let (w, h) = fit_dims(img.width(), img.height(), max_dim as usize);
    encode_jpeg(&box_resize(img, w, h))
}

/// Decode, bound to `max_dim`, re-encode as JPEG quality 90.
pub fn normalize(data: &[u8], max_dim: u32) -> Result<Vec<u8>, ImagingError> {
    normalize_pixels(&decode(data)?, max_dim)
}
