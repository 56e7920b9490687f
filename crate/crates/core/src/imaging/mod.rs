//! Image format sniffing, bounded JPEG normalization and average hashing.
//!
//! All pixel arithmetic here is integer-only so hashes and resized output
//! are bit-identical across platforms.

mod ahash;
mod normalize;
mod sniff;

use thiserror::Error;

pub use ahash::{average_hash, hamming, luma, AHash64};
pub use normalize::{
    box_resize, decode, encode_jpeg, fit_dims, normalize, normalize_pixels, JPEG_QUALITY,
};
pub use sniff::{gif_frame_count, sniff_format, ImageFormat};

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image format {0:?} cannot be converted")]
    Unconvertible(ImageFormat),
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("cannot encode JPEG: {0}")]
    Encode(String),
    #[error("pixel buffer of {len} bytes does not match {width}x{height} RGB")]
    BadBuffer { width: usize, height: usize, len: usize },
}

/// Row-major RGB8 pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelBuffer {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl PixelBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || pixels.len() != width * height * 3 {
            return Err(ImagingError::BadBuffer {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(PixelBuffer {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    /// Integer nearest-neighbour upscale: every pixel becomes a
    /// `factor x factor` block.
    pub fn replicate(&self, factor: usize) -> PixelBuffer {
        let factor = factor.max(1);
        let w = self.width * factor;
        let h = self.height * factor;
        let mut out = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            let src_row = (y / factor) * self.width;
            for x in 0..w {
                let i = (src_row + x / factor) * 3;
                out.extend_from_slice(&self.pixels[i..i + 3]);
            }
        }
        PixelBuffer {
            width: w,
            height: h,
            pixels: out,
        }
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("consistent buffer")
            .write_to(&mut out, image::ImageFormat::Png)
            .expect("PNG encoding to memory");
        out.into_inner()
    }
}
