use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::PixelBuffer;

/// 64-bit average hash. Bit `b = row * 8 + col` of the 8x8 grid is stored
/// most-significant first, so block (0, 0) is the top bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AHash64(pub u64);

impl AHash64 {
    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }

    pub fn hamming(self, other: AHash64) -> u32 {
        (self.0 ^ other.0).count_ones()
    }
}

impl fmt::Display for AHash64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for AHash64 {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(AHash64)
    }
}

impl Serialize for AHash64 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for AHash64 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn hamming(a: AHash64, b: AHash64) -> u32 {
    a.hamming(b)
}

/// Integer luma: (299 R + 587 G + 114 B + 500) div 1000.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u32 {
    (299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b) + 500) / 1000
}

/// Row or column bounds of block `i` out of `n` over `len` pixels:
/// `floor(i * len / n) .. floor((i + 1) * len / n)`.
#[inline]
pub(crate) fn block_bounds(i: usize, n: usize, len: usize) -> (usize, usize) {
    (i * len / n, (i + 1) * len / n)
}

/// Average hash over an 8x8 grid of luma block means.
///
/// Images narrower or shorter than 8 pixels are first pixel-replicated
/// along that axis by `ceil(8 / len)` so every block is non-empty.
pub fn average_hash(img: &PixelBuffer) -> AHash64 {
    let fx = if img.width() < 8 { 8usize.div_ceil(img.width()) } else { 1 };
    let fy = if img.height() < 8 { 8usize.div_ceil(img.height()) } else { 1 };
    let w = img.width() * fx;
    let h = img.height() * fy;

    let lumas: Vec<u32> = img.pixels().chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect();
    let luma_at = |x: usize, y: usize| lumas[(y / fy) * img.width() + x / fx];

    let mut means = [0u64; 64];
    for i in 0..8 {
        let (y0, y1) = block_bounds(i, 8, h);
        for j in 0..8 {
            let (x0, x1) = block_bounds(j, 8, w);
            let mut sum = 0u64;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += u64::from(luma_at(x, y));
                }
            }
            let area = ((y1 - y0) * (x1 - x0)) as u64;
            means[i * 8 + j] = sum / area;
        }
    }
    let global = means.iter().sum::<u64>() / 64;
    let bits = means
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > global)
        .fold(0u64, |acc, (b, _)| acc | (1u64 << (63 - b)));
    AHash64(bits)
}
