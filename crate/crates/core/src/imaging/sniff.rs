use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ImageFormat {
    Jpeg,
    Png,
    GifStatic,
    GifAnimated,
    Bmp,
    Unsupported,
}

impl ImageFormat {
    pub fn is_convertible(self) -> bool {
        matches!(
            self,
            ImageFormat::Jpeg | ImageFormat::Png | ImageFormat::GifStatic | ImageFormat::Bmp
        )
    }
}

const PNG_MAGIC: &[u8] = &[0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

/// Classifies raw bytes by magic number. A GIF is animated when it holds
/// two or more image descriptors.
pub fn sniff_format(data: &[u8]) -> ImageFormat {
    if data.starts_with(&[0xFF, 0xD8, 0xFF]) {
        ImageFormat::Jpeg
    } else if data.starts_with(PNG_MAGIC) {
        ImageFormat::Png
    } else if data.starts_with(b"GIF87a") || data.starts_with(b"GIF89a") {
        if gif_frame_count(data, 2) >= 2 {
            ImageFormat::GifAnimated
        } else {
            ImageFormat::GifStatic
        }
    } else if data.starts_with(b"BM") && data.len() >= 26 {
        ImageFormat::Bmp
    } else {
        ImageFormat::Unsupported
    }
}

/// Counts image descriptor blocks (0x2C), stopping early at `stop_at`.
/// Truncated or malformed input yields the count seen so far.
pub fn gif_frame_count(data: &[u8], stop_at: usize) -> usize {
    // header (6) + logical screen descriptor (7)
    if data.len() < 13 {
        return 0;
    }
    let mut pos = 13;
    let packed = data[10];
    if packed & 0x80 != 0 {
        pos += 3 * (1usize << ((packed & 0x07) + 1));
    }
    let mut frames = 0;
    while pos < data.len() && frames < stop_at {
        match data[pos] {
            0x2C => {
                frames += 1;
                // separator + 8 bytes of descriptor fields
                let Some(&local) = data.get(pos + 9) else { break };
                pos += 10;
                if local & 0x80 != 0 {
                    pos += 3 * (1usize << ((local & 0x07) + 1));
                }
                // LZW minimum code size
                pos += 1;
                match skip_sub_blocks(data, pos) {
                    Some(p) => pos = p,
                    None => break,
                }
            }
            0x21 => {
                // introducer + label
                match skip_sub_blocks(data, pos + 2) {
                    Some(p) => pos = p,
                    None => break,
                }
            }
            _ => break, // trailer 0x3B or garbage
        }
    }
    frames
}

fn skip_sub_blocks(data: &[u8], mut pos: usize) -> Option<usize> {
    loop {
        let len = *data.get(pos)? as usize;
        pos += 1;
        if len == 0 {
            return Some(pos);
        }
        pos += len;
    }
}
