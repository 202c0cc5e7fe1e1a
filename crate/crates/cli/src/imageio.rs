//! Image files.
//!
//! Real images are binary PGM (`P5`, maxval 255 or 65535, 16-bit samples
//! big-endian) mapped linearly to `[0, 1]`. Complex grids use CPGF: the
//! magic `CPGF`, little-endian `u32` rows and cols, then `rows * cols`
//! pairs of little-endian `f64` (re, im) in row-major order. CPGF round-trips
//! bit-for-bit.

use std::path::Path;

use prkit_core::{Complex64, ComplexGrid, RealGrid};

use crate::{io_error, Error, Result};

pub const CPGF_MAGIC: &[u8; 4] = b"CPGF";
const CPGF_HEADER_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImageError {
    #[error("malformed header at byte offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },

    #[error("truncated payload at byte offset {offset}: expected {expected} bytes in total")]
    Truncated { offset: usize, expected: usize },

    #[error("unsupported maxval {0} (expected 255 or 65535)")]
    UnsupportedMaxval(u32),

    #[error("unrecognized image format")]
    UnknownFormat,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Image {
    Real(RealGrid),
    Complex(ComplexGrid),
}

pub fn encode_cpgf(g: &ComplexGrid) -> Vec<u8> {
    let (rows, cols) = g.shape();
    let mut out = Vec::with_capacity(CPGF_HEADER_LEN + 16 * g.len());
    out.extend_from_slice(CPGF_MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in g.as_slice() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn decode_cpgf(bytes: &[u8]) -> std::result::Result<ComplexGrid, ImageError> {
    if bytes.len() < CPGF_HEADER_LEN {
        if !CPGF_MAGIC.starts_with(&bytes[..bytes.len().min(4)]) {
            return Err(ImageError::Malformed {
                offset: 0,
                reason: "missing CPGF magic".into(),
            });
        }
        return Err(ImageError::Truncated {
            offset: bytes.len(),
            expected: CPGF_HEADER_LEN,
        });
    }
    if &bytes[..4] != CPGF_MAGIC {
        return Err(ImageError::Malformed {
            offset: 0,
            reason: "missing CPGF magic".into(),
        });
    }
    let word =
        |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (rows, cols) = (word(4), word(8));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(16))
        .and_then(|n| n.checked_add(CPGF_HEADER_LEN))
        .ok_or_else(|| ImageError::Malformed {
            offset: 4,
            reason: format!("{rows}x{cols} grid is too large"),
        })?;
    if bytes.len() < expected {
        return Err(ImageError::Truncated {
            offset: bytes.len(),
            expected,
        });
    }
    if bytes.len() > expected {
        return Err(ImageError::Malformed {
            offset: expected,
            reason: format!(
                "{} trailing bytes after the payload",
                bytes.len() - expected
            ),
        });
    }
    let f = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let values = (0..rows * cols)
        .map(|i| {
            let at = CPGF_HEADER_LEN + 16 * i;
            Complex64::new(f(at), f(at + 8))
        })
        .collect();
    ComplexGrid::from_vec(rows, cols, values).map_err(|e| ImageError::Malformed {
        offset: 4,
        reason: e.to_string(),
    })
}

/// Values are clamped to `[0, 1]` and quantized to `maxval` levels.
pub fn encode_pgm(g: &RealGrid, maxval: u16) -> std::result::Result<Vec<u8>, ImageError> {
    if maxval != 255 && maxval != 65535 {
        return Err(ImageError::UnsupportedMaxval(maxval as u32));
    }
    let (rows, cols) = g.shape();
    let mut out = format!("P5\n{cols} {rows}\n{maxval}\n").into_bytes();
    for &v in g.as_slice() {
        let clamped = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        let level = (clamped * maxval as f64).round() as u16;
        if maxval == 255 {
            out.push(level as u8);
        } else {
            out.extend_from_slice(&level.to_be_bytes());
        }
    }
    Ok(out)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&c) = self.bytes.get(self.pos) {
            if c == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<u32, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Malformed {
                offset: start,
                reason: format!("expected {what}"),
            })
    }
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<RealGrid, ImageError> {
    if !bytes.starts_with(b"P5") {
        return Err(ImageError::Malformed {
            offset: 0,
            reason: "missing P5 magic".into(),
        });
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let cols = cur.number("width")? as usize;
    let rows = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval != 255 && maxval != 65535 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the samples
    match bytes.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(ImageError::Malformed {
                offset: cur.pos,
                reason: "expected whitespace after maxval".into(),
            })
        }
    }
    if rows == 0 || cols == 0 {
        return Err(ImageError::Malformed {
            offset: 2,
            reason: format!("empty {cols}x{rows} image"),
        });
    }
    let width = if maxval == 255 { 1 } else { 2 };
    let expected = cur.pos + rows * cols * width;
    if bytes.len() < expected {
        return Err(ImageError::Truncated {
            offset: bytes.len(),
            expected,
        });
    }
    let data = &bytes[cur.pos..expected];
    let scale = 1.0 / maxval as f64;
    let values = if width == 1 {
        data.iter().map(|&p| p as f64 * scale).collect()
    } else {
        data.chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]) as f64 * scale)
            .collect()
    };
    RealGrid::from_vec(rows, cols, values).map_err(|e| ImageError::Malformed {
        offset: 2,
        reason: e.to_string(),
    })
}

pub fn decode_image(bytes: &[u8]) -> std::result::Result<Image, ImageError> {
    if bytes.starts_with(CPGF_MAGIC) {
        decode_cpgf(bytes).map(Image::Complex)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(bytes).map(Image::Real)
    } else {
        Err(ImageError::UnknownFormat)
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(io_error(path))
}

fn image_error(path: &Path) -> impl FnOnce(ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_image(path: &Path) -> Result<Image> {
    decode_image(&read_bytes(path)?).map_err(image_error(path))
}

pub fn read_cpgf(path: &Path) -> Result<ComplexGrid> {
    decode_cpgf(&read_bytes(path)?).map_err(image_error(path))
}

pub fn read_pgm(path: &Path) -> Result<RealGrid> {
    decode_pgm(&read_bytes(path)?).map_err(image_error(path))
}

pub fn write_cpgf(path: &Path, g: &ComplexGrid) -> Result<()> {
    std::fs::write(path, encode_cpgf(g)).map_err(io_error(path))
}

pub fn write_pgm(path: &Path, g: &RealGrid, maxval: u16) -> Result<()> {
    let bytes = encode_pgm(g, maxval).map_err(image_error(path))?;
    std::fs::write(path, bytes).map_err(io_error(path))
}
