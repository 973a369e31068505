//! 8-bit PGM reading and writing (P2 ASCII and P5 binary, maxval 255).

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::scalar::Scalar;

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("byte {offset}: {kind}")]
pub struct PgmError {
    pub offset: usize,
    pub kind: PgmErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PgmErrorKind {
    #[error("bad magic number, expected P2 or P5")]
    BadMagic,
    #[error("expected {0}")]
    ExpectedNumber(&'static str),
    #[error("{0} does not fit in 32 bits")]
    Overflow(&'static str),
    #[error("{0} must be positive")]
    ZeroDimension(&'static str),
    #[error("image of {0} pixels is too large")]
    TooLarge(u64),
    #[error("unsupported maxval {0}; only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("missing whitespace after maxval")]
    MissingSeparator,
    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("sample {0} exceeds maxval 255")]
    SampleOutOfRange(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmMode {
    /// `P2`, ASCII samples.
    Ascii,
    /// `P5`, one byte per sample.
    Binary,
}

const MAX_PIXELS: u64 = 1 << 28;

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, kind: PgmErrorKind) -> PgmError {
        PgmError { offset: self.pos, kind }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&c) = self.data.get(self.pos) {
            if c == b'#' {
                while let Some(&c) = self.data.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Unsigned decimal token, or `None` at end of input.
    fn number(&mut self, what: &'static str) -> Result<Option<u32>, PgmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        if start >= self.data.len() {
            return Ok(None);
        }
        let mut value: u64 = 0;
        while let Some(&c) = self.data.get(self.pos) {
            if !c.is_ascii_digit() {
                break;
            }
            value = value * 10 + u64::from(c - b'0');
            if value > u64::from(u32::MAX) {
                return Err(PgmError {
                    offset: start,
                    kind: PgmErrorKind::Overflow(what),
                });
            }
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err(PgmErrorKind::ExpectedNumber(what)));
        }
        if let Some(&c) = self.data.get(self.pos) {
            if !c.is_ascii_whitespace() && c != b'#' {
                return Err(self.err(PgmErrorKind::ExpectedNumber(what)));
            }
        }
        Ok(Some(value as u32))
    }

    fn header_number(&mut self, what: &'static str) -> Result<u32, PgmError> {
        self.number(what)?.ok_or_else(|| self.err(PgmErrorKind::ExpectedNumber(what)))
    }
}

/// Decode a PGM byte buffer into `(width, height, samples)`.
pub fn decode(data: &[u8]) -> Result<(usize, usize, Vec<u8>), PgmError> {
    let mut cur = Cursor { data, pos: 0 };
    let mode = match data.get(..2) {
        Some(b"P2") => PgmMode::Ascii,
        Some(b"P5") => PgmMode::Binary,
        _ => return Err(cur.err(PgmErrorKind::BadMagic)),
    };
    cur.pos = 2;
    if let Some(&c) = data.get(2) {
        if !c.is_ascii_whitespace() && c != b'#' {
            return Err(cur.err(PgmErrorKind::BadMagic));
        }
    }
    let width_at = cur.pos;
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    if width == 0 || height == 0 {
        return Err(PgmError {
            offset: width_at,
            kind: PgmErrorKind::ZeroDimension(if width == 0 { "width" } else { "height" }),
        });
    }
    let pixels = u64::from(width) * u64::from(height);
    if pixels > MAX_PIXELS {
        return Err(PgmError {
            offset: width_at,
            kind: PgmErrorKind::TooLarge(pixels),
        });
    }
    let maxval_at = {
        cur.skip_space_and_comments();
        cur.pos
    };
    let maxval = cur.header_number("maxval")?;
    if maxval != 255 {
        return Err(PgmError {
            offset: maxval_at,
            kind: PgmErrorKind::UnsupportedMaxval(maxval),
        });
    }
    let n = pixels as usize;
    let samples = match mode {
        PgmMode::Binary => {
            match data.get(cur.pos) {
                Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
                _ => return Err(cur.err(PgmErrorKind::MissingSeparator)),
            }
            let available = data.len() - cur.pos;
            if available < n {
                return Err(PgmError {
                    offset: data.len(),
                    kind: PgmErrorKind::Truncated {
                        expected: n,
                        found: available,
                    },
                });
            }
            data[cur.pos..cur.pos + n].to_vec()
        }
        PgmMode::Ascii => {
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let at = {
                    cur.skip_space_and_comments();
                    cur.pos
                };
                match cur.number("sample")? {
                    Some(v) if v > 255 => {
                        return Err(PgmError {
                            offset: at,
                            kind: PgmErrorKind::SampleOutOfRange(v),
                        })
                    }
                    Some(v) => out.push(v as u8),
                    None => {
                        return Err(cur.err(PgmErrorKind::Truncated {
                            expected: n,
                            found: out.len(),
                        }))
                    }
                }
            }
            out
        }
    };
    Ok((width as usize, height as usize, samples))
}

/// Round half away from zero and clamp to `[0, 255]`.
pub fn quantize<T: Scalar>(v: T) -> u8 {
    v.round().max(T::zero()).min(T::of(255.0)).to_u8().unwrap_or(0)
}

pub fn encode(width: usize, height: usize, samples: &[u8], mode: PgmMode) -> Vec<u8> {
    debug_assert_eq!(samples.len(), width * height);
    let magic = match mode {
        PgmMode::Ascii => "P2",
        PgmMode::Binary => "P5",
    };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    match mode {
        PgmMode::Binary => out.extend_from_slice(samples),
        PgmMode::Ascii => {
            for row in samples.chunks(width) {
                for chunk in row.chunks(16) {
                    let line: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
                    out.extend_from_slice(line.join(" ").as_bytes());
                    out.push(b'\n');
                }
            }
        }
    }
    out
}

pub fn parse_pgm<T: Scalar>(data: &[u8]) -> Result<Image<T>, PgmError> {
    let (w, h, samples) = decode(data)?;
    Ok(Image::from_vec_unchecked(
        h,
        w,
        samples.into_iter().map(|v| T::of(f64::from(v))).collect(),
    ))
}

pub fn encode_pgm<T: Scalar>(image: &Image<T>, mode: PgmMode) -> Vec<u8> {
    let samples: Vec<u8> = image.data().iter().map(|&v| quantize(v)).collect();
    encode(image.cols(), image.rows(), &samples, mode)
}

pub fn read_pgm<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|source| Error::Pgm {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_pgm<T: Scalar>(image: &Image<T>, path: impl AsRef<Path>, mode: PgmMode) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(image, mode)).map_err(|e| Error::io(path, e))
}

/// Black (0) for distrusted pixels, white (255) for trusted ones.
pub fn mask_samples(mask: &Mask) -> Vec<u8> {
    mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect()
}

pub fn write_mask_pgm(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(mask.cols(), mask.rows(), &mask_samples(mask), PgmMode::Binary);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Pixels at or above 128 read as trusted.
pub fn read_mask_pgm(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, samples) = decode(&bytes).map_err(|source| Error::Pgm {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Mask::from_vec_unchecked(h, w, samples.into_iter().map(|v| v >= 128).collect()))
}

/// 8-bit grayscale, non-interlaced PNG rendering of a mask.
#[cfg(feature = "png")]
pub fn write_mask_png(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), mask.cols() as u32, mask.rows() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(&mask_samples(mask)).map_err(to_io)?;
    writer.finish().map_err(to_io)
}
