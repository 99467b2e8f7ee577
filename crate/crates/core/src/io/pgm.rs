//! Binary PGM (P5) reading and writing, plus PNG behind the `png` feature.
//!
//! Only 8-bit grayscale is accepted as input. A 16-bit PGM writer is
//! provided for structure-code visualizations.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::GrayImage;

/// Reads an 8-bit grayscale image. `.png` files need the `png` feature;
/// everything else is parsed as PGM.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    if is_png(path) {
        return load_png(path);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|reason| Error::format(path, reason))
}

/// Writes `img` as binary PGM, or PNG for a `.png` path.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_png(path) {
        return save_png(img, path);
    }
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

/// Writes 16-bit samples as a binary PGM with maxval 65535.
pub fn save_pgm16(width: usize, height: usize, samples: &[u16], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if samples.len() != width * height {
        return Err(Error::dimension(width * height, samples.len()));
    }
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &v in samples {
        out.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

/// Parses a binary PGM. Samples are taken as stored when maxval < 255.
pub fn parse_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut header = Header { bytes, pos: 0 };
    let magic = header.token().ok_or("empty file")?;
    match magic {
        b"P5" => {}
        b"P2" => return Err("ASCII PGM (P2) is not supported; use binary P5".into()),
        b"P3" | b"P6" => return Err("color images are not supported".into()),
        _ => return Err("not a PGM file (missing P5 magic)".into()),
    }
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if maxval == 0 {
        return Err("maxval must be positive".into());
    }
    if maxval > 255 {
        return Err(format!("unsupported depth: maxval {maxval} (only 8-bit PGM is supported)"));
    }
    // Exactly one whitespace byte separates the header from the samples.
    let start = header.pos + 1;
    let need = width
        .checked_mul(height)
        .ok_or_else(|| format!("image size {width}x{height} overflows"))?;
    let payload = bytes.get(start..).unwrap_or(&[]);
    if payload.len() < need {
        return Err(format!("truncated payload: expected {need} bytes, found {}", payload.len()));
    }
    if let Some(&v) = payload[..need].iter().find(|&&v| v as usize > maxval) {
        return Err(format!("sample {v} exceeds maxval {maxval}"));
    }
    GrayImage::new(width, height, payload[..need].to_vec()).map_err(|e| e.to_string())
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    /// Next whitespace-delimited token, skipping `#` comments.
    fn token(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        let tok = self.token().ok_or_else(|| format!("header ends before {what}"))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad {what} `{}`", String::from_utf8_lossy(tok)))
    }
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

#[cfg(feature = "png")]
fn load_png(path: &Path) -> Result<GrayImage> {
    use image::{ColorType, ImageReader};
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| Error::format(path, e.to_string()))?;
    if decoded.color() != ColorType::L8 {
        return Err(Error::format(
            path,
            format!("unsupported PNG color type {:?}; need 8-bit grayscale", decoded.color()),
        ));
    }
    let gray = decoded.into_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    GrayImage::new(w, h, gray.into_raw())
}

#[cfg(feature = "png")]
fn save_png(img: &GrayImage, path: &Path) -> Result<()> {
    image::save_buffer(
        path,
        img.pixels(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(not(feature = "png"))]
fn load_png(path: &Path) -> Result<GrayImage> {
    Err(Error::format(path, "PNG support is not enabled (build with the `png` feature)"))
}

#[cfg(not(feature = "png"))]
fn save_png(_img: &GrayImage, path: &Path) -> Result<()> {
    Err(Error::format(path, "PNG support is not enabled (build with the `png` feature)"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_hand_built_file() {
        let bytes = b"P5\n# made by hand\n2 2\n255\n\x00\x7f\x80\xff";
        let img = parse_pgm(bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0, 127, 128, 255]);
    }

    #[test]
    fn payload_may_start_with_whitespace_bytes() {
        let bytes = b"P5 1 2 255\n\x0a\x20";
        assert_eq!(parse_pgm(bytes).unwrap().pixels(), &[10, 32]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let err = |b: &[u8]| parse_pgm(b).unwrap_err();
        assert!(err(b"P5\n1 1\n65535\n\x00\x00").contains("unsupported depth"));
        assert!(err(b"P6\n1 1\n255\n\x00\x00\x00").contains("color"));
        assert!(err(b"P2\n1 1\n255\n0").contains("P2"));
        assert!(err(b"P5\n2 2\n255\n\x00").contains("truncated"));
        assert!(err(b"P5\n2 x\n255\n").contains("bad height"));
        assert!(err(b"").contains("empty"));
        assert!(err(b"P5\n1 1\n15\n\x20").contains("exceeds maxval"));
    }

    #[test]
    fn encode_parse_round_trip() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 50 + y) as u8).unwrap();
        assert_eq!(parse_pgm(&encode_pgm(&img)).unwrap(), img);
    }
}
