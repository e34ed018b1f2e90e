//! Binary PPM (P6, maxval 255) images as `(1, 3, h, w)` tensors in `[0, 1]`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Maps `[0, 1]` to `0..=255`, rounding half to even.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

pub fn encode_ppm<T: Scalar>(image: &Tensor<T>) -> Result<Vec<u8>> {
    let s = image.shape();
    if s.n() != 1 || s.c() != 3 {
        return Err(Error::invalid(
            "encode_ppm",
            format!("expected one RGB image, got shape {s}"),
        ));
    }
    let mut out = format!("P6\n{} {}\n255\n", s.w(), s.h()).into_bytes();
    out.reserve(3 * s.plane());
    for y in 0..s.h() {
        for x in 0..s.w() {
            for c in 0..3 {
                out.push(quantize(image.at([0, c, y, x]).as_f64()));
            }
        }
    }
    Ok(out)
}

struct Header<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.buf.get(self.pos) {
            if b == b'#' {
                while self.buf.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.buf.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::PpmHeader(format!("missing or invalid {what}")))
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor<f32>> {
    if !bytes.starts_with(b"P6") {
        return Err(Error::PpmHeader("not a binary PPM (P6)".into()));
    }
    let mut h = Header { buf: bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(Error::PpmHeader(format!("maxval {maxval} is not 255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::PpmHeader(format!("empty image {width}x{height}")));
    }
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::PpmHeader("no whitespace after maxval".into()));
    }
    let data = &bytes[h.pos + 1..];
    let expected = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| Error::PpmHeader("image too large".into()))?;
    if data.len() < expected {
        return Err(Error::PpmTruncated {
            expected,
            got: data.len(),
        });
    }
    Ok(Tensor::from_fn([1, 3, height, width], |[_, c, y, x]| {
        data[(y * width + x) * 3 + c] as f32 / 255.0
    }))
}

pub fn save_ppm<T: Scalar>(image: &Tensor<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_ppm(image)?).map_err(|e| Error::io(path, e))
}

pub fn load_ppm(path: &Path) -> Result<Tensor<f32>> {
    decode_ppm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
