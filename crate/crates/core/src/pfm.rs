//! Grayscale Portable Float Map (`Pf`) rasters.
//!
//! Files are written little-endian (scale `-1.0`) with rows stored bottom to
//! top, as the format prescribes. Big-endian grayscale files are accepted on
//! read. Color (`PF`) files are rejected.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::ScalarField;

pub fn encode(field: &ScalarField) -> Vec<u8> {
    let (w, h) = (field.width(), field.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(field.get(x, y) as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ScalarField> {
    let malformed = |reason: &str| Error::Malformed {
        format: "PFM",
        reason: reason.to_string(),
    };

    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    // Header: magic, width, height, scale; each separated by whitespace, with
    // exactly one whitespace byte before the raster.
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| malformed("non-ASCII header"))?);
    }
    if pos >= bytes.len() {
        return Err(malformed("missing raster"));
    }
    pos += 1;

    match tokens[0] {
        "Pf" => {}
        "PF" => return Err(malformed("color PFM is not supported")),
        other => {
            return Err(Error::BadMagic {
                expected: "Pf",
                found: other.to_string(),
            })
        }
    }
    let width: usize = tokens[1].parse().map_err(|_| malformed("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| malformed("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| malformed("bad scale"))?;
    if width == 0 || height == 0 {
        return Err(malformed("zero dimension"));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(malformed("scale must be nonzero"));
    }
    let little = scale < 0.0;

    let expected = width * height * 4;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: raster.len(),
        });
    }

    let mut data = vec![0.0; width * height];
    for (i, chunk) in raster[..expected].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (row_from_bottom, x) = (i / width, i % width);
        data[(height - 1 - row_from_bottom) * width + x] = v as f64;
    }
    ScalarField::new(width, height, data)
}

pub fn write(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(field)).map_err(|e| Error::file(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode(&bytes)
}
