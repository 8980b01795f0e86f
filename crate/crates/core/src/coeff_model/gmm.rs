//! `GMM1` mixture-model files.
//!
//! Little-endian: magic `GMM1`, `u32 K`, `u32 M`, `K × M` f64 means
//! (filter-major), then `K` f64 variances.

use std::fs;
use std::path::Path;

use super::MixtureModel;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GMM1";

pub fn encode_model(model: &MixtureModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * (model.all_means().len() + model.num_filters()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(model.num_filters() as u32).to_le_bytes());
    out.extend_from_slice(&(model.num_components() as u32).to_le_bytes());
    for v in model.all_means().iter().chain(model.variances()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<MixtureModel> {
    if bytes.len() < 12 {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(bad_magic(&bytes[..4]));
        }
        return Err(Error::TruncatedPayload {
            expected: 12,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(bad_magic(&bytes[..4]));
    }
    let k = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let m = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = k
        .checked_mul(m)
        .and_then(|km| km.checked_add(k))
        .ok_or_else(|| Error::Malformed {
            format: "GMM1",
            reason: "header sizes overflow".into(),
        })?;
    let expected = 12 + 8 * count;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<f64> = bytes[12..expected]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (means, variances) = values.split_at(k * m);
    MixtureModel::new(k, m, means.to_vec(), variances.to_vec())
}

pub fn write_model(path: impl AsRef<Path>, model: &MixtureModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|e| Error::file(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<MixtureModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_model(&bytes)
}

fn bad_magic(found: &[u8]) -> Error {
    Error::BadMagic {
        expected: "GMM1",
        found: String::from_utf8_lossy(found).into_owned(),
    }
}
