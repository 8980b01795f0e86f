//! Weight-map sources for the globalizer.
//!
//! External predictors hand over per-pixel mixture weights through `OWM1`
//! files. [`synth_predict`] produces the same maps from a ground-truth scene,
//! optionally degraded, so the solver can be exercised without a trained
//! network.
//!
//! `OWM1` layout (little-endian): magic `OWM1`; `u32` width, height, filter
//! count `F`, component count `M`; `F × u32` filter indices; then `f32`
//! weights ordered by pixel (row-major), then filter, then component.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coeff_model::{normalize_log_weights, MixtureModel, WeightMap, SIMPLEX_TOLERANCE};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::filter_bank::{analyze, FilterBank};

const MAGIC: &[u8; 4] = b"OWM1";
const HEADER_LEN: usize = 20;

/// Degradation applied to synthetic weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionConfig {
    /// Probability that a (pixel, filter) slot is replaced by the uniform distribution.
    pub ambiguity_fraction: f64,
    /// Weights are raised to `1 / T` and renormalized.
    pub blur_temperature: f64,
    pub seed: u64,
}

impl CorruptionConfig {
    pub fn none() -> Self {
        Self {
            ambiguity_fraction: 0.0,
            blur_temperature: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ambiguity_fraction) {
            return Err(Error::InvalidConfig(format!(
                "ambiguity fraction {} outside [0, 1]",
                self.ambiguity_fraction
            )));
        }
        if !(self.blur_temperature >= 1.0 && self.blur_temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature {} must be a finite value ≥ 1",
                self.blur_temperature
            )));
        }
        Ok(())
    }
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self::none()
    }
}

/// Generates mixture weights from the true coefficients of `y_true`.
///
/// Every slot starts as the soft target of its true coefficient, is tempered
/// by `blur_temperature`, and is then replaced by the uniform distribution
/// with probability `ambiguity_fraction`. One uniform draw is consumed per
/// slot in storage order, so output depends only on the inputs and the seed.
pub fn synth_predict(
    y_true: &ScalarField,
    bank: &FilterBank,
    model: &MixtureModel,
    subset: &[usize],
    corruption: &CorruptionConfig,
) -> Result<WeightMap> {
    corruption.validate()?;
    bank.check_subset(subset)?;
    model.check_covers(subset)?;

    let coeffs = analyze(y_true, bank, subset)?;
    let m = model.num_components();
    let inv_t = 1.0 / corruption.blur_temperature;
    let uniform = 1.0 / m as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(corruption.seed);
    let mut weights = Vec::with_capacity(y_true.len() * subset.len() * m);
    let mut logw = vec![0.0; m];

    for pixel in 0..y_true.len() {
        for (filter, map) in &coeffs {
            let w = map.values()[pixel];
            let inv_var = inv_t / (2.0 * model.variance(*filter));
            for (lw, &c) in logw.iter_mut().zip(model.means(*filter)) {
                *lw = -(w - c) * (w - c) * inv_var;
            }
            normalize_log_weights(&mut logw);
            let u: f64 = rng.random();
            if u < corruption.ambiguity_fraction {
                weights.extend(std::iter::repeat_n(uniform, m));
            } else {
                weights.extend(logw.iter().map(|&v| v as f32));
            }
        }
    }
    WeightMap::new(y_true.width(), y_true.height(), subset.to_vec(), m, weights)
}

pub fn encode_weight_map(map: &WeightMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * (map.filters().len() + map.weights().len()));
    out.extend_from_slice(MAGIC);
    for v in [map.width(), map.height(), map.filters().len(), map.num_components()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &f in map.filters() {
        out.extend_from_slice(&(f as u32).to_le_bytes());
    }
    for &w in map.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn decode_weight_map(bytes: &[u8]) -> Result<WeightMap> {
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            expected: "OWM1",
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (width, height, nf, m) = (word(1), word(2), word(3), word(4));
    let overflow = || Error::Malformed {
        format: "OWM1",
        reason: "header sizes overflow".into(),
    };
    let count = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(nf))
        .and_then(|v| v.checked_mul(m))
        .ok_or_else(overflow)?;
    let expected = count
        .checked_add(nf)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(overflow)?;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    let filters: Vec<usize> = (0..nf).map(|i| word(5 + i)).collect();
    let start = HEADER_LEN + 4 * nf;
    let weights: Vec<f32> = bytes[start..expected]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let map = WeightMap::from_parts_unchecked(width, height, filters, m, weights)?;
    map.validate(SIMPLEX_TOLERANCE)?;
    Ok(map)
}

pub fn write_weight_map(path: impl AsRef<Path>, map: &WeightMap) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_weight_map(map)).map_err(|e| Error::file(path, e))
}

pub fn read_weight_map(path: impl AsRef<Path>) -> Result<WeightMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_weight_map(&bytes)
}
