//! Per-coefficient updates: initialization from predicted weights and the
//! posterior-mode w-update.

use super::CoefficientStack;
use crate::coeff_model::{MixtureModel, WeightMap};
use crate::error::{Error, Result};
use crate::field::ScalarField;

/// Sets every coefficient to the component mean with the largest predicted
/// weight (lowest component index on ties). Covers every filter in `weights`.
pub fn init_w(weights: &WeightMap, model: &MixtureModel) -> Result<CoefficientStack> {
    check_compatible(weights, model)?;
    let n = weights.num_pixels();
    let mut maps = Vec::with_capacity(weights.filters().len());
    for (slot, &filter) in weights.filters().iter().enumerate() {
        let means = model.means(filter);
        let values = (0..n)
            .map(|p| means[argmax_f32(weights.row(p, slot))])
            .collect();
        maps.push(ScalarField::from_raw(weights.width(), weights.height(), values));
    }
    CoefficientStack::new(weights.filters().to_vec(), maps)
}

pub(crate) fn check_compatible(weights: &WeightMap, model: &MixtureModel) -> Result<()> {
    model.check_covers(weights.filters())?;
    if model.num_components() != weights.num_components() {
        return Err(Error::ShapeMismatch(format!(
            "model has {} components, weight map has {}",
            model.num_components(),
            weights.num_components()
        )));
    }
    Ok(())
}

fn argmax_f32(row: &[f32]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Approximate minimizer of `−log p(w) + β/(2σ²)(w − w̄)²` for one coefficient.
///
/// The product of the mixture with the quadratic coupling is again a mixture
/// with means `(c_j + β w̄)/(1 + β)` and weights
/// `∝ p̂_j exp(−β/(β+1) · (c_j − w̄)² / 2σ²)`; the mean of the heaviest
/// posterior component is returned (lowest index on ties).
pub fn w_step(p_hat: &[f64], w_bar: f64, beta: f64, model: &MixtureModel, filter: usize) -> f64 {
    let terms = p_hat.iter().enumerate().map(|(j, &p)| (j, p.ln()));
    posterior_mode(terms, model.means(filter), model.variance(filter), w_bar, beta)
}

#[inline]
pub(crate) fn posterior_mode(
    log_weights: impl Iterator<Item = (usize, f64)>,
    means: &[f64],
    variance: f64,
    w_bar: f64,
    beta: f64,
) -> f64 {
    let a = beta / (beta + 1.0) / (2.0 * variance);
    let mut best_j = usize::MAX;
    let mut best = f64::NEG_INFINITY;
    for (j, lw) in log_weights {
        let d = means[j] - w_bar;
        let score = lw - a * d * d;
        if score > best || best_j == usize::MAX {
            best = score;
            best_j = j;
        }
    }
    (means[best_j] + beta * w_bar) / (1.0 + beta)
}

/// Sparse log-weights for every (pixel, filter) slot of a weight map, restricted
/// to a filter subset. Components with zero weight are dropped: they can never
/// carry the posterior mode.
pub(crate) struct SlotLogWeights {
    num_slots_per_pixel: usize,
    offsets: Vec<usize>,
    components: Vec<u16>,
    log_weights: Vec<f64>,
}

impl SlotLogWeights {
    pub fn new(weights: &WeightMap, subset: &[usize]) -> Result<Self> {
        let slots: Vec<usize> = subset
            .iter()
            .map(|&f| {
                weights.slot_of(f).ok_or(Error::FilterNotCovered {
                    index: f,
                    what: "weight map",
                })
            })
            .collect::<Result<_>>()?;
        let n = weights.num_pixels() * subset.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut components = Vec::new();
        let mut log_weights = Vec::new();
        offsets.push(0);
        for pixel in 0..weights.num_pixels() {
            for &slot in &slots {
                for (j, &p) in weights.row(pixel, slot).iter().enumerate() {
                    if p > 0.0 {
                        components.push(j as u16);
                        log_weights.push((p as f64).ln());
                    }
                }
                offsets.push(components.len());
            }
        }
        Ok(Self {
            num_slots_per_pixel: subset.len(),
            offsets,
            components,
            log_weights,
        })
    }

    /// Nonzero `(component, log p̂)` pairs of a slot, in component order.
    #[inline]
    pub fn slot(&self, pixel: usize, subset_pos: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let k = pixel * self.num_slots_per_pixel + subset_pos;
        let range = self.offsets[k]..self.offsets[k + 1];
        self.components[range.clone()]
            .iter()
            .map(|&j| j as usize)
            .zip(self.log_weights[range].iter().copied())
    }
}
