//! Per-filter Gaussian-mixture coefficient distributions.
//!
//! Each filter `i` carries `M` component means `c_i^j` and one shared variance
//! `σ_i²`. A distribution over a coefficient is a set of mixture weights on the
//! probability simplex; ground-truth coefficients map to soft targets.

mod gmm;
mod kmeans;

pub use gmm::{decode_model, encode_model, read_model, write_model};
pub use kmeans::{kmeans_1d, kmeans_1d_fit, within_cluster_ss, KMeansFit, MAX_ITERATIONS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::filter_bank::{analyze, FilterBank};

pub const DEFAULT_COMPONENTS: usize = 64;
pub const VARIANCE_FLOOR: f64 = 1e-8;
/// Lower clamp applied to predicted weights before taking logs.
pub const WEIGHT_CLAMP: f64 = 1e-12;
/// Tolerance on mixture-weight sums accepted when building a [`WeightMap`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_SAMPLE_STRIDE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    num_filters: usize,
    num_components: usize,
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl MixtureModel {
    /// `means` is filter-major (`K × M`); each row must be strictly increasing.
    pub fn new(
        num_filters: usize,
        num_components: usize,
        means: Vec<f64>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        if num_filters == 0 || num_components == 0 {
            return Err(Error::InvalidConfig("mixture model needs K ≥ 1 and M ≥ 1".into()));
        }
        if means.len() != num_filters * num_components || variances.len() != num_filters {
            return Err(Error::ShapeMismatch(format!(
                "model with K={num_filters}, M={num_components} got {} means and {} variances",
                means.len(),
                variances.len()
            )));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixture means"));
        }
        for (i, row) in means.chunks_exact(num_components).enumerate() {
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig(format!(
                    "means of filter {i} are not strictly increasing"
                )));
            }
        }
        if let Some((i, v)) = variances
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidConfig(format!("variance of filter {i} is {v}")));
        }
        Ok(Self {
            num_filters,
            num_components,
            means,
            variances,
        })
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    pub fn means(&self, filter: usize) -> &[f64] {
        let m = self.num_components;
        &self.means[filter * m..(filter + 1) * m]
    }

    pub fn variance(&self, filter: usize) -> f64 {
        self.variances[filter]
    }

    pub fn all_means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn check_covers(&self, filters: &[usize]) -> Result<()> {
        match filters.iter().find(|&&i| i >= self.num_filters) {
            Some(&index) => Err(Error::FilterNotCovered {
                index,
                what: "mixture model",
            }),
            None => Ok(()),
        }
    }

    /// Index of the component mean nearest to `w` (lowest index on ties).
    pub fn nearest_component(&self, filter: usize, w: f64) -> usize {
        // Means are strictly increasing, so only the bracketing pair matters.
        let means = self.means(filter);
        let hi = means.partition_point(|&c| c < w);
        if hi == 0 {
            return 0;
        }
        if hi == means.len() {
            return hi - 1;
        }
        if w - means[hi - 1] <= means[hi] - w {
            hi - 1
        } else {
            hi
        }
    }
}

/// Per-pixel, per-filter mixture weights, stored in single precision.
///
/// Layout is pixel-major (row-major pixels), then filter, then component.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    width: usize,
    height: usize,
    filters: Vec<usize>,
    components: usize,
    weights: Vec<f32>,
}

impl WeightMap {
    /// Validates shape, nonnegativity and simplex sums (within [`SIMPLEX_TOLERANCE`]).
    pub fn new(
        width: usize,
        height: usize,
        filters: Vec<usize>,
        components: usize,
        weights: Vec<f32>,
    ) -> Result<Self> {
        let map = Self::from_parts_unchecked(width, height, filters, components, weights)?;
        map.validate(SIMPLEX_TOLERANCE)?;
        Ok(map)
    }

    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        filters: Vec<usize>,
        components: usize,
        weights: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || components == 0 || filters.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "weight map {width}x{height} with {} filters and {components} components",
                filters.len()
            )));
        }
        let mut sorted = filters.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("duplicate filter index in weight map".into()));
        }
        let expected = width * height * filters.len() * components;
        if weights.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "weight map needs {expected} weights, got {}",
                weights.len()
            )));
        }
        Ok(Self {
            width,
            height,
            filters,
            components,
            weights,
        })
    }

    pub fn validate(&self, tolerance: f64) -> Result<()> {
        let m = self.components;
        let f = self.filters.len();
        for (row_idx, row) in self.weights.chunks_exact(m).enumerate() {
            let (pixel, slot) = (row_idx / f, row_idx % f);
            let mut sum = 0.0f64;
            for &v in row {
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::NegativeWeight {
                        pixel,
                        filter: self.filters[slot],
                        value: v as f64,
                    });
                }
                sum += v as f64;
            }
            if (sum - 1.0).abs() > tolerance {
                return Err(Error::SimplexViolation {
                    pixel,
                    filter: self.filters[slot],
                    sum,
                });
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn filters(&self) -> &[usize] {
        &self.filters
    }

    pub fn num_components(&self) -> usize {
        self.components
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    /// Position of `filter` in this map's filter list.
    pub fn slot_of(&self, filter: usize) -> Option<usize> {
        self.filters.iter().position(|&f| f == filter)
    }

    /// Weight vector for `pixel` (row-major index) and filter slot `slot`.
    #[inline]
    pub fn row(&self, pixel: usize, slot: usize) -> &[f32] {
        let m = self.components;
        let start = (pixel * self.filters.len() + slot) * m;
        &self.weights[start..start + m]
    }

    pub fn same_layout(&self, other: &WeightMap) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.filters == other.filters
            && self.components == other.components
    }
}

/// Best-fit mixture weights for a known coefficient value `w` under filter `i`:
/// `q_j ∝ exp(−(w − c_i^j)² / 2σ_i²)`.
pub fn soft_targets(w: f64, model: &MixtureModel, filter: usize) -> Vec<f64> {
    let inv = 1.0 / (2.0 * model.variance(filter));
    let means = model.means(filter);
    let near = means[model.nearest_component(filter, w)];
    // Relative to the nearest mean, written as a product so huge |w| cannot
    // push every log-weight to -inf.
    let mut q: Vec<f64> = means
        .iter()
        .map(|&c| if c == near { 0.0 } else { -(near - c) * (2.0 * w - c - near) * inv })
        .collect();
    normalize_log_weights(&mut q);
    q
}

/// Exponentiates log-weights in place with max subtraction and normalizes to sum 1.
pub(crate) fn normalize_log_weights(logw: &mut [f64]) {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logw.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logw.iter_mut() {
        *v /= sum;
    }
}

/// Variance-weighted KL divergence between target and predicted weight maps,
/// averaged over pixels and the filters present in the maps.
pub fn kl_loss(predicted: &WeightMap, targets: &WeightMap, model: &MixtureModel) -> Result<f64> {
    if !predicted.same_layout(targets) {
        return Err(Error::ShapeMismatch(
            "predicted and target weight maps differ in layout".into(),
        ));
    }
    model.check_covers(predicted.filters())?;
    if model.num_components() != predicted.num_components() {
        return Err(Error::ShapeMismatch(format!(
            "model has {} components, weight maps have {}",
            model.num_components(),
            predicted.num_components()
        )));
    }
    let mut total = 0.0;
    for pixel in 0..predicted.num_pixels() {
        for (slot, &filter) in predicted.filters().iter().enumerate() {
            let mut kl = 0.0;
            for (&p, &q) in predicted.row(pixel, slot).iter().zip(targets.row(pixel, slot)) {
                let q = q as f64;
                if q > 0.0 {
                    let p = (p as f64).max(WEIGHT_CLAMP);
                    kl += q * (q.ln() - p.ln());
                }
            }
            total += model.variance(filter) * kl;
        }
    }
    Ok(total / (predicted.num_pixels() * predicted.filters().len()) as f64)
}

/// Default minimum assignment count for a cluster to contribute to `σ_i²`.
pub fn default_min_assign(num_samples: usize) -> usize {
    10.max(num_samples / 1000)
}

/// Fits one mixture per filter: K-means centers become component means and
/// `σ_i²` is the average in-cluster variance over clusters with more than
/// `min_assign` members (all nonempty clusters if none qualify), floored at
/// [`VARIANCE_FLOOR`]. `min_assign = None` uses [`default_min_assign`].
pub fn fit_mixture_model(
    coeff_samples: &[Vec<f64>],
    m: usize,
    min_assign: Option<usize>,
    seed: u64,
) -> Result<MixtureModel> {
    if coeff_samples.is_empty() {
        return Err(Error::InvalidConfig("no filters to fit".into()));
    }
    let mut means = Vec::with_capacity(coeff_samples.len() * m);
    let mut variances = Vec::with_capacity(coeff_samples.len());
    for (i, samples) in coeff_samples.iter().enumerate() {
        let fit = kmeans_1d_fit(samples, m, seed.wrapping_add(i as u64))?;
        let threshold = min_assign.unwrap_or_else(|| default_min_assign(samples.len()));
        let average = |pred: &dyn Fn(usize) -> bool| {
            let picked: Vec<f64> = (0..m)
                .filter(|&j| pred(fit.counts[j]))
                .map(|j| fit.variances[j])
                .collect();
            (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
        };
        let var = average(&|c| c > threshold)
            .or_else(|| average(&|c| c > 0))
            .unwrap_or(0.0);
        means.extend_from_slice(&fit.centers);
        variances.push(var.max(VARIANCE_FLOOR));
    }
    MixtureModel::new(coeff_samples.len(), m, means, variances)
}

/// Gathers coefficient samples for every filter of `bank` from a corpus of
/// scene maps, on a `stride × stride` grid whose offset is drawn per map from
/// `seed`.
pub fn collect_samples(
    corpus: &[ScalarField],
    bank: &FilterBank,
    stride: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if corpus.is_empty() {
        return Err(Error::InvalidConfig("empty corpus".into()));
    }
    let stride = stride.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = vec![Vec::new(); bank.len()];
    for y in corpus {
        let ox = rng.random_range(0..stride.min(y.width()));
        let oy = rng.random_range(0..stride.min(y.height()));
        for (i, map) in analyze(y, bank, &bank.all_indices())? {
            for py in (oy..map.height()).step_by(stride) {
                for px in (ox..map.width()).step_by(stride) {
                    samples[i].push(map.get(px, py));
                }
            }
        }
    }
    Ok(samples)
}
