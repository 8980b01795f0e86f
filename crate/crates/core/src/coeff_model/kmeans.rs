//! Lloyd's algorithm in one dimension.
//!
//! Samples are sorted once; with sorted centers every cluster is a contiguous
//! run of samples, so assignment is a single merge pass and the partition is
//! described by `M + 1` boundaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;

/// Outcome of a 1-D K-means run, clusters listed in increasing center order.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    /// Strictly increasing cluster centers.
    pub centers: Vec<f64>,
    /// Samples assigned to each center.
    pub counts: Vec<usize>,
    /// Population variance of each cluster about its center (0 for empty clusters).
    pub variances: Vec<f64>,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

/// Runs Lloyd's algorithm and returns the sorted centers.
pub fn kmeans_1d(samples: &[f64], m: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(kmeans_1d_fit(samples, m, seed)?.centers)
}

/// Lloyd's algorithm with quantile initialization at `(j + 0.5) / M`.
///
/// Stops when no assignment changes or after [`MAX_ITERATIONS`]. Ties go to
/// the lower-index center. An empty cluster is re-seeded at the sample
/// farthest from its current center; `seed` breaks ties among equally far
/// samples.
pub fn kmeans_1d_fit(samples: &[f64], m: usize, seed: u64) -> Result<KMeansFit> {
    if m == 0 {
        return Err(Error::InvalidConfig("number of clusters must be at least 1".into()));
    }
    if samples.len() < m {
        return Err(Error::InsufficientSamples {
            samples: samples.len(),
            components: m,
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means samples"));
    }

    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in &sorted {
        acc += v;
        prefix.push(acc);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<f64> = (0..m)
        .map(|j| {
            let q = (j as f64 + 0.5) / m as f64;
            sorted[((q * n as f64).floor() as usize).min(n - 1)]
        })
        .collect();

    let mut history = Vec::new();
    let mut bounds: Vec<usize> = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        let next = assign(&sorted, &centers);
        let sse = objective(&sorted, &centers, &next);
        debug_assert!(
            history.last().is_none_or(|&prev: &f64| sse <= prev * (1.0 + 1e-12) + 1e-300),
            "k-means objective increased: {history:?} -> {sse}"
        );
        history.push(sse);
        iterations += 1;
        if next == bounds {
            break;
        }
        bounds = next;

        for j in 0..m {
            let (lo, hi) = (bounds[j], bounds[j + 1]);
            if hi > lo {
                centers[j] = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
            }
        }
        reseed_empty(&sorted, &mut centers, &bounds, &mut rng);
        centers.sort_by(f64::total_cmp);
    }

    make_strictly_increasing(&mut centers);
    let bounds = assign(&sorted, &centers);
    let mut counts = Vec::with_capacity(m);
    let mut variances = Vec::with_capacity(m);
    for j in 0..m {
        let run = &sorted[bounds[j]..bounds[j + 1]];
        counts.push(run.len());
        let var = if run.is_empty() {
            0.0
        } else {
            run.iter().map(|v| (v - centers[j]).powi(2)).sum::<f64>() / run.len() as f64
        };
        variances.push(var);
    }

    Ok(KMeansFit {
        centers,
        counts,
        variances,
        objective_history: history,
        iterations,
    })
}

/// Within-cluster sum of squares of `samples` about `centers`
/// (each sample measured to its nearest center).
pub fn within_cluster_ss(samples: &[f64], centers: &[f64]) -> f64 {
    samples
        .iter()
        .map(|&x| {
            centers
                .iter()
                .map(|&c| (x - c) * (x - c))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Nearest-center partition of sorted samples for sorted centers.
/// Returns `M + 1` boundaries; cluster `j` is `sorted[b[j]..b[j + 1]]`.
fn assign(sorted: &[f64], centers: &[f64]) -> Vec<usize> {
    let m = centers.len();
    let mut bounds = vec![0; m + 1];
    let mut j = 0;
    for (idx, &x) in sorted.iter().enumerate() {
        loop {
            // Next center with a different value; equal centers keep the lower index.
            let mut k = j + 1;
            while k < m && centers[k] == centers[j] {
                k += 1;
            }
            if k < m && (x - centers[k]).abs() < (x - centers[j]).abs() {
                for b in &mut bounds[j + 1..=k] {
                    *b = idx;
                }
                j = k;
            } else {
                break;
            }
        }
    }
    for b in &mut bounds[j + 1..=m] {
        *b = sorted.len();
    }
    bounds
}

fn objective(sorted: &[f64], centers: &[f64], bounds: &[usize]) -> f64 {
    centers
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            sorted[bounds[j]..bounds[j + 1]]
                .iter()
                .map(|&x| (x - c) * (x - c))
                .sum::<f64>()
        })
        .sum()
}

fn reseed_empty(sorted: &[f64], centers: &mut [f64], bounds: &[usize], rng: &mut ChaCha8Rng) {
    let m = centers.len();
    let empty: Vec<usize> = (0..m).filter(|&j| bounds[j] == bounds[j + 1]).collect();
    if empty.is_empty() {
        return;
    }
    // Distance of every sample to the center it is currently assigned to.
    let mut dist = vec![0.0; sorted.len()];
    for j in 0..m {
        for idx in bounds[j]..bounds[j + 1] {
            dist[idx] = (sorted[idx] - centers[j]).abs();
        }
    }
    for j in empty {
        let far = dist.iter().copied().fold(0.0, f64::max);
        let ties: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] == far).collect();
        let pick = ties[rng.random_range(0..ties.len())];
        centers[j] = sorted[pick];
        dist[pick] = 0.0;
    }
}

fn make_strictly_increasing(centers: &mut [f64]) {
    for j in 1..centers.len() {
        if centers[j] <= centers[j - 1] {
            centers[j] = centers[j - 1].next_up();
        }
    }
}
