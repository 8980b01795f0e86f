//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use derivdepth::globalizer::Regularizer;
use derivdepth::{FilterBank, ScalarField};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense periodic correlation matrix: `(A y)(n) = Σ_m k(m) y(n + m mod size)`.
pub fn circulant(taps: &[(isize, isize, f64)], w: usize, h: usize) -> DMatrix<f64> {
    let n = w * h;
    let mut a = DMatrix::zeros(n, n);
    for py in 0..h {
        for px in 0..w {
            let row = py * w + px;
            for &(dx, dy, k) in taps {
                let sx = (px as isize + dx).rem_euclid(w as isize) as usize;
                let sy = (py as isize + dy).rem_euclid(h as isize) as usize;
                a[(row, sy * w + sx)] += k;
            }
        }
    }
    a
}

pub fn filter_taps(bank: &FilterBank, i: usize) -> Vec<(isize, isize, f64)> {
    let f = bank.get(i).unwrap();
    let r = f.radius() as isize;
    let mut taps = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            taps.push((dx, dy, f.tap(dx, dy)));
        }
    }
    taps
}

pub fn regularizer_taps(reg: &Regularizer) -> Vec<Vec<(isize, isize, f64)>> {
    reg.kernels()
        .iter()
        .map(|k| {
            let mut taps = Vec::new();
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let v = k[((dy + 1) * 3 + dx + 1) as usize];
                    if v != 0.0 {
                        taps.push((dx, dy, v));
                    }
                }
            }
            taps
        })
        .collect()
}

pub fn to_vector(f: &ScalarField) -> DVector<f64> {
    DVector::from_column_slice(f.values())
}

pub fn to_field(v: &DVector<f64>, w: usize, h: usize) -> ScalarField {
    ScalarField::new(w, h, v.as_slice().to_vec()).unwrap()
}

/// Periodic response `k_i ⋆ y` by direct summation.
pub fn periodic_response(bank: &FilterBank, i: usize, y: &ScalarField) -> ScalarField {
    let a = circulant(&filter_taps(bank, i), y.width(), y.height());
    to_field(&(a * to_vector(y)), y.width(), y.height())
}

/// Solves `(β Σ AᵢᵀAᵢ + λ Σ BᵣᵀBᵣ) y = β Σ Aᵢᵀ wᵢ` densely.
pub fn dense_y_step(
    bank: &FilterBank,
    subset: &[usize],
    targets: &[ScalarField],
    beta: f64,
    reg: &Regularizer,
) -> ScalarField {
    let (w, h) = (targets[0].width(), targets[0].height());
    let n = w * h;
    let mut lhs = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for (&i, t) in subset.iter().zip(targets) {
        let a = circulant(&filter_taps(bank, i), w, h);
        lhs += beta * a.transpose() * &a;
        rhs += beta * a.transpose() * to_vector(t);
    }
    for taps in regularizer_taps(reg) {
        let b = circulant(&taps, w, h);
        lhs += reg.weight() * b.transpose() * &b;
    }
    let y = lhs.lu().solve(&rhs).expect("singular normal equations");
    to_field(&y, w, h)
}

/// The σ²-scaled per-slot objective
/// `−σ² log Σ_j p̂_j exp(−(w − c_j)²/2σ²) + β/2 (w − w̄)²`.
pub fn slot_objective(w: f64, p_hat: &[f64], means: &[f64], var: f64, w_bar: f64, beta: f64) -> f64 {
    let terms: Vec<f64> = p_hat
        .iter()
        .zip(means)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, c)| p.ln() - (w - c).powi(2) / (2.0 * var))
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    -var * lse + 0.5 * beta * (w - w_bar).powi(2)
}

pub struct WStepTrial {
    pub p_hat: Vec<f64>,
    pub means: Vec<f64>,
    pub var: f64,
    pub w_bar: f64,
    pub beta: f64,
}

/// Random w-step instances; the distribution is fixed in advance.
pub fn w_step_trials(count: usize, seed: u64) -> Vec<WStepTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let m = rng.random_range(1..=8usize);
            let mut means: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            means.sort_by(f64::total_cmp);
            for j in 1..m {
                if means[j] <= means[j - 1] {
                    means[j] = means[j - 1].next_up();
                }
            }
            let sigma: f64 = rng.random_range(0.1..1.0);
            let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.0f64..1.0).powi(3)).collect();
            let sum: f64 = raw.iter().sum();
            let p_hat = raw.iter().map(|v| v / sum).collect();
            let w_bar = rng.random_range(means[0] - sigma..means[m - 1] + sigma);
            let beta = 2f64.powf(rng.random_range(-10.0..7.0));
            WStepTrial { p_hat, means, var: sigma * sigma, w_bar, beta }
        })
        .collect()
}

/// Minimum of [`slot_objective`] over `[min c − 3σ, max c + 3σ]` at step σ/100.
pub fn grid_minimum(t: &WStepTrial) -> f64 {
    let sigma = t.var.sqrt();
    let lo = t.means[0] - 3.0 * sigma;
    let hi = t.means[t.means.len() - 1] + 3.0 * sigma;
    let steps = ((hi - lo) / (sigma / 100.0)).ceil() as usize;
    (0..=steps)
        .map(|k| slot_objective(lo + k as f64 * sigma / 100.0, &t.p_hat, &t.means, t.var, t.w_bar, t.beta))
        .fold(f64::INFINITY, f64::min)
}
