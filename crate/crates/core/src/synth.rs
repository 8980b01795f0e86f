//! Synthetic scene maps: Gaussian bumps on a constant base.
//!
//! Each map is `y(n) = base + Σ_b a_b exp(−|n − c_b|² / 2 s_b²)` with
//! 5–15 bumps, amplitudes `a_b ∈ [0.05, 0.3]`, widths `s_b ∈ [5, 20]` px,
//! centers uniform over the image and `base = 0.25` (inverse meters).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpConfig {
    pub base: f64,
    pub min_bumps: usize,
    pub max_bumps: usize,
    pub min_amplitude: f64,
    pub max_amplitude: f64,
    pub min_width: f64,
    pub max_width: f64,
}

impl Default for BumpConfig {
    fn default() -> Self {
        Self {
            base: 0.25,
            min_bumps: 5,
            max_bumps: 15,
            min_amplitude: 0.05,
            max_amplitude: 0.3,
            min_width: 5.0,
            max_width: 20.0,
        }
    }
}

pub fn bump_scene<R: Rng>(width: usize, height: usize, config: &BumpConfig, rng: &mut R) -> ScalarField {
    let count = rng.random_range(config.min_bumps..=config.max_bumps);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            (
                rng.random_range(0.0..width as f64),
                rng.random_range(0.0..height as f64),
                rng.random_range(config.min_amplitude..=config.max_amplitude),
                rng.random_range(config.min_width..=config.max_width),
            )
        })
        .collect();
    ScalarField::from_fn(width, height, |x, y| {
        config.base
            + bumps
                .iter()
                .map(|&(cx, cy, a, s)| {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    a * (-d2 / (2.0 * s * s)).exp()
                })
                .sum::<f64>()
    })
}

/// `count` independent maps from one seed.
pub fn bump_corpus(count: usize, width: usize, height: usize, seed: u64) -> Vec<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = BumpConfig::default();
    (0..count)
        .map(|_| bump_scene(width, height, &config, &mut rng))
        .collect()
}
