//! Depth/scene conversions and standard depth-accuracy metrics.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::ScalarField;

pub const DEFAULT_Z_MIN: f64 = 0.1;
pub const DEFAULT_Z_MAX: f64 = 10.0;
pub const DELTA_BASE: f64 = 1.25;

/// `y = 1 / max(z, z_min)`.
pub fn depth_to_scene(z: &ScalarField, z_min: f64) -> ScalarField {
    z.map(|v| 1.0 / v.max(z_min))
}

/// `z = clamp(1 / y, z_min, z_max)`; nonpositive `y` maps to `z_max`.
pub fn scene_to_depth(y: &ScalarField, z_min: f64, z_max: f64) -> ScalarField {
    y.map(|v| {
        if v > 0.0 {
            (1.0 / v).clamp(z_min, z_max)
        } else {
            z_max
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub rmse_lin: f64,
    pub rmse_log: f64,
    pub abs_rel: f64,
    pub sqr_rel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl DepthMetrics {
    pub fn deltas(&self) -> [f64; 3] {
        [self.delta1, self.delta2, self.delta3]
    }

    /// One-line record, six significant digits per value.
    pub fn to_record(&self) -> String {
        format!(
            "{{\"rmse_lin\": {}, \"rmse_log\": {}, \"abs_rel\": {}, \"sqr_rel\": {}, \"delta1\": {}, \"delta2\": {}, \"delta3\": {}}}",
            sig6(self.rmse_lin),
            sig6(self.rmse_log),
            sig6(self.abs_rel),
            sig6(self.sqr_rel),
            sig6(self.delta1),
            sig6(self.delta2),
            sig6(self.delta3)
        )
    }
}

impl fmt::Display for DepthMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_record())
    }
}

/// Formats like C's `%.6g`.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    // Rounding can carry into the next decade (e.g. 9.999999 -> 10.0000).
    let rounded_exp = {
        let s = format!("{:.5e}", v);
        s.split('e').nth(1).and_then(|e| e.parse::<i32>().ok()).unwrap_or(exp)
    };
    if !(-4..6).contains(&rounded_exp) {
        let s = format!("{:.5e}", v);
        let (mant, e) = s.split_once('e').unwrap();
        let mant = trim_zeros(mant);
        let e: i32 = e.parse().unwrap();
        let sign = if e < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", e.abs())
    } else {
        let decimals = (5 - rounded_exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Per-pixel pooled sums; lets metrics be aggregated over several images.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    count: usize,
    sq_lin: f64,
    sq_log: f64,
    abs_rel: f64,
    sqr_rel: f64,
    within: [usize; 3],
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the masked pixels of one prediction/ground-truth pair.
    pub fn add(
        &mut self,
        z_hat: &ScalarField,
        z_true: &ScalarField,
        mask: Option<&[bool]>,
    ) -> Result<()> {
        if !z_hat.same_shape(z_true) {
            return Err(Error::ShapeMismatch(format!(
                "prediction {}x{} vs ground truth {}x{}",
                z_hat.width(),
                z_hat.height(),
                z_true.width(),
                z_true.height()
            )));
        }
        if let Some(mask) = mask {
            if mask.len() != z_true.len() {
                return Err(Error::ShapeMismatch(format!(
                    "mask has {} entries for {} pixels",
                    mask.len(),
                    z_true.len()
                )));
            }
        }
        let thresholds = [DELTA_BASE, DELTA_BASE.powi(2), DELTA_BASE.powi(3)];
        for (pixel, (&p, &t)) in z_hat.values().iter().zip(z_true.values()).enumerate() {
            if mask.is_some_and(|m| !m[pixel]) {
                continue;
            }
            for v in [p, t] {
                if v <= 0.0 {
                    return Err(Error::NonPositiveDepth { pixel, value: v });
                }
            }
            let d = t - p;
            let dl = t.ln() - p.ln();
            self.sq_lin += d * d;
            self.sq_log += dl * dl;
            self.abs_rel += d.abs() / t;
            self.sqr_rel += d * d / t;
            let delta = (t / p).max(p / t);
            for (c, &thr) in self.within.iter_mut().zip(&thresholds) {
                if delta < thr {
                    *c += 1;
                }
            }
            self.count += 1;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<DepthMetrics> {
        if self.count == 0 {
            return Err(Error::EmptyMask);
        }
        let n = self.count as f64;
        Ok(DepthMetrics {
            rmse_lin: (self.sq_lin / n).sqrt(),
            rmse_log: (self.sq_log / n).sqrt(),
            abs_rel: self.abs_rel / n,
            sqr_rel: self.sqr_rel / n,
            delta1: self.within[0] as f64 / n,
            delta2: self.within[1] as f64 / n,
            delta3: self.within[2] as f64 / n,
        })
    }
}

/// Metrics over the pixels where `mask` is set (all pixels when `None`).
pub fn evaluate(
    z_hat: &ScalarField,
    z_true: &ScalarField,
    mask: Option<&[bool]>,
) -> Result<DepthMetrics> {
    let mut acc = MetricsAccumulator::new();
    acc.add(z_hat, z_true, mask)?;
    acc.finish()
}
