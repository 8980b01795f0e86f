//! End-to-end helpers shared by the CLI, the demo and the acceptance suite.

use std::fmt::Write as _;

use crate::coeff_model::{collect_samples, fit_mixture_model, MixtureModel, WeightMap, DEFAULT_SAMPLE_STRIDE};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::filter_bank::{FilterBank, FilterGroup};
use crate::globalizer::{globalize, init_w, SolverConfig};
use crate::metrics::{scene_to_depth, DepthMetrics, MetricsAccumulator, DEFAULT_Z_MAX, DEFAULT_Z_MIN};
use crate::predictor::{synth_predict, CorruptionConfig};
use crate::synth::bump_corpus;

/// Fits a mixture for every filter of `bank` from a corpus of scene maps.
pub fn fit_model_from_scenes(
    scenes: &[ScalarField],
    bank: &FilterBank,
    components: usize,
    min_assign: Option<usize>,
    seed: u64,
) -> Result<MixtureModel> {
    let samples = collect_samples(scenes, bank, DEFAULT_SAMPLE_STRIDE, seed)?;
    fit_mixture_model(&samples, components, min_assign, seed)
}

/// Pointwise decoding: the most probable impulse-filter component mean per pixel.
pub fn impulse_argmax_decode(weights: &WeightMap, model: &MixtureModel) -> Result<ScalarField> {
    let stack = init_w(weights, model)?;
    stack.get(0).cloned().ok_or(Error::FilterNotCovered {
        index: 0,
        what: "weight map",
    })
}

/// Filter subsets with the row structure of the derivative ablation table.
pub fn ablation_subsets(bank: &FilterBank) -> Vec<(&'static str, Vec<usize>)> {
    let union = |groups: &[FilterGroup]| {
        let mut v: Vec<usize> = groups.iter().flat_map(|&g| bank.group(g)).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    use FilterGroup::*;
    vec![
        ("Full", union(&[Full])),
        ("Scale 0,1 (All orders)", union(&[Scale(0), Scale(1)])),
        ("Scale 0,1,2 (All orders)", union(&[Scale(0), Scale(1), Scale(2)])),
        ("Order 0 (All scales)", union(&[Order(0)])),
        ("Order 0,1 (All scales)", union(&[Order(0), Order(1)])),
        ("Scale 0 (Pointwise Depth)", union(&[Scale(0)])),
    ]
}

#[derive(Debug, Clone)]
pub struct DemoConfig {
    pub seed: u64,
    pub corpus_size: usize,
    pub test_maps: usize,
    pub width: usize,
    pub height: usize,
    pub components: usize,
    pub ambiguity_grid: Vec<f64>,
    /// Corruption level used for the subset ablation.
    pub ablation_ambiguity: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus_size: 100,
            test_maps: 2,
            width: 64,
            height: 64,
            components: 64,
            ambiguity_grid: vec![0.0, 0.3, 0.6],
            ablation_ambiguity: 0.3,
        }
    }
}

/// One evaluated configuration, pooled over the test maps.
#[derive(Debug, Clone)]
pub struct DemoRow {
    pub label: String,
    pub ambiguity: f64,
    pub subset_size: usize,
    /// RMSE of the globalized scene map against ground truth.
    pub rmse_y: f64,
    /// RMSE of pointwise impulse argmax decoding at the same corruption.
    pub baseline_rmse_y: f64,
    pub metrics: DepthMetrics,
    pub baseline_metrics: DepthMetrics,
}

#[derive(Debug, Clone)]
pub struct DemoReport {
    pub impulse_sigma: f64,
    pub corruption_rows: Vec<DemoRow>,
    pub ablation_rows: Vec<DemoRow>,
}

impl DemoReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "impulse sigma: {:.6}", self.impulse_sigma);
        let header = format!(
            "{:<28} {:>6} {:>4} {:>10} {:>10} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8} {:>8}",
            "filters", "ambig", "K", "rmse_y", "argmax_y", "rmse", "rmse_log", "abs_rel", "sqr_rel", "d1", "d2", "d3"
        );
        for (title, rows) in [
            ("corruption sweep", &self.corruption_rows),
            ("subset ablation", &self.ablation_rows),
        ] {
            let _ = writeln!(s, "\n# {title}\n{header}");
            for r in rows {
                let m = &r.metrics;
                let _ = writeln!(
                    s,
                    "{:<28} {:>6.2} {:>4} {:>10.6} {:>10.6} {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>8.4} {:>8.4} {:>8.4}",
                    r.label,
                    r.ambiguity,
                    r.subset_size,
                    r.rmse_y,
                    r.baseline_rmse_y,
                    m.rmse_lin,
                    m.rmse_log,
                    m.abs_rel,
                    m.sqr_rel,
                    m.delta1,
                    m.delta2,
                    m.delta3
                );
            }
        }
        s
    }
}

struct Pooled {
    sq: f64,
    count: usize,
    depth: MetricsAccumulator,
}

impl Pooled {
    fn new() -> Self {
        Self {
            sq: 0.0,
            count: 0,
            depth: MetricsAccumulator::new(),
        }
    }

    fn add(&mut self, y: &ScalarField, truth: &ScalarField) -> Result<()> {
        let r = y.rmse(truth)?;
        self.sq += r * r * y.len() as f64;
        self.count += y.len();
        let z_hat = scene_to_depth(y, DEFAULT_Z_MIN, DEFAULT_Z_MAX);
        let z_true = scene_to_depth(truth, DEFAULT_Z_MIN, DEFAULT_Z_MAX);
        self.depth.add(&z_hat, &z_true, None)
    }

    fn rmse(&self) -> f64 {
        (self.sq / self.count as f64).sqrt()
    }
}

/// Synthetic end-to-end run: corpus, model fit, corrupted predictions,
/// globalization and evaluation.
///
/// Test maps are drawn from a separate seed stream. All corruption levels
/// share one corruption seed per test map, so the ambiguous slots at a lower
/// level are a subset of those at a higher level.
pub fn run_demo(config: &DemoConfig, mut progress: impl FnMut(&str)) -> Result<(MixtureModel, DemoReport)> {
    let bank = FilterBank::build();
    let corpus = bump_corpus(config.corpus_size, config.width, config.height, config.seed);
    progress("fitting mixture model");
    let model = fit_model_from_scenes(&corpus, &bank, config.components, None, config.seed)?;
    let tests = bump_corpus(
        config.test_maps,
        config.width,
        config.height,
        config.seed.wrapping_add(0x5eed),
    );
    let full = bank.all_indices();

    let mut levels = config.ambiguity_grid.clone();
    if !levels.contains(&config.ablation_ambiguity) {
        levels.push(config.ablation_ambiguity);
    }
    let subsets = ablation_subsets(&bank);
    let mut corruption = Vec::new();
    let mut ablation = Vec::new();

    for &level in &levels {
        let in_grid = config.ambiguity_grid.contains(&level);
        let runs: Vec<&(&str, Vec<usize>)> = subsets
            .iter()
            .filter(|(name, _)| {
                (*name == "Full" && in_grid) || level == config.ablation_ambiguity
            })
            .collect();
        let mut pooled: Vec<Pooled> = runs.iter().map(|_| Pooled::new()).collect();
        let mut baseline = Pooled::new();
        for (t, truth) in tests.iter().enumerate() {
            let c = CorruptionConfig {
                ambiguity_fraction: level,
                blur_temperature: 1.0,
                seed: config.seed.wrapping_add(1000 + t as u64),
            };
            let weights = synth_predict(truth, &bank, &model, &full, &c)?;
            baseline.add(&impulse_argmax_decode(&weights, &model)?, truth)?;
            for (k, (name, subset)) in runs.iter().enumerate() {
                progress(&format!("ambiguity {level:.2}, {name}, test map {t}"));
                let cfg = SolverConfig::new(subset.clone());
                let (y, _) = globalize(&weights, &model, &bank, &cfg)?;
                pooled[k].add(&y, truth)?;
            }
        }
        let baseline_metrics = baseline.depth.finish()?;
        for ((name, subset), p) in runs.iter().zip(&pooled) {
            let row = DemoRow {
                label: name.to_string(),
                ambiguity: level,
                subset_size: subset.len(),
                rmse_y: p.rmse(),
                baseline_rmse_y: baseline.rmse(),
                metrics: p.depth.finish()?,
                baseline_metrics,
            };
            if *name == "Full" && in_grid {
                corruption.push(row.clone());
            }
            if level == config.ablation_ambiguity {
                ablation.push(row);
            }
        }
    }

    Ok((
        model.clone(),
        DemoReport {
            impulse_sigma: model.variance(0).sqrt(),
            corruption_rows: corruption,
            ablation_rows: ablation,
        },
    ))
}
