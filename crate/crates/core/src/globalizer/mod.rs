//! Scene-map recovery from coefficient distributions by alternating minimization.
//!
//! The solver introduces one auxiliary coefficient per (pixel, filter) slot,
//! coupled to the filter response of the scene map with weight `β/2`, and
//! alternates a global Fourier least-squares update of `y` with independent
//! per-slot updates of the coefficients while `β` grows geometrically.
//!
//! The optimization runs on a periodic grid: the observed region is padded by
//! the largest filter radius so circular convolution does not wrap opposite
//! borders onto each other. Margin slots have no predicted distribution; they
//! start from the responses of an edge-replicated initial scene and afterwards
//! simply follow `k_i * y`.

mod fourier;
mod wstep;

pub use fourier::{y_step, FourierSystem, Regularizer, YStep, DENOMINATOR_EPS};
pub use wstep::{init_w, w_step};

use std::fmt::Write as _;

use crate::coeff_model::{MixtureModel, WeightMap};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::filter_bank::{FilterBank, FilterKind};
use wstep::{check_compatible, posterior_mode, SlotLogWeights};

/// Coefficient maps `w_i` for an ordered list of filters, all on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientStack {
    filters: Vec<usize>,
    maps: Vec<ScalarField>,
}

impl CoefficientStack {
    pub fn new(filters: Vec<usize>, maps: Vec<ScalarField>) -> Result<Self> {
        if filters.is_empty() {
            return Err(Error::EmptySubset);
        }
        if filters.len() != maps.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} filters but {} coefficient maps",
                filters.len(),
                maps.len()
            )));
        }
        if maps.iter().any(|m| !m.same_shape(&maps[0])) {
            return Err(Error::ShapeMismatch("coefficient maps differ in size".into()));
        }
        Ok(Self { filters, maps })
    }

    pub fn from_pairs(pairs: Vec<(usize, ScalarField)>) -> Result<Self> {
        let (filters, maps) = pairs.into_iter().unzip();
        Self::new(filters, maps)
    }

    pub fn width(&self) -> usize {
        self.maps[0].width()
    }

    pub fn height(&self) -> usize {
        self.maps[0].height()
    }

    pub fn filters(&self) -> &[usize] {
        &self.filters
    }

    pub fn maps(&self) -> &[ScalarField] {
        &self.maps
    }

    pub fn get(&self, filter: usize) -> Option<&ScalarField> {
        self.filters
            .iter()
            .position(|&f| f == filter)
            .map(|k| &self.maps[k])
    }

    /// Sub-stack in `subset` order.
    pub fn select(&self, subset: &[usize]) -> Result<CoefficientStack> {
        let maps = subset
            .iter()
            .map(|&f| {
                self.get(f).cloned().ok_or(Error::FilterNotCovered {
                    index: f,
                    what: "coefficient stack",
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(subset.to_vec(), maps)
    }

    pub fn pad_replicate(&self, radius: usize) -> CoefficientStack {
        Self {
            filters: self.filters.clone(),
            maps: self.maps.iter().map(|m| m.pad_replicate(radius)).collect(),
        }
    }

    pub fn roll(&self, dx: isize, dy: isize) -> CoefficientStack {
        Self {
            filters: self.filters.clone(),
            maps: self.maps.iter().map(|m| m.roll(dx, dy)).collect(),
        }
    }

    /// Mean absolute difference over all slots.
    pub fn mean_abs_diff(&self, other: &CoefficientStack) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for (a, b) in self.maps.iter().zip(&other.maps) {
            total += a
                .values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>();
            count += a.len();
        }
        total / count as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    /// Pad by the largest radius in the bank, starting from an edge-replicated
    /// initial scene.
    Replicate,
    /// Treat the input grid itself as periodic.
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub beta_init: f64,
    pub beta_final: f64,
    pub beta_growth: f64,
    pub subset: Vec<usize>,
    /// Multiplies the smoothness penalty.
    pub reg_weight: f64,
    pub pad_mode: PadMode,
    /// Evaluate the full objective at every iteration (costly).
    pub record_trace: bool,
}

impl SolverConfig {
    pub fn new(subset: Vec<usize>) -> Self {
        Self {
            beta_init: 2f64.powi(-10),
            beta_final: 2f64.powi(7),
            beta_growth: 2f64.powf(1.0 / 8.0),
            subset,
            reg_weight: 1.0,
            pad_mode: PadMode::Replicate,
            record_trace: false,
        }
    }

    pub fn full(bank: &FilterBank) -> Self {
        Self::new(bank.all_indices())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.beta_init > 0.0 && self.beta_init.is_finite()) {
            return bad(format!("beta_init {} must be positive", self.beta_init));
        }
        if !(self.beta_final >= self.beta_init && self.beta_final.is_finite()) {
            return bad(format!(
                "beta_final {} must be finite and ≥ beta_init {}",
                self.beta_final, self.beta_init
            ));
        }
        if !(self.beta_growth > 1.0 && self.beta_growth.is_finite()) {
            return bad(format!("beta_growth {} must exceed 1", self.beta_growth));
        }
        if !(self.reg_weight >= 0.0 && self.reg_weight.is_finite()) {
            return bad(format!("reg_weight {} must be nonnegative", self.reg_weight));
        }
        if self.subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        Ok(())
    }

    /// `β_k = beta_init · growth^k` up to and including `beta_final`
    /// (relative slack 1e-9 for the last step).
    pub fn beta_schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let limit = self.beta_final * (1.0 + 1e-9);
        let mut k = 0;
        loop {
            let beta = self.beta_init * self.beta_growth.powi(k);
            if beta > limit {
                break;
            }
            out.push(beta);
            k += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub beta: f64,
    /// Split objective after the y-update; present when tracing is enabled.
    pub objective: Option<f64>,
    /// Mean `|w_i − k_i ⋆ y|` after the y-update.
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    pub rows: Vec<TraceRow>,
    /// The Fourier denominator vanished somewhere and was regularized.
    pub regularized_denominator: bool,
    /// The output mean was re-anchored to the zeroth-order targets.
    pub dc_anchored: bool,
}

impl SolveTrace {
    pub fn betas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.beta).collect()
    }

    /// `iter,beta,objective,residual`; objective is empty when not recorded.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,beta,objective,residual\n");
        for r in &self.rows {
            let obj = r.objective.map(|v| format!("{v:.17e}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:.17e},{},{:.17e}", r.iteration, r.beta, obj, r.residual);
        }
        s
    }
}

/// Maps every pixel of a padded grid to its observed pixel; margin pixels
/// have none.
struct PadIndex {
    source: Vec<Option<usize>>,
}

impl PadIndex {
    fn new(width: usize, height: usize, pad: usize) -> Self {
        let (pw, ph) = (width + 2 * pad, height + 2 * pad);
        let mut source = Vec::with_capacity(pw * ph);
        for py in 0..ph {
            for px in 0..pw {
                let inside = (pad..pad + width).contains(&px) && (pad..pad + height).contains(&py);
                source.push(inside.then(|| (py - pad) * width + (px - pad)));
            }
        }
        Self { source }
    }
}

/// Recovers a scene map from predicted mixture weights.
///
/// Coefficients start at the most probable component means; each `β` of the
/// schedule then runs one y-update followed by one w-update. The y-update of
/// the final `β` is returned, cropped to the weight map's extent.
pub fn globalize(
    weights: &WeightMap,
    model: &MixtureModel,
    bank: &FilterBank,
    config: &SolverConfig,
) -> Result<(ScalarField, SolveTrace)> {
    config.validate()?;
    bank.check_subset(&config.subset)?;
    check_compatible(weights, model)?;
    let subset = &config.subset;
    let slots = SlotLogWeights::new(weights, subset)?;

    let (width, height) = (weights.width(), weights.height());
    let pad = match config.pad_mode {
        // The bank-wide radius, not the subset's: the margin also has to give
        // the regularizer room to bridge the wrap-around seam.
        PadMode::Replicate => bank.max_radius(&bank.all_indices()),
        PadMode::Periodic => 0,
    };
    let index = PadIndex::new(width, height, pad);
    let reg = Regularizer::with_weight(config.reg_weight);
    let system = FourierSystem::new(bank, subset, &reg, width + 2 * pad, height + 2 * pad)?;

    let initial = init_w(weights, model)?;
    let mut w = initial_coefficients(&initial, &system, &index, bank, pad)?;
    let schedule = config.beta_schedule();
    let mut trace = SolveTrace::default();
    let mut y = ScalarField::zeros(system.width(), system.height());

    for (it, &beta) in schedule.iter().enumerate() {
        let step = system.solve(&w, beta)?;
        y = step.y;
        trace.regularized_denominator |= step.regularized_denominator;
        let w_bar = system.responses(&y)?;
        let objective = config
            .record_trace
            .then(|| split_objective_terms(&y, &w, &w_bar, &slots, &index, model, beta, &reg));
        trace.rows.push(TraceRow {
            iteration: it,
            beta,
            objective,
            residual: w.mean_abs_diff(&w_bar),
        });
        if it + 1 < schedule.len() {
            update_coefficients(&mut w, &w_bar, &slots, &index, model, beta);
        }
    }

    let mut out = y.crop(pad, pad, width, height);
    if trace.regularized_denominator {
        if let Some(anchor) = dc_anchor(&initial, bank) {
            let shift = anchor - out.mean();
            out.values_mut().iter_mut().for_each(|v| *v += shift);
            trace.dc_anchored = true;
        }
    }
    Ok((out, trace))
}

/// Starting coefficients on the padded grid: the most probable means inside
/// the observed region, and in the margin the responses of the initial scene
/// estimate (impulse means, or the zeroth-order mean level) extended by edge
/// replication.
fn initial_coefficients(
    initial: &CoefficientStack,
    system: &FourierSystem,
    index: &PadIndex,
    bank: &FilterBank,
    pad: usize,
) -> Result<CoefficientStack> {
    let inner = initial.select(system.filters())?;
    let scene = match initial.get(0) {
        Some(map) => map.clone(),
        None => ScalarField::filled(
            inner.width(),
            inner.height(),
            dc_anchor(initial, bank).unwrap_or(0.0),
        ),
    };
    let mut w = system.responses(&scene.pad_replicate(pad))?;
    for (map, src_map) in w.maps.iter_mut().zip(inner.maps()) {
        for (v, &src) in map.values_mut().iter_mut().zip(&index.source) {
            if let Some(src) = src {
                *v = src_map.values()[src];
            }
        }
    }
    Ok(w)
}

/// Mean scene value implied by the zeroth-order coefficients, if any are available.
fn dc_anchor(initial: &CoefficientStack, bank: &FilterBank) -> Option<f64> {
    if let Some(map) = initial.get(0) {
        return Some(map.mean());
    }
    initial
        .filters()
        .iter()
        .zip(initial.maps())
        .find(|(&f, _)| bank.get(f).is_some_and(|k| k.kind() == FilterKind::Gaussian))
        .map(|(&f, map)| map.mean() / bank.filters()[f].sum())
}

fn update_coefficients(
    w: &mut CoefficientStack,
    w_bar: &CoefficientStack,
    slots: &SlotLogWeights,
    index: &PadIndex,
    model: &MixtureModel,
    beta: f64,
) {
    for (pos, (&filter, map)) in w.filters.iter().zip(w.maps.iter_mut()).enumerate() {
        let means = model.means(filter);
        let var = model.variance(filter);
        let targets = w_bar.maps[pos].values();
        for ((v, &wb), &src) in map.values_mut().iter_mut().zip(targets).zip(&index.source) {
            *v = match src {
                Some(src) => posterior_mode(slots.slot(src, pos), means, var, wb, beta),
                // No likelihood in the margin: the coupling alone is minimized at w̄.
                None => wb,
            };
        }
    }
}

/// `−Σ σ_i² log p_i(w_i) + β/2 Σ (w_i − w̄_i)² + ½ R(y)` with the mixture
/// densities normalized.
#[allow(clippy::too_many_arguments)]
fn split_objective_terms(
    y: &ScalarField,
    w: &CoefficientStack,
    w_bar: &CoefficientStack,
    slots: &SlotLogWeights,
    index: &PadIndex,
    model: &MixtureModel,
    beta: f64,
    reg: &Regularizer,
) -> f64 {
    let mut data = 0.0;
    let mut coupling = 0.0;
    for (pos, &filter) in w.filters.iter().enumerate() {
        let means = model.means(filter);
        let var = model.variance(filter);
        let log_norm = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
        let inv = 1.0 / (2.0 * var);
        let (wv, bv) = (w.maps[pos].values(), w_bar.maps[pos].values());
        for (n, &src) in index.source.iter().enumerate() {
            let value = wv[n];
            coupling += (value - bv[n]).powi(2);
            let Some(src) = src else { continue };
            let mut max = f64::NEG_INFINITY;
            for (j, lw) in slots.slot(src, pos) {
                max = max.max(lw - (value - means[j]).powi(2) * inv);
            }
            let mut sum = 0.0;
            for (j, lw) in slots.slot(src, pos) {
                sum += (lw - (value - means[j]).powi(2) * inv - max).exp();
            }
            data -= var * (max + sum.ln() + log_norm);
        }
    }
    data + 0.5 * beta * coupling + 0.5 * reg.energy(y)
}

/// Evaluates the split objective for a scene map `y` and coefficients
/// `w_stack` on `y`'s periodic grid.
///
/// `y` may be larger than the weight map by a symmetric margin; slots in the
/// margin carry no likelihood term.
pub fn split_objective(
    y: &ScalarField,
    w_stack: &CoefficientStack,
    weights: &WeightMap,
    model: &MixtureModel,
    bank: &FilterBank,
    beta: f64,
    reg: &Regularizer,
) -> Result<f64> {
    check_compatible(weights, model)?;
    let (dw, dh) = (
        y.width().checked_sub(weights.width()),
        y.height().checked_sub(weights.height()),
    );
    let pad = match (dw, dh) {
        (Some(dw), Some(dh)) if dw == dh && dw % 2 == 0 => dw / 2,
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "scene map {}x{} is not a symmetric padding of weight map {}x{}",
                y.width(),
                y.height(),
                weights.width(),
                weights.height()
            )))
        }
    };
    if w_stack.width() != y.width() || w_stack.height() != y.height() {
        return Err(Error::ShapeMismatch("coefficient stack and scene map differ in size".into()));
    }
    let subset = w_stack.filters();
    let slots = SlotLogWeights::new(weights, subset)?;
    let index = PadIndex::new(weights.width(), weights.height(), pad);
    let system = FourierSystem::new(bank, subset, reg, y.width(), y.height())?;
    let w_bar = system.responses(y)?;
    Ok(split_objective_terms(y, w_stack, &w_bar, &slots, &index, model, beta, reg))
}
