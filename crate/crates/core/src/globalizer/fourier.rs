//! Closed-form y-update on a periodic grid.
//!
//! For fixed coefficient targets `w_i` the scene map minimizing
//! `β Σ_i ‖k_i ⋆ y − w_i‖² + Σ_r ‖∇_r ⋆ y‖²` is diagonal in the Fourier basis:
//!
//! ```text
//! Y = β Σ_i conj(H_i) W_i / (β Σ_i |H_i|² + Σ_r |G_r|²)
//! ```
//!
//! where `H_i` and `G_r` are the transfer functions of the filters and the
//! regularizer kernels on the grid.

use rustfft::num_complex::Complex64;

use super::CoefficientStack;
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::ScalarField;
use crate::filter_bank::FilterBank;

/// Added to the Fourier denominator where it would otherwise vanish.
pub const DENOMINATOR_EPS: f64 = 1e-12;

/// Second-difference smoothness penalty `R(y) = Σ_r Σ_n (∇_r ⋆ y)(n)²`,
/// scaled by `weight`.
///
/// The four 3×3 kernels are `[1, −2, 1]` horizontally and vertically and the
/// same stencil along both diagonals scaled by 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularizer {
    kernels: [[f64; 9]; 4],
    weight: f64,
}

impl Regularizer {
    pub fn laplacian4() -> Self {
        Self::with_weight(1.0)
    }

    pub fn with_weight(weight: f64) -> Self {
        let kernels = [
            [0.0, 0.0, 0.0, 1.0, -2.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0, -2.0, 0.0, 0.0, 1.0, 0.0],
            [0.5, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.5],
            [0.0, 0.0, 0.5, 0.0, -1.0, 0.0, 0.5, 0.0, 0.0],
        ];
        Self { kernels, weight }
    }

    /// Row-major 3×3 kernels.
    pub fn kernels(&self) -> &[[f64; 9]; 4] {
        &self.kernels
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// `weight · Σ_r |G_r|²` at every frequency of `fft`'s grid.
    fn power(&self, fft: &Fft2) -> Vec<f64> {
        let (w, h) = (fft.width() as isize, fft.height() as isize);
        let mut total = vec![0.0; fft.len()];
        for kernel in &self.kernels {
            let mut buf = vec![Complex64::new(0.0, 0.0); fft.len()];
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let x = (-dx).rem_euclid(w) as usize;
                    let y = (-dy).rem_euclid(h) as usize;
                    buf[y * w as usize + x].re += kernel[((dy + 1) * 3 + dx + 1) as usize];
                }
            }
            fft.forward(&mut buf);
            for (t, g) in total.iter_mut().zip(&buf) {
                *t += self.weight * g.norm_sqr();
            }
        }
        total
    }

    /// `weight · R(y)` with periodic boundaries.
    pub fn energy(&self, y: &ScalarField) -> f64 {
        let mut e = 0.0;
        for kernel in &self.kernels {
            for py in 0..y.height() as isize {
                for px in 0..y.width() as isize {
                    let mut acc = 0.0;
                    for dy in -1..=1isize {
                        for dx in -1..=1isize {
                            let k = kernel[((dy + 1) * 3 + dx + 1) as usize];
                            if k != 0.0 {
                                acc += k * y.get_wrapped(px + dx, py + dy);
                            }
                        }
                    }
                    e += acc * acc;
                }
            }
        }
        self.weight * e
    }
}

impl Default for Regularizer {
    fn default() -> Self {
        Self::laplacian4()
    }
}

/// Precomputed spectra for repeated y-updates on one periodic grid.
pub struct FourierSystem {
    fft: Fft2,
    filters: Vec<usize>,
    spectra: Vec<Vec<Complex64>>,
    data_power: Vec<f64>,
    reg_power: Vec<f64>,
}

/// Result of one y-update.
#[derive(Debug, Clone)]
pub struct YStep {
    pub y: ScalarField,
    /// Set when [`DENOMINATOR_EPS`] had to be added at some frequency.
    pub regularized_denominator: bool,
}

impl FourierSystem {
    pub fn new(
        bank: &FilterBank,
        subset: &[usize],
        reg: &Regularizer,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        bank.check_subset(subset)?;
        let fft = Fft2::new(width, height);
        let spectra: Vec<Vec<Complex64>> = subset
            .iter()
            .map(|&i| bank.filters()[i].transfer_function(&fft))
            .collect();
        let mut data_power = vec![0.0; fft.len()];
        for s in &spectra {
            for (p, h) in data_power.iter_mut().zip(s) {
                *p += h.norm_sqr();
            }
        }
        let reg_power = reg.power(&fft);
        Ok(Self {
            fft,
            filters: subset.to_vec(),
            spectra,
            data_power,
            reg_power,
        })
    }

    pub fn width(&self) -> usize {
        self.fft.width()
    }

    pub fn height(&self) -> usize {
        self.fft.height()
    }

    pub fn filters(&self) -> &[usize] {
        &self.filters
    }

    fn check_stack(&self, stack: &CoefficientStack) -> Result<()> {
        if stack.width() != self.width() || stack.height() != self.height() {
            return Err(Error::ShapeMismatch(format!(
                "coefficient stack {}x{} on a {}x{} grid",
                stack.width(),
                stack.height(),
                self.width(),
                self.height()
            )));
        }
        if stack.filters() != self.filters.as_slice() {
            return Err(Error::ShapeMismatch(
                "coefficient stack filters differ from the solver subset".into(),
            ));
        }
        Ok(())
    }

    /// Exact minimizer of the data + smoothness least-squares problem.
    pub fn solve(&self, stack: &CoefficientStack, beta: f64) -> Result<YStep> {
        self.check_stack(stack)?;
        let n = self.fft.len();
        let mut numerator = vec![Complex64::new(0.0, 0.0); n];
        let maps = stack.maps();
        let mut pairs = maps.chunks(2).zip(self.spectra.chunks(2));
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (m, s) in &mut pairs {
            match (m, s) {
                ([a, b], [ha, hb]) => {
                    // Two real maps share one complex transform.
                    for ((z, &va), &vb) in buf.iter_mut().zip(a.values()).zip(b.values()) {
                        *z = Complex64::new(va, vb);
                    }
                    self.fft.forward(&mut buf);
                    let (w, h) = (self.width(), self.height());
                    for ky in 0..h {
                        let my = (h - ky) % h;
                        for kx in 0..w {
                            let mx = (w - kx) % w;
                            let k = ky * w + kx;
                            let zc = buf[my * w + mx].conj();
                            let fa = (buf[k] + zc) * 0.5;
                            let fb = (buf[k] - zc) * Complex64::new(0.0, -0.5);
                            numerator[k] += ha[k].conj() * fa + hb[k].conj() * fb;
                        }
                    }
                }
                ([a], [ha]) => {
                    for (z, &va) in buf.iter_mut().zip(a.values()) {
                        *z = Complex64::new(va, 0.0);
                    }
                    self.fft.forward(&mut buf);
                    for ((num, z), h) in numerator.iter_mut().zip(&buf).zip(ha) {
                        *num += h.conj() * z;
                    }
                }
                _ => unreachable!(),
            }
        }

        let mut flagged = false;
        for ((num, &dp), &rp) in numerator.iter_mut().zip(&self.data_power).zip(&self.reg_power) {
            let mut den = beta * dp + rp;
            if den < DENOMINATOR_EPS {
                den += DENOMINATOR_EPS;
                flagged = true;
            }
            *num *= beta / den;
        }
        let y = self.fft.inverse_real(numerator);
        Ok(YStep {
            y: ScalarField::from_raw(self.width(), self.height(), y),
            regularized_denominator: flagged,
        })
    }

    /// Circular responses `k_i ⋆ y` for every filter of the subset.
    pub fn responses(&self, y: &ScalarField) -> Result<CoefficientStack> {
        if y.width() != self.width() || y.height() != self.height() {
            return Err(Error::ShapeMismatch(format!(
                "field {}x{} on a {}x{} grid",
                y.width(),
                y.height(),
                self.width(),
                self.height()
            )));
        }
        let spectrum = self.fft.forward_real(y.values());
        let mut maps = Vec::with_capacity(self.filters.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft.len()];
        for pair in self.spectra.chunks(2) {
            // Both products are spectra of real maps: pack as a + i·b.
            match pair {
                [ha, hb] => {
                    for (((z, s), a), b) in buf.iter_mut().zip(&spectrum).zip(ha).zip(hb) {
                        *z = s * a + Complex64::new(0.0, 1.0) * (s * b);
                    }
                }
                [ha] => {
                    for ((z, s), a) in buf.iter_mut().zip(&spectrum).zip(ha) {
                        *z = s * a;
                    }
                }
                _ => unreachable!(),
            }
            self.fft.inverse(&mut buf);
            maps.push(ScalarField::from_raw(
                self.width(),
                self.height(),
                buf.iter().map(|c| c.re).collect(),
            ));
            if pair.len() == 2 {
                maps.push(ScalarField::from_raw(
                    self.width(),
                    self.height(),
                    buf.iter().map(|c| c.im).collect(),
                ));
            }
        }
        CoefficientStack::new(self.filters.clone(), maps)
    }
}

/// One y-update on the periodic `width × height` grid of the stack.
pub fn y_step(
    stack: &CoefficientStack,
    bank: &FilterBank,
    subset: &[usize],
    beta: f64,
    reg: &Regularizer,
) -> Result<YStep> {
    let system = FourierSystem::new(bank, subset, reg, stack.width(), stack.height())?;
    let aligned = stack.select(subset)?;
    system.solve(&aligned, beta)
}
