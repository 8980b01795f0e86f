//! The overcomplete derivative-of-Gaussian filter bank and coefficient analysis.
//!
//! Filter layout (64 entries, stable indices):
//!
//! | index            | filter                                                  |
//! |------------------|---------------------------------------------------------|
//! | 0                | 1×1 impulse (pointwise scene value)                     |
//! | 1 + 21(s−1)      | Gaussian, σ = 2^s                                       |
//! | 2..=9 + 21(s−1)  | first derivative along θ_k = kπ/8, k = 0..7             |
//! | 10..=17 + 21(s−1)| pure second derivative ∂²/∂u² along θ_k, k = 0..7       |
//! | 18..=21 + 21(s−1)| cross derivative ∂²/∂u∂v at θ_k, k = 0..3              |
//!
//! for scales `s = 1, 2, 3`. Angles are measured from the +x axis (columns),
//! `u = (cos θ, sin θ)` and `v` is `u` rotated by +90°.
//!
//! Kernels are stored in correlation orientation: applying a filter computes
//! `w(n) = Σ_m k(m) · y(n + m)`, so first-derivative maps are positive where
//! the smoothed scene map increases along `u`.

use std::f64::consts::PI;
use std::fmt;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::ScalarField;

pub const NUM_FILTERS: usize = 64;
pub const SCALES: [u32; 3] = [1, 2, 3];
pub const NUM_ORIENTATIONS: usize = 8;
pub const NUM_CROSS_ORIENTATIONS: usize = 4;
pub const FILTERS_PER_SCALE: usize = 1 + NUM_ORIENTATIONS + NUM_ORIENTATIONS + NUM_CROSS_ORIENTATIONS;

/// Target L2 norm of the zeroth-order Gaussian filters.
pub const GAUSSIAN_NORM: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    Impulse,
    Gaussian,
    FirstDeriv,
    SecondDeriv,
    CrossDeriv,
}

impl FilterKind {
    pub fn order(self) -> u32 {
        match self {
            FilterKind::Impulse | FilterKind::Gaussian => 0,
            FilterKind::FirstDeriv => 1,
            FilterKind::SecondDeriv | FilterKind::CrossDeriv => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Impulse => "impulse",
            FilterKind::Gaussian => "gaussian",
            FilterKind::FirstDeriv => "first",
            FilterKind::SecondDeriv => "second",
            FilterKind::CrossDeriv => "cross",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A square, odd-sided correlation kernel with its place in the bank.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    kind: FilterKind,
    scale: u32,
    orientation: usize,
    radius: usize,
    kernel: Vec<f64>,
}

impl Filter {
    pub fn impulse() -> Self {
        Self {
            kind: FilterKind::Impulse,
            scale: 0,
            orientation: 0,
            radius: 0,
            kernel: vec![1.0],
        }
    }

    /// Samples a derivative-of-Gaussian kernel at integer offsets within ±⌈3σ⌉.
    fn sampled(kind: FilterKind, scale: u32, orientation: usize) -> Self {
        let sigma = f64::from(1u32 << scale);
        let radius = (3.0 * sigma).ceil() as usize;
        let theta = match kind {
            FilterKind::Impulse | FilterKind::Gaussian => 0.0,
            _ => orientation as f64 * PI / NUM_ORIENTATIONS as f64,
        };
        let (s, c) = theta.sin_cos();
        let s2 = sigma * sigma;
        let s4 = s2 * s2;
        let r = radius as isize;

        let mut kernel = Vec::with_capacity((2 * radius + 1).pow(2));
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (dx as f64, dy as f64);
                let g = (-(x * x + y * y) / (2.0 * s2)).exp();
                let along = c * x + s * y;
                let across = -s * x + c * y;
                let v = match kind {
                    FilterKind::Gaussian => g,
                    FilterKind::FirstDeriv => along / s2 * g,
                    FilterKind::SecondDeriv => (along * along / s4 - 1.0 / s2) * g,
                    FilterKind::CrossDeriv => along * across / s4 * g,
                    FilterKind::Impulse => unreachable!(),
                };
                kernel.push(v);
            }
        }

        let target_norm = if kind == FilterKind::Gaussian {
            GAUSSIAN_NORM
        } else {
            let mean = kernel.iter().sum::<f64>() / kernel.len() as f64;
            kernel.iter_mut().for_each(|v| *v -= mean);
            1.0
        };
        let norm = kernel.iter().map(|v| v * v).sum::<f64>().sqrt();
        kernel.iter_mut().for_each(|v| *v *= target_norm / norm);

        Self {
            kind,
            scale,
            orientation,
            radius,
            kernel,
        }
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    /// Scale index `s` (σ = 2^s pixels); 0 for the impulse.
    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn order(&self) -> u32 {
        self.kind.order()
    }

    pub fn orientation(&self) -> usize {
        self.orientation
    }

    /// Orientation angle in radians (0 for isotropic filters).
    pub fn angle(&self) -> f64 {
        match self.kind {
            FilterKind::Impulse | FilterKind::Gaussian => 0.0,
            _ => self.orientation as f64 * PI / NUM_ORIENTATIONS as f64,
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Row-major kernel taps, `side × side`.
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Tap at offset `(dx, dy)`, each in `-radius..=radius`.
    #[inline]
    pub fn tap(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        self.kernel[((dy + r) as usize) * self.side() + (dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.kernel.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.kernel.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn as_field(&self) -> ScalarField {
        ScalarField::from_raw(self.side(), self.side(), self.kernel.clone())
    }

    /// Transfer function of this kernel on a periodic `fft.width() × fft.height()`
    /// grid, so that the circular response to `y` has spectrum `H · Y`.
    pub(crate) fn transfer_function(&self, fft: &Fft2) -> Vec<Complex64> {
        let (w, h) = (fft.width() as isize, fft.height() as isize);
        let mut buf = vec![Complex64::new(0.0, 0.0); fft.len()];
        let r = self.radius as isize;
        for dy in -r..=r {
            for dx in -r..=r {
                let x = (-dx).rem_euclid(w) as usize;
                let y = (-dy).rem_euclid(h) as usize;
                buf[y * w as usize + x].re += self.tap(dx, dy);
            }
        }
        fft.forward(&mut buf);
        buf
    }
}

/// The ordered set of all analysis filters.
#[derive(Debug, Clone)]
pub struct FilterBank {
    filters: Vec<Filter>,
}

/// Named filter groups matching the ablation rows (by scale or by order).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterGroup {
    Scale(u32),
    Order(u32),
    Full,
}

impl FilterGroup {
    pub fn parse(name: &str) -> Option<Self> {
        let name = name.trim().to_ascii_lowercase();
        if name == "full" {
            return Some(FilterGroup::Full);
        }
        if let Some(s) = name.strip_prefix("scale") {
            return s.parse().ok().filter(|&s| s <= 3).map(FilterGroup::Scale);
        }
        if let Some(o) = name.strip_prefix("order") {
            return o.parse().ok().filter(|&o| o <= 2).map(FilterGroup::Order);
        }
        None
    }
}

impl FilterBank {
    /// Constructs the 64-filter bank in the documented index order.
    pub fn build() -> Self {
        let mut filters = Vec::with_capacity(NUM_FILTERS);
        filters.push(Filter::impulse());
        for &s in &SCALES {
            filters.push(Filter::sampled(FilterKind::Gaussian, s, 0));
            for k in 0..NUM_ORIENTATIONS {
                filters.push(Filter::sampled(FilterKind::FirstDeriv, s, k));
            }
            for k in 0..NUM_ORIENTATIONS {
                filters.push(Filter::sampled(FilterKind::SecondDeriv, s, k));
            }
            for k in 0..NUM_CROSS_ORIENTATIONS {
                filters.push(Filter::sampled(FilterKind::CrossDeriv, s, k));
            }
        }
        debug_assert_eq!(filters.len(), NUM_FILTERS);
        Self { filters }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn filters(&self) -> &[Filter] {
        &self.filters
    }

    pub fn get(&self, index: usize) -> Option<&Filter> {
        self.filters.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Filter> {
        self.filters.iter()
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// Checks a filter subset: nonempty, in range.
    pub fn check_subset(&self, subset: &[usize]) -> Result<()> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        if let Some(&index) = subset.iter().find(|&&i| i >= self.len()) {
            return Err(Error::FilterIndexOutOfRange {
                index,
                count: self.len(),
            });
        }
        Ok(())
    }

    pub fn max_radius(&self, subset: &[usize]) -> usize {
        subset
            .iter()
            .filter_map(|&i| self.get(i))
            .map(Filter::radius)
            .max()
            .unwrap_or(0)
    }

    pub fn group(&self, group: FilterGroup) -> Vec<usize> {
        self.filters
            .iter()
            .enumerate()
            .filter(|(_, f)| match group {
                FilterGroup::Full => true,
                FilterGroup::Scale(s) => f.scale() == s,
                FilterGroup::Order(o) => f.order() == o,
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Parses a comma-separated subset of filter indices and/or group names
    /// (`scale0..scale3`, `order0..order2`, `full`). The result is the sorted
    /// union.
    pub fn parse_subset(&self, spec: &str) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if let Ok(index) = token.parse::<usize>() {
                if index >= self.len() {
                    return Err(Error::FilterIndexOutOfRange {
                        index,
                        count: self.len(),
                    });
                }
                out.push(index);
            } else if let Some(group) = FilterGroup::parse(token) {
                out.extend(self.group(group));
            } else {
                return Err(Error::InvalidConfig(format!("unknown filter group {token:?}")));
            }
        }
        out.sort_unstable();
        out.dedup();
        if out.is_empty() {
            return Err(Error::EmptySubset);
        }
        Ok(out)
    }

    /// One line per filter: `index kind scale orientation norm`.
    pub fn index_listing(&self) -> String {
        let mut s = String::new();
        for (i, f) in self.filters.iter().enumerate() {
            s.push_str(&format!(
                "{} {} {} {} {:.9}\n",
                i,
                f.kind(),
                f.scale(),
                f.orientation(),
                f.norm()
            ));
        }
        s
    }
}

impl Default for FilterBank {
    fn default() -> Self {
        Self::build()
    }
}

pub fn build_filter_bank() -> FilterBank {
    FilterBank::build()
}

/// Same-size correlation with edge-replicate padding, by direct summation.
pub fn convolve_same(field: &ScalarField, filter: &Filter) -> ScalarField {
    if filter.kind() == FilterKind::Impulse {
        return field.clone();
    }
    let r = filter.radius() as isize;
    let (w, h) = (field.width(), field.height());
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                let yy = y as isize + dy;
                for dx in -r..=r {
                    acc += filter.tap(dx, dy) * field.get_clamped(x as isize + dx, yy);
                }
            }
            out[y * w + x] = acc;
        }
    }
    ScalarField::from_raw(w, h, out)
}

/// Computes the coefficient map `w_i = k_i ⋆ y` for every filter in `subset`,
/// in subset order.
///
/// Uses FFTs over the replicate-padded field; the crop is free of wrap-around
/// so the result equals [`convolve_same`] up to rounding.
pub fn analyze(
    y: &ScalarField,
    bank: &FilterBank,
    subset: &[usize],
) -> Result<Vec<(usize, ScalarField)>> {
    bank.check_subset(subset)?;
    let radius = bank.max_radius(subset);
    let (w, h) = (y.width(), y.height());
    let padded = y.pad_replicate(radius);
    let fft = Fft2::new(padded.width(), padded.height());
    let spectrum = fft.forward_real(padded.values());

    let mut out = Vec::with_capacity(subset.len());
    for &i in subset {
        let filter = &bank.filters[i];
        if filter.kind() == FilterKind::Impulse {
            out.push((i, y.clone()));
            continue;
        }
        let h_i = filter.transfer_function(&fft);
        let product: Vec<Complex64> = spectrum.iter().zip(&h_i).map(|(a, b)| a * b).collect();
        let full = ScalarField::from_raw(padded.width(), padded.height(), fft.inverse_real(product));
        out.push((i, full.crop(radius, radius, w, h)));
    }
    Ok(out)
}
