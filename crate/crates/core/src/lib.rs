//! Dense inverse-depth recovery from per-pixel distributions over an
//! overcomplete set of depth-derivative coefficients.
//!
//! The pipeline:
//!
//! 1. [`filter_bank`]: a 64-filter derivative-of-Gaussian bank (impulse plus
//!    three scales of zeroth, first and second order filters).
//! 2. [`coeff_model`]: per-filter Gaussian mixtures fit by 1-D K-means, soft
//!    targets and the variance-weighted KL loss.
//! 3. [`predictor`]: the `OWM1` weight-map interface and a synthetic predictor.
//! 4. [`globalizer`]: alternating minimization with Fourier-domain y-updates.
//! 5. [`metrics`]: `y = 1/z` conversions and depth accuracy metrics.

pub mod cli;
pub mod coeff_model;
pub mod error;
pub mod fft;
pub mod field;
pub mod filter_bank;
pub mod globalizer;
pub mod metrics;
pub mod pfm;
pub mod pipeline;
pub mod predictor;
pub mod synth;

pub use coeff_model::{MixtureModel, WeightMap};
pub use error::{Error, Result};
pub use field::ScalarField;
pub use filter_bank::{Filter, FilterBank, FilterKind};
pub use globalizer::{globalize, SolveTrace, SolverConfig};
pub use metrics::DepthMetrics;
pub use predictor::CorruptionConfig;
