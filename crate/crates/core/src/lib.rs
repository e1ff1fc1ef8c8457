//! Identification of ARMA graphical models by generalized maximum entropy
//! with reweighted group-sparsity.
//!
//! A model has spectral density `Φ = p Q⁻¹` where `p` is a scalar and `Q` a
//! symmetric matrix trigonometric polynomial; the zero pattern of `Q` is the
//! conditional-independence graph of the process.

// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks, and
// the quadrature loops index several per-lag arrays with one counter
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod error;
pub mod freqgrid;
pub mod gml;
mod linalg;
pub mod model;
pub mod moments;
pub mod objectives;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use freqgrid::{EdgeSet, FrequencyGrid, MatrixTrigPoly, ScalarTrigPoly, SpectrumGrid};
pub use model::ArmaGraphicalModel;
pub use moments::{MomentEstimates, TimeSeries};
pub use objectives::{DualPoint, GammaWeights, ProblemData};
