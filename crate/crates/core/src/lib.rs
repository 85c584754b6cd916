//! Fast debiasing of the LASSO.
//!
//! The debiased LASSO corrects `β̂` with a weight matrix `W`:
//! `β̂_d = β̂ + (1/n) Wᵀ(y − Aβ̂)`. Each column of `W` minimizes `(1/n)‖w‖²`
//! subject to `‖(1/n)Aᵀw − e_j‖∞ ≤ μ`. When `μ ≥ ρ/(1+ρ)` the minimizer is
//! `n(1−μ)/‖a_j‖² · a_j`, so `W` costs one pass over `A` instead of `p`
//! quadratic programs.
//!
//! Modules:
//!
//! * [`model`]: synthetic designs, sparse signals and measurements
//! * [`coherence`]: `ρ`, `L`, `ν`, the `μ` threshold and probabilistic bounds
//! * [`lasso`]: coordinate-descent LASSO with a KKT certificate
//! * [`debias`]: closed-form weights and the debiasing update
//! * [`qp`]: dual coordinate-ascent baseline with duality-gap certificates
//! * [`inference`]: z-tests, intervals, sensitivity and specificity
//! * [`experiments`]: Monte Carlo drivers and their output files
//!
//! All numeric code is generic over [`Scalar`] (`f32`, `f64`); the aliases
//! below fix `f64`.

pub mod coherence;
pub mod debias;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod io;
pub mod lasso;
pub mod model;
pub mod qp;
pub mod rng;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use coherence::{bound_chain, coherence_stats, compute_l, compute_nu, compute_rho, mu_from_rho, theoretical_mu};
pub use debias::{closed_form_weights, debias, feasibility_margin, Provenance};
pub use inference::{confidence_interval, score_support, test_support};
pub use lasso::{fit_lasso, kkt_residual};
pub use model::{generate_design, generate_signal, noise_sigma, sample_measurements, Ensemble, EnsembleSpec};
pub use qp::{duality_gap, solve_all, solve_column};

pub type DesignMatrix = model::DesignMatrix<f64>;
pub type SparseSignal = model::SparseSignal<f64>;
pub type Measurement = model::Measurement<f64>;
pub type CoherenceStats = coherence::CoherenceStats<f64>;
pub type LassoConfig = lasso::LassoConfig<f64>;
pub type LassoEstimate = lasso::LassoEstimate<f64>;
pub type DebiasWeights = debias::DebiasWeights<f64>;
pub type DebiasedEstimate = debias::DebiasedEstimate<f64>;
pub type QpSolution = qp::QpSolution<f64>;

pub type DesignMatrix32 = model::DesignMatrix<f32>;
pub type DebiasWeights32 = debias::DebiasWeights<f32>;
