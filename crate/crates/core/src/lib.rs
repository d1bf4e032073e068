//! Numerical laboratory for iterated orthogonal Hadamard transforms of
//! continuous i.i.d. sources.
//!
//! The crate evolves conditional densities along polarization paths with a
//! successive-cancellation recursion and measures the information
//! functionals that drive the limit behaviour: differential entropy, KL
//! divergence to the moment-matched Gaussian, Fisher information, variance
//! and tail variance. On top of that sit Monte Carlo estimators for the
//! per-path entropy/variance/Fisher sequences, a conditional-CLT experiment
//! for side-information models, an executable battery of inequality and
//! convergence checks, and a compression experiment that ranks transform
//! outputs by conditional entropy.
//!
//! Everything is deterministic: random draws are counter-based functions of
//! `(seed, stream, trial, slot)`, and reductions run in fixed order, so
//! results are bitwise reproducible at any thread count.

pub mod compress;
pub mod density;
pub mod error;
mod fft;
pub mod harness;
pub mod rng;
pub mod sc;
pub mod suite;
pub mod transform;

pub use density::{
    convolve_add, entropy_jump, kl_divergence, l1_distance, make_gaussian, make_mixture,
    make_uniform_noise, scale_density, scaled_convolve, GaussianSpec, GridDensity, MixtureSpec,
};
pub use error::{Error, Result};
pub use harness::{
    cclt_experiment, estimate_all_paths, estimate_path_sequence, CcltReport, ExperimentConfig,
    LevelStats, SideInfoModel,
};
pub use sc::{branch_minus_given, branch_plus, sc_all_conditionals, sc_conditional_density, ScNode};
pub use suite::{run_full_suite, CheckResult};
pub use transform::{bit_reversal_permute, PathSpec, TransformPlan};
