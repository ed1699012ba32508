//! lp-norm multiple kernel learning.
//!
//! Jointly learns SVM dual coefficients and nonnegative kernel mixing
//! weights `theta` under the constraint `||theta||_p <= 1`. Sparse mixtures
//! come out of p near 1, the unweighted-sum kernel out of p = infinity, and
//! everything in between interpolates. Training alternates an analytic
//! closed-form update of `theta` with chunking steps of a working-set dual
//! SVM solver, either to full precision per update (wrapper) or interleaved
//! step by step.
//!
//! The crate also ships the surrounding toolkit: Gram-matrix construction
//! and normalization utilities, kernel alignment matrices, Rademacher
//! generalization-bound calculators, and a synthetic two-Gaussian benchmark
//! harness with a (p, C) grid search.
//!
//! ```
//! use lpmkl::{rbf_kernel, train, KernelStack, MklConfig, PNorm};
//! use ndarray::array;
//!
//! let x = array![[0.0, 1.0], [1.8, 0.2], [0.2, 0.9], [2.1, -0.3]];
//! let y = [1.0, -1.0, 1.0, -1.0];
//! let stack = KernelStack::new(vec![
//!     rbf_kernel(x.view(), 1.0, "narrow").unwrap(),
//!     rbf_kernel(x.view(), 10.0, "wide").unwrap(),
//! ])
//! .unwrap();
//! let config = MklConfig { p: PNorm::Finite(2.0), ..MklConfig::default() };
//! let model = train(&stack, &y, &config).unwrap();
//! assert!(model.report.final_gap <= config.epsilon_mkl);
//! ```

// `!(x > 0.0)` is used for validation on purpose: it rejects NaN along
// with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod io;
pub mod kernel;
pub mod mkl;
pub mod svm;
pub mod train;

pub use error::{Error, Result};
pub use experiments::{
    bayes_error, generate_toy, model_error, paired_t_statistic, run_sparsity_sweep, Dataset,
    ExperimentReport, SweepConfig, ToyConfig,
};
pub use kernel::{
    alignment, alignment_matrix, center, linear_kernel, multiplicative_denominator,
    normalize_multiplicative, normalize_spherical, rbf_kernel, KernelMatrix, KernelStack,
};
pub use mkl::{
    compute_w_norms, decision_values, dual_objective, duality_gap, predict, predict_labels,
    primal_objective, update_theta, update_theta_blocknorm, MklConfig, MklModel, PNorm,
    TrainingMode, TrainingReport,
};
pub use svm::{
    max_kkt_violation, per_kernel_objectives, recover_bias, solve_dual, ChunkingSolver,
    SolverState, SvmConfig, SvmSolution,
};
pub use train::{train, train_interleaved, train_wrapper};
