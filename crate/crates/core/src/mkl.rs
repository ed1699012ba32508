//! Mixing-weight updates, objectives, and trained-model plumbing for
//! lp-norm multiple kernel learning.
//!
//! The closed-form mixing update comes from stationarity of the primal in
//! theta: `theta_m = ||w_m||^(2/(p+1)) / (sum_m' ||w_m'||^(2p/(p+1)))^(1/p)`
//! with the weight norms recovered from the dual via
//! `||w_m||^2 = theta_m^2 a' K_m a`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelStack;

/// Offset used to emulate p = 1: the analytic update is only guaranteed to
/// converge for p > 1, so the sparse regime runs at `1 + P_ONE_DELTA`.
pub const P_ONE_DELTA: f64 = 1e-4;

/// The norm parameter of the mixing constraint `||theta||_p <= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PNorm {
    /// Sparse regime; internally trained at `1 + P_ONE_DELTA`.
    One,
    /// A finite exponent strictly greater than one.
    Finite(f64),
    /// Fixed uniform weights; equivalent to an SVM on the unweighted-sum
    /// kernel.
    Inf,
}

impl PNorm {
    /// Validates and wraps a numeric exponent. `f64::INFINITY` maps to
    /// [`PNorm::Inf`], exactly 1.0 to [`PNorm::One`].
    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::validation(format!("p must be >= 1, got {p}")));
        }
        Ok(if p == 1.0 {
            PNorm::One
        } else if p.is_infinite() {
            PNorm::Inf
        } else {
            PNorm::Finite(p)
        })
    }

    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(PNorm::Inf);
        }
        let p: f64 = t
            .parse()
            .map_err(|_| Error::validation(format!("cannot parse p from '{s}'")))?;
        PNorm::new(p)
    }

    /// The exponent actually used by the analytic update.
    pub fn effective(self) -> f64 {
        match self {
            PNorm::One => 1.0 + P_ONE_DELTA,
            PNorm::Finite(p) => p,
            PNorm::Inf => f64::INFINITY,
        }
    }

    /// Conjugate exponent `p* = p/(p-1)` of the nominal p, with the
    /// conventions 1 -> infinity and infinity -> 1.
    pub fn dual_exponent(self) -> f64 {
        match self {
            PNorm::One => f64::INFINITY,
            PNorm::Finite(p) => p / (p - 1.0),
            PNorm::Inf => 1.0,
        }
    }

    /// Conjugate exponent of the effective (trained) p, used for internal
    /// duality-gap accounting so that the gap stays nonnegative.
    pub fn dual_exponent_effective(self) -> f64 {
        match self {
            PNorm::One => (1.0 + P_ONE_DELTA) / P_ONE_DELTA,
            PNorm::Finite(p) => p / (p - 1.0),
            PNorm::Inf => 1.0,
        }
    }

    pub fn is_inf(self) -> bool {
        matches!(self, PNorm::Inf)
    }
}

impl std::fmt::Display for PNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PNorm::One => write!(f, "1"),
            PNorm::Finite(p) => write!(f, "{p}"),
            PNorm::Inf => write!(f, "inf"),
        }
    }
}

impl Serialize for PNorm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PNorm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PNorm::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    /// Full SVM solve between mixing updates.
    Wrapper,
    /// Mixing updates interleaved with chunking steps.
    Interleaved,
}

impl TrainingMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wrapper" => Ok(TrainingMode::Wrapper),
            "interleaved" => Ok(TrainingMode::Interleaved),
            other => Err(Error::validation(format!(
                "mode must be 'wrapper' or 'interleaved', got '{other}'"
            ))),
        }
    }
}

/// Training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MklConfig {
    /// Mixing-norm exponent; ignored when `q_block` is set.
    pub p: PNorm,
    /// Block-norm exponent q > 2; switches the mixing update to the
    /// inverse-power rule (weights shrink on large-norm kernels).
    pub q_block: Option<f64>,
    /// Soft-margin trade-off.
    pub c: f64,
    /// Inner (SVM) KKT tolerance.
    pub epsilon_svm: f64,
    /// Outer stopping tolerance: relative objective change and relative
    /// duality gap.
    pub epsilon_mkl: f64,
    pub mode: TrainingMode,
    /// Cap on outer iterations (full solves for wrapper mode, mixing-update
    /// callbacks for interleaved mode).
    pub max_outer: usize,
    /// Chunking steps between mixing-update callbacks in interleaved mode.
    pub callback_interval: usize,
    /// Working-set size of the inner solver.
    pub working_set_size: usize,
    /// Cap on inner working-set iterations per solve.
    pub max_svm_passes: usize,
    pub shrinking: bool,
}

impl Default for MklConfig {
    fn default() -> Self {
        MklConfig {
            p: PNorm::Finite(2.0),
            q_block: None,
            c: 1.0,
            epsilon_svm: 1e-3,
            epsilon_mkl: 1e-3,
            mode: TrainingMode::Interleaved,
            max_outer: 200,
            callback_interval: 1,
            working_set_size: 10,
            max_svm_passes: 100_000,
            shrinking: false,
        }
    }
}

impl MklConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(q) = self.q_block {
            if !(q > 2.0) || !q.is_finite() {
                return Err(Error::validation(format!(
                    "block-norm exponent q must be finite and > 2, got {q}"
                )));
            }
        }
        if !(self.c > 0.0) {
            return Err(Error::validation(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon_svm > 0.0) || !(self.epsilon_mkl > 0.0) {
            return Err(Error::validation("tolerances must be positive"));
        }
        if self.callback_interval == 0 {
            return Err(Error::validation("callback interval must be at least 1"));
        }
        self.svm_config().validate()
    }

    /// Inner-solver configuration implied by this training configuration.
    pub fn svm_config(&self) -> crate::svm::SvmConfig {
        crate::svm::SvmConfig {
            c: self.c,
            epsilon: self.epsilon_svm,
            working_set_size: self.working_set_size,
            max_passes: self.max_svm_passes,
            shrinking: self.shrinking,
        }
    }
}

/// Objective traces and counters collected during training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingReport {
    pub outer_iterations: usize,
    pub primal_trace: Vec<f64>,
    pub dual_trace: Vec<f64>,
    pub gap_trace: Vec<f64>,
    pub theta_trace: Vec<Vec<f64>>,
    pub final_gap: f64,
    pub wall_time_secs: f64,
    /// Number of times the inner precision was tightened.
    pub escalations: usize,
}

impl Default for TrainingReport {
    fn default() -> Self {
        Self::new()
    }
}

impl TrainingReport {
    /// Empty report, used for models loaded from disk or built by hand.
    pub fn new() -> Self {
        TrainingReport {
            outer_iterations: 0,
            primal_trace: Vec::new(),
            dual_trace: Vec::new(),
            gap_trace: Vec::new(),
            theta_trace: Vec::new(),
            final_gap: f64::INFINITY,
            wall_time_secs: 0.0,
            escalations: 0,
        }
    }
}

/// A trained lp-norm MKL classifier.
#[derive(Debug, Clone)]
pub struct MklModel {
    pub theta: Vec<f64>,
    /// Signed dual coefficients; `y_i alpha_i` lies in `[0, C]`.
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub config: MklConfig,
    pub report: TrainingReport,
}

impl MklModel {
    pub fn support_indices(&self) -> Vec<usize> {
        self.alpha
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// `||v||_p` with overflow-guarded scaling; handles p = infinity.
pub(crate) fn lp_norm(values: &[f64], p: f64) -> f64 {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0.0;
    }
    if p.is_infinite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v.abs() / max).powf(p)).sum();
    max * sum.powf(1.0 / p)
}

/// Closed-form mixing update for the lp constraint, p > 1.
///
/// Entries with nonpositive (or vanishing, below `1e-15 * max`) squared
/// norms are zeroed before the update; the rest receive
/// `theta_m ∝ v_m^(1/(p+1))` normalized to unit lp norm.
pub fn update_theta(w_norms_sq: &[f64], p: f64) -> Result<Vec<f64>> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::validation(format!(
            "analytic mixing update needs finite p > 1, got {p}"
        )));
    }
    let max = w_norms_sq.iter().fold(0.0f64, |m, &v| m.max(v));
    if !(max > 0.0) {
        return Err(Error::DegenerateModel(
            "all weight norms are nonpositive; at least one kernel must carry weight".into(),
        ));
    }
    let cutoff = 1e-15 * max;
    let scaled: Vec<f64> = w_norms_sq
        .iter()
        .map(|&v| if v <= cutoff { 0.0 } else { v / max })
        .collect();
    let denom_sum: f64 = scaled
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v.powf(p / (p + 1.0)))
        .sum();
    let denom = denom_sum.powf(1.0 / p);
    let mut theta: Vec<f64> = scaled
        .iter()
        .map(|&v| {
            if v > 0.0 {
                v.powf(1.0 / (p + 1.0)) / denom
            } else {
                0.0
            }
        })
        .collect();
    let norm = lp_norm(&theta, p);
    for t in theta.iter_mut() {
        *t /= norm;
    }
    Ok(theta)
}

/// Mixing update for block norms q > 2 (reparametrized as r = q/(q-2)):
/// `theta_m ∝ v_m^(-1/(r-1))` normalized to unit lr norm, so kernels with
/// larger weight norms receive smaller mixing coefficients.
pub fn update_theta_blocknorm(w_norms_sq: &[f64], q: f64) -> Result<Vec<f64>> {
    if !(q > 2.0) || !q.is_finite() {
        return Err(Error::validation(format!(
            "block-norm update needs finite q > 2, got {q}"
        )));
    }
    let r = q / (q - 2.0);
    for (m, &v) in w_norms_sq.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::SingularUpdate(format!(
                "weight norm of kernel {m} is {v}; drop the kernel before using the block-norm update"
            )));
        }
    }
    let min = w_norms_sq.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    // scaling by the minimum keeps the inverse powers at or below one
    let mut theta: Vec<f64> = w_norms_sq
        .iter()
        .map(|&v| (v / min).powf(-1.0 / (r - 1.0)))
        .collect();
    let norm = lp_norm(&theta, r);
    for t in theta.iter_mut() {
        *t /= norm;
    }
    Ok(theta)
}

/// Weight norms recovered from the dual: `||w_m||^2 = theta_m^2 a' K_m a`.
///
/// Negative quadratic forms (indefinite kernels) pass through so the caller
/// can zero the corresponding mixing coefficients.
pub fn compute_w_norms(alpha: &[f64], theta: &[f64], stack: &KernelStack) -> Vec<f64> {
    theta
        .iter()
        .enumerate()
        .map(|(m, &t)| t * t * stack.kernel(m).quad_form(alpha))
        .collect()
}

/// Decision values on the training sample:
/// `f(x_i) = sum_m theta_m (K_m alpha)_i + b`.
pub fn decision_values(stack: &KernelStack, theta: &[f64], alpha: &[f64], bias: f64) -> Vec<f64> {
    let n = stack.n();
    let mut f = vec![bias; n];
    for (m, &t) in theta.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let kernel = stack.kernel(m);
        for (j, &aj) in alpha.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            let coeff = t * aj;
            let row = kernel.row(j);
            for i in 0..n {
                f[i] += coeff * row[i];
            }
        }
    }
    f
}

pub(crate) fn hinge(f: f64, y: f64) -> f64 {
    (1.0 - f * y).max(0.0)
}

/// Primal value `C sum_i hinge + 1/2 sum_m ||w_m||^2 / theta_m` with the
/// convention 0/0 = 0. Returns infinity when some theta_m vanishes while
/// its weight does not.
pub fn primal_objective_parts(
    stack: &KernelStack,
    y: &[f64],
    theta: &[f64],
    alpha: &[f64],
    bias: f64,
    c: f64,
) -> f64 {
    let f = decision_values(stack, theta, alpha, bias);
    let loss: f64 = f.iter().zip(y).map(|(&fi, &yi)| hinge(fi, yi)).sum();
    let w_norms = compute_w_norms(alpha, theta, stack);
    let mut reg = 0.0;
    let scale = w_norms.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    for (m, &t) in theta.iter().enumerate() {
        if t > 0.0 {
            reg += w_norms[m] / t;
        } else if w_norms[m].abs() > 1e-15 * scale.max(1.0) {
            return f64::INFINITY;
        }
    }
    c * loss + 0.5 * reg
}

/// Primal objective of a trained (or intermediate) model.
pub fn primal_objective(model: &MklModel, stack: &KernelStack, y: &[f64]) -> f64 {
    primal_objective_parts(stack, y, &model.theta, &model.alpha, model.bias, model.config.c)
}

fn validate_dual_feasibility(alpha: &[f64], y: &[f64], c: f64) -> Result<()> {
    for (i, (&a, &yi)) in alpha.iter().zip(y).enumerate() {
        let labeled = yi * a;
        if labeled < -1e-10 || labeled > c + 1e-10 {
            return Err(Error::validation(format!(
                "alpha infeasible at index {i}: y*alpha = {labeled} outside [0, {c}]"
            )));
        }
    }
    let total: f64 = alpha.iter().sum();
    if total.abs() > 1e-8 * c * alpha.len() as f64 {
        return Err(Error::validation(format!(
            "alpha infeasible: sum alpha = {total:.3e} violates the equality constraint"
        )));
    }
    Ok(())
}

pub(crate) fn dual_objective_parts(
    stack: &KernelStack,
    y: &[f64],
    alpha: &[f64],
    p_star: f64,
) -> f64 {
    let linear: f64 = y.iter().zip(alpha).map(|(yi, ai)| yi * ai).sum();
    let quads: Vec<f64> = stack.iter().map(|k| k.quad_form(alpha)).collect();
    linear - 0.5 * lp_norm(&quads, p_star)
}

/// Dual value `1'(Y alpha) - 1/2 ||(alpha' K_m alpha)_m||_p*` in signed
/// form, with p* the conjugate of the model's nominal norm parameter.
pub fn dual_objective(model: &MklModel, stack: &KernelStack, y: &[f64]) -> Result<f64> {
    validate_dual_feasibility(&model.alpha, y, model.config.c)?;
    let p_star = match model.config.q_block {
        // there is no lp pairing in block-norm mode; certify the alpha
        // subproblem at the trained mixture instead
        Some(_) => return Ok(fixed_mixture_dual(stack, y, &model.theta, &model.alpha)),
        None => model.config.p.dual_exponent(),
    };
    Ok(dual_objective_parts(stack, y, &model.alpha, p_star))
}

/// Fixed-mixture dual `L - sum_m theta_m (1/2 a' K_m a)`.
pub(crate) fn fixed_mixture_dual(
    stack: &KernelStack,
    y: &[f64],
    theta: &[f64],
    alpha: &[f64],
) -> f64 {
    let linear: f64 = y.iter().zip(alpha).map(|(yi, ai)| yi * ai).sum();
    let quad: f64 = theta
        .iter()
        .enumerate()
        .map(|(m, &t)| {
            if t == 0.0 {
                0.0
            } else {
                t * 0.5 * stack.kernel(m).quad_form(alpha)
            }
        })
        .sum();
    linear - quad
}

pub(crate) fn relative_gap(primal: f64, dual: f64) -> f64 {
    (primal - dual) / primal.abs().max(1.0)
}

/// Relative duality gap `(primal - dual) / max(1, |primal|)`.
///
/// Nonnegative (up to round-off) whenever the nominal and trained norm
/// parameters coincide, i.e. for every p > 1; models trained in the sparse
/// regime pair a p = 1 dual with a p = 1 + delta primal, which can push the
/// value slightly negative near the optimum.
pub fn duality_gap(model: &MklModel, stack: &KernelStack, y: &[f64]) -> Result<f64> {
    let primal = primal_objective(model, stack, y);
    let dual = dual_objective(model, stack, y)?;
    Ok(relative_gap(primal, dual))
}

/// Decision values for test points. `test_rows[m]` holds the evaluations
/// `k_m(x_i, x_t)` of training point i against test point t, laid out as an
/// `n_test x n` matrix.
pub fn predict(model: &MklModel, test_rows: &[Array2<f64>]) -> Result<Vec<f64>> {
    if test_rows.len() != model.theta.len() {
        return Err(Error::validation(format!(
            "model mixes {} kernels but {} test-row matrices were given",
            model.theta.len(),
            test_rows.len()
        )));
    }
    let n = model.alpha.len();
    let n_test = test_rows
        .first()
        .map(|r| r.nrows())
        .ok_or_else(|| Error::validation("prediction needs at least one kernel"))?;
    for (m, rows) in test_rows.iter().enumerate() {
        if rows.nrows() != n_test || rows.ncols() != n {
            return Err(Error::validation(format!(
                "test rows for kernel {m} have shape {}x{}, expected {n_test}x{n}",
                rows.nrows(),
                rows.ncols()
            )));
        }
    }
    let mut f = vec![model.bias; n_test];
    for (m, &t) in model.theta.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let rows = &test_rows[m];
        for t_idx in 0..n_test {
            let mut acc = 0.0;
            for (i, &ai) in model.alpha.iter().enumerate() {
                if ai != 0.0 {
                    acc += ai * rows[[t_idx, i]];
                }
            }
            f[t_idx] += t * acc;
        }
    }
    Ok(f)
}

/// Predicted labels: the sign of the decision value (0.0 maps to +1).
pub fn predict_labels(model: &MklModel, test_rows: &[Array2<f64>]) -> Result<Vec<f64>> {
    Ok(predict(model, test_rows)?
        .into_iter()
        .map(|f| if f < 0.0 { -1.0 } else { 1.0 })
        .collect())
}
