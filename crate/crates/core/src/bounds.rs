//! Rademacher-complexity generalization bounds for lp-norm kernel mixtures.
//!
//! The l1 base bound is `sqrt(c e ceil(log M) R^2 / n)` with `c = 23/22`;
//! the conversion to an arbitrary p multiplies by `sqrt(M^(1/p*))`. The
//! logarithm in `ceil(log M)` is taken as the natural logarithm, consistent
//! with the `e` factor (the base is not fixed elsewhere, so this choice is
//! pinned here).

use crate::error::{Error, Result};
use crate::mkl::PNorm;

/// Constant of the l1 Rademacher bound.
pub const BOUND_C: f64 = 23.0 / 22.0;

/// `ceil(ln M)` as used by the bounds; requires M > 1.
pub fn log_m_ceil(m: usize) -> Result<f64> {
    if m <= 1 {
        return Err(Error::validation(format!(
            "the Rademacher bound needs at least two kernels, got M = {m}"
        )));
    }
    Ok((m as f64).ln().ceil())
}

fn validate_r_n(r: f64, n: usize) -> Result<()> {
    if !(r > 0.0) {
        return Err(Error::validation(format!(
            "kernel diagonal bound R must be positive, got {r}"
        )));
    }
    if n == 0 {
        return Err(Error::validation("sample size n must be at least 1"));
    }
    Ok(())
}

/// Exponent `1/p*` of the kernel-count factor, handled symbolically so that
/// p = 1 gives exactly 0 and p = infinity exactly 1.
pub fn inv_dual_exponent(p: PNorm) -> f64 {
    match p {
        PNorm::One => 0.0,
        PNorm::Finite(v) => (v - 1.0) / v,
        PNorm::Inf => 1.0,
    }
}

/// Factor `sqrt(M^(1/p*))` converting the l1 bound into the lp bound.
pub fn conversion_factor(m: usize, p: PNorm) -> f64 {
    (m as f64).powf(inv_dual_exponent(p)).sqrt()
}

/// Rademacher bound for the l1-constrained mixture class:
/// `sqrt(c e ceil(log M) R^2 / n)`.
pub fn l1_rademacher_bound(m: usize, r: f64, n: usize) -> Result<f64> {
    validate_r_n(r, n)?;
    let log_m = log_m_ceil(m)?;
    Ok((BOUND_C * std::f64::consts::E * log_m * r * r / n as f64).sqrt())
}

/// Rademacher bound for the lp-constrained class, computed as the l1 bound
/// times the conversion factor so the ratio of the two is exact.
pub fn lp_rademacher_bound(m: usize, r: f64, n: usize, p: PNorm) -> Result<f64> {
    Ok(l1_rademacher_bound(m, r, n)? * conversion_factor(m, p))
}

/// Inputs shared by the risk bounds.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs {
    /// Kernel count; must exceed 1.
    pub m: usize,
    /// Sample size.
    pub n: usize,
    /// Kernel diagonal bound: `k_m(x, x) <= R^2`.
    pub r: f64,
    /// Mixing-norm parameter.
    pub p: PNorm,
    /// Margin, used by the radius-margin bound.
    pub gamma: f64,
    /// Confidence parameter in (0, 1).
    pub delta: f64,
    /// Lipschitz constant of the loss.
    pub lipschitz: f64,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        validate_r_n(self.r, self.n)?;
        log_m_ceil(self.m)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::validation(format!(
                "confidence delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

fn confidence_term(delta: f64, n: usize) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// Risk bound `R_hat + 2 L sqrt(c e M^(1/p*) ceil(log M) R^2 / n)
/// + sqrt(ln(2/delta) / (2n))` for an L-Lipschitz loss bounded in [0, 1].
pub fn generalization_bound(inputs: &BoundInputs, empirical_risk: f64) -> Result<f64> {
    inputs.validate()?;
    if !(0.0..=1.0).contains(&empirical_risk) {
        return Err(Error::validation(format!(
            "empirical risk must lie in [0, 1], got {empirical_risk}"
        )));
    }
    if !(inputs.lipschitz >= 0.0) {
        return Err(Error::validation("Lipschitz constant must be nonnegative"));
    }
    let complexity = lp_rademacher_bound(inputs.m, inputs.r, inputs.n, inputs.p)?;
    Ok(empirical_risk + 2.0 * inputs.lipschitz * complexity + confidence_term(inputs.delta, inputs.n))
}

/// Radius-margin bound: the margin loss is 1/gamma-Lipschitz, so this is
/// the generalization bound at `L = 1/gamma`.
pub fn radius_margin_bound(inputs: &BoundInputs, empirical_margin_risk: f64) -> Result<f64> {
    if !(inputs.gamma > 0.0) {
        return Err(Error::validation(format!(
            "margin gamma must be positive, got {}",
            inputs.gamma
        )));
    }
    let with_margin_lipschitz = BoundInputs {
        lipschitz: 1.0 / inputs.gamma,
        ..*inputs
    };
    generalization_bound(&with_margin_lipschitz, empirical_margin_risk)
}

/// The two reference scenarios from the case study: a uniformly non-sparse
/// target and a one-kernel sparse target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseScenario {
    Uniform,
    Sparse,
}

impl CaseScenario {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(CaseScenario::Uniform),
            "sparse" => Ok(CaseScenario::Sparse),
            other => Err(Error::validation(format!(
                "scenario must be 'uniform' or 'sparse', got '{other}'"
            ))),
        }
    }
}

/// Smallest block-norm radius C that keeps the scenario's target classifier
/// in the hypothesis class: `M^((p+1)/(2p))` for the uniform target, 1 for
/// the sparse one.
pub fn case_study_radius(m: usize, scenario: CaseScenario, p: PNorm) -> f64 {
    match scenario {
        CaseScenario::Sparse => 1.0,
        CaseScenario::Uniform => {
            let exponent = match p {
                PNorm::One => 1.0,
                PNorm::Finite(v) => (v + 1.0) / (2.0 * v),
                PNorm::Inf => 0.5,
            };
            (m as f64).powf(exponent)
        }
    }
}

/// Risk bound with the class radius substituted for the scenario. The
/// uniform scenario yields a value provably constant in p (the
/// `M^(1/p*) C^2` factor collapses to `M^2`); the sparse scenario reduces
/// to the plain generalization bound and grows with p.
pub fn case_study_bounds(
    m: usize,
    n: usize,
    r: f64,
    lipschitz: f64,
    delta: f64,
    scenario: CaseScenario,
    p: PNorm,
) -> Result<f64> {
    let inputs = BoundInputs {
        m,
        n,
        r,
        p,
        gamma: 1.0,
        delta,
        lipschitz,
    };
    inputs.validate()?;
    let c_radius = case_study_radius(m, scenario, p);
    let complexity = lp_rademacher_bound(m, r, n, p)? * c_radius;
    Ok(2.0 * lipschitz * complexity + confidence_term(delta, n))
}

/// Competitor bound `sqrt(c e p* M^(1/p*) R^2 / n)`, stated for integer
/// conjugate exponents; computed for any p > 1 as a comparison column.
pub fn cortes_comparison_bound(m: usize, r: f64, n: usize, p: PNorm) -> Result<f64> {
    validate_r_n(r, n)?;
    let p_star = p.dual_exponent();
    if !p_star.is_finite() {
        return Err(Error::validation(
            "the comparison bound diverges for p = 1; use p > 1",
        ));
    }
    let factor = (m as f64).powf(inv_dual_exponent(p));
    Ok((BOUND_C * std::f64::consts::E * p_star * factor * r * r / n as f64).sqrt())
}
