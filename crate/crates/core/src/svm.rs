//! Chunking dual solver for the fixed-mixture SVM subproblem.
//!
//! Solves `max_a  sum_i y_i a_i - 1/2 a' (sum_m theta_m K_m) a` over signed
//! dual variables subject to `sum_i a_i = 0` and `0 <= y_i a_i <= C`, by
//! working-set decomposition. The solver keeps one gradient row per kernel,
//! `g[m][i] = (K_m a)_i`, so a caller can re-weight the kernel mixture
//! between chunking steps without discarding gradient information; this is
//! what the interleaved MKL trainer does.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelStack;

/// Parallelize per-kernel gradient updates only past this many row updates.
const PAR_GRADIENT_THRESHOLD: usize = 1 << 16;

/// Configuration of the chunking solver.
#[derive(Debug, Clone)]
pub struct SvmConfig {
    /// Soft-margin trade-off, must be positive.
    pub c: f64,
    /// KKT tolerance used as the stopping criterion.
    pub epsilon: f64,
    /// Working-set size Q; at least 2 and even.
    pub working_set_size: usize,
    /// Cap on working-set iterations.
    pub max_passes: usize,
    /// Skip bound variables with clearly satisfied KKT conditions. Off by
    /// default; when on, shrunk variables are reactivated for a final full
    /// KKT check before convergence is reported.
    pub shrinking: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            epsilon: 1e-3,
            working_set_size: 10,
            max_passes: 100_000,
            shrinking: false,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::validation(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::validation(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.working_set_size < 2 || !self.working_set_size.is_multiple_of(2) {
            return Err(Error::validation(format!(
                "working-set size must be even and at least 2, got {}",
                self.working_set_size
            )));
        }
        Ok(())
    }
}

/// Result of a dual solve. `alpha` is signed: `y_i alpha_i` lies in `[0, C]`.
#[derive(Debug, Clone)]
pub struct SvmSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Dual objective value at `alpha`.
    pub objective: f64,
    /// Indices with nonzero dual coefficient.
    pub support_indices: Vec<usize>,
    /// Working-set iterations spent.
    pub iterations: usize,
}

/// Gradient cache and objective bookkeeping of a running solve.
///
/// Invariants: `g[m][i] = sum_j alpha_j K_m[j][i]`, `g_hat = sum_m theta_m
/// g[m]`, `quad_per_kernel[m] = 1/2 sum_i g[m][i] alpha_i`.
#[derive(Debug, Clone)]
pub struct SolverState {
    g: Array2<f64>,
    g_hat: Vec<f64>,
    linear: f64,
    quad_per_kernel: Vec<f64>,
    quad_combined: f64,
}

impl SolverState {
    /// Builds the state from scratch for the given coefficients.
    pub fn from_alpha(stack: &KernelStack, theta: &[f64], y: &[f64], alpha: &[f64]) -> Self {
        let m = stack.len();
        let n = stack.n();
        let mut g = Array2::<f64>::zeros((m, n));
        for (mi, kernel) in stack.iter().enumerate() {
            let mut row = g.row_mut(mi);
            for (j, &aj) in alpha.iter().enumerate() {
                if aj != 0.0 {
                    let krow = kernel.row(j);
                    for i in 0..n {
                        row[i] += aj * krow[i];
                    }
                }
            }
        }
        let mut state = SolverState {
            g,
            g_hat: vec![0.0; n],
            linear: 0.0,
            quad_per_kernel: vec![0.0; m],
            quad_combined: 0.0,
        };
        state.refresh_g_hat(theta);
        state.refresh_objectives(theta, y, alpha);
        state
    }

    /// Per-kernel gradient row `g[m]`.
    pub fn gradient(&self, m: usize) -> &[f64] {
        self.g.row(m).to_slice().expect("row-major gradient cache")
    }

    /// Combined gradient `g_hat`.
    pub fn g_hat(&self) -> &[f64] {
        &self.g_hat
    }

    /// Linear term `L = sum_i y_i alpha_i`.
    pub fn linear_term(&self) -> f64 {
        self.linear
    }

    /// Combined quadratic term `S = sum_m theta_m S_m`.
    pub fn quad_combined(&self) -> f64 {
        self.quad_combined
    }

    /// Recomputes `g_hat[i] = sum_m theta_m g[m][i]` in kernel order.
    pub fn refresh_g_hat(&mut self, theta: &[f64]) {
        let n = self.g_hat.len();
        for i in 0..n {
            self.g_hat[i] = 0.0;
        }
        for (m, &t) in theta.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let row = self.g.row(m);
            for i in 0..n {
                self.g_hat[i] += t * row[i];
            }
        }
    }

    /// Recomputes the bookkeeping terms L, S_m, and S.
    pub fn refresh_objectives(&mut self, theta: &[f64], y: &[f64], alpha: &[f64]) {
        self.linear = y.iter().zip(alpha).map(|(yi, ai)| yi * ai).sum();
        for m in 0..self.quad_per_kernel.len() {
            let row = self.g.row(m);
            let mut s = 0.0;
            for (i, &ai) in alpha.iter().enumerate() {
                s += row[i] * ai;
            }
            self.quad_per_kernel[m] = 0.5 * s;
        }
        self.quad_combined = theta
            .iter()
            .zip(&self.quad_per_kernel)
            .map(|(t, s)| t * s)
            .sum();
    }

    /// Applies coefficient deltas on `indices` to every per-kernel gradient
    /// row. Each kernel's row is updated independently (and possibly in
    /// parallel), so the result is bitwise independent of the worker count.
    fn apply_deltas(&mut self, stack: &KernelStack, indices: &[usize], deltas: &[f64]) {
        let n = stack.n();
        let work = stack.len() * indices.len() * n;
        let update_row = |(m, grow): (usize, &mut [f64])| {
            let kernel = stack.kernel(m);
            for (&w, &d) in indices.iter().zip(deltas) {
                if d != 0.0 {
                    let krow = kernel.row(w);
                    for i in 0..n {
                        grow[i] += d * krow[i];
                    }
                }
            }
        };
        let flat = self
            .g
            .as_slice_mut()
            .expect("row-major gradient cache");
        if work >= PAR_GRADIENT_THRESHOLD && stack.len() > 1 {
            flat.par_chunks_mut(n)
                .enumerate()
                .for_each(|(m, grow)| update_row((m, grow)));
        } else {
            for (m, grow) in flat.chunks_mut(n).enumerate() {
                update_row((m, grow));
            }
        }
    }

    /// Largest relative difference between the incremental gradient cache
    /// and a from-scratch rebuild.
    pub fn gradient_drift(&self, stack: &KernelStack, alpha: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (m, kernel) in stack.iter().enumerate() {
            let row = self.g.row(m);
            let n = stack.n();
            for i in 0..n {
                let mut fresh = 0.0;
                for (j, &aj) in alpha.iter().enumerate() {
                    if aj != 0.0 {
                        fresh += aj * kernel.get(j, i);
                    }
                }
                let denom = fresh.abs().max(1.0);
                worst = worst.max((row[i] - fresh).abs() / denom);
            }
        }
        worst
    }
}

/// Per-kernel quadratic terms `S_m = 1/2 sum_i g[m][i] alpha_i`.
pub fn per_kernel_objectives(state: &SolverState) -> &[f64] {
    &state.quad_per_kernel
}

/// Recovers the threshold b from the KKT conditions.
///
/// Free support vectors satisfy `y_i (g_hat_i + b) = 1`, so b is their mean
/// residual; without free vectors, b is the midpoint of the feasible
/// interval derived from the bound constraints.
pub fn recover_bias(alpha: &[f64], g_hat: &[f64], y: &[f64], c: f64) -> f64 {
    let tol = 1e-9 * c;
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut b_low = f64::NEG_INFINITY; // max F over variables that can move up
    let mut b_high = f64::INFINITY; // min F over variables that can move down
    for i in 0..alpha.len() {
        let f = y[i] - g_hat[i];
        let labeled = y[i] * alpha[i];
        if labeled > tol && labeled < c - tol {
            free_sum += f;
            free_count += 1;
        }
        let (lo, hi) = if y[i] > 0.0 { (0.0, c) } else { (-c, 0.0) };
        if alpha[i] < hi - tol {
            b_low = b_low.max(f);
        }
        if alpha[i] > lo + tol {
            b_high = b_high.min(f);
        }
    }
    if free_count > 0 {
        return free_sum / free_count as f64;
    }
    match (b_low.is_finite(), b_high.is_finite()) {
        (true, true) => 0.5 * (b_low + b_high),
        (true, false) => b_low,
        (false, true) => b_high,
        (false, false) => 0.0,
    }
}

/// Maximal KKT violation of `alpha` at the bias recovered from the state.
///
/// Zero iff `alpha` is optimal for the fixed mixture; used as the solver's
/// stopping criterion.
pub fn max_kkt_violation(state: &SolverState, alpha: &[f64], y: &[f64], c: f64) -> f64 {
    let b = recover_bias(alpha, state.g_hat(), y, c);
    max_kkt_violation_at_bias(state.g_hat(), alpha, y, c, b)
}

fn max_kkt_violation_at_bias(g_hat: &[f64], alpha: &[f64], y: &[f64], c: f64, b: f64) -> f64 {
    let tol = 1e-9 * c;
    let mut worst = 0.0f64;
    for i in 0..alpha.len() {
        let f = y[i] - g_hat[i];
        let (lo, hi) = if y[i] > 0.0 { (0.0, c) } else { (-c, 0.0) };
        let can_up = alpha[i] < hi - tol;
        let can_down = alpha[i] > lo + tol;
        let v = match (can_up, can_down) {
            (true, true) => (f - b).abs(),
            (true, false) => (f - b).max(0.0),
            (false, true) => (b - f).max(0.0),
            (false, false) => 0.0,
        };
        worst = worst.max(v);
    }
    worst
}

fn validate_labels(y: &[f64]) -> Result<()> {
    let mut pos = 0usize;
    let mut neg = 0usize;
    for (i, &yi) in y.iter().enumerate() {
        if yi == 1.0 {
            pos += 1;
        } else if yi == -1.0 {
            neg += 1;
        } else {
            return Err(Error::validation(format!(
                "label at index {i} must be +1 or -1, got {yi}"
            )));
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::validation(
            "both classes must be present in the labels",
        ));
    }
    Ok(())
}

fn validate_theta(theta: &[f64], m: usize) -> Result<()> {
    if theta.len() != m {
        return Err(Error::validation(format!(
            "theta has {} entries for {} kernels",
            theta.len(),
            m
        )));
    }
    if theta.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(Error::validation("theta entries must be finite and nonnegative"));
    }
    if theta.iter().sum::<f64>() <= 0.0 {
        return Err(Error::validation("theta must not be all zero"));
    }
    Ok(())
}

/// Outcome of one working-set iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// Coefficients changed.
    Progress,
    /// No violating pair above the internal tolerance was found.
    Converged,
}

/// A running chunking solve. Owns its coefficients and state exclusively.
#[derive(Debug, Clone)]
pub struct ChunkingSolver<'a> {
    stack: &'a KernelStack,
    y: &'a [f64],
    config: SvmConfig,
    theta: Vec<f64>,
    alpha: Vec<f64>,
    state: SolverState,
    active: Vec<bool>,
    n_active: usize,
    steps: usize,
    steps_since_shrink: usize,
}

impl<'a> ChunkingSolver<'a> {
    pub fn new(
        stack: &'a KernelStack,
        theta: &[f64],
        y: &'a [f64],
        config: SvmConfig,
        warm_start: Option<&[f64]>,
    ) -> Result<Self> {
        config.validate()?;
        if y.len() != stack.n() {
            return Err(Error::validation(format!(
                "got {} labels for n={} samples",
                y.len(),
                stack.n()
            )));
        }
        validate_labels(y)?;
        validate_theta(theta, stack.len())?;
        let n = stack.n();
        let alpha = match warm_start {
            None => vec![0.0; n],
            Some(a) => {
                if a.len() != n {
                    return Err(Error::validation(format!(
                        "warm start has {} coefficients for n={n}",
                        a.len()
                    )));
                }
                let mut a = a.to_vec();
                let box_tol = 1e-8 * config.c;
                for i in 0..n {
                    let labeled = y[i] * a[i];
                    if labeled < -box_tol || labeled > config.c + box_tol {
                        return Err(Error::validation(format!(
                            "warm start violates the box constraint at index {i}: y*alpha = {labeled}"
                        )));
                    }
                    let (lo, hi) = if y[i] > 0.0 { (0.0, config.c) } else { (-config.c, 0.0) };
                    a[i] = a[i].clamp(lo, hi);
                }
                let residual: f64 = a.iter().sum();
                if residual.abs() > 1e-8 * config.c * n as f64 {
                    return Err(Error::validation(format!(
                        "warm start violates the equality constraint: sum alpha = {residual:.3e}"
                    )));
                }
                a
            }
        };
        let state = SolverState::from_alpha(stack, theta, y, &alpha);
        let n_active = n;
        Ok(ChunkingSolver {
            stack,
            y,
            config,
            theta: theta.to_vec(),
            alpha,
            state,
            active: vec![true; n],
            n_active,
            steps: 0,
            steps_since_shrink: 0,
        })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn labels(&self) -> &[f64] {
        self.y
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn config(&self) -> &SvmConfig {
        &self.config
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Sets a new KKT tolerance (used by precision escalation).
    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.config.epsilon = epsilon;
    }

    /// Replaces the kernel mixture and refreshes the combined gradient.
    /// The per-kernel gradient cache stays valid because it does not depend
    /// on theta.
    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        validate_theta(theta, self.stack.len())?;
        self.theta = theta.to_vec();
        self.state.refresh_g_hat(&self.theta);
        self.state
            .refresh_objectives(&self.theta, self.y, &self.alpha);
        Ok(())
    }

    /// Dual objective `L - S` at the current iterate.
    pub fn dual_objective(&self) -> f64 {
        self.state.linear_term() - self.state.quad_combined()
    }

    pub fn bias(&self) -> f64 {
        recover_bias(&self.alpha, self.state.g_hat(), self.y, self.config.c)
    }

    /// Maximal KKT violation over all variables. Gradient rows are updated
    /// for every index even when shrinking is on, so this is always valid.
    pub fn max_kkt_violation_full(&self) -> f64 {
        max_kkt_violation(&self.state, &self.alpha, self.y, self.config.c)
    }

    /// KKT violation restricted to the active set.
    fn max_kkt_violation_active(&self) -> f64 {
        if self.n_active == self.alpha.len() {
            return self.max_kkt_violation_full();
        }
        let b = self.bias();
        let tol = 1e-9 * self.config.c;
        let mut worst = 0.0f64;
        for i in 0..self.alpha.len() {
            if !self.active[i] {
                continue;
            }
            let f = self.y[i] - self.state.g_hat()[i];
            let (lo, hi) = self.bounds(i);
            let can_up = self.alpha[i] < hi - tol;
            let can_down = self.alpha[i] > lo + tol;
            let v = match (can_up, can_down) {
                (true, true) => (f - b).abs(),
                (true, false) => (f - b).max(0.0),
                (false, true) => (b - f).max(0.0),
                (false, false) => 0.0,
            };
            worst = worst.max(v);
        }
        worst
    }

    fn bounds(&self, i: usize) -> (f64, f64) {
        if self.y[i] > 0.0 {
            (0.0, self.config.c)
        } else {
            (-self.config.c, 0.0)
        }
    }

    /// Picks up to Q variables: Q/2 with the largest gradient among those
    /// that can increase, Q/2 with the smallest among those that can
    /// decrease. Ties break toward the lowest index.
    fn select_working_set(&self) -> Vec<usize> {
        let q_half = self.config.working_set_size / 2;
        let mut up: Vec<(f64, usize)> = Vec::new();
        let mut down: Vec<(f64, usize)> = Vec::new();
        for i in 0..self.alpha.len() {
            if !self.active[i] {
                continue;
            }
            let f = self.y[i] - self.state.g_hat()[i];
            let (lo, hi) = self.bounds(i);
            if self.alpha[i] < hi {
                up.push((f, i));
            }
            if self.alpha[i] > lo {
                down.push((f, i));
            }
        }
        up.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        down.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut picked: Vec<usize> = Vec::with_capacity(self.config.working_set_size);
        for &(_, i) in up.iter().take(q_half) {
            picked.push(i);
        }
        for &(_, i) in down.iter().take(q_half) {
            if !picked.contains(&i) {
                picked.push(i);
            }
        }
        picked.sort_unstable();
        picked
    }

    /// One working-set iteration: select, solve the dense subproblem, and
    /// fold the coefficient deltas back into the gradient caches.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let ws = self.select_working_set();
        if ws.len() < 2 {
            return Ok(StepOutcome::Converged);
        }
        let deltas = self.solve_subproblem(&ws);
        let changed = deltas.iter().any(|&d| d != 0.0);
        if !changed {
            return Ok(StepOutcome::Converged);
        }
        for (&w, &d) in ws.iter().zip(&deltas) {
            self.alpha[w] += d;
            let (lo, hi) = self.bounds(w);
            self.alpha[w] = self.alpha[w].clamp(lo, hi);
        }
        self.state.apply_deltas(self.stack, &ws, &deltas);
        self.state.refresh_g_hat(&self.theta);
        self.state
            .refresh_objectives(&self.theta, self.y, &self.alpha);
        self.steps += 1;
        self.steps_since_shrink += 1;
        Ok(StepOutcome::Progress)
    }

    /// Solves the subproblem restricted to `ws` on the dense mixture block,
    /// by repeated most-violating-pair steps until the pair violation inside
    /// the block is negligible. Returns the coefficient deltas.
    fn solve_subproblem(&self, ws: &[usize]) -> Vec<f64> {
        let q = ws.len();
        // dense q x q block of the combined kernel
        let mut block = vec![0.0; q * q];
        for (a, &i) in ws.iter().enumerate() {
            for (b, &j) in ws.iter().enumerate() {
                let mut v = 0.0;
                for (m, &t) in self.theta.iter().enumerate() {
                    if t != 0.0 {
                        v += t * self.stack.kernel(m).get(i, j);
                    }
                }
                block[a * q + b] = v;
            }
        }
        let mut local_alpha: Vec<f64> = ws.iter().map(|&i| self.alpha[i]).collect();
        let mut local_f: Vec<f64> = ws
            .iter()
            .map(|&i| self.y[i] - self.state.g_hat()[i])
            .collect();
        let bounds: Vec<(f64, f64)> = ws.iter().map(|&i| self.bounds(i)).collect();

        let inner_tol = (self.config.epsilon * 1e-3).min(1e-9);
        let max_inner = 1000 * q * q;
        for _ in 0..max_inner {
            // most violating pair inside the block
            let mut best_up: Option<(f64, usize)> = None;
            let mut best_down: Option<(f64, usize)> = None;
            for a in 0..q {
                let (lo, hi) = bounds[a];
                if local_alpha[a] < hi
                    && best_up.is_none_or(|(f, _)| local_f[a] > f) {
                        best_up = Some((local_f[a], a));
                    }
                if local_alpha[a] > lo
                    && best_down.is_none_or(|(f, _)| local_f[a] < f) {
                        best_down = Some((local_f[a], a));
                    }
            }
            let (f_up, a_up) = match best_up {
                Some(v) => v,
                None => break,
            };
            let (f_down, a_down) = match best_down {
                Some(v) => v,
                None => break,
            };
            if a_up == a_down || f_up - f_down <= inner_tol {
                break;
            }
            // analytic pair step with clipping
            let eta = block[a_up * q + a_up] + block[a_down * q + a_down]
                - 2.0 * block[a_up * q + a_down];
            let mut t = (f_up - f_down) / eta.max(1e-12);
            let room_up = bounds[a_up].1 - local_alpha[a_up];
            let room_down = local_alpha[a_down] - bounds[a_down].0;
            t = t.min(room_up).min(room_down);
            if t <= 0.0 {
                break;
            }
            local_alpha[a_up] += t;
            local_alpha[a_down] -= t;
            for b in 0..q {
                local_f[b] -= t * (block[a_up * q + b] - block[a_down * q + b]);
            }
        }
        ws.iter()
            .enumerate()
            .map(|(a, &i)| local_alpha[a] - self.alpha[i])
            .collect()
    }

    /// Deactivates bound variables whose KKT conditions hold with a clear
    /// margin; their gradients are no longer maintained.
    fn shrink(&mut self) {
        let mut b_low = f64::NEG_INFINITY;
        let mut b_high = f64::INFINITY;
        for i in 0..self.alpha.len() {
            if !self.active[i] {
                continue;
            }
            let f = self.y[i] - self.state.g_hat()[i];
            let (lo, hi) = self.bounds(i);
            if self.alpha[i] < hi {
                b_low = b_low.max(f);
            }
            if self.alpha[i] > lo {
                b_high = b_high.min(f);
            }
        }
        let margin = self.config.epsilon;
        for i in 0..self.alpha.len() {
            if !self.active[i] {
                continue;
            }
            let f = self.y[i] - self.state.g_hat()[i];
            let (lo, hi) = self.bounds(i);
            let at_lo = self.alpha[i] <= lo;
            let at_hi = self.alpha[i] >= hi;
            // at_lo: the variable could only move up, which pays off only
            // when f exceeds b_high; symmetrically for at_hi.
            let keep = if at_lo {
                f >= b_high - margin
            } else if at_hi {
                f <= b_low + margin
            } else {
                true
            };
            if !keep && self.n_active > 2 {
                self.active[i] = false;
                self.n_active -= 1;
            }
        }
    }

    /// Reactivates all variables. Gradients stay valid because they are
    /// maintained for every index regardless of the active flags.
    fn reactivate_all(&mut self) {
        for a in self.active.iter_mut() {
            *a = true;
        }
        self.n_active = self.alpha.len();
    }

    /// Runs working-set iterations until the maximal KKT violation drops
    /// below the configured tolerance.
    pub fn solve(&mut self) -> Result<SvmSolution> {
        let shrink_period = self.alpha.len().clamp(16, 1000);
        loop {
            let violation = self.max_kkt_violation_active();
            if violation <= self.config.epsilon {
                if self.n_active != self.alpha.len() {
                    // final full KKT check over the reactivated set
                    self.reactivate_all();
                    continue;
                }
                return Ok(self.solution());
            }
            if self.steps >= self.config.max_passes {
                return Err(Error::SvmNonConvergence {
                    violation,
                    iterations: self.steps,
                    best: Box::new(self.solution()),
                });
            }
            match self.step()? {
                StepOutcome::Progress => {}
                StepOutcome::Converged => {
                    if self.n_active != self.alpha.len() {
                        self.reactivate_all();
                        continue;
                    }
                    // No movable pair left; the midpoint bias makes the
                    // remaining violation zero.
                    return Ok(self.solution());
                }
            }
            if self.config.shrinking && self.steps_since_shrink >= shrink_period {
                self.steps_since_shrink = 0;
                self.shrink();
            }
        }
    }

    /// Snapshot of the current iterate as a solution.
    pub fn solution(&self) -> SvmSolution {
        let support_indices = self
            .alpha
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(i, _)| i)
            .collect();
        SvmSolution {
            alpha: self.alpha.clone(),
            bias: self.bias(),
            objective: self.dual_objective(),
            support_indices,
            iterations: self.steps,
        }
    }
}

/// Solves the fixed-mixture dual to the configured KKT tolerance.
pub fn solve_dual(
    stack: &KernelStack,
    theta: &[f64],
    y: &[f64],
    config: &SvmConfig,
    warm_start: Option<&[f64]>,
) -> Result<SvmSolution> {
    let mut solver = ChunkingSolver::new(stack, theta, y, config.clone(), warm_start)?;
    solver.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{linear_kernel, KernelStack};
    use ndarray::array;

    fn two_point_stack() -> KernelStack {
        let x = array![[1.0], [-1.0]];
        KernelStack::new(vec![linear_kernel(x.view(), "lin").unwrap()]).unwrap()
    }

    fn tight_config(c: f64) -> SvmConfig {
        SvmConfig {
            c,
            epsilon: 1e-9,
            ..SvmConfig::default()
        }
    }

    #[test]
    fn two_point_closed_form() {
        let stack = two_point_stack();
        let y = [1.0, -1.0];
        let sol = solve_dual(&stack, &[1.0], &y, &tight_config(1.0), None).unwrap();
        assert!((sol.alpha[0] - 0.5).abs() < 1e-8);
        assert!((sol.alpha[1] + 0.5).abs() < 1e-8);
        assert!(sol.bias.abs() < 1e-8);
        assert!((sol.objective - 0.5).abs() < 1e-8);
        assert_eq!(sol.support_indices, vec![0, 1]);
    }

    #[test]
    fn two_point_box_clipped() {
        let stack = two_point_stack();
        let y = [1.0, -1.0];
        let sol = solve_dual(&stack, &[1.0], &y, &tight_config(0.1), None).unwrap();
        assert!((y[0] * sol.alpha[0] - 0.1).abs() < 1e-10);
        assert!((y[1] * sol.alpha[1] - 0.1).abs() < 1e-10);
    }

    #[test]
    fn duplicated_kernel_mixture_linearity() {
        let x = array![[1.0], [-1.0], [0.3], [-0.4]];
        let k = linear_kernel(x.view(), "lin").unwrap();
        let y = [1.0, -1.0, 1.0, -1.0];
        let single = KernelStack::new(vec![k.clone()]).unwrap();
        let double =
            KernelStack::new(vec![k.clone(), k.with_name("lin2")]).unwrap();
        let s1 = solve_dual(&single, &[2.0], &y, &tight_config(1.0), None).unwrap();
        let s2 = solve_dual(&double, &[1.0, 1.0], &y, &tight_config(1.0), None).unwrap();
        for (a, b) in s1.alpha.iter().zip(&s2.alpha) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn kkt_violation_cases() {
        let stack = two_point_stack();
        let y = [1.0, -1.0];
        let theta = [1.0];

        // at alpha = 0 the violation is exactly 1
        let state = SolverState::from_alpha(&stack, &theta, &y, &[0.0, 0.0]);
        let v0 = max_kkt_violation(&state, &[0.0, 0.0], &y, 1.0);
        assert!((v0 - 1.0).abs() < 1e-12, "violation at zero: {v0}");

        // at the optimum the violation vanishes
        let opt = [0.5, -0.5];
        let state = SolverState::from_alpha(&stack, &theta, &y, &opt);
        let v_opt = max_kkt_violation(&state, &opt, &y, 1.0);
        assert!(v_opt < 1e-9, "violation at optimum: {v_opt}");

        // perturbing an interior coefficient moves the violation linearly
        let mut worst_ratio: f64 = 0.0;
        for &delta in &[1e-3, 1e-4, 1e-5] {
            let a = [0.5 + delta, -0.5 - delta];
            let state = SolverState::from_alpha(&stack, &theta, &y, &a);
            let v = max_kkt_violation(&state, &a, &y, 1.0);
            worst_ratio = worst_ratio.max((v / delta - 2.0).abs());
        }
        // slope of the violation in delta is the curvature 2 here
        assert!(worst_ratio < 1e-6, "non-linear response: {worst_ratio}");
    }

    #[test]
    fn per_kernel_objectives_cases() {
        let stack = two_point_stack();
        let y = [1.0, -1.0];
        let state = SolverState::from_alpha(&stack, &[1.0], &y, &[0.0, 0.0]);
        assert_eq!(per_kernel_objectives(&state), &[0.0]);

        let state = SolverState::from_alpha(&stack, &[1.0], &y, &[0.5, -0.5]);
        let s = per_kernel_objectives(&state);
        assert!((s[0] - 0.5).abs() < 1e-15);

        let k = stack.kernel(0).clone();
        let double = KernelStack::new(vec![k.clone(), k.with_name("b")]).unwrap();
        let state = SolverState::from_alpha(&double, &[0.5, 0.5], &y, &[0.5, -0.5]);
        let s = per_kernel_objectives(&state);
        assert_eq!(s[0], s[1]);
    }

    #[test]
    fn bias_on_shifted_points() {
        // both points shifted by +c under a linear kernel; brute-force primal
        // gives w = 1, b = -shift
        let shift = 0.7;
        let x = array![[1.0 + shift], [-1.0 + shift]];
        let stack = KernelStack::new(vec![linear_kernel(x.view(), "lin").unwrap()]).unwrap();
        let y = [1.0, -1.0];
        let sol = solve_dual(&stack, &[1.0], &y, &tight_config(1.0), None).unwrap();
        assert!((sol.bias + shift).abs() < 1e-6, "bias: {}", sol.bias);
    }

    #[test]
    fn bias_midpoint_without_free_vectors() {
        let stack = two_point_stack();
        let y = [1.0, -1.0];
        let c = 0.05; // both coefficients clip at the bound
        let sol = solve_dual(&stack, &[1.0], &y, &tight_config(c), None).unwrap();
        // interval midpoint is 0 by symmetry
        assert!(sol.bias.abs() < 1e-12);
        let state = SolverState::from_alpha(&stack, &[1.0], &y, &sol.alpha);
        let b_low = y[0] - state.g_hat()[0];
        let b_high = y[1] - state.g_hat()[1];
        let mid = 0.5 * (b_low + b_high);
        assert!((sol.bias - mid).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_inputs() {
        let stack = two_point_stack();
        let config = SvmConfig::default();
        assert!(solve_dual(&stack, &[1.0], &[1.0, 1.0], &config, None).is_err());
        assert!(solve_dual(&stack, &[1.0], &[1.0, 0.5], &config, None).is_err());
        assert!(solve_dual(&stack, &[0.0], &[1.0, -1.0], &config, None).is_err());
        assert!(solve_dual(&stack, &[1.0, 1.0], &[1.0, -1.0], &config, None).is_err());
        let bad_q = SvmConfig {
            working_set_size: 3,
            ..SvmConfig::default()
        };
        assert!(solve_dual(&stack, &[1.0], &[1.0, -1.0], &bad_q, None).is_err());
    }

    #[test]
    fn equality_constraint_and_box_hold() {
        let x = array![
            [0.3, 1.0],
            [2.0, -0.5],
            [0.0, 0.7],
            [1.1, 1.2],
            [-0.4, 0.9],
            [0.9, -1.3]
        ];
        let k = crate::kernel::rbf_kernel(x.view(), 2.0, "rbf").unwrap();
        let stack = KernelStack::new(vec![k]).unwrap();
        let y = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let c = 2.5;
        let sol = solve_dual(&stack, &[1.0], &y, &tight_config(c), None).unwrap();
        let total: f64 = sol.alpha.iter().sum();
        assert!(total.abs() <= 1e-8 * c * y.len() as f64);
        for (i, &a) in sol.alpha.iter().enumerate() {
            let labeled = y[i] * a;
            assert!((-1e-10..=c + 1e-10).contains(&labeled));
        }
    }

    #[test]
    fn monotone_dual_ascent_per_step() {
        let x = array![
            [0.3, 1.0],
            [2.0, -0.5],
            [0.0, 0.7],
            [1.1, 1.2],
            [-0.4, 0.9],
            [0.9, -1.3],
            [1.7, 0.2],
            [-1.2, -0.8]
        ];
        let k = crate::kernel::rbf_kernel(x.view(), 1.0, "rbf").unwrap();
        let stack = KernelStack::new(vec![k]).unwrap();
        let y = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let mut solver =
            ChunkingSolver::new(&stack, &[1.0], &y, tight_config(1.0), None).unwrap();
        let mut prev = solver.dual_objective();
        for _ in 0..200 {
            match solver.step().unwrap() {
                StepOutcome::Converged => break,
                StepOutcome::Progress => {
                    let cur = solver.dual_objective();
                    assert!(cur >= prev - 1e-12, "ascent broken: {prev} -> {cur}");
                    prev = cur;
                }
            }
        }
    }

    #[test]
    fn gradient_drift_small_after_convergence() {
        let x = array![
            [0.3, 1.0],
            [2.0, -0.5],
            [0.0, 0.7],
            [1.1, 1.2],
            [-0.4, 0.9],
            [0.9, -1.3]
        ];
        let k1 = crate::kernel::rbf_kernel(x.view(), 1.0, "rbf1").unwrap();
        let k2 = crate::kernel::rbf_kernel(x.view(), 3.0, "rbf2").unwrap();
        let stack = KernelStack::new(vec![k1, k2]).unwrap();
        let y = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let mut solver =
            ChunkingSolver::new(&stack, &[0.6, 0.4], &y, tight_config(1.0), None).unwrap();
        let sol = solver.solve().unwrap();
        assert!(solver.state().gradient_drift(&stack, &sol.alpha) <= 1e-6);
    }

    #[test]
    fn shrinking_matches_plain_solution() {
        let x = array![
            [0.3, 1.0],
            [2.0, -0.5],
            [0.0, 0.7],
            [1.1, 1.2],
            [-0.4, 0.9],
            [0.9, -1.3],
            [1.7, 0.2],
            [-1.2, -0.8],
            [0.5, 0.5],
            [-0.9, 1.4]
        ];
        let k = crate::kernel::rbf_kernel(x.view(), 1.5, "rbf").unwrap();
        let stack = KernelStack::new(vec![k]).unwrap();
        let y = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let plain = solve_dual(&stack, &[1.0], &y, &tight_config(0.8), None).unwrap();
        let shrunk_cfg = SvmConfig {
            shrinking: true,
            ..tight_config(0.8)
        };
        let shrunk = solve_dual(&stack, &[1.0], &y, &shrunk_cfg, None).unwrap();
        assert!((plain.objective - shrunk.objective).abs() < 1e-8);
    }

    #[test]
    fn warm_start_is_accepted_and_infeasible_rejected() {
        let stack = two_point_stack();
        let y = [1.0, -1.0];
        let config = tight_config(1.0);
        let cold = solve_dual(&stack, &[1.0], &y, &config, None).unwrap();
        let warm = solve_dual(&stack, &[1.0], &y, &config, Some(&cold.alpha)).unwrap();
        assert!(warm.iterations <= cold.iterations);
        assert!((warm.objective - cold.objective).abs() < 1e-10);

        assert!(solve_dual(&stack, &[1.0], &y, &config, Some(&[2.0, -2.0])).is_err());
        assert!(solve_dual(&stack, &[1.0], &y, &config, Some(&[0.5, -0.1])).is_err());
    }
}
