//! Synthetic two-Gaussian benchmark harness: data generation, per-feature
//! kernel stacks, grid search over (p, C), and test/model-error reporting.
//!
//! Samples come from two isotropic Gaussians with opposite means
//! `+-(rho/||t||_2) t`, where `t` is a binary pattern marking informative
//! features. The fraction of zero components `nu = 1 - mean(t)` measures
//! the sparsity of the learning problem. Every feature (or block of
//! features) is turned into a linear kernel and multiplicatively
//! normalized, then lp-norm MKL models are trained across a (p, C) grid.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{linear_kernel, normalize_multiplicative, KernelStack};
use crate::mkl::{MklConfig, PNorm, TrainingMode};
use crate::train::train;

/// Configuration of one synthetic scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyConfig {
    /// Feature count.
    pub d: usize,
    /// Binary pattern of informative features; must contain at least one 1.
    pub theta_true: Vec<u8>,
    /// Separation of the class means along the informative direction.
    pub rho: f64,
    pub n_train: usize,
    pub n_validate: usize,
    pub n_test: usize,
    pub seed: u64,
    pub repetitions: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            d: 50,
            theta_true: vec![1; 50],
            rho: 1.75,
            n_train: 50,
            n_validate: 2000,
            n_test: 2000,
            seed: 0,
            repetitions: 100,
        }
    }
}

impl ToyConfig {
    /// Pattern with the first `informative` features set, the classic
    /// leading-ones layout.
    pub fn leading_ones(d: usize, informative: usize) -> Vec<u8> {
        (0..d).map(|i| u8::from(i < informative)).collect()
    }

    /// Fraction of uninformative features.
    pub fn nu(&self) -> f64 {
        let ones: usize = self.theta_true.iter().map(|&t| t as usize).sum();
        1.0 - ones as f64 / self.d as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.theta_true.len() != self.d {
            return Err(Error::validation(format!(
                "pattern length {} does not match d = {}",
                self.theta_true.len(),
                self.d
            )));
        }
        if self.theta_true.iter().all(|&t| t == 0) {
            return Err(Error::validation("pattern must mark at least one informative feature"));
        }
        if self.theta_true.iter().any(|&t| t > 1) {
            return Err(Error::validation("pattern entries must be 0 or 1"));
        }
        if !(self.rho > 0.0) {
            return Err(Error::validation(format!("rho must be positive, got {}", self.rho)));
        }
        for (what, n) in [
            ("n_train", self.n_train),
            ("n_validate", self.n_validate),
            ("n_test", self.n_test),
        ] {
            if n < 2 || n % 2 != 0 {
                return Err(Error::validation(format!(
                    "{what} must be even and at least 2 for a balanced sample, got {n}"
                )));
            }
        }
        if self.repetitions == 0 {
            return Err(Error::validation("repetitions must be at least 1"));
        }
        Ok(())
    }
}

/// A labeled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
}

/// SplitMix64 step, used to derive independent substream seeds so that
/// parallel sweep cells are reproducible regardless of scheduling.
fn mix_seed(mut state: u64) -> u64 {
    state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for a tagged substream of a master seed.
pub fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = mix_seed(seed);
    for &t in tags {
        state = mix_seed(state ^ t);
    }
    ChaCha8Rng::seed_from_u64(state)
}

fn sample_gaussians(
    d: usize,
    theta_true: &[u8],
    rho: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Dataset {
    let norm: f64 = (theta_true.iter().map(|&t| (t as f64) * (t as f64)).sum::<f64>()).sqrt();
    let mu: Vec<f64> = theta_true.iter().map(|&t| rho * t as f64 / norm).collect();
    let half = n / 2;
    let mut x = Array2::<f64>::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i < half { 1.0 } else { -1.0 };
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            x[[i, j]] = label * mu[j] + z;
        }
        y.push(label);
    }
    Dataset { x, y }
}

/// Draws one balanced training sample (`n_train` points, first half labeled
/// +1) from the scenario's generative model, deterministically in the seed.
pub fn generate_toy(config: &ToyConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = derive_rng(config.seed, &[0]);
    Ok(sample_gaussians(
        config.d,
        &config.theta_true,
        config.rho,
        config.n_train,
        &mut rng,
    ))
}

/// Standard normal CDF.
fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Misclassification probability of the optimal classifier for the
/// generative model: the class means are `2 rho` apart under identity
/// covariance, so the error is `Phi(-rho)`.
pub fn bayes_error(rho: f64) -> f64 {
    assert!(rho > 0.0, "rho must be positive");
    normal_cdf(-rho)
}

/// Model error `|| theta_hat/||theta_hat|| - theta/||theta|| ||_2`.
pub fn model_error(theta_hat: &[f64], theta_true: &[f64]) -> Result<f64> {
    if theta_hat.len() != theta_true.len() {
        return Err(Error::validation(format!(
            "model error needs equal lengths, got {} and {}",
            theta_hat.len(),
            theta_true.len()
        )));
    }
    let nh: f64 = theta_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nt: f64 = theta_true.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nh == 0.0 || nt == 0.0 {
        return Err(Error::validation("model error is undefined for zero vectors"));
    }
    Ok(theta_hat
        .iter()
        .zip(theta_true)
        .map(|(h, t)| {
            let diff = h / nh - t / nt;
            diff * diff
        })
        .sum::<f64>()
        .sqrt())
}

/// Per-block linear kernels over the training sample, multiplicatively
/// normalized. Keeps the raw variance denominators so test evaluations can
/// be rescaled consistently.
pub struct BlockKernels {
    pub stack: KernelStack,
    pub denominators: Vec<f64>,
    pub groups: Vec<Vec<usize>>,
}

/// Groups features into consecutive blocks of `block_size` (1 reproduces
/// the per-feature setup) and builds normalized linear kernels.
pub fn build_block_kernels(x: &Array2<f64>, block_size: usize) -> Result<BlockKernels> {
    if block_size == 0 {
        return Err(Error::validation("block size must be at least 1"));
    }
    let d = x.ncols();
    let mut kernels = Vec::new();
    let mut denominators = Vec::new();
    let mut groups = Vec::new();
    for (m, chunk) in (0..d).collect::<Vec<_>>().chunks(block_size).enumerate() {
        let cols: Vec<usize> = chunk.to_vec();
        let sub = x.select(ndarray::Axis(1), &cols);
        let raw = linear_kernel(sub.view(), format!("block{m}"))?;
        let d_m = crate::kernel::multiplicative_denominator(&raw);
        let normalized = normalize_multiplicative(&raw)?;
        kernels.push(normalized);
        denominators.push(d_m);
        groups.push(cols);
    }
    Ok(BlockKernels {
        stack: KernelStack::new(kernels)?,
        denominators,
        groups,
    })
}

impl BlockKernels {
    /// Collapses the kernel mixture back into per-feature linear weights:
    /// `f(x) = sum_j w_j x_j + b` with
    /// `w_j = (theta_m / D_m) sum_i alpha_i x_train[i][j]` for j in block m.
    pub fn linear_weights(&self, x_train: &Array2<f64>, theta: &[f64], alpha: &[f64]) -> Vec<f64> {
        let d = x_train.ncols();
        let mut w = vec![0.0; d];
        for (m, group) in self.groups.iter().enumerate() {
            if theta[m] == 0.0 {
                continue;
            }
            let scale = theta[m] / self.denominators[m];
            for &j in group {
                let mut acc = 0.0;
                for (i, &ai) in alpha.iter().enumerate() {
                    if ai != 0.0 {
                        acc += ai * x_train[[i, j]];
                    }
                }
                w[j] = scale * acc;
            }
        }
        w
    }

    /// Per-block mean of a per-feature binary pattern, for comparing mixing
    /// weights against the generative truth when blocks group features.
    pub fn block_pattern(&self, theta_true: &[u8]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|&j| theta_true[j] as f64).sum::<f64>() / g.len() as f64)
            .collect()
    }
}

/// Fraction of sign mismatches of the linear rule `w'x + b` on a sample.
pub fn linear_classification_error(w: &[f64], bias: f64, data: &Dataset) -> f64 {
    let n = data.y.len();
    let mut wrong = 0usize;
    for i in 0..n {
        let mut f = bias;
        for (j, &wj) in w.iter().enumerate() {
            f += wj * data.x[[i, j]];
        }
        let label = if f < 0.0 { -1.0 } else { 1.0 };
        if label != data.y[i] {
            wrong += 1;
        }
    }
    wrong as f64 / n as f64
}

/// Sweep specification: scenarios x norms x soft-margin grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scenarios: Vec<ToyConfig>,
    pub ps: Vec<PNorm>,
    pub c_grid: Vec<f64>,
    pub mode: TrainingMode,
    /// Features per kernel; 1 reproduces the per-feature setup.
    pub block_size: usize,
    pub epsilon_svm: f64,
    pub epsilon_mkl: f64,
    pub max_outer: usize,
    pub seed: u64,
}

impl SweepConfig {
    /// The controlled sparsity study with its standard norm set and
    /// half-decade C grid.
    pub fn standard_study(seed: u64) -> Self {
        let d = 50;
        let nus = [0.0f64, 0.44, 0.64, 0.82, 0.92, 0.98];
        let scenarios = nus
            .iter()
            .map(|&nu| {
                let informative = ((1.0 - nu) * d as f64).round().max(1.0) as usize;
                ToyConfig {
                    d,
                    theta_true: ToyConfig::leading_ones(d, informative),
                    seed,
                    ..ToyConfig::default()
                }
            })
            .collect();
        SweepConfig {
            scenarios,
            ps: vec![
                PNorm::One,
                PNorm::Finite(4.0 / 3.0),
                PNorm::Finite(2.0),
                PNorm::Finite(4.0),
                PNorm::Inf,
            ],
            c_grid: (0..9).map(|i| 10f64.powf(-4.0 + 0.5 * i as f64)).collect(),
            mode: TrainingMode::Interleaved,
            block_size: 1,
            epsilon_svm: 1e-3,
            epsilon_mkl: 1e-3,
            max_outer: 200,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.ps.is_empty() || self.c_grid.is_empty() {
            return Err(Error::validation(
                "sweep needs at least one scenario, one p, and one C",
            ));
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        if self.c_grid.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::validation("every C in the grid must be positive"));
        }
        if self.block_size == 0 {
            return Err(Error::validation("block size must be at least 1"));
        }
        Ok(())
    }

    fn mkl_config(&self, p: PNorm, c: f64) -> MklConfig {
        MklConfig {
            p,
            c,
            epsilon_svm: self.epsilon_svm,
            epsilon_mkl: self.epsilon_mkl,
            mode: self.mode,
            max_outer: self.max_outer,
            ..MklConfig::default()
        }
    }
}

/// Results of one repetition for one (scenario, p) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RepResult {
    c_selected: f64,
    boundary_hit: bool,
    validation_error: f64,
    test_error: f64,
    model_error: f64,
    failures: usize,
}

/// Aggregated results for one (scenario, p) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub scenario_index: usize,
    pub scenario_nu: f64,
    pub p: PNorm,
    pub c_selected: f64,
    pub test_error: f64,
    pub test_error_stderr: f64,
    pub model_error: f64,
    pub model_error_stderr: f64,
    pub repetitions: usize,
    pub failures: usize,
    pub boundary_hits: usize,
    /// Raw per-repetition test errors, aligned across p within a scenario
    /// (same datasets), which is what paired comparisons need.
    pub per_rep_test_error: Vec<f64>,
    pub per_rep_model_error: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub cells: Vec<SweepCell>,
    pub c_grid: Vec<f64>,
    pub seed: u64,
}

impl ExperimentReport {
    pub fn cell(&self, scenario_index: usize, p: PNorm) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.scenario_index == scenario_index && c.p == p)
    }

    /// CSV table with one row per (scenario, p) cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "scenario_nu,p,C_selected,test_error,test_error_stderr,model_error,model_error_stderr,repetitions\n",
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.scenario_nu,
                c.p,
                c.c_selected,
                c.test_error,
                c.test_error_stderr,
                c.model_error,
                c.model_error_stderr,
                c.repetitions
            ));
        }
        out
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// One repetition of one scenario: shared datasets and kernels, then the
/// full (p, C) grid. Returns one result per p, aligned with `config.ps`.
fn run_repetition(
    config: &SweepConfig,
    scenario_index: usize,
    rep: usize,
) -> Result<Vec<RepResult>> {
    let scenario = &config.scenarios[scenario_index];
    let mut train_rng = derive_rng(config.seed, &[scenario_index as u64, rep as u64, 1]);
    let mut val_rng = derive_rng(config.seed, &[scenario_index as u64, rep as u64, 2]);
    let mut test_rng = derive_rng(config.seed, &[scenario_index as u64, rep as u64, 3]);
    let train_set = sample_gaussians(
        scenario.d,
        &scenario.theta_true,
        scenario.rho,
        scenario.n_train,
        &mut train_rng,
    );
    let val_set = sample_gaussians(
        scenario.d,
        &scenario.theta_true,
        scenario.rho,
        scenario.n_validate,
        &mut val_rng,
    );
    let test_set = sample_gaussians(
        scenario.d,
        &scenario.theta_true,
        scenario.rho,
        scenario.n_test,
        &mut test_rng,
    );
    let kernels = build_block_kernels(&train_set.x, config.block_size)?;
    let true_pattern = kernels.block_pattern(&scenario.theta_true);

    let mut results = Vec::with_capacity(config.ps.len());
    for &p in &config.ps {
        let mut failures = 0usize;
        let mut best: Option<(f64, usize, Vec<f64>, f64)> = None; // (val_err, c_idx, theta, bias+w via weights)
        let mut best_weights: Option<(Vec<f64>, f64)> = None;
        for (c_idx, &c) in config.c_grid.iter().enumerate() {
            let mkl = config.mkl_config(p, c);
            let model = match train(&kernels.stack, &train_set.y, &mkl) {
                Ok(m) => m,
                Err(Error::MklNonConvergence { best: b, .. }) => {
                    failures += 1;
                    *b
                }
                Err(_) => {
                    failures += 1;
                    continue;
                }
            };
            let w = kernels.linear_weights(&train_set.x, &model.theta, &model.alpha);
            let val_err = linear_classification_error(&w, model.bias, &val_set);
            let better = match &best {
                None => true,
                Some((err, _, _, _)) => val_err < *err,
            };
            if better {
                best = Some((val_err, c_idx, model.theta.clone(), model.bias));
                best_weights = Some((w, model.bias));
            }
        }
        let Some((val_err, c_idx, theta, _)) = best else {
            return Err(Error::validation(format!(
                "every C failed for scenario {scenario_index}, p = {p}"
            )));
        };
        let (w, bias) = best_weights.expect("weights recorded with best");
        let test_err = linear_classification_error(&w, bias, &test_set);
        let me = model_error(&theta, &true_pattern)?;
        results.push(RepResult {
            c_selected: config.c_grid[c_idx],
            boundary_hit: c_idx == 0 || c_idx + 1 == config.c_grid.len(),
            validation_error: val_err,
            test_error: test_err,
            model_error: me,
            failures,
        });
    }
    Ok(results)
}

/// Runs the full sweep. Repetitions of each scenario run in parallel; every
/// repetition derives its RNG streams from (seed, scenario, repetition), so
/// the report is identical regardless of the worker count.
pub fn run_sparsity_sweep(config: &SweepConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = config
        .scenarios
        .iter()
        .enumerate()
        .flat_map(|(s, scenario)| (0..scenario.repetitions).map(move |r| (s, r)))
        .collect();
    let rep_results: Vec<Result<Vec<RepResult>>> = jobs
        .par_iter()
        .map(|&(s, r)| run_repetition(config, s, r))
        .collect();

    let mut cells = Vec::new();
    for (s, scenario) in config.scenarios.iter().enumerate() {
        for (p_idx, &p) in config.ps.iter().enumerate() {
            let mut test_errors = Vec::new();
            let mut model_errors = Vec::new();
            let mut selected = Vec::new();
            let mut boundary_hits = 0usize;
            let mut failures = 0usize;
            for (job_idx, &(js, _)) in jobs.iter().enumerate() {
                if js != s {
                    continue;
                }
                match &rep_results[job_idx] {
                    Ok(reps) => {
                        let r = &reps[p_idx];
                        test_errors.push(r.test_error);
                        model_errors.push(r.model_error);
                        selected.push(r.c_selected);
                        if r.boundary_hit {
                            boundary_hits += 1;
                        }
                        failures += r.failures;
                    }
                    Err(_) => failures += 1,
                }
            }
            let (test_error, test_error_stderr) = mean_and_stderr(&test_errors);
            let (me, me_stderr) = mean_and_stderr(&model_errors);
            let c_selected = median(&mut selected.clone());
            cells.push(SweepCell {
                scenario_index: s,
                scenario_nu: scenario.nu(),
                p,
                c_selected,
                test_error,
                test_error_stderr,
                model_error: me,
                model_error_stderr: me_stderr,
                repetitions: test_errors.len(),
                failures,
                boundary_hits,
                per_rep_test_error: test_errors,
                per_rep_model_error: model_errors,
            });
        }
    }
    Ok(ExperimentReport {
        cells,
        c_grid: config.c_grid.clone(),
        seed: config.seed,
    })
}

/// Paired t statistic for the one-sided hypothesis `mean(a - b) > 0`,
/// returning `(t, degrees_of_freedom)`. A zero-variance difference yields a
/// signed infinite statistic.
pub fn paired_t_statistic(a: &[f64], b: &[f64]) -> Result<(f64, usize)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::validation(
            "paired test needs two equally long samples of at least 2",
        ));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let t = if se == 0.0 {
        if mean > 0.0 {
            f64::INFINITY
        } else if mean < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    } else {
        mean / se
    };
    Ok((t, n - 1))
}
