//! Gram matrices: construction, validation, normalization, and comparison.
//!
//! A [`KernelMatrix`] is a dense, symmetric n-by-n Gram matrix with a text
//! label; a [`KernelStack`] is an ordered set of such matrices over the same
//! samples. Matrices are stored row-major in 64-bit floats and are immutable
//! after construction, so they can be shared freely across threads.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check at construction.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// One n-by-n symmetric Gram matrix with provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: Array2<f64>,
    name: String,
}

impl KernelMatrix {
    /// Builds a kernel matrix from raw values.
    ///
    /// Entries must be finite and symmetric within [`SYMMETRY_TOL`]
    /// (relative to `max(1, |K[i][j]|)`); small asymmetries are repaired by
    /// averaging `K` and its transpose, larger ones are rejected.
    pub fn new(values: Array2<f64>, name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        let (r, c) = values.dim();
        if r != c || r == 0 {
            return Err(Error::validation(format!(
                "kernel '{name}': expected a nonempty square matrix, got {r}x{c}"
            )));
        }
        for &v in values.iter() {
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "kernel '{name}': non-finite entry {v}"
                )));
            }
        }
        let mut values = values;
        for i in 0..r {
            for j in (i + 1)..r {
                let a = values[[i, j]];
                let b = values[[j, i]];
                let tol = SYMMETRY_TOL * a.abs().max(1.0);
                if (a - b).abs() > tol {
                    return Err(Error::validation(format!(
                        "kernel '{name}': asymmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
                let avg = 0.5 * (a + b);
                values[[i, j]] = avg;
                values[[j, i]] = avg;
            }
        }
        Ok(KernelMatrix { values, name })
    }

    /// Number of samples n.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Row i as a contiguous view (row-major storage).
    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    /// Entry K[i][j].
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn trace(&self) -> f64 {
        self.values.diag().sum()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Quadratic form `a' K a` accumulated in row index order.
    pub fn quad_form(&self, a: &[f64]) -> f64 {
        assert_eq!(a.len(), self.n(), "quad_form: dimension mismatch");
        let mut total = 0.0;
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let row = self.row(i);
            let mut dot = 0.0;
            for (j, &aj) in a.iter().enumerate() {
                dot += row[j] * aj;
            }
            total += ai * dot;
        }
        total
    }

    /// Advisory positive-semi-definiteness check.
    ///
    /// Accepts the matrix when its smallest eigenvalue is at least
    /// `-1e-8 * max(trace, 1)`. Intended for small n; eigendecomposition is
    /// O(n^3) which is why this is opt-in rather than part of construction.
    pub fn check_psd(&self) -> Result<()> {
        let min = self.min_eigenvalue();
        let tol = -1e-8 * self.trace().max(1.0);
        if min < tol {
            return Err(Error::DegenerateKernel(format!(
                "kernel '{}': smallest eigenvalue {min:.3e} below PSD tolerance {tol:.3e}",
                self.name
            )));
        }
        Ok(())
    }

    /// Smallest eigenvalue of the (symmetric) matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.n();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| self.values[[i, j]]);
        m.symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// Renames the matrix, keeping the values.
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Ordered set of M kernel matrices over the same n samples.
#[derive(Debug, Clone)]
pub struct KernelStack {
    kernels: Vec<KernelMatrix>,
    n: usize,
}

impl KernelStack {
    /// Requires at least one kernel, a shared sample count, and unique names.
    pub fn new(kernels: Vec<KernelMatrix>) -> Result<Self> {
        let first = kernels
            .first()
            .ok_or_else(|| Error::validation("kernel stack must contain at least one kernel"))?;
        let n = first.n();
        for k in &kernels {
            if k.n() != n {
                return Err(Error::validation(format!(
                    "kernel '{}' has n={} but the stack expects n={n}",
                    k.name(),
                    k.n()
                )));
            }
        }
        for (i, a) in kernels.iter().enumerate() {
            for b in kernels.iter().skip(i + 1) {
                if a.name() == b.name() {
                    return Err(Error::validation(format!(
                        "duplicate kernel name '{}' in stack",
                        a.name()
                    )));
                }
            }
        }
        Ok(KernelStack { kernels, n })
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kernel(&self, m: usize) -> &KernelMatrix {
        &self.kernels[m]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, KernelMatrix> {
        self.kernels.iter()
    }

    /// Weighted sum `sum_m theta_m K_m`, accumulated in kernel order.
    pub fn weighted_sum(&self, theta: &[f64]) -> Result<KernelMatrix> {
        if theta.len() != self.len() {
            return Err(Error::validation(format!(
                "theta has {} entries for a stack of {} kernels",
                theta.len(),
                self.len()
            )));
        }
        let mut acc = Array2::<f64>::zeros((self.n, self.n));
        for (w, k) in theta.iter().zip(&self.kernels) {
            if *w != 0.0 {
                acc.scaled_add(*w, &k.values);
            }
        }
        KernelMatrix::new(acc, "weighted_sum")
    }
}

fn check_finite_matrix(x: &ArrayView2<'_, f64>, what: &str) -> Result<()> {
    for &v in x.iter() {
        if !v.is_finite() {
            return Err(Error::validation(format!("{what}: non-finite entry {v}")));
        }
    }
    Ok(())
}

/// Gram matrix of the plain dot product, `K[i][j] = <x_i, x_j>`.
pub fn linear_kernel(x: ArrayView2<'_, f64>, name: impl Into<String>) -> Result<KernelMatrix> {
    let (n, d) = x.dim();
    if n == 0 || d == 0 {
        return Err(Error::validation("linear_kernel: empty input matrix"));
    }
    check_finite_matrix(&x, "linear_kernel")?;
    let mut k = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = x.row(i).dot(&x.row(j));
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    KernelMatrix::new(k, name)
}

/// Gaussian kernel `K[i][j] = exp(-||x_i - x_j||^2 / two_sigma_sq)`.
pub fn rbf_kernel(
    x: ArrayView2<'_, f64>,
    two_sigma_sq: f64,
    name: impl Into<String>,
) -> Result<KernelMatrix> {
    let (n, d) = x.dim();
    if n == 0 || d == 0 {
        return Err(Error::validation("rbf_kernel: empty input matrix"));
    }
    if !(two_sigma_sq > 0.0) {
        return Err(Error::validation(format!(
            "rbf_kernel: bandwidth 2*sigma^2 must be positive, got {two_sigma_sq}"
        )));
    }
    check_finite_matrix(&x, "rbf_kernel")?;
    let mut k = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let mut sq = 0.0;
            for c in 0..d {
                let diff = x[[i, c]] - x[[j, c]];
                sq += diff * diff;
            }
            let v = (-sq / two_sigma_sq).exp();
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    KernelMatrix::new(k, name)
}

/// Denominator of the multiplicative normalization rule:
/// `(1/n) tr(K) - (1/n^2) sum_ij K[i][j]`, the empirical variance of the
/// data points in feature space.
pub fn multiplicative_denominator(k: &KernelMatrix) -> f64 {
    let n = k.n() as f64;
    let total: f64 = k.values().iter().sum();
    k.trace() / n - total / (n * n)
}

/// Rescales the kernel so data points have unit variance in feature space.
///
/// Fails when the variance denominator is non-positive, which means all
/// points coincide in feature space.
pub fn normalize_multiplicative(k: &KernelMatrix) -> Result<KernelMatrix> {
    let d = multiplicative_denominator(k);
    let tol = SYMMETRY_TOL * k.max_abs();
    if d <= tol {
        return Err(Error::DegenerateKernel(format!(
            "kernel '{}': feature-space variance {d:.3e} is not positive; all points coincide",
            k.name()
        )));
    }
    let values = k.values().mapv(|v| v / d);
    KernelMatrix::new(values, k.name())
}

/// Rescales data points to the unit sphere in feature space:
/// `K'[i][j] = K[i][j] / sqrt(K[i][i] K[j][j])`. Output has unit diagonal.
pub fn normalize_spherical(k: &KernelMatrix) -> Result<KernelMatrix> {
    let n = k.n();
    for i in 0..n {
        if k.get(i, i) <= 0.0 {
            return Err(Error::validation(format!(
                "kernel '{}': diagonal entry K[{i}][{i}] = {} is not positive",
                k.name(),
                k.get(i, i)
            )));
        }
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / k.get(i, i).sqrt()).collect();
    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        values[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let v = k.get(i, j) * inv_sqrt[i] * inv_sqrt[j];
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    KernelMatrix::new(values, k.name())
}

/// Centers the kernel in feature space:
/// `K' = K - (1/n) 1 1'K - (1/n) K 1 1' + (1/n^2)(1'K1) 1 1'`.
/// Row sums of the result vanish.
pub fn center(k: &KernelMatrix) -> Result<KernelMatrix> {
    let n = k.n();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() / nf).collect();
    let grand_mean = row_means.iter().sum::<f64>() / nf;
    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            values[[i, j]] = k.get(i, j) - row_means[i] - row_means[j] + grand_mean;
        }
    }
    KernelMatrix::new(values, k.name())
}

fn frobenius_inner(a: &KernelMatrix, b: &KernelMatrix) -> f64 {
    a.values()
        .iter()
        .zip(b.values().iter())
        .map(|(x, y)| x * y)
        .sum()
}

/// Frobenius cosine similarity `<Ki,Kj>_F / (||Ki||_F ||Kj||_F)`.
///
/// The caller is responsible for centering; this op does not re-center.
pub fn alignment(ki: &KernelMatrix, kj: &KernelMatrix) -> Result<f64> {
    if ki.n() != kj.n() {
        return Err(Error::validation(format!(
            "alignment: kernels '{}' (n={}) and '{}' (n={}) differ in size",
            ki.name(),
            ki.n(),
            kj.name(),
            kj.n()
        )));
    }
    let ni = frobenius_inner(ki, ki).sqrt();
    let nj = frobenius_inner(kj, kj).sqrt();
    if ni == 0.0 || nj == 0.0 {
        let culprit = if ni == 0.0 { ki.name() } else { kj.name() };
        return Err(Error::DegenerateKernel(format!(
            "alignment: kernel '{culprit}' has zero Frobenius norm"
        )));
    }
    Ok(frobenius_inner(ki, kj) / (ni * nj))
}

/// Pairwise alignments of the centered kernels in the stack.
///
/// Returns a symmetric M-by-M matrix with unit diagonal.
pub fn alignment_matrix(stack: &KernelStack) -> Result<Array2<f64>> {
    let m = stack.len();
    let centered: Vec<KernelMatrix> = stack
        .iter()
        .map(center)
        .collect::<Result<_>>()?;
    let mut a = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        a[[i, i]] = 1.0;
        for j in (i + 1)..m {
            let v = alignment(&centered[i], &centered[j])?;
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    Ok(a)
}
