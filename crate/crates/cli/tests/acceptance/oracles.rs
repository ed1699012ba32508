//! Independent numeric oracles for the acceptance suite. These deliberately
//! avoid the library's solution paths: the mixing-update oracle runs
//! projected gradient descent in a reparametrized space, the dual-QP oracle
//! runs accelerated projected gradient ascent, and the mixed-norm primal
//! oracle runs plain subgradient descent.

use ndarray::Array2;

/// Euclidean projection onto `{z >= 0, sum z <= 1}`.
pub fn project_capped_simplex(z: &mut [f64]) {
    for v in z.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = z.iter().sum();
    if total <= 1.0 {
        return;
    }
    // standard sort-based simplex projection
    let mut sorted: Vec<f64> = z.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut lambda = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if v - candidate > 0.0 {
            lambda = candidate;
        }
    }
    for v in z.iter_mut() {
        *v = (*v - lambda).max(0.0);
    }
}

/// Minimizes `sum_m v_m / theta_m` over `||theta||_p <= 1, theta >= 0` by
/// projected gradient descent in z = theta^p coordinates (the constraint
/// becomes the capped simplex) with Armijo backtracking.
pub fn theta_oracle(v: &[f64], p: f64) -> Vec<f64> {
    let m = v.len();
    let floor = 1e-18;
    let objective = |z: &[f64]| -> f64 {
        v.iter()
            .zip(z)
            .map(|(&vm, &zm)| {
                if vm == 0.0 {
                    0.0
                } else {
                    vm * zm.max(floor).powf(-1.0 / p)
                }
            })
            .sum()
    };
    let gradient = |z: &[f64], g: &mut [f64]| {
        for i in 0..m {
            g[i] = if v[i] == 0.0 {
                0.0
            } else {
                -(v[i] / p) * z[i].max(floor).powf(-1.0 / p - 1.0)
            };
        }
    };
    let mut z = vec![1.0 / m as f64; m];
    let mut g = vec![0.0; m];
    let mut obj = objective(&z);
    let mut step = 1.0 / m as f64;
    for _ in 0..60_000 {
        gradient(&z, &mut g);
        // backtracking on the projected step
        let mut improved = false;
        for _ in 0..60 {
            let mut trial: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect();
            project_capped_simplex(&mut trial);
            let trial_obj = objective(&trial);
            if trial_obj <= obj {
                let delta = trial
                    .iter()
                    .zip(&z)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                z = trial;
                obj = trial_obj;
                improved = true;
                step *= 1.3;
                if delta < 1e-14 {
                    return z.iter().map(|&zi| zi.powf(1.0 / p)).collect();
                }
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    z.iter().map(|&zi| zi.powf(1.0 / p)).collect()
}

/// Euclidean projection onto `{sum a = 0, lo <= a <= hi}` by bisection on
/// the hyperplane multiplier.
pub fn project_box_hyperplane(x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let clipped_sum = |lambda: f64| -> f64 {
        x.iter()
            .zip(lo.iter().zip(hi))
            .map(|(&xi, (&l, &h))| (xi - lambda).clamp(l, h))
            .sum()
    };
    let mut low = x
        .iter()
        .zip(hi)
        .map(|(xi, h)| xi - h)
        .fold(f64::INFINITY, f64::min);
    let mut high = x
        .iter()
        .zip(lo)
        .map(|(xi, l)| xi - l)
        .fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (low + high);
        if clipped_sum(mid) > 0.0 {
            low = mid;
        } else {
            high = mid;
        }
    }
    let lambda = 0.5 * (low + high);
    x.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&xi, (&l, &h))| (xi - lambda).clamp(l, h))
        .collect()
}

/// Best dual value of `max sum_i y_i a_i - 1/2 a'Ka` over the signed box and
/// the equality constraint, found by accelerated projected gradient ascent.
pub fn qp_dual_oracle(k: &Array2<f64>, y: &[f64], c: f64, iterations: usize) -> f64 {
    let n = y.len();
    let lo: Vec<f64> = y.iter().map(|&yi| if yi > 0.0 { 0.0 } else { -c }).collect();
    let hi: Vec<f64> = y.iter().map(|&yi| if yi > 0.0 { c } else { 0.0 }).collect();
    let lipschitz = (0..n).map(|i| k[[i, i]]).sum::<f64>().max(1e-12);
    let value = |a: &[f64]| -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..n {
            lin += y[i] * a[i];
            let mut row = 0.0;
            for j in 0..n {
                row += k[[i, j]] * a[j];
            }
            quad += a[i] * row;
        }
        lin - 0.5 * quad
    };
    let mut alpha = vec![0.0; n];
    let mut prev = alpha.clone();
    let mut best = value(&alpha);
    let mut t_prev = 1.0f64;
    for _ in 0..iterations {
        let t = 0.5 * (1.0 + (1.0 + 4.0 * t_prev * t_prev).sqrt());
        let momentum = (t_prev - 1.0) / t;
        let probe: Vec<f64> = alpha
            .iter()
            .zip(&prev)
            .map(|(a, p)| a + momentum * (a - p))
            .collect();
        let mut grad = vec![0.0; n];
        for i in 0..n {
            let mut ki = 0.0;
            for j in 0..n {
                ki += k[[i, j]] * probe[j];
            }
            grad[i] = y[i] - ki;
        }
        let stepped: Vec<f64> = probe
            .iter()
            .zip(&grad)
            .map(|(p, g)| p + g / lipschitz)
            .collect();
        let next = project_box_hyperplane(&stepped, &lo, &hi);
        prev = alpha;
        alpha = next;
        t_prev = t;
        let v = value(&alpha);
        if v > best {
            best = v;
        }
    }
    best
}

/// Minimizes the mixed-norm primal
/// `c_tilde sum_i hinge(f_i, y_i) + 1/2 sum_m (b_m' K_m b_m)^(q/2)`
/// over expansion coefficients and a bias, by subgradient descent with a
/// diminishing step, tracking the best iterate. Returns the decision values
/// of the best iterate and its objective.
pub fn mixed_norm_primal_oracle(
    kernels: &[Array2<f64>],
    y: &[f64],
    c_tilde: f64,
    q: f64,
    iterations: usize,
) -> (Vec<f64>, f64) {
    let m = kernels.len();
    let n = y.len();
    let mut beta = vec![vec![0.0; n]; m];
    let mut bias = 0.0;

    let evaluate = |beta: &[Vec<f64>], bias: f64| -> (Vec<f64>, f64) {
        let mut f = vec![bias; n];
        let mut reg = 0.0;
        for (km, bm) in kernels.iter().zip(beta) {
            let mut kb = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += km[[i, j]] * bm[j];
                }
                kb[i] = acc;
            }
            let s: f64 = bm.iter().zip(&kb).map(|(b, k)| b * k).sum();
            reg += 0.5 * s.max(0.0).powf(q / 2.0);
            for i in 0..n {
                f[i] += kb[i];
            }
        }
        let loss: f64 = f
            .iter()
            .zip(y)
            .map(|(&fi, &yi)| (1.0 - fi * yi).max(0.0))
            .sum();
        (f, c_tilde * loss + reg)
    };

    let (_, mut best_obj) = evaluate(&beta, bias);
    let mut best_beta = beta.clone();
    let mut best_bias = bias;
    let eta0 = 0.5 / (1.0 + c_tilde * n as f64);
    for iter in 0..iterations {
        // decision values and margin violations at the current iterate
        let mut f = vec![bias; n];
        let mut kb = vec![vec![0.0; n]; m];
        for (mi, (km, bm)) in kernels.iter().zip(&beta).enumerate() {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += km[[i, j]] * bm[j];
                }
                kb[mi][i] = acc;
                f[i] += acc;
            }
        }
        let violated: Vec<bool> = f.iter().zip(y).map(|(&fi, &yi)| fi * yi < 1.0).collect();
        let eta = eta0 / (1.0 + iter as f64).sqrt();
        let mut grad_bias = 0.0;
        for i in 0..n {
            if violated[i] {
                grad_bias -= c_tilde * y[i];
            }
        }
        for mi in 0..m {
            let s: f64 = beta[mi].iter().zip(&kb[mi]).map(|(b, k)| b * k).sum();
            let reg_coeff = if s > 1e-30 {
                (q / 2.0) * s.powf(q / 2.0 - 1.0)
            } else {
                0.0
            };
            for j in 0..n {
                let mut loss_grad = 0.0;
                for i in 0..n {
                    if violated[i] {
                        loss_grad -= c_tilde * y[i] * kernels[mi][[i, j]];
                    }
                }
                let g = loss_grad + reg_coeff * kb[mi][j];
                beta[mi][j] -= eta * g;
            }
        }
        bias -= eta * grad_bias;
        let (_, obj) = evaluate(&beta, bias);
        if obj < best_obj {
            best_obj = obj;
            best_beta = beta.clone();
            best_bias = bias;
        }
    }
    let (f, obj) = evaluate(&best_beta, best_bias);
    (f, obj)
}
