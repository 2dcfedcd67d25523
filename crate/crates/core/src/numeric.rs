//! Shared numeric building blocks: small dense linear algebra, empirical
//! quantiles, distribution tails, and two derivative-free/quasi-Newton
//! optimizers used by the parametric estimators.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Standard normal quantile Φ⁻¹(p).
pub fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    Normal::standard().inverse_cdf(p)
}

/// Standard normal CDF Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Upper-tail p-value of a χ² statistic with `dof` degrees of freedom.
pub fn chi_squared_upper_tail(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("dof > 0");
    (1.0 - dist.cdf(statistic.max(0.0))).clamp(0.0, 1.0)
}

/// Type-1 (inverse ECDF) empirical quantile: the ⌈p·n⌉-th smallest value.
pub fn empirical_quantile_type1(values: &[f64], p: f64) -> f64 {
    debug_assert!(!values.is_empty());
    debug_assert!(p > 0.0 && p < 1.0);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[idx - 1]
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with the n−1 denominator.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    debug_assert!(n >= 2);
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n as f64 - 1.0)
}

pub fn sample_std(values: &[f64]) -> f64 {
    sample_variance(values).max(0.0).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Solve A·x = b for symmetric positive-definite A via Cholesky.
/// Returns `None` when A is not (numerically) positive definite.
pub fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    // forward then backward substitution
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}

/// Gaussian elimination with partial pivoting. Returns `None` when the
/// matrix is singular to the given relative tolerance.
pub fn solve_general(a: &[Vec<f64>], b: &[f64], rel_tol: f64) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|row| row.clone()).collect();
    let mut rhs = b.to_vec();
    let scale = m
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if pivot_abs <= rel_tol * scale {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for r in col + 1..n {
            let factor = m[r][col] / m[col][col];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                m[r][c] -= factor * m[col][c];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = rhs[i];
        for k in i + 1..n {
            sum -= m[i][k] * x[k];
        }
        x[i] = sum / m[i][i];
    }
    Some(x)
}

/// Minimize `f` with the Nelder–Mead simplex, starting from `x0` with the
/// given initial step per coordinate. Stops when the objective spread of the
/// simplex falls below `tol` or `max_iter` reflections have been done.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..dim {
        let mut p = x0.to_vec();
        p[i] += if step[i] != 0.0 { step[i] } else { 1e-3 };
        let fp = f(&p);
        simplex.push((p, fp));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let spread = (simplex[dim].1 - simplex[0].1).abs();
        if spread <= tol * (1.0 + simplex[0].1.abs()) {
            break;
        }
        // centroid of all but the worst vertex
        let mut centroid = vec![0.0; dim];
        for vertex in simplex.iter().take(dim) {
            for (c, v) in centroid.iter_mut().zip(vertex.0.iter()) {
                *c += v / dim as f64;
            }
        }
        let worst = simplex[dim].clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(worst.0.iter())
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let f_reflect = f(&reflect);
        if f_reflect < simplex[0].1 {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(worst.0.iter())
                .map(|(c, w)| c + gamma * (c - w))
                .collect();
            let f_expand = f(&expand);
            simplex[dim] = if f_expand < f_reflect {
                (expand, f_expand)
            } else {
                (reflect, f_reflect)
            };
            continue;
        }
        if f_reflect < simplex[dim - 1].1 {
            simplex[dim] = (reflect, f_reflect);
            continue;
        }
        let contract: Vec<f64> = centroid
            .iter()
            .zip(worst.0.iter())
            .map(|(c, w)| c + rho * (w - c))
            .collect();
        let f_contract = f(&contract);
        if f_contract < worst.1 {
            simplex[dim] = (contract, f_contract);
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            for (v, b) in vertex.0.iter_mut().zip(best.iter()) {
                *v = b + sigma * (*v - b);
            }
            vertex.1 = f(&vertex.0);
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    simplex[0].clone()
}

pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// BFGS with central-difference gradients and a backtracking Armijo line
/// search. Convergence is declared when the gradient sup-norm drops below
/// `grad_tol`.
pub fn bfgs_minimize<F>(f: F, x0: &[f64], grad_tol: f64, max_iter: usize) -> BfgsResult
where
    F: Fn(&[f64]) -> f64,
{
    let dim = x0.len();
    let grad = |x: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; dim];
        let mut xp = x.to_vec();
        for i in 0..dim {
            let h = 1e-6 * (1.0 + x[i].abs());
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    };

    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = grad(&x);
    // inverse Hessian approximation
    let mut h_inv = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        h_inv[i][i] = 1.0;
    }
    let mut iterations = 0;
    for iter in 0..max_iter {
        iterations = iter + 1;
        let g_norm = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if g_norm < grad_tol {
            return BfgsResult { x, value: fx, gradient_norm: g_norm, converged: true, iterations };
        }
        let mut direction = vec![0.0; dim];
        for i in 0..dim {
            for j in 0..dim {
                direction[i] -= h_inv[i][j] * g[j];
            }
        }
        let slope: f64 = direction.iter().zip(g.iter()).map(|(d, gi)| d * gi).sum();
        if !slope.is_finite() || slope >= 0.0 {
            // reset to steepest descent
            for i in 0..dim {
                for j in 0..dim {
                    h_inv[i][j] = if i == j { 1.0 } else { 0.0 };
                }
                direction[i] = -g[i];
            }
        }
        let slope: f64 = direction.iter().zip(g.iter()).map(|(d, gi)| d * gi).sum();
        let mut t = 1.0;
        let mut x_new = x.clone();
        let mut f_new = f64::INFINITY;
        for _ in 0..60 {
            for i in 0..dim {
                x_new[i] = x[i] + t * direction[i];
            }
            f_new = f(&x_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * t * slope {
                break;
            }
            t *= 0.5;
        }
        if !f_new.is_finite() || f_new > fx {
            let g_norm = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            return BfgsResult { x, value: fx, gradient_norm: g_norm, converged: false, iterations };
        }
        let g_new = grad(&x_new);
        let s: Vec<f64> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            // BFGS inverse update: H ← (I − ρ·s·yᵀ)·H·(I − ρ·y·sᵀ) + ρ·s·sᵀ
            let rho_k = 1.0 / sy;
            let mut hy = vec![0.0; dim];
            for i in 0..dim {
                for j in 0..dim {
                    hy[i] += h_inv[i][j] * y[j];
                }
            }
            let yhy: f64 = y.iter().zip(hy.iter()).map(|(a, b)| a * b).sum();
            for i in 0..dim {
                for j in 0..dim {
                    h_inv[i][j] += rho_k * rho_k * yhy * s[i] * s[j]
                        - rho_k * (hy[i] * s[j] + s[i] * hy[j])
                        + rho_k * s[i] * s[j];
                }
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    let g_norm = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    BfgsResult { x, value: fx, gradient_norm: g_norm, converged: g_norm < grad_tol, iterations }
}

/// SplitMix64 step, used to derive independent per-task RNG seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normal_quantile_matches_table() {
        assert_relative_eq!(normal_quantile(0.05), -1.6449, epsilon = 1e-4);
        assert_relative_eq!(normal_quantile(0.5), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn type1_quantile_is_ceil_rank() {
        let values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_eq!(empirical_quantile_type1(&values, 0.05), 5.0);
        assert_eq!(empirical_quantile_type1(&values, 0.051), 6.0);
        assert_eq!(empirical_quantile_type1(&values, 0.999), 100.0);
    }

    #[test]
    fn spd_solve_roundtrip() {
        let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let b = vec![1.0, 2.0];
        let x = solve_spd(&a, &b).unwrap();
        assert_relative_eq!(4.0 * x[0] + x[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[0] + 3.0 * x[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn general_solve_detects_singularity() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve_general(&a, &[1.0, 2.0], 1e-10).is_none());
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let (x, fx) = nelder_mead(
            |p| (p[0] - 3.0).powi(2) + 2.0 * (p[1] + 1.0).powi(2),
            &[0.0, 0.0],
            &[0.5, 0.5],
            1e-12,
            2000,
        );
        assert_relative_eq!(x[0], 3.0, epsilon = 1e-4);
        assert_relative_eq!(x[1], -1.0, epsilon = 1e-4);
        assert!(fx < 1e-8);
    }

    #[test]
    fn bfgs_minimizes_rosenbrock() {
        let rosen =
            |p: &[f64]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2);
        let res = bfgs_minimize(rosen, &[-1.2, 1.0], 1e-6, 500);
        assert!(res.converged, "gradient norm {}", res.gradient_norm);
        assert_relative_eq!(res.x[0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(res.x[1], 1.0, epsilon = 1e-4);
    }
}
