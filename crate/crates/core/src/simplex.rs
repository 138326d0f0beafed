//! Minimizing a norm of `A w - b` over the unit simplex
//! `{w : w >= 0, sum(w) = 1}`.
//!
//! `A` is `p x n` with one column per donor. The Euclidean case is a small
//! convex QP and is solved exactly by a primal active-set method started from
//! uniform weights. Other norm orders use projected gradient descent with
//! backtracking.

use nalgebra::{DMatrix, DVector};

/// Convergence tolerance on relative objective decrease (projected gradient).
pub const TOL: f64 = 1e-9;
/// Iteration cap for both solvers.
pub const MAX_ITER: usize = 10_000;

/// Euclidean projection onto the unit simplex (sort-and-threshold).
pub fn project(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

pub fn pnorm(r: &DVector<f64>, p: f64) -> f64 {
    if p == 2.0 {
        r.norm()
    } else {
        r.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

fn tidy(mut w: Vec<f64>) -> Vec<f64> {
    for v in w.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Exact minimizer of `||A w - b||_2` over the simplex.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<f64> {
    let n = a.ncols();
    if n == 1 {
        return vec![1.0];
    }
    let g = a.transpose() * a;
    let c = a.transpose() * b;
    let scale = (g.trace() / n as f64).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;

    let mut w = DVector::from_element(n, 1.0 / n as f64);
    let mut free = vec![true; n];
    for _ in 0..(MAX_ITER.min(50 * n + 100)) {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let k = idx.len();
        let grad = &g * &w - &c;

        // KKT system for the step on the free set:
        // [G_SS 1; 1' 0] [d; mu] = [-grad_S; 0]
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (r, &i) in idx.iter().enumerate() {
            for (s, &j) in idx.iter().enumerate() {
                kkt[(r, s)] = g[(i, j)];
            }
            kkt[(r, k)] = 1.0;
            kkt[(k, r)] = 1.0;
            rhs[r] = -grad[i];
        }
        let svd = kkt.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max().max(1.0);
        let sol = match svd.solve(&rhs, eps) {
            Ok(s) => s,
            Err(_) => break,
        };
        let d: Vec<f64> = sol.iter().take(k).copied().collect();
        let step_norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();

        if step_norm <= 1e-13 {
            // Stationary on this face: check multipliers of the bound variables.
            let mean_free = idx.iter().map(|&i| grad[i]).sum::<f64>() / k as f64;
            let entering = (0..n)
                .filter(|&i| !free[i])
                .map(|i| (i, grad[i] - mean_free))
                .filter(|&(_, lam)| lam < -tol)
                .min_by(|x, y| x.1.total_cmp(&y.1));
            match entering {
                Some((i, _)) => free[i] = true,
                None => break,
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for (r, &i) in idx.iter().enumerate() {
            if d[r] < 0.0 {
                let ratio = -w[i] / d[r];
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(i);
                }
            }
        }
        for (r, &i) in idx.iter().enumerate() {
            w[i] += alpha * d[r];
        }
        if let Some(i) = blocking {
            w[i] = 0.0;
            free[i] = false;
        }
    }
    tidy(w.iter().copied().collect())
}

/// Minimizer of `||A w - b||_p` over the simplex for a finite `p > 1`,
/// by projected gradient on `sum |r_j|^p` with Armijo backtracking.
pub fn pnorm_descent(a: &DMatrix<f64>, b: &DVector<f64>, p: f64) -> Vec<f64> {
    let n = a.ncols();
    if n == 1 {
        return vec![1.0];
    }
    let obj = |w: &DVector<f64>| -> f64 { (a * w - b).iter().map(|v| v.abs().powf(p)).sum() };
    let mut w = DVector::from_element(n, 1.0 / n as f64);
    let mut f = obj(&w);
    let mut step = 1.0 / (a.norm_squared().max(f64::MIN_POSITIVE));
    for _ in 0..MAX_ITER {
        let r = a * &w - b;
        let gr = r.map(|v| p * v.abs().powf(p - 1.0) * v.signum());
        let grad = a.transpose() * gr;
        step *= 2.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = w
                .iter()
                .zip(grad.iter())
                .map(|(x, g)| x - step * g)
                .collect();
            let cand = DVector::from_vec(project(&trial));
            let diff = &cand - &w;
            let fc = obj(&cand);
            if fc <= f + grad.dot(&diff) + diff.norm_squared() / (2.0 * step) {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc)) = accepted else { break };
        let decrease = f - fc;
        w = cand;
        f = fc;
        if decrease <= TOL * f.max(f64::MIN_POSITIVE) || f == 0.0 {
            break;
        }
    }
    tidy(w.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(rows: &[&[f64]]) -> DMatrix<f64> {
        let p = rows[0].len();
        DMatrix::from_fn(p, rows.len(), |i, j| rows[j][i])
    }

    #[test]
    fn projection_lands_on_simplex() {
        let w = project(&[0.3, -1.0, 2.5, 0.1]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&v| v >= 0.0));
        assert_eq!(project(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
    }

    #[test]
    fn outside_hull_projects_to_edge() {
        let a = cols(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let w = least_squares(&a, &b);
        for (got, want) in w.iter().zip([0.0, 0.5, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn vertex_target_gets_full_weight() {
        let a = cols(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[3.0, 2.0]]);
        let b = DVector::from_vec(vec![3.0, 2.0]);
        let w = least_squares(&a, &b);
        assert!((w[3] - 1.0).abs() < 1e-12, "{w:?}");
    }

    #[test]
    fn pnorm_descent_agrees_with_qp_at_p2() {
        let a = cols(&[&[0.0, 1.0], &[2.0, 0.5], &[1.0, 3.0]]);
        let b = DVector::from_vec(vec![2.5, 2.5]);
        let exact = least_squares(&a, &b);
        let pg = pnorm_descent(&a, &b, 2.0);
        let fe = pnorm(&(&a * DVector::from_vec(exact) - &b), 2.0);
        let fp = pnorm(&(&a * DVector::from_vec(pg) - &b), 2.0);
        assert!(fp <= fe + 1e-4);
    }
}
