//! Lawson–Hanson active-set least squares with a mix of free and
//! non-negative variables, and the least-distance problem built on it.

use nalgebra::{DMatrix, DVector};

use crate::linalg::min_norm_solve;

/// Relative cut used for the passive-set subproblems.
const SUBPROBLEM_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundedLsq {
    pub x: DVector<f64>,
    /// `b - A x`.
    pub residual: DVector<f64>,
    pub iterations: usize,
}

/// Minimises `‖A x − b‖` subject to `x_j ≥ 0` wherever `nonneg[j]`.
///
/// Free variables stay in the passive set throughout; non-negative ones enter
/// it by largest dual value (lowest index on ties) and leave it through the
/// usual interpolation step.
pub fn bounded_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, nonneg: &[bool]) -> BoundedLsq {
    let (m, p) = a.shape();
    assert_eq!(b.len(), m, "right-hand side length");
    assert_eq!(nonneg.len(), p, "bound flags length");
    let mut passive: Vec<bool> = nonneg.iter().map(|&nn| !nn).collect();
    let mut x = DVector::zeros(p);
    if passive.iter().any(|&f| f) {
        x = solve_passive(a, b, &passive);
    }
    let scale = a.norm().max(1.0) * b.norm().max(1.0);
    let w_tol = 1e2 * f64::EPSILON * scale;
    let mut blocked = vec![false; p];
    let max_outer = 3 * p + 10;
    let mut iterations = 0;

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let mut entering: Option<usize> = None;
        for j in 0..p {
            let eligible = nonneg[j] && !passive[j] && !blocked[j] && w[j] > w_tol;
            if eligible && entering.is_none_or(|e| w[j] > w[e]) {
                entering = Some(j);
            }
        }
        let Some(j) = entering else { break };
        iterations += 1;
        passive[j] = true;
        let before = x.clone();
        loop {
            let z = solve_passive(a, b, &passive);
            let infeasible: Vec<usize> = (0..p)
                .filter(|&i| passive[i] && nonneg[i] && z[i] <= 0.0)
                .collect();
            if infeasible.is_empty() {
                x = z;
                break;
            }
            let alpha = infeasible
                .iter()
                .map(|&i| {
                    let denom = x[i] - z[i];
                    if denom > 0.0 {
                        x[i] / denom
                    } else {
                        0.0
                    }
                })
                .fold(f64::INFINITY, f64::min)
                .clamp(0.0, 1.0);
            x += (z - &x) * alpha;
            for i in 0..p {
                if passive[i] && nonneg[i] && x[i] <= 1e-15 * (1.0 + x.amax()) {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
        if passive[j] || (&x - &before).amax() > 0.0 {
            blocked.iter_mut().for_each(|b| *b = false);
        } else {
            // j left immediately without progress; try another candidate
            blocked[j] = true;
        }
    }
    let residual = b - a * &x;
    BoundedLsq {
        x,
        residual,
        iterations,
    }
}

fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..a.ncols()).filter(|&j| passive[j]).collect();
    let mut out = DVector::zeros(a.ncols());
    if cols.is_empty() {
        return out;
    }
    let sub = a.select_columns(&cols);
    let sol = min_norm_solve(&sub, b, SUBPROBLEM_RCOND);
    for (k, &j) in cols.iter().enumerate() {
        out[j] = sol[k];
    }
    out
}

/// Minimises `‖z‖` subject to `E z ≥ f`. Returns `None` when infeasible.
pub fn least_distance(e: &DMatrix<f64>, f: &DVector<f64>) -> Option<DVector<f64>> {
    let (m, q) = e.shape();
    if m == 0 {
        return Some(DVector::zeros(q));
    }
    // [Eᵀ; fᵀ] u ≈ (0, …, 0, 1), u ≥ 0
    let mut g = DMatrix::zeros(q + 1, m);
    g.view_mut((0, 0), (q, m)).copy_from(&e.transpose());
    g.set_row(q, &f.transpose());
    let mut target = DVector::zeros(q + 1);
    target[q] = 1.0;
    let sol = bounded_least_squares(&g, &target, &vec![true; m]);
    // residual here is g u − target
    let r = -sol.residual;
    if r.norm() <= 1e-12 || r[q].abs() <= 1e-14 {
        return None;
    }
    Some(DVector::from_fn(q, |i, _| -r[i] / r[q]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nonnegative_fit_clips() {
        // min ‖x − (1, −1)‖ with x ≥ 0
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let s = bounded_least_squares(&a, &b, &[true, true]);
        assert_relative_eq!(s.x, DVector::from_vec(vec![1.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn free_variables_are_unrestricted() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let s = bounded_least_squares(&a, &b, &[false, true]);
        assert_relative_eq!(s.x, DVector::from_vec(vec![1.0, 0.0]), epsilon = 1e-14);
        let s = bounded_least_squares(&a, &b, &[false, false]);
        assert_relative_eq!(s.x, b, epsilon = 1e-14);
    }

    #[test]
    fn dependent_columns_terminate() {
        let a = DMatrix::from_row_slice(1, 2, &[-1.0, -2.0]);
        let b = DVector::from_vec(vec![-1.0]);
        let s = bounded_least_squares(&a, &b, &[true, true]);
        assert!(s.residual.norm() < 1e-14);
        assert!(s.x.iter().all(|&v| v >= 0.0));
    }

    /// Brute force over a grid of nonnegative points.
    #[test]
    fn matches_grid_search() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.2, 1.0, -0.3, 0.4]);
        let b = DVector::from_vec(vec![0.7, -0.2, 0.9]);
        let s = bounded_least_squares(&a, &b, &[true, true]);
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            for j in 0..=400 {
                let x = DVector::from_vec(vec![i as f64 * 0.005, j as f64 * 0.005]);
                best = best.min((&a * x - &b).norm());
            }
        }
        assert!(s.residual.norm() <= best + 1e-12);
        assert!(s.residual.norm() >= best - 1e-4);
    }

    #[test]
    fn least_distance_examples() {
        // z ≥ 1 in one dimension → z = 1
        let e = DMatrix::from_row_slice(1, 1, &[1.0]);
        let f = DVector::from_vec(vec![1.0]);
        assert_relative_eq!(least_distance(&e, &f).unwrap()[0], 1.0, epsilon = 1e-12);
        // z ≥ 1 and −z ≥ 0 → infeasible
        let e = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let f = DVector::from_vec(vec![1.0, 0.0]);
        assert!(least_distance(&e, &f).is_none());
        // already satisfied at the origin
        let e = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let f = DVector::from_vec(vec![-1.0]);
        assert_relative_eq!(least_distance(&e, &f).unwrap().norm(), 0.0, epsilon = 1e-12);
    }
}
