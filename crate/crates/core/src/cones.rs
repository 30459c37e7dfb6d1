//! The linearized cone at a base point, its dual, and kernel bases.
//!
//! `Γ = { d : ⟨∇h_i, d⟩ = 0 for equalities, ⟨∇h_i, d⟩ ≤ 0 for active
//! inequalities }`. Rows with zero gradient are kept, so `{x² ≤ 0}` at the
//! origin yields the whole line.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{self, dot, full_svd, norm, pseudo_inverse};
use crate::model::{ActiveSet, ConstraintKind, PointData};
use crate::nnls::{bounded_least_squares, least_distance};
use crate::rank::unit_vector;

/// Multipliers below this are treated as sign violations.
pub const SIGN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizedCone {
    #[serde(serialize_with = "serialize_rows")]
    pub eq_rows: DMatrix<f64>,
    #[serde(serialize_with = "serialize_rows")]
    pub ineq_rows: DMatrix<f64>,
    pub eq_provenance: Vec<usize>,
    pub ineq_provenance: Vec<usize>,
    pub base_point: Vec<f64>,
}

pub(crate) fn serialize_rows<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

impl LinearizedCone {
    pub fn dimension(&self) -> usize {
        self.base_point.len()
    }

    /// All generator rows, equalities first.
    pub fn stacked_rows(&self) -> DMatrix<f64> {
        let n = self.dimension();
        let (me, mi) = (self.eq_rows.nrows(), self.ineq_rows.nrows());
        let mut g = DMatrix::zeros(me + mi, n);
        g.view_mut((0, 0), (me, n)).copy_from(&self.eq_rows);
        g.view_mut((me, 0), (mi, n)).copy_from(&self.ineq_rows);
        g
    }

    pub fn provenance(&self) -> Vec<(usize, ConstraintKind)> {
        self.eq_provenance
            .iter()
            .map(|&i| (i, ConstraintKind::Equality))
            .chain(
                self.ineq_provenance
                    .iter()
                    .map(|&i| (i, ConstraintKind::Inequality)),
            )
            .collect()
    }
}

pub fn build_linearized_cone(pd: &PointData, aset: &ActiveSet) -> LinearizedCone {
    let eq_provenance = pd.equality_indices();
    let ineq_provenance = aset.indices.clone();
    LinearizedCone {
        eq_rows: linalg::select_rows(&pd.jacobian, &eq_provenance),
        ineq_rows: linalg::select_rows(&pd.jacobian, &ineq_provenance),
        eq_provenance,
        ineq_provenance,
        base_point: pd.point.clone(),
    }
}

/// Largest violation of the cone conditions by `d`, each inner product
/// scaled by `‖row‖·‖d‖`. Zero for members; compare against a tolerance.
pub fn cone_violation(c: &LinearizedCone, d: &[f64]) -> f64 {
    let dn = norm(d);
    let mut worst: f64 = 0.0;
    let scaled = |row: Vec<f64>| {
        let s = norm(&row) * dn;
        if s == 0.0 {
            0.0
        } else {
            dot(&row, d) / s
        }
    };
    for i in 0..c.eq_rows.nrows() {
        worst = worst.max(scaled(c.eq_rows.row(i).iter().copied().collect()).abs());
    }
    for i in 0..c.ineq_rows.nrows() {
        worst = worst.max(scaled(c.ineq_rows.row(i).iter().copied().collect()));
    }
    worst
}

pub fn cone_member(c: &LinearizedCone, d: &[f64], tol: f64) -> bool {
    cone_violation(c, d) <= tol
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeCoefficients {
    /// Constraint index → coefficient; non-negative on inequalities.
    pub lambda: BTreeMap<usize, f64>,
    /// `‖Σ λ_i ∇h_i − v‖`.
    pub residual: f64,
    /// The representation is not unique and `lambda` is its minimal-norm
    /// element.
    pub minimal_norm_selected: bool,
}

/// Least-squares projection of `v` onto the cone generated by the rows
/// (free on equality rows, non-negative on inequality rows).
#[derive(Debug, Clone)]
pub(crate) struct DualProjection {
    pub lambda: DVector<f64>,
    /// `v − Gᵀλ`; lies in `Γ` and is orthogonal to the fitted part.
    pub remainder: DVector<f64>,
}

pub(crate) fn project_onto_dual(c: &LinearizedCone, v: &[f64]) -> DualProjection {
    let g = c.stacked_rows();
    let nonneg: Vec<bool> = (0..g.nrows()).map(|i| i >= c.eq_rows.nrows()).collect();
    let vv = DVector::from_column_slice(v);
    let sol = bounded_least_squares(&g.transpose(), &vv, &nonneg);
    DualProjection {
        lambda: sol.x,
        remainder: sol.residual,
    }
}

/// Writes `v = Σ λ_i ∇h_i` with `λ_i ≥ 0` on active inequalities, if
/// possible to within `tol·(1 + ‖v‖)`. The minimal-norm representation is
/// returned.
pub fn dual_cone_member(c: &LinearizedCone, v: &[f64], tol: f64) -> Option<ConeCoefficients> {
    let bound = tol * (1.0 + norm(v));
    let proj = project_onto_dual(c, v);
    if proj.remainder.norm() > bound {
        return None;
    }
    let g = c.stacked_rows();
    let gt = g.transpose();
    let me = c.eq_rows.nrows();
    let p = g.nrows();
    let vv = DVector::from_column_slice(v);
    let residual_of = |lambda: &DVector<f64>| (&gt * lambda - &vv).norm();

    // λ = λ_p + N z with λ_p in the row space of Gᵀ and N an orthonormal
    // null basis, so ‖λ‖² = ‖λ_p‖² + ‖z‖²
    let fitted = &gt * &proj.lambda;
    let lambda_p = pseudo_inverse(&gt, 1e-12) * &fitted;
    let null = kernel_basis(&gt, 1e-10);
    let q = null.ncols();
    let candidate = if q == 0 {
        Some(lambda_p.clone())
    } else {
        let ineq: Vec<usize> = (me..p).collect();
        let e = DMatrix::from_fn(ineq.len(), q, |r, k| null[(ineq[r], k)]);
        let f = DVector::from_fn(ineq.len(), |r, _| -lambda_p[ineq[r]]);
        least_distance(&e, &f).map(|z| &lambda_p + &null * z)
    };

    let clamp = |mut lambda: DVector<f64>| {
        for i in me..p {
            if lambda[i] < 0.0 && lambda[i] >= -SIGN_TOL * (1.0 + lambda.amax()) {
                lambda[i] = 0.0;
            }
        }
        lambda
    };
    let sign_ok = |lambda: &DVector<f64>| (me..p).all(|i| lambda[i] >= 0.0);

    let (lambda, minimal) = match candidate.map(clamp) {
        Some(l) if sign_ok(&l) && residual_of(&l) <= bound => (l, q > 0),
        _ => (clamp(proj.lambda.clone()), false),
    };
    if !sign_ok(&lambda) {
        return None;
    }
    let residual = residual_of(&lambda);
    if residual > bound {
        return None;
    }
    let lambda_map = c
        .provenance()
        .iter()
        .zip(lambda.iter())
        .map(|(&(i, _), &l)| (i, l))
        .collect();
    Some(ConeCoefficients {
        lambda: lambda_map,
        residual,
        minimal_norm_selected: minimal,
    })
}

/// Orthonormal basis (as columns) of the numerical null space of `rows`.
///
/// Columns are right singular vectors with `σ ≤ tol_rank·σ_max`, each
/// oriented so its largest-magnitude entry (first on ties) is positive.
pub fn kernel_basis(rows: &DMatrix<f64>, tol_rank: f64) -> DMatrix<f64> {
    let n = rows.ncols();
    let svd = full_svd(rows);
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let k = if smax > 0.0 {
        svd.singular_values
            .iter()
            .filter(|&&s| s > tol_rank * smax)
            .count()
    } else {
        0
    };
    let mut basis = svd.v.columns(k, n - k).into_owned();
    for mut col in basis.column_iter_mut() {
        let mut lead = 0;
        for i in 0..col.len() {
            if col[i].abs() > col[lead].abs() * (1.0 + 1e-12) {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
    }
    basis
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionSample {
    pub directions: Vec<Vec<f64>>,
    /// `Γ = {0}`: the equality rows already pin the direction.
    pub trivial_cone: bool,
    /// Rejection sampling ended before `requested` members were found.
    pub stalled: bool,
    pub requested: usize,
    pub attempts: usize,
}

/// Seeded, distinct unit members of `Γ`: kernel-basis vectors of the
/// equality rows and their negations first (when members), then random
/// kernel directions, flipped when only the negation is a member.
pub fn sample_cone_directions(
    c: &LinearizedCone,
    count: usize,
    seed: u64,
    tol: f64,
) -> DirectionSample {
    assert!(count >= 1, "at least one direction must be requested");
    let n = c.dimension();
    let kernel = if c.eq_rows.nrows() == 0 {
        DMatrix::identity(n, n)
    } else {
        kernel_basis(&c.eq_rows, crate::rank::DEFAULT_TOL_RANK)
    };
    let q = kernel.ncols();
    if q == 0 {
        return DirectionSample {
            directions: Vec::new(),
            trivial_cone: true,
            stalled: false,
            requested: count,
            attempts: 0,
        };
    }
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(count);
    let accept = |d: Vec<f64>, dirs: &mut Vec<Vec<f64>>| {
        let duplicate = dirs
            .iter()
            .any(|e| e.iter().zip(&d).all(|(a, b)| (a - b).abs() <= 1e-12));
        if dirs.len() < count && !duplicate && cone_member(c, &d, tol) {
            dirs.push(d);
            true
        } else {
            false
        }
    };
    for k in 0..q {
        let col: Vec<f64> = kernel.column(k).iter().copied().collect();
        let neg: Vec<f64> = col.iter().map(|x| -x).collect();
        accept(col, &mut directions);
        accept(neg, &mut directions);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_attempts = 50 * count;
    let mut attempts = 0;
    while directions.len() < count && attempts < max_attempts {
        attempts += 1;
        let z = unit_vector(&mut rng, q);
        let d = &kernel * DVector::from_vec(z);
        let len = d.norm();
        let d: Vec<f64> = d.iter().map(|x| x / len).collect();
        if !accept(d.clone(), &mut directions) {
            accept(d.iter().map(|x| -x).collect(), &mut directions);
        }
    }
    DirectionSample {
        stalled: directions.len() < count,
        directions,
        trivial_cone: false,
        requested: count,
        attempts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{active_set, evaluate_point, ConstraintSystem};
    use approx::assert_relative_eq;

    fn cone(vars: &[&str], eq: &[&str], ineq: &[&str], x: &[f64]) -> LinearizedCone {
        let sys = ConstraintSystem::parse("c", vars, None, eq, ineq).unwrap();
        let pd = evaluate_point(&sys, x).unwrap();
        build_linearized_cone(&pd, &active_set(&pd, 1e-8))
    }

    fn raw(eq: &[&[f64]], ineq: &[&[f64]], n: usize) -> LinearizedCone {
        let mk = |rows: &[&[f64]]| DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        LinearizedCone {
            eq_rows: mk(eq),
            ineq_rows: mk(ineq),
            eq_provenance: (0..eq.len()).collect(),
            ineq_provenance: (eq.len()..eq.len() + ineq.len()).collect(),
            base_point: vec![0.0; n],
        }
    }

    #[test]
    fn build_examples() {
        let c = cone(&["x"], &[], &[], &[0.3]);
        assert_eq!(c.eq_rows.nrows() + c.ineq_rows.nrows(), 0);

        let c = cone(&["x"], &[], &["x^2"], &[0.0]);
        assert_eq!(c.ineq_rows, DMatrix::zeros(1, 1));
        assert!(cone_member(&c, &[1.0], 1e-12));
        assert!(cone_member(&c, &[-1.0], 1e-12));

        let c = cone(&["x1", "x2"], &["x1"], &["x2", "x2 - 1"], &[0.0, 0.0]);
        assert_eq!(c.eq_rows, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_eq!(c.ineq_rows, DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
        assert_eq!(c.ineq_provenance, vec![1]);
    }

    #[test]
    fn membership_examples() {
        let c = raw(&[&[1.0, 1.0]], &[], 2);
        assert!(cone_member(&c, &[0.0, 0.0], 1e-12));
        assert!(cone_member(&c, &[1.0, -1.0], 1e-12));
        assert!(!cone_member(&c, &[1.0, 0.0], 1e-6));
    }

    #[test]
    fn dual_examples() {
        let c = raw(&[], &[&[-1.0, 0.0], &[0.0, -1.0]], 2);
        let zero = dual_cone_member(&c, &[0.0, 0.0], 1e-10).unwrap();
        assert!(zero.lambda.values().all(|&l| l == 0.0));

        let k = dual_cone_member(&c, &[-1.0, -1.0], 1e-10).unwrap();
        assert_relative_eq!(k.lambda[&0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(k.lambda[&1], 1.0, epsilon = 1e-12);
        assert!(!k.minimal_norm_selected);

        let c = raw(&[], &[&[-1.0, 0.0]], 2);
        assert!(dual_cone_member(&c, &[1.0, 0.0], 1e-10).is_none());
    }

    #[test]
    fn dual_minimal_norm_on_duplicates() {
        let c = raw(&[], &[&[-1.0], &[-2.0]], 1);
        let k = dual_cone_member(&c, &[-1.0], 1e-10).unwrap();
        assert!(k.minimal_norm_selected);
        assert_relative_eq!(k.lambda[&0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(k.lambda[&1], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn dual_equalities_are_free() {
        let c = raw(&[&[1.0, 0.0]], &[&[0.0, -1.0]], 2);
        let k = dual_cone_member(&c, &[-3.0, -2.0], 1e-10).unwrap();
        assert_relative_eq!(k.lambda[&0], -3.0, epsilon = 1e-12);
        assert_relative_eq!(k.lambda[&1], 2.0, epsilon = 1e-12);
        assert!(dual_cone_member(&c, &[-3.0, 2.0], 1e-10).is_none());
    }

    #[test]
    fn kernel_examples() {
        let k = kernel_basis(&DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), 1e-8);
        assert_relative_eq!(
            k,
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            epsilon = 1e-14
        );

        let k = kernel_basis(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]), 1e-8);
        let s = 0.5f64.sqrt();
        assert_relative_eq!(
            k,
            DMatrix::from_column_slice(2, 1, &[s, -s]),
            epsilon = 1e-12
        );

        let k = kernel_basis(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]), 1e-8);
        assert_eq!(k.ncols(), 0);
        assert_eq!(kernel_basis(&DMatrix::zeros(0, 3), 1e-8).ncols(), 3);
    }

    #[test]
    fn direction_examples() {
        let c = raw(&[], &[], 3);
        let s = sample_cone_directions(&c, 10, 1, 1e-10);
        assert_eq!(s.directions.len(), 10);
        for d in &s.directions {
            assert_relative_eq!(norm(d), 1.0, epsilon = 1e-12);
        }

        let c = raw(&[&[1.0, 0.0]], &[], 2);
        let s = sample_cone_directions(&c, 8, 1, 1e-10);
        // a line has only two unit members
        assert_eq!(s.directions.len(), 2);
        assert!(s.stalled);
        assert!(s.directions.iter().all(|d| d[0].abs() <= 1e-10));

        let c = raw(&[&[1.0, 0.0], &[0.0, 1.0]], &[], 2);
        let s = sample_cone_directions(&c, 4, 1, 1e-10);
        assert!(s.trivial_cone);
        assert!(s.directions.is_empty());

        let c = raw(&[], &[&[-1.0, 0.0], &[0.0, -1.0]], 2);
        let s = sample_cone_directions(&c, 12, 9, 1e-10);
        assert_eq!(s.directions.len(), 12);
        assert!(s
            .directions
            .iter()
            .all(|d| d[0] >= -1e-10 && d[1] >= -1e-10));
        assert_eq!(s, sample_cone_directions(&c, 12, 9, 1e-10));
    }
}
