//! Small dense helpers on top of nalgebra's SVD.

use nalgebra::{DMatrix, DVector};

/// Singular value decomposition with singular values sorted descending and a
/// complete set of `ncols` right singular vectors.
#[derive(Debug, Clone)]
pub struct FullSvd {
    /// Descending; length `min(nrows, ncols)`.
    pub singular_values: Vec<f64>,
    /// Left singular vectors matching `singular_values`, as columns.
    pub u: DMatrix<f64>,
    /// All `ncols` right singular vectors as columns; the first
    /// `singular_values.len()` match the singular values, the rest span the
    /// orthogonal complement of the row space.
    pub v: DMatrix<f64>,
}

pub fn full_svd(a: &DMatrix<f64>) -> FullSvd {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return FullSvd {
            singular_values: Vec::new(),
            u: DMatrix::zeros(m, 0),
            v: DMatrix::identity(n, n),
        };
    }
    // padding with zero rows yields the complete right basis without
    // changing the nonzero spectrum
    let padded = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(true, true);
    let sv = svd.singular_values;
    let u_raw = svd.u.expect("u requested");
    let vt_raw = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));

    let mut v = DMatrix::zeros(n, n);
    for (col, &idx) in order.iter().enumerate() {
        v.set_column(col, &vt_raw.row(idx).transpose());
    }
    let mut u = DMatrix::zeros(m, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        u.set_column(col, &u_raw.column(idx).rows(0, m).into_owned());
    }
    FullSvd {
        singular_values: order.iter().take(k).map(|&i| sv[i]).collect(),
        u,
        v,
    }
}

/// Descending singular values.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Moore-Penrose pseudoinverse, discarding singular values at or below
/// `rel_tol * sigma_max`.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let svd = full_svd(a);
    let mut pinv = DMatrix::zeros(n, m);
    let Some(&smax) = svd.singular_values.first() else {
        return pinv;
    };
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > rel_tol * smax && s > 0.0 {
            pinv += svd.v.column(i) * svd.u.column(i).transpose() / s;
        }
    }
    pinv
}

/// Minimal-norm least-squares solution of `a x = b`.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    pseudo_inverse(a, rel_tol) * b
}

/// Stacks equal-length rows into a matrix with `ncols` columns.
pub fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

pub fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
