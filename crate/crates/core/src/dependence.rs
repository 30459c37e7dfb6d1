//! Functional dependence of a function family at a point.
//!
//! Under a certified constant rank `k`, the non-pivot functions are locally
//! functions of the `k` pivot ones. That map is never available in closed
//! form; here it is replaced by a low-degree polynomial fitted on a seeded
//! ball around the point and validated on held-out samples.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{ExprError, Expression};
use crate::linalg::min_norm_solve;
use crate::rank::{
    check_crc, gradient_rows, rank_of, unit_vector, CrcReport, NeighborhoodSampler, RankError,
    RankVerdict,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DependenceError {
    #[error("the function family is empty")]
    Empty,
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("function {index} is a pivot and cannot be reconstructed from the pivots")]
    PivotTarget { index: usize },
    #[error("reconstruction of function {target} failed: held-out residual {residual:e} exceeds {tolerance:e}")]
    ReconstructionFailed {
        target: usize,
        residual: f64,
        tolerance: f64,
    },
    #[error("only {found} of {needed} fitting samples could be evaluated")]
    TooFewSamples { found: usize, needed: usize },
    #[error("witness has {found} variables, family has {expected} functions")]
    WitnessArity { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    /// Total degree of the polynomial model.
    pub degree: u32,
    pub ridge: f64,
    /// The held-out residual must stay below `tolerance_factor·(1 + max |f_l|)`.
    pub tolerance_factor: f64,
    pub training_radius: f64,
    pub train_samples: usize,
    pub holdout_samples: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            degree: 3,
            ridge: 1e-12,
            tolerance_factor: 1e-6,
            training_radius: 1e-2,
            train_samples: 64,
            holdout_samples: 32,
        }
    }
}

/// Polynomial surrogate `f_l ≈ g(f_{i_1}, …, f_{i_k})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedMap {
    pub target_index: usize,
    pub input_indices: Vec<usize>,
    pub degree: u32,
    /// One exponent vector per monomial, in the pivot variables.
    pub exponents: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
    /// Inputs are mapped to `(y − center)/scale` before the monomials are formed.
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub training_radius: f64,
    pub training_residual: f64,
    /// Max over held-out samples of `|f_l(x) − g(f_pivots(x))|`.
    pub cross_validated_residual: f64,
    /// `1 + max |f_l|` over the training samples.
    pub value_scale: f64,
}

impl FittedMap {
    /// `g` at pivot values `y`.
    pub fn eval(&self, y: &[f64]) -> f64 {
        let z: Vec<f64> = y
            .iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((v, c), s)| (v - c) / s)
            .collect();
        self.exponents
            .iter()
            .zip(&self.coefficients)
            .map(|(e, c)| c * monomial(&z, e))
            .sum()
    }
}

fn monomial(z: &[f64], exponents: &[u32]) -> f64 {
    z.iter()
        .zip(exponents)
        .map(|(v, &p)| v.powi(p as i32))
        .product()
}

/// All exponent vectors of `k` variables with total degree at most `degree`,
/// in graded order.
fn exponent_table(k: usize, degree: u32) -> Vec<Vec<u32>> {
    fn fill(k: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == k {
            if left == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for p in (0..=left).rev() {
            prefix.push(p);
            fill(k, left - p, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=degree {
        fill(k, total, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Seeded points uniformly distributed in the ball of radius `rho`.
fn ball_points(center: &[f64], rho: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = center.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u = unit_vector(&mut rng, n);
            let s: f64 = rng.random::<f64>().powf(1.0 / n.max(1) as f64);
            center
                .iter()
                .zip(&u)
                .map(|(c, ui)| c + rho * s * ui)
                .collect()
        })
        .collect()
}

fn values(functions: &[Expression], x: &[f64]) -> Result<Vec<f64>, ExprError> {
    functions.iter().map(|f| f.evaluate(x)).collect()
}

/// Values at `x`, through the continuous extension where the formula is undefined.
fn values_extended(functions: &[Expression], x: &[f64]) -> Result<Vec<f64>, ExprError> {
    functions
        .iter()
        .map(|f| match f.evaluate(x) {
            Err(e) if e.is_domain() => f.value_and_gradient_extended(x).map(|d| d.value),
            other => other,
        })
        .collect()
}

/// Evaluated `(pivot values, target value)` pairs; points outside the domain are dropped.
fn fit_data(
    functions: &[Expression],
    pivots: &[usize],
    l: usize,
    points: &[Vec<f64>],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut ys = Vec::with_capacity(points.len());
    let mut targets = Vec::with_capacity(points.len());
    for x in points {
        if let Ok(v) = values(functions, x) {
            ys.push(pivots.iter().map(|&p| v[p]).collect());
            targets.push(v[l]);
        }
    }
    (ys, targets)
}

/// Fits `f_l` as a polynomial in the pivot functions around `x0`.
pub fn reconstruct_dependent(
    functions: &[Expression],
    x0: &[f64],
    pivot_indices: &[usize],
    l: usize,
    sampler: &NeighborhoodSampler,
    fit: &FitConfig,
) -> Result<FittedMap, DependenceError> {
    if pivot_indices.contains(&l) {
        return Err(DependenceError::PivotTarget { index: l });
    }
    let seed = sampler.config.seed;
    let rho = fit.training_radius;
    let train = ball_points(x0, rho, fit.train_samples, seed.wrapping_add(1));
    let holdout = ball_points(x0, rho, fit.holdout_samples, seed.wrapping_add(2));
    let (ys, targets) = fit_data(functions, pivot_indices, l, &train);
    let (hys, htargets) = fit_data(functions, pivot_indices, l, &holdout);
    let needed = (fit.train_samples / 2).max(1);
    if ys.len() < needed || hys.is_empty() {
        return Err(DependenceError::TooFewSamples {
            found: ys.len().min(hys.len()),
            needed,
        });
    }

    let k = pivot_indices.len();
    let m = ys.len() as f64;
    let center: Vec<f64> = (0..k)
        .map(|j| ys.iter().map(|y| y[j]).sum::<f64>() / m)
        .collect();
    let scale: Vec<f64> = (0..k)
        .map(|j| {
            let s = ys
                .iter()
                .map(|y| (y[j] - center[j]).abs())
                .fold(0.0, f64::max);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let exponents = exponent_table(k, fit.degree);
    let p = exponents.len();
    let rows = ys.len();
    // ridge as extra rows: [A; √ridge·I] c ≈ [b; 0]
    let mut a = DMatrix::zeros(rows + p, p);
    let mut b = DVector::zeros(rows + p);
    for (i, y) in ys.iter().enumerate() {
        let z: Vec<f64> = (0..k).map(|j| (y[j] - center[j]) / scale[j]).collect();
        for (c, e) in exponents.iter().enumerate() {
            a[(i, c)] = monomial(&z, e);
        }
        b[i] = targets[i];
    }
    let damping = fit.ridge.sqrt();
    for c in 0..p {
        a[(rows + c, c)] = damping;
    }
    let coefficients: Vec<f64> = min_norm_solve(&a, &b, 1e-15).iter().copied().collect();

    let mut map = FittedMap {
        target_index: l,
        input_indices: pivot_indices.to_vec(),
        degree: fit.degree,
        exponents,
        coefficients,
        center,
        scale,
        training_radius: rho,
        training_residual: 0.0,
        cross_validated_residual: 0.0,
        value_scale: 1.0 + targets.iter().map(|v| v.abs()).fold(0.0, f64::max),
    };
    let max_err = |ys: &[Vec<f64>], ts: &[f64], map: &FittedMap| {
        ys.iter()
            .zip(ts)
            .map(|(y, t)| (t - map.eval(y)).abs())
            .fold(0.0, f64::max)
    };
    map.training_residual = max_err(&ys, &targets, &map);
    map.cross_validated_residual = max_err(&hys, &htargets, &map);
    let tolerance = fit.tolerance_factor * map.value_scale;
    if map.cross_validated_residual > tolerance {
        return Err(DependenceError::ReconstructionFailed {
            target: l,
            residual: map.cross_validated_residual,
            tolerance,
        });
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DependenceSense {
    Independent,
    DependentWithRelation,
    CrcFailedInconclusive,
}

impl DependenceSense {
    pub fn as_str(self) -> &'static str {
        match self {
            DependenceSense::Independent => "independent",
            DependenceSense::DependentWithRelation => "dependent-with-relation",
            DependenceSense::CrcFailedInconclusive => "crc-failed-inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceVerdict {
    pub sense: DependenceSense,
    pub rank_k: usize,
    pub kappa: usize,
    pub pivot_indices: Vec<usize>,
    /// One map per non-pivot function; empty unless dependent.
    pub reconstruction: Vec<FittedMap>,
    pub laszlo_at_point: bool,
    pub crc: CrcReport,
}

/// Independent when the rank is constant and full, dependent (with fitted
/// relations) when it is constant and deficient, inconclusive otherwise.
pub fn classify_dependence(
    functions: &[Expression],
    x0: &[f64],
    sampler: &NeighborhoodSampler,
    tol_rank: f64,
    fit: &FitConfig,
) -> Result<DependenceVerdict, DependenceError> {
    if functions.is_empty() {
        return Err(DependenceError::Empty);
    }
    let crc = check_crc(functions, x0, sampler, tol_rank)?;
    let laszlo_at_point = laszlo_test(functions, x0, tol_rank)?;
    let kappa = functions.len();
    let rank_k = crc.rank();
    let mut pivot_indices = crc.center.pivot_indices.clone();
    pivot_indices.sort_unstable();
    let (sense, reconstruction) = match crc.verdict {
        RankVerdict::CertifiedBySampling if rank_k == kappa => {
            (DependenceSense::Independent, Vec::new())
        }
        RankVerdict::CertifiedBySampling => {
            let maps = (0..kappa)
                .filter(|l| !pivot_indices.contains(l))
                .map(|l| reconstruct_dependent(functions, x0, &pivot_indices, l, sampler, fit))
                .collect::<Result<Vec<_>, _>>()?;
            (DependenceSense::DependentWithRelation, maps)
        }
        _ => (DependenceSense::CrcFailedInconclusive, Vec::new()),
    };
    Ok(DependenceVerdict {
        sense,
        rank_k,
        kappa,
        pivot_indices,
        reconstruction,
        laszlo_at_point,
        crc,
    })
}

/// Gradient rank at `x` below the family size. Undefined formulas fall back
/// to their continuous extension.
pub fn laszlo_test(functions: &[Expression], x: &[f64], tol_rank: f64) -> Result<bool, ExprError> {
    let rows = match gradient_rows(functions, x, false) {
        Err(e) if e.is_domain() => gradient_rows(functions, x, true)?,
        other => other?,
    };
    Ok(rank_of(&rows, tol_rank) < functions.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageProbe {
    pub dimension: usize,
    /// Number of principal components of `{f(x) − f(x0)}` above `tol_rank·σ_max`.
    pub principal_components: usize,
    /// Largest Jacobian rank over the same samples.
    pub max_jacobian_rank: usize,
    pub samples: usize,
}

/// Dimension of the image of a small sphere around `x0`.
///
/// Reported as the smaller of the principal-component count of the image
/// differences and the largest Jacobian rank: the image of a neighborhood
/// cannot have dimension above the rank, while a handful of points on a
/// curling curve can span more directions than the curve has.
pub fn image_dimension_probe(
    functions: &[Expression],
    x0: &[f64],
    sampler: &NeighborhoodSampler,
    tol_rank: f64,
) -> Result<ImageProbe, ExprError> {
    let base = values_extended(functions, x0)?;
    let kappa = functions.len();
    let mut diffs: Vec<Vec<f64>> = Vec::new();
    let mut max_jacobian_rank = 0;
    for s in sampler.innermost() {
        let (Ok(v), Ok(rows)) = (
            values(functions, &s.point),
            gradient_rows(functions, &s.point, false),
        ) else {
            continue;
        };
        diffs.push(v.iter().zip(&base).map(|(a, b)| a - b).collect());
        max_jacobian_rank = max_jacobian_rank.max(rank_of(&rows, tol_rank));
    }
    let m = DMatrix::from_fn(diffs.len(), kappa, |i, j| diffs[i][j]);
    let principal_components = rank_of(&m, tol_rank);
    Ok(ImageProbe {
        dimension: principal_components.min(max_jacobian_rank),
        principal_components,
        max_jacobian_rank,
        samples: diffs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessResidual {
    /// Max over samples of `|F(f_1(x), …, f_κ(x))|`.
    pub max_residual: f64,
    pub samples: usize,
}

/// Evaluates a candidate relation `F` on the family over every sample point.
pub fn witness_check(
    relation: &Expression,
    functions: &[Expression],
    sampler: &NeighborhoodSampler,
) -> Result<WitnessResidual, DependenceError> {
    if relation.dimension() != functions.len() {
        return Err(DependenceError::WitnessArity {
            expected: functions.len(),
            found: relation.dimension(),
        });
    }
    let points = sampler.points();
    let mut max_residual: f64 = 0.0;
    for s in &points {
        let v = values(functions, &s.point)?;
        max_residual = max_residual.max(relation.evaluate(&v)?.abs());
    }
    Ok(WitnessResidual {
        max_residual,
        samples: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank::{SamplerConfig, DEFAULT_TOL_RANK};
    use approx::assert_relative_eq;

    fn family(vars: &[&str], fs: &[&str]) -> Vec<Expression> {
        fs.iter()
            .map(|f| Expression::parse(f, vars).unwrap())
            .collect()
    }

    fn sampler(x0: &[f64]) -> NeighborhoodSampler {
        NeighborhoodSampler::new(x0.to_vec(), SamplerConfig::default())
    }

    #[test]
    fn exponent_table_counts() {
        assert_eq!(exponent_table(1, 3).len(), 4);
        assert_eq!(exponent_table(2, 3).len(), 10);
        assert_eq!(exponent_table(3, 2).len(), 10);
        assert_eq!(
            exponent_table(2, 1),
            vec![vec![0, 0], vec![1, 0], vec![0, 1]]
        );
    }

    #[test]
    fn coordinate_functions_are_independent() {
        let f = family(&["x1", "x2"], &["x1", "x2"]);
        let v = classify_dependence(
            &f,
            &[0.0, 0.0],
            &sampler(&[0.0, 0.0]),
            DEFAULT_TOL_RANK,
            &FitConfig::default(),
        )
        .unwrap();
        assert_eq!(v.sense, DependenceSense::Independent);
        assert_eq!((v.rank_k, v.kappa), (2, 2));
        assert!(!v.laszlo_at_point);
    }

    #[test]
    fn affine_relation_is_recovered() {
        let f = family(&["x1", "x2"], &["x1", "2*x1 + 3"]);
        let v = classify_dependence(
            &f,
            &[0.0, 0.0],
            &sampler(&[0.0, 0.0]),
            DEFAULT_TOL_RANK,
            &FitConfig::default(),
        )
        .unwrap();
        assert_eq!(v.sense, DependenceSense::DependentWithRelation);
        let g = &v.reconstruction[0];
        assert!(g.cross_validated_residual <= 1e-8);
        assert_relative_eq!(g.eval(&[0.25]), 3.5, epsilon = 1e-8);
    }

    #[test]
    fn squares_fail_constant_rank() {
        let f = family(&["x1", "x2"], &["x1^2", "x2^2"]);
        let v = classify_dependence(
            &f,
            &[0.0, 0.0],
            &sampler(&[0.0, 0.0]),
            DEFAULT_TOL_RANK,
            &FitConfig::default(),
        )
        .unwrap();
        assert_eq!(v.sense, DependenceSense::CrcFailedInconclusive);
    }

    #[test]
    fn reconstruction_examples() {
        let f = family(&["x1", "x2"], &["x1", "x1"]);
        let g = reconstruct_dependent(
            &f,
            &[0.0, 0.0],
            &[0],
            1,
            &sampler(&[0.0, 0.0]),
            &FitConfig::default(),
        )
        .unwrap();
        assert!(g.cross_validated_residual <= 1e-14);

        let f = family(&["x1", "x2"], &["x1", "x1^2"]);
        let g = reconstruct_dependent(
            &f,
            &[1.0, 0.0],
            &[0],
            1,
            &sampler(&[1.0, 0.0]),
            &FitConfig::default(),
        )
        .unwrap();
        assert!(g.cross_validated_residual <= 1e-9);

        let f = family(&["x1", "x2"], &["x1 + x2", "sin(x1 + x2)"]);
        let g = reconstruct_dependent(
            &f,
            &[0.0, 0.0],
            &[0],
            1,
            &sampler(&[0.0, 0.0]),
            &FitConfig::default(),
        )
        .unwrap();
        assert!(g.cross_validated_residual <= 1e-7);

        assert!(matches!(
            reconstruct_dependent(
                &f,
                &[0.0, 0.0],
                &[0],
                0,
                &sampler(&[0.0, 0.0]),
                &FitConfig::default()
            ),
            Err(DependenceError::PivotTarget { index: 0 })
        ));
    }

    #[test]
    fn low_degree_reports_failure() {
        let f = family(&["x1", "x2"], &["x1", "exp(x1)"]);
        let fit = FitConfig {
            degree: 1,
            training_radius: 1e-1,
            ..FitConfig::default()
        };
        let r = reconstruct_dependent(&f, &[0.0, 0.0], &[0], 1, &sampler(&[0.0, 0.0]), &fit);
        assert!(matches!(
            r,
            Err(DependenceError::ReconstructionFailed { target: 1, .. })
        ));
    }

    #[test]
    fn laszlo_examples() {
        let tornado = family(&["x"], &["x^3*sin(1/x)", "x^3*cos(1/x)", "x^3"]);
        assert!(laszlo_test(&tornado, &[0.0], DEFAULT_TOL_RANK).unwrap());
        let f = family(&["x1", "x2"], &["x1", "x2"]);
        assert!(!laszlo_test(&f, &[0.3, -2.0], DEFAULT_TOL_RANK).unwrap());
        let f = family(&["t"], &["t^3", "t^2"]);
        assert!(laszlo_test(&f, &[0.0], DEFAULT_TOL_RANK).unwrap());
    }

    #[test]
    fn image_dimension_examples() {
        let probe = |vars: &[&str], fs: &[&str], x0: &[f64]| {
            image_dimension_probe(&family(vars, fs), x0, &sampler(x0), DEFAULT_TOL_RANK)
                .unwrap()
                .dimension
        };
        assert_eq!(probe(&["x1", "x2"], &["x1", "x2"], &[0.0, 0.0]), 2);
        assert_eq!(probe(&["x1", "x2"], &["x1", "x1"], &[0.0, 0.0]), 1);
        assert_eq!(
            probe(&["x"], &["x^3*sin(1/x)", "x^3*cos(1/x)", "x^3"], &[0.0]),
            1
        );
    }

    #[test]
    fn witness_examples() {
        let f = family(&["t"], &["t^3", "t^2"]);
        let w = Expression::parse("y1^2 - y2^3", &["y1", "y2"]).unwrap();
        assert!(
            witness_check(&w, &f, &sampler(&[0.0]))
                .unwrap()
                .max_residual
                <= 1e-14
        );

        let w = Expression::parse("y1 + 1", &["y1", "y2"]).unwrap();
        assert!(
            witness_check(&w, &f, &sampler(&[0.0]))
                .unwrap()
                .max_residual
                >= 0.9
        );

        let g = family(&["t"], &["sin(t)", "sin(t)"]);
        let w = Expression::parse("y1 - y2", &["y1", "y2"]).unwrap();
        assert_eq!(
            witness_check(&w, &g, &sampler(&[0.0]))
                .unwrap()
                .max_residual,
            0.0
        );
    }
}
