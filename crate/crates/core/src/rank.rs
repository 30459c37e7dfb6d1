//! Numerical rank of gradient families and constant-rank certification by
//! neighborhood sampling.
//!
//! A neighborhood claim ("the rank is constant near `x0`") cannot be decided
//! numerically. Instead a [`NeighborhoodSampler`] emits seeded points on
//! shrinking spheres around `x0`, the rank is recomputed at each of them, and
//! the outcome is reported as `certified-by-sampling`, `refuted` (with a
//! witness point) or `inconclusive`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::expr::{ExprError, Expression};
use crate::linalg::{self, pseudo_inverse, select_rows};
use crate::model::{ActiveSet, ConstraintSystem, ModelError};

pub const DEFAULT_TOL_RANK: f64 = 1e-8;
/// Largest number of active inequalities whose subsets are enumerated.
pub const MAX_ACTIVE_FOR_SUBSETS: usize = 20;
/// Fraction of skipped sample points above which a check is inconclusive.
pub const MAX_SKIPPED_FRACTION: f64 = 0.2;

/// Relative slack under which two pivot scores count as tied.
const PIVOT_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankError {
    #[error("{active} active inequalities give 2^{active} subsets; raise the activity tolerance or pass an explicit subset list (limit {MAX_ACTIVE_FOR_SUBSETS})")]
    TooManySubsets { active: usize },
    #[error("row {index} is numerically dependent on the preceding rows")]
    DependentRow { index: usize },
    #[error("at the base point: {0}")]
    Center(#[source] ExprError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankResult {
    pub rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// Maximal independent row subset, in selection order.
    pub pivot_indices: Vec<usize>,
    pub tolerance_used: f64,
}

fn rank_from_singular_values(sv: &[f64], tol_rank: f64) -> usize {
    match sv.first() {
        Some(&smax) if smax > 0.0 => sv.iter().filter(|&&s| s > tol_rank * smax).count(),
        _ => 0,
    }
}

/// Rank only, without pivot selection.
pub fn rank_of(rows: &DMatrix<f64>, tol_rank: f64) -> usize {
    rank_from_singular_values(&linalg::singular_values(rows), tol_rank)
}

/// Numerical rank by relative singular-value cut, with a maximal independent
/// row subset chosen by greedy orthogonalisation.
///
/// The greedy step takes the row whose residual, relative to its original
/// length, is largest; ties go to the lowest index. Rows whose residual is
/// below `tol_rank * sigma_max` are never chosen while an alternative exists.
pub fn numerical_rank(rows: &DMatrix<f64>, tol_rank: f64) -> RankResult {
    let singular_values = linalg::singular_values(rows);
    let rank = rank_from_singular_values(&singular_values, tol_rank);
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let pivot_indices = greedy_pivots(rows, rank, tol_rank * smax);
    RankResult {
        rank,
        singular_values,
        pivot_indices,
        tolerance_used: tol_rank,
    }
}

fn greedy_pivots(rows: &DMatrix<f64>, k: usize, floor: f64) -> Vec<usize> {
    let m = rows.nrows();
    let original: Vec<f64> = (0..m).map(|i| rows.row(i).norm()).collect();
    let mut residual = rows.clone();
    let mut chosen = Vec::with_capacity(k);
    let mut free: Vec<bool> = vec![true; m];
    while chosen.len() < k {
        let pick = best_row(&residual, &original, &free, Some(floor))
            .or_else(|| best_row(&residual, &original, &free, None));
        let Some(p) = pick else { break };
        free[p] = false;
        chosen.push(p);
        let q = residual.row(p).into_owned();
        let qn = q.norm();
        if qn == 0.0 {
            continue;
        }
        let q = q / qn;
        for i in 0..m {
            if free[i] {
                let c = residual.row(i).dot(&q);
                let update = residual.row(i) - q.clone() * c;
                residual.set_row(i, &update);
            }
        }
    }
    chosen
}

fn best_row(
    residual: &DMatrix<f64>,
    original: &[f64],
    free: &[bool],
    floor: Option<f64>,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..residual.nrows() {
        if !free[i] || original[i] == 0.0 {
            continue;
        }
        let r = residual.row(i).norm();
        if floor.is_some_and(|f| r <= f) {
            continue;
        }
        let score = r / original[i];
        match best {
            Some((_, b)) if score <= b * (1.0 + PIVOT_TIE) => {}
            _ => best = Some((i, score)),
        }
    }
    best.map(|(i, _)| i)
}

// ---------------------------------------------------------------------------
// Sampling

/// Geometric schedule `1e-1, 1e-2, …, 1e-5`.
pub fn default_radii() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerConfig {
    /// Descending.
    pub radii: Vec<f64>,
    pub samples_per_radius: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            radii: default_radii(),
            samples_per_radius: 32,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    pub radius_index: usize,
    pub radius: f64,
    pub sample_index: usize,
    pub point: Vec<f64>,
}

/// Deterministic seeded points on spheres of shrinking radius around a
/// center.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodSampler {
    pub center: Vec<f64>,
    pub config: SamplerConfig,
}

impl NeighborhoodSampler {
    pub fn new(center: Vec<f64>, config: SamplerConfig) -> Self {
        NeighborhoodSampler { center, config }
    }

    /// Points in (radius, sample-index) order.
    pub fn points(&self) -> Vec<SamplePoint> {
        let n = self.center.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut out = Vec::with_capacity(self.config.radii.len() * self.config.samples_per_radius);
        for (radius_index, &radius) in self.config.radii.iter().enumerate() {
            for sample_index in 0..self.config.samples_per_radius {
                let u = unit_vector(&mut rng, n);
                let point = self
                    .center
                    .iter()
                    .zip(&u)
                    .map(|(c, ui)| c + radius * ui)
                    .collect();
                out.push(SamplePoint {
                    radius_index,
                    radius,
                    sample_index,
                    point,
                });
            }
        }
        out
    }

    /// Points on the smallest sphere only.
    pub fn innermost(&self) -> Vec<SamplePoint> {
        let last = self.config.radii.len().saturating_sub(1);
        self.points()
            .into_iter()
            .filter(|p| p.radius_index == last)
            .collect()
    }

    pub fn max_radius(&self) -> f64 {
        self.config.radii.iter().copied().fold(0.0, f64::max)
    }
}

/// Uniformly distributed unit vector (normalised Gaussian draw).
pub(crate) fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let len = linalg::norm(&v);
        if len > 1e-12 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}

/// Gradient rows of a function family. With `extend`, domain errors fall
/// back to the continuous extension of each function.
pub fn gradient_rows(
    functions: &[Expression],
    x: &[f64],
    extend: bool,
) -> Result<DMatrix<f64>, ExprError> {
    let n = x.len();
    let mut rows = DMatrix::zeros(functions.len(), n);
    for (i, f) in functions.iter().enumerate() {
        let d = if extend {
            f.value_and_gradient_extended(x)?
        } else {
            f.value_and_gradient(x)?
        };
        for (j, p) in d.partials.iter().enumerate() {
            rows[(i, j)] = *p;
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Constant rank checks

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankVerdict {
    CertifiedBySampling,
    Inconclusive,
    Refuted,
}

impl RankVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            RankVerdict::CertifiedBySampling => "certified-by-sampling",
            RankVerdict::Inconclusive => "inconclusive",
            RankVerdict::Refuted => "refuted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankWitness {
    pub point: Vec<f64>,
    pub radius: f64,
    pub sample_index: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusEvidence {
    pub radius: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub min_rank: Option<usize>,
    pub max_rank: Option<usize>,
    pub mismatches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedSample {
    pub radius: f64,
    pub sample_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrcReport {
    pub verdict: RankVerdict,
    pub kappa: usize,
    pub center: RankResult,
    /// Whether the base-point gradients came from the continuous extension.
    pub center_extended: bool,
    pub per_radius: Vec<RadiusEvidence>,
    pub witness: Option<RankWitness>,
    pub skipped: Vec<SkippedSample>,
    pub sampler: SamplerConfig,
}

impl CrcReport {
    pub fn rank(&self) -> usize {
        self.center.rank
    }
}

/// Tally of sampled ranks against a base rank.
struct RankTally {
    base: usize,
    per_radius: Vec<RadiusEvidence>,
    witness: Option<RankWitness>,
}

impl RankTally {
    fn new(base: usize, radii: &[f64]) -> Self {
        RankTally {
            base,
            per_radius: radii
                .iter()
                .map(|&radius| RadiusEvidence {
                    radius,
                    evaluated: 0,
                    skipped: 0,
                    min_rank: None,
                    max_rank: None,
                    mismatches: 0,
                })
                .collect(),
            witness: None,
        }
    }

    fn record(&mut self, sample: &SamplePoint, rank: usize) {
        let ev = &mut self.per_radius[sample.radius_index];
        ev.evaluated += 1;
        ev.min_rank = Some(ev.min_rank.map_or(rank, |m| m.min(rank)));
        ev.max_rank = Some(ev.max_rank.map_or(rank, |m| m.max(rank)));
        if rank != self.base {
            ev.mismatches += 1;
            if self.witness.is_none() {
                self.witness = Some(RankWitness {
                    point: sample.point.clone(),
                    radius: sample.radius,
                    sample_index: sample.sample_index,
                    rank,
                });
            }
        }
    }

    fn skip(&mut self, sample: &SamplePoint) {
        self.per_radius[sample.radius_index].skipped += 1;
    }

    fn verdict(&self, skipped: usize, total: usize) -> RankVerdict {
        if self.witness.is_some() {
            RankVerdict::Refuted
        } else if total > 0 && skipped as f64 > MAX_SKIPPED_FRACTION * total as f64 {
            RankVerdict::Inconclusive
        } else {
            RankVerdict::CertifiedBySampling
        }
    }
}

/// Constant rank condition for a function family at `x0`.
pub fn check_crc(
    functions: &[Expression],
    x0: &[f64],
    sampler: &NeighborhoodSampler,
    tol_rank: f64,
) -> Result<CrcReport, RankError> {
    let (center_rows, center_extended) = match gradient_rows(functions, x0, false) {
        Ok(rows) => (rows, false),
        Err(e) if e.is_domain() => (
            gradient_rows(functions, x0, true).map_err(RankError::Center)?,
            true,
        ),
        Err(e) => return Err(RankError::Center(e)),
    };
    let center = numerical_rank(&center_rows, tol_rank);
    let samples = sampler.points();
    let mut tally = RankTally::new(center.rank, &sampler.config.radii);
    let mut skipped = Vec::new();
    for s in &samples {
        match gradient_rows(functions, &s.point, false) {
            Ok(rows) => tally.record(s, rank_of(&rows, tol_rank)),
            Err(e) => {
                tally.skip(s);
                skipped.push(SkippedSample {
                    radius: s.radius,
                    sample_index: s.sample_index,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(CrcReport {
        verdict: tally.verdict(skipped.len(), samples.len()),
        kappa: functions.len(),
        center,
        center_extended,
        per_radius: tally.per_radius,
        witness: tally.witness,
        skipped,
        sampler: sampler.config.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetEvidence {
    /// `J`, sorted constraint indices.
    pub subset: Vec<usize>,
    pub base_rank: usize,
    pub verdict: RankVerdict,
    pub witness: Option<RankWitness>,
    pub per_radius: Vec<RadiusEvidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RcrcqReport {
    pub verdict: RankVerdict,
    pub active_set: ActiveSet,
    pub subsets: Vec<SubsetEvidence>,
    pub skipped: Vec<SkippedSample>,
    pub tolerance_used: f64,
    pub sampler: SamplerConfig,
}

impl RcrcqReport {
    pub fn base_rank(&self, subset: &[usize]) -> Option<usize> {
        self.subsets
            .iter()
            .find(|s| s.subset == subset)
            .map(|s| s.base_rank)
    }
}

/// Relaxed constant rank check: the constant rank condition for every
/// `J` with `I_0 ⊆ J ⊆ I_0 ∪ I(x0)`, on one shared sample set.
pub fn check_rcrcq(
    sys: &ConstraintSystem,
    x0: &[f64],
    aset: &ActiveSet,
    sampler: &NeighborhoodSampler,
    tol_rank: f64,
) -> Result<RcrcqReport, RankError> {
    let active = aset.indices.len();
    if active > MAX_ACTIVE_FOR_SUBSETS {
        return Err(RankError::TooManySubsets { active });
    }
    let mut relevant: Vec<usize> = sys.equality_indices().collect();
    relevant.extend(&aset.indices);

    let subsets: Vec<Vec<usize>> = (0u64..1 << active)
        .map(|mask| {
            let mut j: Vec<usize> = sys.equality_indices().collect();
            j.extend(
                aset.indices
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, &i)| i),
            );
            j
        })
        .collect();
    // rows of `relevant` are addressed through this position map
    let position = |i: usize| {
        relevant
            .iter()
            .position(|&r| r == i)
            .expect("relevant index")
    };

    let (_, center_rows) = sys.linearize(&relevant, x0)?;
    let mut tallies: Vec<RankTally> = subsets
        .iter()
        .map(|j| {
            let rows = select_rows(
                &center_rows,
                &j.iter().map(|&i| position(i)).collect::<Vec<_>>(),
            );
            RankTally::new(rank_of(&rows, tol_rank), &sampler.config.radii)
        })
        .collect();

    let samples = sampler.points();
    let mut skipped = Vec::new();
    for s in &samples {
        match sys.linearize(&relevant, &s.point) {
            Ok((_, rows)) => {
                for (j, tally) in subsets.iter().zip(tallies.iter_mut()) {
                    let sub =
                        select_rows(&rows, &j.iter().map(|&i| position(i)).collect::<Vec<_>>());
                    tally.record(s, rank_of(&sub, tol_rank));
                }
            }
            Err(e) => {
                for tally in tallies.iter_mut() {
                    tally.skip(s);
                }
                skipped.push(SkippedSample {
                    radius: s.radius,
                    sample_index: s.sample_index,
                    reason: e.to_string(),
                });
            }
        }
    }

    let evidence: Vec<SubsetEvidence> = subsets
        .into_iter()
        .zip(tallies)
        .map(|(subset, tally)| SubsetEvidence {
            verdict: tally.verdict(skipped.len(), samples.len()),
            subset,
            base_rank: tally.base,
            witness: tally.witness,
            per_radius: tally.per_radius,
        })
        .collect();
    let verdict = evidence
        .iter()
        .map(|e| e.verdict)
        .max()
        .unwrap_or(RankVerdict::CertifiedBySampling);
    Ok(RcrcqReport {
        verdict,
        active_set: aset.clone(),
        subsets: evidence,
        skipped,
        tolerance_used: tol_rank,
        sampler: sampler.config.clone(),
    })
}

// ---------------------------------------------------------------------------
// Dual vectors

/// Right inverse `V` (n×k) of independent rows: `rows * V = I_k`, with the
/// columns of `V` spanning the row space (minimal-norm choice).
pub fn dual_vectors(rows: &DMatrix<f64>, tol_rank: f64) -> Result<DMatrix<f64>, RankError> {
    let smax = linalg::singular_values(rows)
        .first()
        .copied()
        .unwrap_or(0.0);
    let mut basis: Vec<nalgebra::RowDVector<f64>> = Vec::new();
    for i in 0..rows.nrows() {
        let mut r = rows.row(i).into_owned();
        for q in &basis {
            let c = r.dot(q);
            r -= q * c;
        }
        let len = r.norm();
        if len <= tol_rank * smax || len == 0.0 {
            return Err(RankError::DependentRow { index: i });
        }
        basis.push(r / len);
    }
    Ok(pseudo_inverse(rows, 0.0))
}

/// Whether `Df(x) * V` is nonsingular, `V` being the dual vectors at `x0`.
pub fn dual_basis_image_check(
    f_rows_at_x: &DMatrix<f64>,
    dual_vecs_at_x0: &DMatrix<f64>,
    tol_rank: f64,
) -> bool {
    let m = f_rows_at_x * dual_vecs_at_x0;
    m.nrows() == m.ncols() && rank_of(&m, tol_rank) == m.nrows()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows.first().map_or(0, |r| r.len());
        DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j])
    }

    fn exprs(texts: &[&str], vars: &[&str]) -> Vec<Expression> {
        texts
            .iter()
            .map(|t| Expression::parse(t, vars).unwrap())
            .collect()
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let r = numerical_rank(&DMatrix::zeros(3, 5), 1e-8);
        assert_eq!(r.rank, 0);
        assert!(r.pivot_indices.is_empty());
        assert_eq!(numerical_rank(&DMatrix::zeros(0, 4), 1e-8).rank, 0);
    }

    #[test]
    fn coordinate_rows() {
        let r = numerical_rank(&m(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]), 1e-8);
        assert_eq!(r.rank, 2);
        let mut p = r.pivot_indices.clone();
        p.sort();
        assert_eq!(p, vec![0, 1]);
    }

    /// Lexicographically first pair with nonzero 2×2 determinant.
    fn first_nonsingular_pair(a: &DMatrix<f64>) -> Option<(usize, usize)> {
        for i in 0..a.nrows() {
            for j in i + 1..a.nrows() {
                let det = a[(i, 0)] * a[(j, 1)] - a[(i, 1)] * a[(j, 0)];
                if det.abs() > 1e-12 {
                    return Some((i, j));
                }
            }
        }
        None
    }

    #[test]
    fn pivots_break_ties_by_index() {
        let a = m(&[&[1.0, 0.0], &[2.0, 0.0], &[0.0, 1.0]]);
        let r = numerical_rank(&a, 1e-8);
        assert_eq!(r.rank, 2);
        let mut p = r.pivot_indices.clone();
        p.sort();
        let (i, j) = first_nonsingular_pair(&a).unwrap();
        assert_eq!(p, vec![i, j]);
        assert_eq!(p, vec![0, 2]);
    }

    #[test]
    fn tiny_rows_are_not_pivots() {
        let a = m(&[&[1e-10, 0.0], &[1e6, 1.0]]);
        let r = numerical_rank(&a, 1e-8);
        assert_eq!(r.rank, 1);
        assert_eq!(r.pivot_indices, vec![1]);
    }

    #[test]
    fn sampler_is_deterministic_and_bounded() {
        let s = NeighborhoodSampler::new(vec![1.0, -2.0, 0.5], SamplerConfig::default());
        let a = s.points();
        let b = s.points();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5 * 32);
        for p in &a {
            let d: Vec<f64> = p.point.iter().zip(&s.center).map(|(x, c)| x - c).collect();
            assert!(linalg::norm(&d) <= s.max_radius() * (1.0 + 1e-12));
            assert_relative_eq!(linalg::norm(&d), p.radius, max_relative = 1e-9);
        }
        let other = NeighborhoodSampler::new(
            s.center.clone(),
            SamplerConfig {
                seed: 7,
                ..SamplerConfig::default()
            },
        );
        assert_ne!(other.points(), a);
    }

    #[test]
    fn crc_examples() {
        let vars = ["x1", "x2"];
        let sampler = NeighborhoodSampler::new(vec![0.0, 0.0], SamplerConfig::default());
        let r = check_crc(&exprs(&["x1", "x2"], &vars), &[0.0, 0.0], &sampler, 1e-8).unwrap();
        assert_eq!(r.verdict, RankVerdict::CertifiedBySampling);
        assert_eq!(r.rank(), 2);

        let r = check_crc(
            &exprs(&["x1^2", "x2^2"], &vars),
            &[0.0, 0.0],
            &sampler,
            1e-8,
        )
        .unwrap();
        assert_eq!(r.verdict, RankVerdict::Refuted);
        assert_eq!(r.rank(), 0);
        assert_eq!(r.witness.as_ref().unwrap().rank, 2);

        let sampler1 = NeighborhoodSampler::new(vec![0.0], SamplerConfig::default());
        let r = check_crc(&exprs(&["t^3", "t^2"], &["t"]), &[0.0], &sampler1, 1e-8).unwrap();
        assert_eq!(r.verdict, RankVerdict::Refuted);
        assert_eq!(r.rank(), 0);
        assert_eq!(r.witness.unwrap().rank, 1);
    }

    #[test]
    fn crc_empty_family_is_certified() {
        let sampler = NeighborhoodSampler::new(vec![0.0], SamplerConfig::default());
        let r = check_crc(&[], &[0.0], &sampler, 1e-8).unwrap();
        assert_eq!(r.verdict, RankVerdict::CertifiedBySampling);
        assert_eq!(r.rank(), 0);
    }

    #[test]
    fn crc_skips_and_goes_inconclusive() {
        let sampler = NeighborhoodSampler::new(
            vec![0.0],
            SamplerConfig {
                radii: vec![1e-1],
                samples_per_radius: 16,
                seed: 3,
            },
        );
        let f = exprs(&["log(x^2 - 1)"], &["x"]);
        assert!(matches!(
            check_crc(&f, &[0.0], &sampler, 1e-8),
            Err(RankError::Center(_))
        ));
        let g = exprs(&["sqrt(x + 0.1)"], &["x"]);
        let r = check_crc(&g, &[0.0], &sampler, 1e-8).unwrap();
        // samples at x = -0.1 hit sqrt at zero
        assert!(!r.skipped.is_empty());
        assert_eq!(r.verdict, RankVerdict::Inconclusive);
    }

    #[test]
    fn rcrcq_examples() {
        let sampler = NeighborhoodSampler::new(vec![0.0], SamplerConfig::default());
        let sys = ConstraintSystem::parse("sq", &["x"], None, &[], &["x^2"]).unwrap();
        let aset = ActiveSet {
            indices: vec![0],
            tolerance_used: 1e-8,
        };
        let r = check_rcrcq(&sys, &[0.0], &aset, &sampler, 1e-8).unwrap();
        assert_eq!(r.verdict, RankVerdict::Refuted);
        assert_eq!(r.subsets.len(), 2);
        assert_eq!(r.base_rank(&[0]), Some(0));
        assert_eq!(r.base_rank(&[]), Some(0));

        let sampler2 = NeighborhoodSampler::new(vec![0.0, 0.0], SamplerConfig::default());
        let sys =
            ConstraintSystem::parse("par", &["x1", "x2"], None, &["x1", "2*x1"], &[]).unwrap();
        let none = ActiveSet {
            indices: vec![],
            tolerance_used: 1e-8,
        };
        let r = check_rcrcq(&sys, &[0.0, 0.0], &none, &sampler2, 1e-8).unwrap();
        assert_eq!(r.verdict, RankVerdict::CertifiedBySampling);
        assert_eq!(r.subsets.len(), 1);
        assert_eq!(r.subsets[0].base_rank, 1);

        let sys = ConstraintSystem::parse("licq", &["x1", "x2"], None, &["x1"], &["x2"]).unwrap();
        let aset = ActiveSet {
            indices: vec![1],
            tolerance_used: 1e-8,
        };
        let r = check_rcrcq(&sys, &[0.0, 0.0], &aset, &sampler2, 1e-8).unwrap();
        assert_eq!(r.verdict, RankVerdict::CertifiedBySampling);
        assert_eq!(r.base_rank(&[0, 1]), Some(2));
        assert_eq!(r.base_rank(&[0]), Some(1));
    }

    #[test]
    fn rcrcq_subset_guard() {
        let ineq: Vec<String> = (0..21).map(|i| format!("x - {i}*0")).collect();
        let refs: Vec<&str> = ineq.iter().map(String::as_str).collect();
        let sys = ConstraintSystem::parse("many", &["x"], None, &[], &refs).unwrap();
        let aset = ActiveSet {
            indices: (0..21).collect(),
            tolerance_used: 1e-8,
        };
        let sampler = NeighborhoodSampler::new(vec![0.0], SamplerConfig::default());
        assert_eq!(
            check_rcrcq(&sys, &[0.0], &aset, &sampler, 1e-8).unwrap_err(),
            RankError::TooManySubsets { active: 21 }
        );
    }

    #[test]
    fn dual_vector_examples() {
        let v = dual_vectors(&m(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]), 1e-8).unwrap();
        assert_relative_eq!(
            v,
            m(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]),
            epsilon = 1e-14
        );

        let v = dual_vectors(&m(&[&[2.0, 0.0]]), 1e-8).unwrap();
        assert_relative_eq!(v, m(&[&[0.5], &[0.0]]), epsilon = 1e-14);

        let rows = m(&[&[1.0, 1.0], &[1.0, -1.0]]);
        let v = dual_vectors(&rows, 1e-8).unwrap();
        assert_relative_eq!(v, m(&[&[0.5, 0.5], &[0.5, -0.5]]), epsilon = 1e-14);
        assert_relative_eq!(&rows * &v, DMatrix::identity(2, 2), epsilon = 1e-10);

        let err = dual_vectors(&m(&[&[1.0, 0.0], &[0.0, 1.0], &[3.0, 3.0]]), 1e-8).unwrap_err();
        assert_eq!(err, RankError::DependentRow { index: 2 });
    }

    #[test]
    fn dual_basis_image_examples() {
        let rows = m(&[&[1.0, 1.0], &[1.0, -1.0]]);
        let v = dual_vectors(&rows, 1e-8).unwrap();
        assert!(dual_basis_image_check(&rows, &v, 1e-8));

        // f = (x1^2, x2^2): rows at x0 = (1, 2), image check at x = (0, 2)
        let at_x0 = m(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let v = dual_vectors(&at_x0, 1e-8).unwrap();
        let at_x = m(&[&[0.0, 0.0], &[0.0, 4.0]]);
        assert!(!dual_basis_image_check(&at_x, &v, 1e-8));
        let near = m(&[&[2.2, 0.0], &[0.0, 3.8]]);
        assert!(dual_basis_image_check(&near, &v, 1e-8));
    }
}
