//! Numerical probing of the tangent cone.
//!
//! A direction `d` of the linearized cone is tangent when a correction
//! `r(t)` with `x0 + t·d + r(t)` feasible and `‖r(t)‖/t → 0` exists. The
//! corrector below builds `r(t)` by minimal-norm Gauss–Newton on the
//! constraints critical for `d`, and the limit is judged over a geometric
//! schedule of step lengths. The reverse inclusion is probed by projecting
//! random nearby points onto the feasible set and reading off the
//! directions that stay stable as the radius shrinks.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cones::{build_linearized_cone, cone_violation, sample_cone_directions, LinearizedCone};
use crate::config::AnalysisConfig;
use crate::linalg::{dot, norm, norm_inf, pseudo_inverse, select_rows};
use crate::model::{
    active_set, critical_active_set, evaluate_point, feasibility_check, ActiveSet, ConstraintKind,
    ConstraintSystem, Feasibility, ModelError,
};
use crate::rank::{
    check_rcrcq, numerical_rank, unit_vector, NeighborhoodSampler, RankError, RcrcqReport,
};

/// Tangent estimates from different chains closer than this angle are merged.
const DIRECTION_ANGLE: f64 = 1e-2;
/// Projected points closer than this fraction of the radius are discarded.
const COLLAPSE_FRACTION: f64 = 1e-3;
const PROJECTION_MAX_ITER: usize = 100;
/// Number of smallest radii over which a chain must be stable.
const STABLE_RADII: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TangentError {
    #[error("the base point is infeasible: {} constraint(s) violated beyond {}", .0.violations.len(), .0.tolerance_used)]
    Infeasible(Feasibility),
    #[error("step schedule must be strictly decreasing and positive")]
    Schedule,
    #[error("direction has {found} entries, system has {expected} variables")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Rank(#[from] RankError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Convergence is `‖h_J‖∞ ≤ residual_tol·(1 + scale)`.
    pub residual_tol: f64,
    pub max_iter: usize,
    /// Relative singular-value cut for pivot selection and the pseudoinverse.
    pub pivot_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            residual_tol: 1e-12,
            max_iter: 50,
            pivot_tol: crate::rank::DEFAULT_TOL_RANK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correction {
    /// `None` when the iteration did not converge.
    pub r: Option<Vec<f64>>,
    pub iterations: usize,
    /// `‖h_J‖∞` at the last iterate.
    pub residual: f64,
    /// Constraint indices the Gauss–Newton steps were taken on.
    pub pivots: Vec<usize>,
    /// `‖r‖ / ‖h_J(x0 + t·d)‖`, when both are defined and the denominator is nonzero.
    pub lipschitz_ratio: Option<f64>,
    pub diagnostic: Option<String>,
}

fn shifted(x0: &[f64], d: &[f64], t: f64) -> Vec<f64> {
    x0.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Solves `h_i(x0 + t·d + r) = 0` for `i ∈ J` by minimal-norm Gauss–Newton,
/// starting from `r = 0`. Steps use the pivot rows of `J` at `x0 + t·d`.
pub fn ljusternik_correct(
    sys: &ConstraintSystem,
    j: &[usize],
    x0: &[f64],
    d: &[f64],
    t: f64,
    solver: &SolverConfig,
) -> Correction {
    let y0 = shifted(x0, d, t);
    let n = y0.len();
    let fail = |iterations, residual, pivots, message: String| Correction {
        r: None,
        iterations,
        residual,
        pivots,
        lipschitz_ratio: None,
        diagnostic: Some(message),
    };
    if j.is_empty() {
        return Correction {
            r: Some(vec![0.0; n]),
            iterations: 0,
            residual: 0.0,
            pivots: Vec::new(),
            lipschitz_ratio: None,
            diagnostic: None,
        };
    }
    let (h0, rows0) = match sys.linearize(j, &y0) {
        Ok(v) => v,
        Err(e) => return fail(0, f64::NAN, Vec::new(), e.to_string()),
    };
    let local_pivots = numerical_rank(&rows0, solver.pivot_tol).pivot_indices;
    let pivots: Vec<usize> = local_pivots.iter().map(|&p| j[p]).collect();
    let h0_norm = norm_inf(&h0);
    let threshold = solver.residual_tol * (1.0 + h0_norm.max(norm_inf(&y0)));

    let mut y = y0.clone();
    let mut h = h0.clone();
    let mut rows = rows0;
    let mut iterations = 0;
    loop {
        let residual = norm_inf(&h);
        if residual <= threshold {
            let r: Vec<f64> = y.iter().zip(&y0).map(|(a, b)| a - b).collect();
            let h0_l2 = norm(&h0);
            return Correction {
                lipschitz_ratio: (h0_l2 > 0.0).then(|| norm(&r) / h0_l2),
                r: Some(r),
                iterations,
                residual,
                pivots,
                diagnostic: None,
            };
        }
        if iterations == solver.max_iter {
            return fail(
                iterations,
                residual,
                pivots,
                format!("no convergence in {} iterations", solver.max_iter),
            );
        }
        if local_pivots.is_empty() {
            return fail(
                iterations,
                residual,
                pivots,
                "pivot rows vanish; no correction possible".into(),
            );
        }
        let a = select_rows(&rows, &local_pivots);
        let b = DVector::from_iterator(local_pivots.len(), local_pivots.iter().map(|&p| h[p]));
        let step = pseudo_inverse(&a, solver.pivot_tol) * b;
        for (yi, si) in y.iter_mut().zip(step.iter()) {
            *yi -= si;
        }
        iterations += 1;
        match sys.linearize(j, &y) {
            Ok((hv, rv)) => {
                h = hv;
                rows = rv;
            }
            Err(e) => return fail(iterations, residual, pivots, e.to_string()),
        }
        if h.iter().any(|v| !v.is_finite()) {
            return fail(iterations, f64::NAN, pivots, "non-finite residual".into());
        }
    }
}

/// Step-by-step record of a correction along one direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionTrace {
    /// Strictly decreasing.
    pub t_values: Vec<f64>,
    pub r_norms: Vec<Option<f64>>,
    /// `r_norms[i] / t_values[i]`.
    pub ratio: Vec<Option<f64>>,
    pub converged: Vec<bool>,
    /// Least-squares slope of `log ‖r‖` against `log t` over converged steps with `r ≠ 0`.
    pub decay_slope: Option<f64>,
    pub lipschitz_ratio: Vec<Option<f64>>,
    /// Every inequality outside `J(d)` is strictly negative at the corrected point.
    pub inactive_strict: Vec<bool>,
    /// Every inequality outside `J(d)` is at most `tol_feasible` at the corrected point.
    pub inactive_feasible: Vec<bool>,
    pub diagnostics: Vec<Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentProbe {
    pub direction: Vec<f64>,
    pub cone_violation: f64,
    pub in_cone: bool,
    /// `J(d)`: equalities plus active inequalities orthogonal to `d`.
    pub j_set: Vec<usize>,
    /// Inequalities outside `J(d)`.
    pub outside: Vec<usize>,
    pub trace: CorrectionTrace,
    /// Largest scheduled `t` below which every step converged with all
    /// inequalities outside `J(d)` strictly negative.
    pub epsilon0: Option<f64>,
    pub passes: bool,
    /// At every step the correction failed, stayed proportional to `t`, or
    /// left the feasible set.
    pub robust_failure: bool,
}

/// Least-squares slope of `y` against `x`.
fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn valid_schedule(t: &[f64]) -> bool {
    !t.is_empty()
        && t.iter().all(|&v| v > 0.0 && v.is_finite())
        && t.windows(2).all(|w| w[1] < w[0])
}

/// Runs the corrector for `d` over `cfg.t_schedule` and judges the limit
/// `‖r(t)‖/t → 0`.
pub fn probe_tangent(
    sys: &ConstraintSystem,
    x0: &[f64],
    aset: &ActiveSet,
    d: &[f64],
    cfg: &AnalysisConfig,
) -> Result<TangentProbe, TangentError> {
    if d.len() != sys.dimension() {
        return Err(TangentError::Dimension {
            expected: sys.dimension(),
            found: d.len(),
        });
    }
    if !valid_schedule(&cfg.t_schedule) {
        return Err(TangentError::Schedule);
    }
    let pd = evaluate_point(sys, x0)?;
    let cone = build_linearized_cone(&pd, aset);
    let violation = cone_violation(&cone, d);
    let in_cone = violation <= cfg.tol_cone;
    let crit = critical_active_set(&pd, aset, d, cfg.tol_critical);
    let outside: Vec<usize> = sys
        .inequality_indices()
        .filter(|i| !crit.j_set.contains(i))
        .collect();

    let steps = cfg.t_schedule.len();
    let mut trace = CorrectionTrace {
        t_values: cfg.t_schedule.clone(),
        r_norms: Vec::with_capacity(steps),
        ratio: Vec::with_capacity(steps),
        converged: Vec::with_capacity(steps),
        decay_slope: None,
        lipschitz_ratio: Vec::with_capacity(steps),
        inactive_strict: Vec::with_capacity(steps),
        inactive_feasible: Vec::with_capacity(steps),
        diagnostics: Vec::with_capacity(steps),
    };
    for &t in &cfg.t_schedule {
        let c = ljusternik_correct(sys, &crit.j_set, x0, d, t, &cfg.solver);
        let mut strict = false;
        let mut feasible = false;
        let mut diagnostic = c.diagnostic.clone();
        let r_norm = c.r.as_ref().map(|r| norm(r));
        if let Some(r) = &c.r {
            let x: Vec<f64> = shifted(x0, d, t)
                .iter()
                .zip(r)
                .map(|(a, b)| a + b)
                .collect();
            match sys.values_at(&outside, &x) {
                Ok(v) => {
                    strict = v.iter().all(|&h| h < 0.0);
                    feasible = v.iter().all(|&h| h <= cfg.tol_feasible);
                }
                Err(e) => diagnostic = Some(e.to_string()),
            }
        }
        trace.r_norms.push(r_norm);
        trace.ratio.push(r_norm.map(|r| r / t));
        trace.converged.push(c.r.is_some());
        trace.lipschitz_ratio.push(c.lipschitz_ratio);
        trace.inactive_strict.push(strict);
        trace.inactive_feasible.push(feasible);
        trace.diagnostics.push(diagnostic);
    }

    let slope_points: Vec<(f64, f64)> = (0..steps)
        .filter_map(|i| match trace.r_norms[i] {
            Some(r) if r > 0.0 => Some((trace.t_values[i].ln(), r.ln())),
            _ => None,
        })
        .collect();
    trace.decay_slope = fit_slope(&slope_points);

    let mut epsilon0 = None;
    for i in (0..steps).rev() {
        if trace.converged[i] && trace.inactive_strict[i] {
            epsilon0 = Some(trace.t_values[i]);
        } else {
            break;
        }
    }

    let suffix_start = (0..steps)
        .rev()
        .take_while(|&i| trace.converged[i])
        .last()
        .unwrap_or(steps);
    let tail = cfg.min_converged_tail.min(steps);
    let tail_ok = (steps - tail..steps).all(|i| trace.converged[i] && trace.inactive_feasible[i]);
    let ratios: Vec<f64> = trace.ratio[suffix_start..]
        .iter()
        .flatten()
        .copied()
        .collect();
    let monotone = ratios
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-6) + 1e-12);
    let final_ok = trace
        .ratio
        .last()
        .copied()
        .flatten()
        .is_some_and(|r| r <= cfg.ratio_tol);
    let slope_ok = trace
        .decay_slope
        .is_none_or(|s| s >= 1.0 + cfg.slope_margin);
    let passes = in_cone && tail_ok && monotone && final_ok && slope_ok;

    let robust_failure = in_cone
        && (0..steps).all(|i| {
            !trace.converged[i]
                || trace.ratio[i].is_some_and(|r| r >= cfg.violation_ratio)
                || !trace.inactive_feasible[i]
        });

    Ok(TangentProbe {
        direction: d.to_vec(),
        cone_violation: violation,
        in_cone,
        j_set: crit.j_set,
        outside,
        trace,
        epsilon0,
        passes,
        robust_failure,
    })
}

// ---------------------------------------------------------------------------
// Tangent directions from feasible points

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentEstimate {
    pub directions: Vec<Vec<f64>>,
    /// No chain produced stable feasible points: `x0` looks isolated.
    pub trivial_tangent_cone: bool,
    pub chains: usize,
    pub stable_chains: usize,
}

/// Constraint value, or its positive part for inequalities.
fn excess(kind: ConstraintKind, v: f64) -> f64 {
    match kind {
        ConstraintKind::Equality => v.abs(),
        ConstraintKind::Inequality => v.max(0.0),
    }
}

/// Moves `p` onto the feasible set by minimal-norm Gauss–Newton on the
/// equalities and the violated inequalities. A point counts as feasible
/// when each excess is within a few rounding units of its own first-order
/// size, so a constraint that only vanishes at `x0` is never met elsewhere.
fn project_feasible(sys: &ConstraintSystem, p: &[f64]) -> Option<Vec<f64>> {
    let all: Vec<usize> = (0..sys.num_constraints()).collect();
    let mut x = p.to_vec();
    for _ in 0..=PROJECTION_MAX_ITER {
        let (vals, rows) = sys.linearize(&all, &x).ok()?;
        if vals.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let xscale = 1.0 + norm_inf(&x);
        let mut enforced = Vec::new();
        let mut done = true;
        for i in 0..all.len() {
            let kind = sys.kind(i);
            if kind == ConstraintKind::Equality || vals[i] > 0.0 {
                enforced.push(i);
            }
            let grad = rows.row(i).norm();
            if excess(kind, vals[i]) > 8.0 * f64::EPSILON * xscale * grad {
                done = false;
            }
        }
        if done {
            return Some(x);
        }
        let a = select_rows(&rows, &enforced);
        let b = DVector::from_iterator(enforced.len(), enforced.iter().map(|&i| vals[i]));
        let step = pseudo_inverse(&a, crate::rank::DEFAULT_TOL_RANK) * b;
        if step.norm() <= 1e-14 * xscale {
            return None;
        }
        for (xi, si) in x.iter_mut().zip(step.iter()) {
            *xi -= si;
        }
    }
    None
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    (dot(a, b) / (norm(a) * norm(b))).clamp(-1.0, 1.0).acos()
}

/// Directions `(x − x0)/‖x − x0‖` of feasible points near `x0` that stay
/// put as the radius shrinks.
///
/// Each of `count` seeded chains fixes a random unit vector `u` and projects
/// `x0 + ρ·u` onto the feasible set for every radius `ρ`. A chain is stable
/// when its directions at the smallest radii agree within a small angle;
/// stable chains are merged by the same angle.
pub fn tangent_direction_estimate(
    sys: &ConstraintSystem,
    x0: &[f64],
    count: usize,
    radii: &[f64],
    seed: u64,
) -> TangentEstimate {
    let n = x0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut radii: Vec<f64> = radii.to_vec();
    radii.sort_by(|a, b| b.total_cmp(a));
    let mut directions: Vec<Vec<f64>> = Vec::new();
    let mut stable_chains = 0;
    for _ in 0..count {
        let u = unit_vector(&mut rng, n);
        let chain: Vec<Option<Vec<f64>>> = radii
            .iter()
            .map(|&rho| {
                let x = project_feasible(sys, &shifted(x0, &u, rho))?;
                let delta: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
                let len = norm(&delta);
                (len > COLLAPSE_FRACTION * rho).then(|| delta.iter().map(|v| v / len).collect())
            })
            .collect();
        let tail = &chain[chain.len().saturating_sub(STABLE_RADII)..];
        if tail.len() < STABLE_RADII.min(radii.len()) || tail.iter().any(Option::is_none) {
            continue;
        }
        let tail: Vec<&Vec<f64>> = tail.iter().flatten().collect();
        if tail.windows(2).any(|w| angle(w[0], w[1]) > DIRECTION_ANGLE) {
            continue;
        }
        stable_chains += 1;
        let rep = tail[tail.len() - 1];
        if directions.iter().all(|e| angle(e, rep) > DIRECTION_ANGLE) {
            directions.push(rep.clone());
        }
    }
    TangentEstimate {
        trivial_tangent_cone: directions.is_empty(),
        directions,
        chains: count,
        stable_chains,
    }
}

// ---------------------------------------------------------------------------
// Abadie verdict

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbadieVerdict {
    Consistent,
    Violated,
    Inconclusive,
}

impl AbadieVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            AbadieVerdict::Consistent => "consistent",
            AbadieVerdict::Violated => "violated",
            AbadieVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentMembership {
    pub direction: Vec<f64>,
    pub cone_violation: f64,
    pub member: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AbadieWitness {
    /// A direction of `Γ` that no correction keeps feasible.
    NonTangentDirection {
        direction: Vec<f64>,
        final_ratio: Option<f64>,
    },
    /// An estimated tangent direction outside `Γ`.
    TangentOutsideCone {
        direction: Vec<f64>,
        cone_violation: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbadieReport {
    pub verdict: AbadieVerdict,
    pub witness: Option<AbadieWitness>,
    pub cone: LinearizedCone,
    pub trivial_cone: bool,
    pub gamma_in_t_evidence: Vec<TangentProbe>,
    pub t_in_gamma_evidence: Vec<TangentMembership>,
    pub trivial_tangent_cone: bool,
    pub rcrcq: RcrcqReport,
}

/// Two-sided sampled comparison of the linearized cone and the tangent cone at `x0`.
pub fn abadie_verdict(
    sys: &ConstraintSystem,
    x0: &[f64],
    cfg: &AnalysisConfig,
) -> Result<AbadieReport, TangentError> {
    let pd = evaluate_point(sys, x0)?;
    let feas = feasibility_check(&pd, cfg.tol_feasible);
    if !feas.feasible {
        return Err(TangentError::Infeasible(feas));
    }
    let aset = active_set(&pd, cfg.tol_active);
    let sampler = NeighborhoodSampler::new(x0.to_vec(), cfg.sampler.clone());
    let rcrcq = check_rcrcq(sys, x0, &aset, &sampler, cfg.tol_rank)?;
    let cone = build_linearized_cone(&pd, &aset);

    let sample = sample_cone_directions(
        &cone,
        cfg.cone_directions.max(1),
        cfg.sampler.seed,
        cfg.tol_cone,
    );
    let probes = sample
        .directions
        .iter()
        .map(|d| probe_tangent(sys, x0, &aset, d, cfg))
        .collect::<Result<Vec<_>, _>>()?;

    let estimate = tangent_direction_estimate(
        sys,
        x0,
        cfg.tangent_samples,
        &cfg.sampler.radii,
        cfg.sampler.seed,
    );
    let memberships: Vec<TangentMembership> = estimate
        .directions
        .iter()
        .map(|d| {
            let v = cone_violation(&cone, d);
            TangentMembership {
                direction: d.clone(),
                cone_violation: v,
                member: v <= cfg.tol_cone,
            }
        })
        .collect();

    let witness = probes
        .iter()
        .find(|p| p.robust_failure)
        .map(|p| AbadieWitness::NonTangentDirection {
            direction: p.direction.clone(),
            final_ratio: p.trace.ratio.last().copied().flatten(),
        })
        .or_else(|| {
            memberships
                .iter()
                .find(|m| m.cone_violation > 10.0 * cfg.tol_cone)
                .map(|m| AbadieWitness::TangentOutsideCone {
                    direction: m.direction.clone(),
                    cone_violation: m.cone_violation,
                })
        });
    let verdict = if witness.is_some() {
        AbadieVerdict::Violated
    } else if probes.iter().all(|p| p.passes) && memberships.iter().all(|m| m.member) {
        AbadieVerdict::Consistent
    } else {
        AbadieVerdict::Inconclusive
    };
    Ok(AbadieReport {
        verdict,
        witness,
        cone,
        trivial_cone: sample.trivial_cone,
        gamma_in_t_evidence: probes,
        t_in_gamma_evidence: memberships,
        trivial_tangent_cone: estimate.trivial_tangent_cone,
        rcrcq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sys(vars: &[&str], eq: &[&str], ineq: &[&str]) -> ConstraintSystem {
        ConstraintSystem::parse("t", vars, None, eq, ineq).unwrap()
    }

    #[test]
    fn linear_equality_needs_no_correction() {
        let s = sys(&["x1", "x2"], &["x1 + x2"], &[]);
        let d = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt()];
        for t in [1e-1, 1e-3] {
            let c = ljusternik_correct(&s, &[0], &[0.0, 0.0], &d, t, &SolverConfig::default());
            assert_eq!(c.r.unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn circle_correction_matches_nearest_point() {
        let s = sys(&["x1", "x2"], &["x1^2 + x2^2 - 1"], &[]);
        let t: f64 = 1e-2;
        let c = ljusternik_correct(
            &s,
            &[0],
            &[1.0, 0.0],
            &[0.0, 1.0],
            t,
            &SolverConfig::default(),
        );
        let r = c.r.unwrap();
        // nearest circle point to (1, t) is (1, t)/√(1+t²)
        let exact = (1.0 + t * t).sqrt() - 1.0;
        assert_relative_eq!(norm(&r), exact, max_relative = 1e-6);
        assert_relative_eq!(norm(&r), t * t / 2.0, max_relative = 0.2);
    }

    #[test]
    fn parallel_rows_use_one_pivot() {
        let s = sys(&["x1", "x2"], &["x1", "2*x1"], &[]);
        let c = ljusternik_correct(
            &s,
            &[0, 1],
            &[0.0, 0.0],
            &[0.0, 1.0],
            1e-2,
            &SolverConfig::default(),
        );
        assert_eq!(c.r.unwrap(), vec![0.0, 0.0]);
        assert_eq!(c.pivots.len(), 1);
    }

    #[test]
    fn vanishing_gradient_stalls_at_base() {
        // x^2 <= 0 with J = {0}: the correction has nowhere to go but back to 0
        let s = sys(&["x"], &[], &["x^2"]);
        let pd = evaluate_point(&s, &[0.0]).unwrap();
        let aset = active_set(&pd, 1e-8);
        let p = probe_tangent(&s, &[0.0], &aset, &[1.0], &AnalysisConfig::default()).unwrap();
        assert!(p.in_cone);
        assert!(!p.passes);
        assert!(p.robust_failure);
    }

    #[test]
    fn circle_probe_has_quadratic_decay() {
        let s = sys(&["x1", "x2"], &["x1^2 + x2^2 - 1"], &[]);
        let aset = ActiveSet {
            indices: vec![],
            tolerance_used: 1e-8,
        };
        let p = probe_tangent(
            &s,
            &[1.0, 0.0],
            &aset,
            &[0.0, 1.0],
            &AnalysisConfig::default(),
        )
        .unwrap();
        assert!(p.passes);
        let slope = p.trace.decay_slope.unwrap();
        assert!((1.8..=2.2).contains(&slope), "slope {slope}");
        for i in 0..p.trace.t_values.len() {
            assert_eq!(
                p.trace.ratio[i].unwrap(),
                p.trace.r_norms[i].unwrap() / p.trace.t_values[i]
            );
        }
    }

    #[test]
    fn isolated_point_has_no_tangent_directions() {
        let s = sys(&["x"], &[], &["x^2"]);
        let est = tangent_direction_estimate(&s, &[0.0], 16, &crate::rank::default_radii(), 42);
        assert!(est.trivial_tangent_cone);
    }

    #[test]
    fn axis_gives_both_directions() {
        let s = sys(&["x1", "x2"], &["x1"], &[]);
        let est =
            tangent_direction_estimate(&s, &[0.0, 0.0], 16, &crate::rank::default_radii(), 42);
        assert_eq!(est.directions.len(), 2);
        for d in &est.directions {
            assert!(d[0].abs() < 1e-12);
            assert_relative_eq!(d[1].abs(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn circle_tangents_are_vertical() {
        let s = sys(&["x1", "x2"], &["x1^2 + x2^2 - 1"], &[]);
        let est =
            tangent_direction_estimate(&s, &[1.0, 0.0], 16, &crate::rank::default_radii(), 42);
        assert_eq!(est.directions.len(), 2);
        for d in &est.directions {
            assert!(d[0].abs() < 1e-4);
        }
    }

    #[test]
    fn abadie_examples() {
        let cfg = AnalysisConfig::default();
        let r = abadie_verdict(&sys(&["x"], &[], &["x^2"]), &[0.0], &cfg).unwrap();
        assert_eq!(r.verdict, AbadieVerdict::Violated);
        assert!(matches!(
            r.witness,
            Some(AbadieWitness::NonTangentDirection { .. })
        ));

        let r = abadie_verdict(
            &sys(&["x1", "x2"], &["x1 + x2", "2*x1 + 2*x2"], &[]),
            &[0.0, 0.0],
            &cfg,
        )
        .unwrap();
        assert_eq!(r.verdict, AbadieVerdict::Consistent);

        let r = abadie_verdict(&sys(&["x1", "x2"], &[], &[]), &[0.3, -1.0], &cfg).unwrap();
        assert_eq!(r.verdict, AbadieVerdict::Consistent);
    }

    #[test]
    fn infeasible_base_point_is_rejected() {
        let r = abadie_verdict(
            &sys(&["x"], &["x - 1"], &[]),
            &[0.0],
            &AnalysisConfig::default(),
        );
        assert!(matches!(r, Err(TangentError::Infeasible(_))));
    }

    #[test]
    fn slope_fit() {
        let pts: Vec<(f64, f64)> = [1e-1f64, 1e-2, 1e-3]
            .iter()
            .map(|t| (t.ln(), (t * t).ln()))
            .collect();
        assert_relative_eq!(fit_slope(&pts).unwrap(), 2.0, epsilon = 1e-12);
        assert!(fit_slope(&pts[..1]).is_none());
    }
}
