//! Lagrange multipliers and the linearized primal/dual pair at a candidate point.
//!
//! The linearized primal minimises `⟨∇h0(x0), d⟩` over `d ∈ Γ`. Its value is
//! zero exactly when `−∇h0(x0)` lies in the dual cone, and the coefficients
//! of that representation are the multipliers. Otherwise it is unbounded
//! below along a descent direction of `Γ`.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::cones::{
    build_linearized_cone, cone_member, dual_cone_member, project_onto_dual, ConeCoefficients,
};
use crate::config::AnalysisConfig;
use crate::linalg::{dot, norm};
use crate::model::{
    active_set, evaluate_point, feasibility_check, ActiveSet, ConstraintSystem, ModelError,
    PointData,
};
use crate::rank::RankVerdict;
use crate::tangent::{abadie_verdict, AbadieReport, TangentError};

/// Membership tolerance used when verifying a descent certificate.
const CERTIFICATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KktError {
    #[error("the system has no objective")]
    MissingObjective,
    #[error("the descent certificate failed verification")]
    Certificate,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tangent(#[from] TangentError),
}

fn objective_gradient(pd: &PointData) -> Result<&[f64], KktError> {
    pd.objective_gradient
        .as_deref()
        .ok_or(KktError::MissingObjective)
}

/// Extends active-set coefficients with zeros on every other constraint.
fn extend(coefficients: ConeCoefficients, m: usize) -> ConeCoefficients {
    let mut lambda: BTreeMap<usize, f64> = (0..m).map(|i| (i, 0.0)).collect();
    lambda.extend(coefficients.lambda);
    ConeCoefficients {
        lambda,
        ..coefficients
    }
}

/// Multipliers `λ` with `∇h0 + Σ λ_i ∇h_i = 0`, `λ_i ≥ 0` on inequalities
/// and `λ_i = 0` off the active set, if any exist. When several exist the
/// minimal-norm one is returned.
pub fn compute_multipliers(
    sys: &ConstraintSystem,
    x0: &[f64],
    aset: &ActiveSet,
    tol: f64,
) -> Result<Option<ConeCoefficients>, KktError> {
    let pd = evaluate_point(sys, x0)?;
    let v: Vec<f64> = objective_gradient(&pd)?.iter().map(|g| -g).collect();
    let cone = build_linearized_cone(&pd, aset);
    Ok(dual_cone_member(&cone, &v, tol).map(|c| extend(c, sys.num_constraints())))
}

/// `‖∇h0(x0) + Σ λ_i ∇h_i(x0)‖₂`, with `lambda` indexed over all constraints.
pub fn stationarity_residual(
    sys: &ConstraintSystem,
    x0: &[f64],
    lambda: &[f64],
) -> Result<f64, KktError> {
    let pd = evaluate_point(sys, x0)?;
    let mut g = nalgebra::DVector::from_column_slice(objective_gradient(&pd)?);
    for (i, &l) in lambda.iter().enumerate() {
        g += pd.jacobian.row(i).transpose() * l;
    }
    Ok(g.norm())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "value", rename_all = "kebab-case")]
pub enum PrimalValue {
    /// `d = 0` is optimal.
    Zero,
    /// `direction ∈ Γ` is a unit vector with `⟨∇h0, direction⟩ = slope < 0`.
    UnboundedBelow { direction: Vec<f64>, slope: f64 },
}

impl PrimalValue {
    pub fn is_zero(&self) -> bool {
        matches!(self, PrimalValue::Zero)
    }
}

/// Value of `min ⟨∇h0(x0), d⟩` over `d ∈ Γ`, with a verified descent
/// direction when unbounded.
pub fn linearized_primal_value(
    sys: &ConstraintSystem,
    x0: &[f64],
    aset: &ActiveSet,
    tol: f64,
) -> Result<PrimalValue, KktError> {
    let pd = evaluate_point(sys, x0)?;
    let grad = objective_gradient(&pd)?.to_vec();
    let v: Vec<f64> = grad.iter().map(|g| -g).collect();
    let cone = build_linearized_cone(&pd, aset);
    if dual_cone_member(&cone, &v, tol).is_some() {
        return Ok(PrimalValue::Zero);
    }
    // v − (its projection onto the dual cone) lies in Γ and has ⟨v, w⟩ = ‖w‖²
    let w: Vec<f64> = project_onto_dual(&cone, &v)
        .remainder
        .iter()
        .copied()
        .collect();
    let len = norm(&w);
    if len == 0.0 {
        return Err(KktError::Certificate);
    }
    let direction: Vec<f64> = w.iter().map(|x| x / len).collect();
    let slope = dot(&grad, &direction);
    if !(slope < 0.0 && cone_member(&cone, &direction, CERTIFICATE_TOL)) {
        return Err(KktError::Certificate);
    }
    Ok(PrimalValue::UnboundedBelow { direction, slope })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    /// Over all constraints, zero off the active set.
    pub multipliers: Option<ConeCoefficients>,
    /// At the multipliers if present, else at the best non-negative least-squares fit.
    pub stationarity_residual: f64,
    pub dual_feasible: bool,
    pub primal_value: PrimalValue,
    pub minimal_norm_selected: bool,
    /// `max_i |λ_i·h_i(x0)|` over inequalities.
    pub complementarity: f64,
}

pub fn kkt_report(
    sys: &ConstraintSystem,
    x0: &[f64],
    aset: &ActiveSet,
    tol: f64,
) -> Result<KktReport, KktError> {
    let pd = evaluate_point(sys, x0)?;
    let multipliers = compute_multipliers(sys, x0, aset, tol)?;
    let primal_value = linearized_primal_value(sys, x0, aset, tol)?;
    let m = sys.num_constraints();
    let lambda: Vec<f64> = match &multipliers {
        Some(c) => (0..m).map(|i| c.lambda[&i]).collect(),
        None => {
            let cone = build_linearized_cone(&pd, aset);
            let v: Vec<f64> = objective_gradient(&pd)?.iter().map(|g| -g).collect();
            let fit = project_onto_dual(&cone, &v);
            let mut full = vec![0.0; m];
            for ((i, _), l) in cone.provenance().iter().zip(fit.lambda.iter()) {
                full[*i] = *l;
            }
            full
        }
    };
    let complementarity = sys
        .inequality_indices()
        .map(|i| (lambda[i] * pd.values[i]).abs())
        .fold(0.0, f64::max);
    Ok(KktReport {
        stationarity_residual: stationarity_residual(sys, x0, &lambda)?,
        dual_feasible: multipliers.is_some(),
        minimal_norm_selected: multipliers
            .as_ref()
            .is_some_and(|c| c.minimal_norm_selected),
        multipliers,
        primal_value,
        complementarity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateReport {
    pub abadie: AbadieReport,
    pub kkt: KktReport,
    /// User assertion that `x0` is a local minimum; never verified.
    pub assert_local_min: bool,
    /// Asserted local minimum, relaxed constant rank certified, yet no multipliers.
    pub contradiction: bool,
    pub note: Option<String>,
}

/// Bundles the qualification, tangent and multiplier analyses and checks
/// that a certified relaxed constant rank condition at an asserted local
/// minimum comes with multipliers.
pub fn verify_candidate(
    sys: &ConstraintSystem,
    x0: &[f64],
    cfg: &AnalysisConfig,
    assert_local_min: bool,
) -> Result<CandidateReport, KktError> {
    let pd = evaluate_point(sys, x0)?;
    let feas = feasibility_check(&pd, cfg.tol_feasible);
    if !feas.feasible {
        return Err(TangentError::Infeasible(feas).into());
    }
    let aset = active_set(&pd, cfg.tol_active);
    let abadie = abadie_verdict(sys, x0, cfg)?;
    let kkt = kkt_report(sys, x0, &aset, cfg.tol_dual)?;
    let certified = abadie.rcrcq.verdict == RankVerdict::CertifiedBySampling;
    let contradiction = assert_local_min && certified && !kkt.dual_feasible;
    let note = match (assert_local_min, certified, kkt.dual_feasible) {
        (true, true, false) => Some("asserted local minimum with a certified constant rank condition but no multipliers".into()),
        (true, false, false) => Some(
            "no multipliers, but the relaxed constant rank condition fails here, so the local minimum assertion is not contradicted"
                .into(),
        ),
        _ => None,
    };
    Ok(CandidateReport {
        abadie,
        kkt,
        assert_local_min,
        contradiction,
        note,
    })
}
