//! Tolerances and sampling settings shared by every analysis.

use serde::Serialize;

use crate::dependence::FitConfig;
use crate::rank::SamplerConfig;
use crate::tangent::SolverConfig;

/// `1e-1, 1e-2, …, 1e-5`.
pub fn default_t_schedule() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    /// Relative singular-value cut for numerical rank.
    pub tol_rank: f64,
    /// Absolute activity threshold `|h_i(x0)| ≤ tol_active`.
    pub tol_active: f64,
    /// Feasibility threshold for the base point.
    pub tol_feasible: f64,
    /// Relative tolerance of the inner-product test for critical constraints.
    pub tol_critical: f64,
    /// Relative tolerance when testing estimated tangent directions against `Γ`.
    pub tol_cone: f64,
    /// Relative residual accepted for dual-cone representations.
    pub tol_dual: f64,
    pub sampler: SamplerConfig,
    /// Descending step lengths for tangent probes.
    pub t_schedule: Vec<f64>,
    /// Largest acceptable `‖r(t)‖/t` at the smallest step.
    pub ratio_tol: f64,
    /// A passing probe needs a log-log decay slope of at least `1 + slope_margin`.
    pub slope_margin: f64,
    /// A probe whose `‖r(t)‖/t` never drops below this is a non-tangent witness.
    pub violation_ratio: f64,
    /// Number of smallest steps that must converge.
    pub min_converged_tail: usize,
    pub cone_directions: usize,
    pub tangent_samples: usize,
    pub solver: SolverConfig,
    pub fit: FitConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            tol_rank: crate::rank::DEFAULT_TOL_RANK,
            tol_active: crate::model::DEFAULT_TOL_ACTIVE,
            tol_feasible: 1e-8,
            tol_critical: 1e-8,
            tol_cone: 1e-4,
            tol_dual: 1e-10,
            sampler: SamplerConfig::default(),
            t_schedule: default_t_schedule(),
            ratio_tol: 1e-3,
            slope_margin: 0.5,
            violation_ratio: 0.1,
            min_converged_tail: 3,
            cone_directions: 16,
            tangent_samples: 16,
            solver: SolverConfig::default(),
            fit: FitConfig::default(),
        }
    }
}
