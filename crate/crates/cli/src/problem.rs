//! Problem files: a JSON document describing one constraint system at one point.

use std::path::Path;

use cq_core::expr::Expression;
use cq_core::model::ConstraintSystem;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Per-problem overrides of the analysis defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_rank: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_active: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_schedule: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_tol: Option<f64>,
}

/// Hand-computed rank of one gradient family, at the point and at generic nearby points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankOracle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<Vec<usize>>,
    pub rank_at_point: usize,
    pub rank_nearby: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oracle {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crc: Option<RankOracle>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rcrcq: Vec<RankOracle>,
}

/// Golden outcomes checked by `corpus run`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crc: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rcrcq: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abadie: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dependence: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub laszlo_at_point: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_dimension: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_residual_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual_feasible: Option<bool>,
    /// Multipliers over all constraints, matched to within `1e-8`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub primal_value: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contradiction: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub variables: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub equalities: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inequalities: Vec<String>,
    /// Family for the dependence analysis; the constraints when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functions: Option<Vec<String>>,
    /// Candidate relation `F(y1, …, yκ)` checked on the dependence family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    pub point: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Options>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assert_local_min: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Oracle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

/// A validated problem: parsed system, dependence family and witness.
#[derive(Debug, Clone)]
pub struct Problem {
    pub file: ProblemFile,
    pub system: ConstraintSystem,
    pub functions: Vec<Expression>,
    pub witness: Option<Expression>,
}

impl ProblemFile {
    /// Parses and validates JSON text; `origin` names the source in diagnostics.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, CliError> {
        let file: ProblemFile = serde_json::from_str(text).map_err(|e| CliError::Parse {
            origin: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    pub fn build(self, origin: &str) -> Result<Problem, CliError> {
        let invalid = |field: String, message: String| CliError::Invalid {
            origin: origin.to_string(),
            field,
            message,
        };
        if self.point.len() != self.variables.len() {
            return Err(invalid(
                "point".into(),
                format!(
                    "{} coordinates for {} variables",
                    self.point.len(),
                    self.variables.len()
                ),
            ));
        }
        let parse_list = |field: &str, list: &[String]| {
            list.iter()
                .enumerate()
                .map(|(i, text)| {
                    Expression::parse(text, &self.variables)
                        .map_err(|e| invalid(format!("{field}[{i}]"), e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()
        };
        let objective = self
            .objective
            .as_deref()
            .map(|t| {
                Expression::parse(t, &self.variables)
                    .map_err(|e| invalid("objective".into(), e.to_string()))
            })
            .transpose()?;
        let equalities = parse_list("equalities", &self.equalities)?;
        let inequalities = parse_list("inequalities", &self.inequalities)?;
        let functions = match &self.functions {
            Some(list) => parse_list("functions", list)?,
            None => equalities.iter().chain(&inequalities).cloned().collect(),
        };
        let witness = match &self.witness {
            Some(text) => {
                let names: Vec<String> = (1..=functions.len()).map(|i| format!("y{i}")).collect();
                Some(
                    Expression::parse(text, &names)
                        .map_err(|e| invalid("witness".into(), e.to_string()))?,
                )
            }
            None => None,
        };
        let system = ConstraintSystem::new(
            self.name.clone(),
            self.variables.clone(),
            objective,
            equalities,
            inequalities,
        )
        .map_err(|e| invalid("variables".into(), e.to_string()))?;
        Ok(Problem {
            file: self,
            system,
            functions,
            witness,
        })
    }
}

impl Problem {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        ProblemFile::from_json(text, origin)?.build(origin)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        ProblemFile::load(path)?.build(&path.display().to_string())
    }

    pub fn point(&self) -> &[f64] {
        &self.file.point
    }
}
