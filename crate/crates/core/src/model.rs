//! Constraint systems, point evaluation and active-set bookkeeping.
//!
//! Constraints are indexed jointly from zero: equalities first, then
//! inequalities. Inequalities are of the form `h_i(x) <= 0`.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{ExprError, Expression};
use crate::linalg::{dot, norm};

/// Default absolute tolerance for declaring an inequality active.
pub const DEFAULT_TOL_ACTIVE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("constraint {index}: {source}")]
    Constraint {
        index: usize,
        #[source]
        source: ExprError,
    },
    #[error("objective: {0}")]
    Objective(#[source] ExprError),
    #[error("expression over {found:?} does not match system variables {expected:?}")]
    VariableMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("point has {found} coordinates, system has {expected} variables")]
    Dimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    Equality,
    Inequality,
}

#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    name: String,
    variables: Vec<String>,
    objective: Option<Expression>,
    equalities: Vec<Expression>,
    inequalities: Vec<Expression>,
}

impl ConstraintSystem {
    pub fn new(
        name: impl Into<String>,
        variables: Vec<String>,
        objective: Option<Expression>,
        equalities: Vec<Expression>,
        inequalities: Vec<Expression>,
    ) -> Result<Self, ModelError> {
        let all = objective.iter().chain(&equalities).chain(&inequalities);
        for e in all {
            if e.variables() != variables.as_slice() {
                return Err(ModelError::VariableMismatch {
                    expected: variables.clone(),
                    found: e.variables().to_vec(),
                });
            }
        }
        Ok(ConstraintSystem {
            name: name.into(),
            variables,
            objective,
            equalities,
            inequalities,
        })
    }

    /// Parses every expression against `variables`.
    pub fn parse<S: AsRef<str>>(
        name: impl Into<String>,
        variables: &[S],
        objective: Option<&str>,
        equalities: &[&str],
        inequalities: &[&str],
    ) -> Result<Self, ModelError> {
        let vars: Vec<String> = variables.iter().map(|v| v.as_ref().to_string()).collect();
        let objective = objective
            .map(|t| Expression::parse(t, &vars))
            .transpose()
            .map_err(ModelError::Objective)?;
        let parse_all = |texts: &[&str], offset: usize| {
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    Expression::parse(t, &vars).map_err(|source| ModelError::Constraint {
                        index: offset + i,
                        source,
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        };
        let equalities = parse_all(equalities, 0)?;
        let inequalities = parse_all(inequalities, equalities.len())?;
        Self::new(name, vars, objective, equalities, inequalities)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn dimension(&self) -> usize {
        self.variables.len()
    }

    pub fn objective(&self) -> Option<&Expression> {
        self.objective.as_ref()
    }

    pub fn equalities(&self) -> &[Expression] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[Expression] {
        &self.inequalities
    }

    pub fn num_constraints(&self) -> usize {
        self.equalities.len() + self.inequalities.len()
    }

    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    pub fn kind(&self, index: usize) -> ConstraintKind {
        if index < self.equalities.len() {
            ConstraintKind::Equality
        } else {
            ConstraintKind::Inequality
        }
    }

    pub fn constraint(&self, index: usize) -> &Expression {
        if index < self.equalities.len() {
            &self.equalities[index]
        } else {
            &self.inequalities[index - self.equalities.len()]
        }
    }

    pub fn constraints(&self) -> impl Iterator<Item = &Expression> {
        self.equalities.iter().chain(&self.inequalities)
    }

    pub fn equality_indices(&self) -> std::ops::Range<usize> {
        0..self.equalities.len()
    }

    pub fn inequality_indices(&self) -> std::ops::Range<usize> {
        self.equalities.len()..self.num_constraints()
    }

    /// A copy of the system with the objective multiplied by `factor`.
    pub fn with_scaled_objective(&self, factor: f64) -> Self {
        use crate::expr::{BinaryOp, Node};
        let objective = self.objective.as_ref().map(|o| {
            let node = Node::Binary {
                op: BinaryOp::Mul,
                lhs: Box::new(Node::Constant(factor)),
                rhs: Box::new(o.root().clone()),
            };
            Expression::from_node(node, &self.variables).expect("same variables")
        });
        ConstraintSystem {
            objective,
            ..self.clone()
        }
    }

    /// Values of the constraints selected by `indices` at `x`.
    pub fn values_at(&self, indices: &[usize], x: &[f64]) -> Result<Vec<f64>, ModelError> {
        indices
            .iter()
            .map(|&i| {
                self.constraint(i)
                    .evaluate(x)
                    .map_err(|source| ModelError::Constraint { index: i, source })
            })
            .collect()
    }

    /// Values and gradient rows of the selected constraints at `x`.
    pub fn linearize(
        &self,
        indices: &[usize],
        x: &[f64],
    ) -> Result<(Vec<f64>, DMatrix<f64>), ModelError> {
        let n = self.dimension();
        let mut values = Vec::with_capacity(indices.len());
        let mut rows = DMatrix::zeros(indices.len(), n);
        for (r, &i) in indices.iter().enumerate() {
            let d = self
                .constraint(i)
                .value_and_gradient(x)
                .map_err(|source| ModelError::Constraint { index: i, source })?;
            values.push(d.value);
            for (j, p) in d.partials.iter().enumerate() {
                rows[(r, j)] = *p;
            }
        }
        Ok((values, rows))
    }
}

/// Constraint values and Jacobian at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointData {
    pub point: Vec<f64>,
    pub values: Vec<f64>,
    /// One row per constraint, in constraint index order.
    pub jacobian: DMatrix<f64>,
    pub kinds: Vec<ConstraintKind>,
    pub objective_value: Option<f64>,
    pub objective_gradient: Option<Vec<f64>>,
}

impl PointData {
    pub fn num_equalities(&self) -> usize {
        self.kinds
            .iter()
            .filter(|k| **k == ConstraintKind::Equality)
            .count()
    }

    pub fn row(&self, index: usize) -> Vec<f64> {
        self.jacobian.row(index).iter().copied().collect()
    }

    pub fn equality_indices(&self) -> Vec<usize> {
        (0..self.kinds.len())
            .filter(|&i| self.kinds[i] == ConstraintKind::Equality)
            .collect()
    }
}

pub fn evaluate_point(sys: &ConstraintSystem, x: &[f64]) -> Result<PointData, ModelError> {
    if x.len() != sys.dimension() {
        return Err(ModelError::Dimension {
            expected: sys.dimension(),
            found: x.len(),
        });
    }
    let all: Vec<usize> = (0..sys.num_constraints()).collect();
    let (values, jacobian) = sys.linearize(&all, x)?;
    let (objective_value, objective_gradient) = match sys.objective() {
        Some(o) => {
            let d = o.value_and_gradient(x).map_err(ModelError::Objective)?;
            (Some(d.value), Some(d.partials))
        }
        None => (None, None),
    };
    Ok(PointData {
        point: x.to_vec(),
        values,
        jacobian,
        kinds: all.iter().map(|&i| sys.kind(i)).collect(),
        objective_value,
        objective_gradient,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveSet {
    /// Sorted inequality indices.
    pub indices: Vec<usize>,
    pub tolerance_used: f64,
}

impl ActiveSet {
    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

pub fn active_set(pd: &PointData, tol_active: f64) -> ActiveSet {
    let indices = pd
        .kinds
        .iter()
        .enumerate()
        .filter(|(i, k)| **k == ConstraintKind::Inequality && pd.values[*i].abs() <= tol_active)
        .map(|(i, _)| i)
        .collect();
    ActiveSet {
        indices,
        tolerance_used: tol_active,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub index: usize,
    pub kind: ConstraintKind,
    /// `|h_i|` for equalities, `h_i` for inequalities.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub violations: Vec<Violation>,
    pub tolerance_used: f64,
}

pub fn feasibility_check(pd: &PointData, tol: f64) -> Feasibility {
    let violations: Vec<Violation> = pd
        .kinds
        .iter()
        .zip(&pd.values)
        .enumerate()
        .filter_map(|(index, (&kind, &v))| {
            let magnitude = match kind {
                ConstraintKind::Equality => v.abs(),
                ConstraintKind::Inequality => v,
            };
            (magnitude > tol).then_some(Violation {
                index,
                kind,
                magnitude,
            })
        })
        .collect();
    Feasibility {
        feasible: violations.is_empty(),
        violations,
        tolerance_used: tol,
    }
}

/// Active inequalities orthogonal to a direction, and `J(d)`: every equality
/// plus those critical inequalities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalSet {
    pub critical: Vec<usize>,
    pub j_set: Vec<usize>,
}

pub fn critical_active_set(pd: &PointData, aset: &ActiveSet, d: &[f64], tol: f64) -> CriticalSet {
    let d_norm = norm(d);
    let critical: Vec<usize> = aset
        .indices
        .iter()
        .copied()
        .filter(|&i| {
            let row = pd.row(i);
            dot(&row, d).abs() <= tol * (1.0 + norm(&row) * d_norm)
        })
        .collect();
    let mut j_set = pd.equality_indices();
    j_set.extend(&critical);
    CriticalSet { critical, j_set }
}
