#![allow(dead_code)]

use cq_core::expr::Expression;
use cq_core::model::ConstraintSystem;

/// One bundled example: a constraint system, the dependence family and the point.
pub struct Case {
    pub name: &'static str,
    pub system: ConstraintSystem,
    pub functions: Vec<Expression>,
    pub point: Vec<f64>,
}

fn case(
    name: &'static str,
    vars: &[&str],
    objective: Option<&str>,
    eqs: &[&str],
    ineqs: &[&str],
    functions: Option<&[&str]>,
    point: &[f64],
) -> Case {
    let system = ConstraintSystem::parse(name, vars, objective, eqs, ineqs).unwrap();
    let functions = match functions {
        Some(list) => list
            .iter()
            .map(|t| Expression::parse(t, vars).unwrap())
            .collect(),
        None => system.constraints().cloned().collect(),
    };
    Case {
        name,
        system,
        functions,
        point: point.to_vec(),
    }
}

pub fn corpus() -> Vec<Case> {
    vec![
        case(
            "l2-truncation",
            &["x1", "x2", "x3", "x4"],
            None,
            &[],
            &[],
            Some(&["x1", "x2"]),
            &[0.0; 4],
        ),
        case(
            "squares",
            &["x1", "x2"],
            None,
            &[],
            &[],
            Some(&["x1^2", "x2^2"]),
            &[0.0, 0.0],
        ),
        case(
            "cubic-square",
            &["t"],
            None,
            &[],
            &[],
            Some(&["t^3", "t^2"]),
            &[0.0],
        ),
        case(
            "tornado",
            &["x"],
            None,
            &[],
            &[],
            Some(&["x^3*sin(1/x)", "x^3*cos(1/x)", "x^3"]),
            &[0.0],
        ),
        case("x-squared", &["x"], Some("x"), &[], &["x^2"], None, &[0.0]),
        case(
            "parallel",
            &["x1", "x2"],
            Some("x1^2 + x2^2"),
            &["x1 + x2", "2*x1 + 2*x2"],
            &[],
            None,
            &[0.0, 0.0],
        ),
        case(
            "circle",
            &["x1", "x2"],
            Some("-x1"),
            &["x1^2 + x2^2 - 1"],
            &[],
            None,
            &[1.0, 0.0],
        ),
        case(
            "duplicate",
            &["x1"],
            Some("x1"),
            &[],
            &["-x1", "-2*x1"],
            None,
            &[0.0],
        ),
        case(
            "sign-obstructed",
            &["x1"],
            Some("x1"),
            &[],
            &["x1"],
            None,
            &[0.0],
        ),
    ]
}

pub fn with_objective() -> Vec<Case> {
    corpus()
        .into_iter()
        .filter(|c| c.system.objective().is_some())
        .collect()
}

pub fn with_constraints() -> Vec<Case> {
    corpus()
        .into_iter()
        .filter(|c| c.system.num_constraints() > 0)
        .collect()
}
