//! Bundled example problems and their golden outcomes.

use serde::Serialize;

use crate::analysis::{run_problem, Command, RunReport};
use crate::problem::{Expected, Problem};
use crate::settings::Flags;
use crate::CliError;

/// Multipliers in golden files are matched to this absolute tolerance.
pub const LAMBDA_TOL: f64 = 1e-8;

pub const CASES: [(&str, &str); 9] = [
    (
        "l2-truncation",
        include_str!("../corpus/l2-truncation.json"),
    ),
    (
        "squares-crc-refuted",
        include_str!("../corpus/squares-crc-refuted.json"),
    ),
    (
        "cubic-square-witness",
        include_str!("../corpus/cubic-square-witness.json"),
    ),
    ("tornado", include_str!("../corpus/tornado.json")),
    (
        "x-squared-leq-zero",
        include_str!("../corpus/x-squared-leq-zero.json"),
    ),
    (
        "parallel-equalities",
        include_str!("../corpus/parallel-equalities.json"),
    ),
    (
        "circle-equality",
        include_str!("../corpus/circle-equality.json"),
    ),
    (
        "duplicate-inequality",
        include_str!("../corpus/duplicate-inequality.json"),
    ),
    (
        "sign-obstructed",
        include_str!("../corpus/sign-obstructed.json"),
    ),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    CASES.iter().map(|(n, _)| *n)
}

pub fn load(name: &str) -> Result<Problem, CliError> {
    let (_, text) = CASES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| CliError::Usage(format!("no bundled problem named `{name}`")))?;
    Problem::parse(text, &format!("corpus/{name}.json"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseOutcome {
    pub name: String,
    pub golden_matched: bool,
    pub mismatches: Vec<String>,
    pub report: RunReport,
}

/// Differences between a report and the golden block; empty when they agree.
pub fn golden_mismatches(expected: &Expected, r: &RunReport) -> Vec<String> {
    let mut out = Vec::new();
    fn check(out: &mut Vec<String>, what: &str, want: String, got: Option<String>) {
        let got = got.unwrap_or_else(|| "missing".into());
        if want != got {
            out.push(format!("{what}: expected {want}, got {got}"));
        }
    }
    let dep = r.dependence.as_ref();
    let verdict = dep.and_then(|d| d.verdict.as_ref());
    let kkt = r.multipliers.as_ref();
    if let Some(code) = expected.exit_code {
        check(
            &mut out,
            "exit code",
            code.to_string(),
            Some(r.exit_code.to_string()),
        );
    }
    if let Some(v) = &expected.crc {
        check(
            &mut out,
            "crc",
            v.clone(),
            verdict.map(|v| v.crc.verdict.as_str().to_string()),
        );
    }
    if let Some(v) = &expected.rcrcq {
        check(
            &mut out,
            "rcrcq",
            v.clone(),
            r.rcrcq.as_ref().map(|x| x.verdict.as_str().to_string()),
        );
    }
    if let Some(v) = &expected.abadie {
        check(
            &mut out,
            "abadie",
            v.clone(),
            r.abadie.as_ref().map(|x| x.verdict.as_str().to_string()),
        );
    }
    if let Some(v) = &expected.dependence {
        check(
            &mut out,
            "dependence",
            v.clone(),
            verdict.map(|x| x.sense.as_str().to_string()),
        );
    }
    if let Some(v) = expected.laszlo_at_point {
        check(
            &mut out,
            "laszlo",
            v.to_string(),
            dep.and_then(|d| d.laszlo_at_point).map(|x| x.to_string()),
        );
    }
    if let Some(v) = expected.image_dimension {
        check(
            &mut out,
            "image dimension",
            v.to_string(),
            dep.and_then(|d| d.image.as_ref())
                .map(|x| x.dimension.to_string()),
        );
    }
    if let Some(bound) = expected.witness_residual_max {
        match dep.and_then(|d| d.witness.as_ref()) {
            Some(w) if w.max_residual <= bound => {}
            Some(w) => out.push(format!(
                "witness residual {:e} above {bound:e}",
                w.max_residual
            )),
            None => out.push("witness residual missing".into()),
        }
    }
    if let Some(v) = expected.dual_feasible {
        check(
            &mut out,
            "dual feasible",
            v.to_string(),
            kkt.map(|k| k.report.dual_feasible.to_string()),
        );
    }
    if let Some(v) = &expected.primal_value {
        let got = kkt.map(|k| match k.report.primal_value {
            cq_core::kkt::PrimalValue::Zero => "zero".to_string(),
            cq_core::kkt::PrimalValue::UnboundedBelow { .. } => "unbounded-below".to_string(),
        });
        check(&mut out, "primal value", v.clone(), got);
    }
    if let Some(v) = expected.contradiction {
        check(
            &mut out,
            "contradiction",
            v.to_string(),
            kkt.map(|k| k.contradiction.to_string()),
        );
    }
    if let Some(want) = &expected.lambda {
        match kkt.and_then(|k| k.report.multipliers.as_ref()) {
            Some(c) => {
                let got: Vec<f64> = c.lambda.values().copied().collect();
                let close = got.len() == want.len()
                    && got
                        .iter()
                        .zip(want)
                        .all(|(a, b)| (a - b).abs() <= LAMBDA_TOL);
                if !close {
                    out.push(format!("lambda: expected {want:?}, got {got:?}"));
                }
            }
            None => out.push("lambda: no multipliers".into()),
        }
    }
    out
}

pub fn run_case(name: &str, flags: &Flags) -> Result<CaseOutcome, CliError> {
    let problem = load(name)?;
    let report = run_problem(&problem, Command::Analyze, flags)?;
    let mismatches = problem
        .file
        .expected
        .as_ref()
        .map(|e| golden_mismatches(e, &report))
        .unwrap_or_default();
    Ok(CaseOutcome {
        name: name.to_string(),
        golden_matched: mismatches.is_empty(),
        mismatches,
        report,
    })
}
