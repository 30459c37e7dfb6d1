//! Runs the requested analyses on a problem and folds the verdicts into an exit code.

use cq_core::config::AnalysisConfig;
use cq_core::dependence::{
    classify_dependence, image_dimension_probe, laszlo_test, witness_check, DependenceSense,
    DependenceVerdict, ImageProbe, WitnessResidual,
};
use cq_core::kkt::{kkt_report, verify_candidate, KktReport};
use cq_core::model::{active_set, evaluate_point};
use cq_core::rank::{check_rcrcq, NeighborhoodSampler, RankVerdict, RcrcqReport};
use cq_core::tangent::{abadie_verdict, AbadieReport, AbadieVerdict};
use serde::Serialize;

use crate::problem::Problem;
use crate::settings::{effective_config, Flags};
use crate::CliError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Rcrcq,
    Abadie,
    Multipliers,
    Dependence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Rcrcq => "rcrcq",
            Command::Abadie => "abadie",
            Command::Multipliers => "multipliers",
            Command::Dependence => "dependence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceSection {
    pub verdict: Option<DependenceVerdict>,
    pub laszlo_at_point: Option<bool>,
    pub image: Option<ImageProbe>,
    pub witness: Option<WitnessResidual>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktSection {
    pub report: KktReport,
    pub assert_local_min: bool,
    pub contradiction: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionError {
    pub section: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub report_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub problem: String,
    pub config: AnalysisConfig,
    pub rcrcq: Option<RcrcqReport>,
    pub abadie: Option<AbadieReport>,
    pub dependence: Option<DependenceSection>,
    pub multipliers: Option<KktSection>,
    pub errors: Vec<SectionError>,
    /// One verdict line per section, in section order.
    pub summary: Vec<String>,
    pub exit_code: i32,
}

impl RunReport {
    pub fn new(command: &str, problem: &str, config: AnalysisConfig) -> Self {
        RunReport {
            report_version: 1,
            tool: "cq-analyzer".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            problem: problem.into(),
            config,
            rcrcq: None,
            abadie: None,
            dependence: None,
            multipliers: None,
            errors: Vec::new(),
            summary: Vec::new(),
            exit_code: EXIT_OK,
        }
    }
}

/// Any negative outcome wins over any inconclusive one.
pub fn combine_exit_codes(codes: impl IntoIterator<Item = i32>) -> i32 {
    let codes: Vec<i32> = codes.into_iter().collect();
    if codes.contains(&EXIT_NEGATIVE) {
        EXIT_NEGATIVE
    } else if codes.contains(&EXIT_INCONCLUSIVE) {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    }
}

fn rank_code(v: RankVerdict) -> i32 {
    match v {
        RankVerdict::CertifiedBySampling => EXIT_OK,
        RankVerdict::Refuted => EXIT_NEGATIVE,
        RankVerdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn abadie_code(v: AbadieVerdict) -> i32 {
    match v {
        AbadieVerdict::Consistent => EXIT_OK,
        AbadieVerdict::Violated => EXIT_NEGATIVE,
        AbadieVerdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

pub fn run_problem(
    problem: &Problem,
    command: Command,
    flags: &Flags,
) -> Result<RunReport, CliError> {
    let cfg = effective_config(problem.file.options.as_ref(), flags)?;
    let has_objective = problem.system.objective().is_some();
    if command == Command::Multipliers && !has_objective {
        return Err(CliError::Usage(
            "`multipliers` needs a problem with an objective".into(),
        ));
    }
    if command == Command::Dependence && problem.functions.is_empty() {
        return Err(CliError::Usage(
            "`dependence` needs functions or constraints".into(),
        ));
    }
    let mut report = RunReport::new(command.name(), &problem.file.name, cfg.clone());
    let mut codes = Vec::new();
    let fail = |report: &mut RunReport, codes: &mut Vec<i32>, section: &str, message: String| {
        report.summary.push(format!("{section}: error"));
        report.errors.push(SectionError {
            section: section.into(),
            message,
        });
        codes.push(EXIT_INCONCLUSIVE);
    };
    let x0 = problem.point();
    let sys = &problem.system;

    let wants = |c: Command| command == Command::Analyze || command == c;

    // abadie (and the candidate bundle) already contain the rcrcq report
    let mut rcrcq: Option<RcrcqReport> = None;
    if wants(Command::Abadie) || (command == Command::Analyze && !has_objective) {
        match abadie_verdict(sys, x0, &cfg) {
            Ok(a) => {
                rcrcq = Some(a.rcrcq.clone());
                report.abadie = Some(a);
            }
            Err(e) => fail(&mut report, &mut codes, "abadie", e.to_string()),
        }
    }
    if command == Command::Analyze && has_objective {
        let assert = problem.file.assert_local_min.unwrap_or(false);
        match verify_candidate(sys, x0, &cfg, assert) {
            Ok(c) => {
                rcrcq = Some(c.abadie.rcrcq.clone());
                report.abadie = Some(c.abadie);
                report.multipliers = Some(KktSection {
                    report: c.kkt,
                    assert_local_min: c.assert_local_min,
                    contradiction: c.contradiction,
                    note: c.note,
                });
            }
            Err(e) => fail(&mut report, &mut codes, "analyze", e.to_string()),
        }
    }
    if rcrcq.is_none() && (wants(Command::Rcrcq) || command == Command::Multipliers) {
        let sampler = NeighborhoodSampler::new(x0.to_vec(), cfg.sampler.clone());
        let result = evaluate_point(sys, x0)
            .map_err(|e| e.to_string())
            .and_then(|pd| {
                check_rcrcq(
                    sys,
                    x0,
                    &active_set(&pd, cfg.tol_active),
                    &sampler,
                    cfg.tol_rank,
                )
                .map_err(|e| e.to_string())
            });
        match result {
            Ok(r) => rcrcq = Some(r),
            Err(e) => fail(&mut report, &mut codes, "rcrcq", e),
        }
    }
    if wants(Command::Rcrcq) || command == Command::Multipliers {
        if let Some(r) = &rcrcq {
            report
                .summary
                .push(format!("rcrcq: {}", r.verdict.as_str()));
            if wants(Command::Rcrcq) {
                codes.push(rank_code(r.verdict));
            }
        }
        report.rcrcq = rcrcq.clone();
    }
    if let Some(a) = &report.abadie {
        report
            .summary
            .push(format!("abadie: {}", a.verdict.as_str()));
        codes.push(abadie_code(a.verdict));
    }

    if command == Command::Multipliers {
        let result = evaluate_point(sys, x0)
            .map_err(|e| e.to_string())
            .and_then(|pd| {
                kkt_report(sys, x0, &active_set(&pd, cfg.tol_active), cfg.tol_dual)
                    .map_err(|e| e.to_string())
            });
        match result {
            Ok(k) => {
                let assert = problem.file.assert_local_min.unwrap_or(false);
                let certified = rcrcq
                    .as_ref()
                    .is_some_and(|r| r.verdict == RankVerdict::CertifiedBySampling);
                let contradiction = assert && certified && !k.dual_feasible;
                report.multipliers = Some(KktSection {
                    report: k,
                    assert_local_min: assert,
                    contradiction,
                    note: contradiction
                        .then(|| "asserted local minimum with a certified constant rank condition but no multipliers".into()),
                });
            }
            Err(e) => fail(&mut report, &mut codes, "multipliers", e),
        }
    }
    if let Some(k) = &report.multipliers {
        let line = if k.report.dual_feasible {
            "multipliers: found".to_string()
        } else {
            "multipliers: none (dual infeasible, linearized primal unbounded below)".to_string()
        };
        report.summary.push(line);
        if k.contradiction {
            report
                .summary
                .push("contradiction: asserted local minimum without multipliers".into());
        }
        codes.push(if k.report.dual_feasible && !k.contradiction {
            EXIT_OK
        } else {
            EXIT_NEGATIVE
        });
    }

    if wants(Command::Dependence) && !problem.functions.is_empty() {
        let sampler = NeighborhoodSampler::new(x0.to_vec(), cfg.sampler.clone());
        let f = &problem.functions;
        let mut section = DependenceSection {
            verdict: None,
            laszlo_at_point: None,
            image: None,
            witness: None,
        };
        match laszlo_test(f, x0, cfg.tol_rank) {
            Ok(l) => section.laszlo_at_point = Some(l),
            Err(e) => fail(&mut report, &mut codes, "laszlo", e.to_string()),
        }
        match image_dimension_probe(f, x0, &sampler, cfg.tol_rank) {
            Ok(p) => section.image = Some(p),
            Err(e) => fail(&mut report, &mut codes, "image", e.to_string()),
        }
        if let Some(w) = &problem.witness {
            match witness_check(w, f, &sampler) {
                Ok(r) => section.witness = Some(r),
                Err(e) => fail(&mut report, &mut codes, "witness", e.to_string()),
            }
        }
        match classify_dependence(f, x0, &sampler, cfg.tol_rank, &cfg.fit) {
            Ok(v) => {
                report
                    .summary
                    .push(format!("dependence: {}", v.sense.as_str()));
                codes.push(match v.sense {
                    DependenceSense::CrcFailedInconclusive => EXIT_INCONCLUSIVE,
                    _ => EXIT_OK,
                });
                section.verdict = Some(v);
            }
            Err(e) => fail(&mut report, &mut codes, "dependence", e.to_string()),
        }
        report.dependence = Some(section);
    }

    report.exit_code = combine_exit_codes(codes);
    Ok(report)
}
