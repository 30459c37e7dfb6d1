//! Report emission: a human-ordered text form and a machine form with sorted
//! keys and every float printed to 17 significant digits.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::analysis::RunReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

/// Compact JSON with object keys in sorted order and floats as `{:.16e}`.
pub fn to_machine<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("reports serialize");
    let mut out = String::new();
    write_value(&v, &mut out);
    out.push('\n');
    out
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let f = n.as_f64().expect("f64 number");
                let _ = write!(out, "{f:.16e}");
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("keys serialize"));
                out.push(':');
                write_value(&map[k], out);
            }
            out.push('}');
        }
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3e}"))
}

fn fmt_set(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(|i| i.to_string()).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Verdicts first, evidence after, configuration last.
pub fn to_text(r: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} {} · {} · {}",
        r.tool, r.tool_version, r.command, r.problem
    );
    for line in &r.summary {
        let _ = writeln!(s, "  {line}");
    }
    let _ = writeln!(s, "  exit code {}", r.exit_code);
    for e in &r.errors {
        let _ = writeln!(s, "  error in {}: {}", e.section, e.message);
    }

    if let Some(rc) = &r.rcrcq {
        let _ = writeln!(s, "\nrcrcq: {}", rc.verdict.as_str());
        let _ = writeln!(
            s,
            "  active inequalities {}",
            fmt_set(&rc.active_set.indices)
        );
        let _ = writeln!(
            s,
            "  {:<16} {:>9} {:<22} per-radius rank range",
            "J", "base rank", "verdict"
        );
        for sub in &rc.subsets {
            let ranges: Vec<String> = sub
                .per_radius
                .iter()
                .map(|p| match (p.min_rank, p.max_rank) {
                    (Some(a), Some(b)) => format!("{:.0e}:{a}-{b}", p.radius),
                    _ => format!("{:.0e}:-", p.radius),
                })
                .collect();
            let _ = writeln!(
                s,
                "  {:<16} {:>9} {:<22} {}",
                fmt_set(&sub.subset),
                sub.base_rank,
                sub.verdict.as_str(),
                ranges.join(" ")
            );
            if let Some(w) = &sub.witness {
                let _ = writeln!(
                    s,
                    "    witness: rank {} at {} (radius {:.0e})",
                    w.rank,
                    fmt_vec(&w.point),
                    w.radius
                );
            }
        }
        if !rc.skipped.is_empty() {
            let _ = writeln!(s, "  {} sample point(s) skipped", rc.skipped.len());
        }
    }

    if let Some(a) = &r.abadie {
        let _ = writeln!(s, "\nabadie: {}", a.verdict.as_str());
        if let Some(w) = &a.witness {
            let _ = writeln!(
                s,
                "  witness: {}",
                serde_json::to_string(w).expect("witness serializes")
            );
        }
        let passing = a.gamma_in_t_evidence.iter().filter(|p| p.passes).count();
        let _ = writeln!(
            s,
            "  cone directions probed {}, passing {}{}",
            a.gamma_in_t_evidence.len(),
            passing,
            if a.trivial_cone { " (cone is {0})" } else { "" }
        );
        for p in &a.gamma_in_t_evidence {
            let _ = writeln!(
                s,
                "  d = {}  J(d) = {}  slope {}  eps0 {}  {}",
                fmt_vec(&p.direction),
                fmt_set(&p.j_set),
                p.trace
                    .decay_slope
                    .map_or("-".into(), |v| format!("{v:.3}")),
                fmt_opt(p.epsilon0),
                if p.passes {
                    "pass"
                } else if p.robust_failure {
                    "not tangent"
                } else {
                    "unresolved"
                }
            );
            let _ = writeln!(
                s,
                "    {:>10} {:>10} {:>10} {:>9}",
                "t", "|r|", "ratio", "converged"
            );
            for i in 0..p.trace.t_values.len() {
                let _ = writeln!(
                    s,
                    "    {:>10.1e} {:>10} {:>10} {:>9}",
                    p.trace.t_values[i],
                    fmt_opt(p.trace.r_norms[i]),
                    fmt_opt(p.trace.ratio[i]),
                    p.trace.converged[i]
                );
            }
        }
        let members = a.t_in_gamma_evidence.iter().filter(|m| m.member).count();
        let _ = writeln!(
            s,
            "  tangent estimates {}, inside the cone {}{}",
            a.t_in_gamma_evidence.len(),
            members,
            if a.trivial_tangent_cone {
                " (point looks isolated)"
            } else {
                ""
            }
        );
        for m in &a.t_in_gamma_evidence {
            let _ = writeln!(
                s,
                "    {}  violation {:.3e}",
                fmt_vec(&m.direction),
                m.cone_violation
            );
        }
    }

    if let Some(d) = &r.dependence {
        match &d.verdict {
            Some(v) => {
                let _ = writeln!(
                    s,
                    "\ndependence: {} (rank {} of {}, pivots {})",
                    v.sense.as_str(),
                    v.rank_k,
                    v.kappa,
                    fmt_set(&v.pivot_indices)
                );
                let _ = writeln!(s, "  crc: {}", v.crc.verdict.as_str());
                for g in &v.reconstruction {
                    let _ = writeln!(
                        s,
                        "  f{} = g(f at {}), degree {}, held-out residual {:.3e}",
                        g.target_index,
                        fmt_set(&g.input_indices),
                        g.degree,
                        g.cross_validated_residual
                    );
                }
            }
            None => {
                let _ = writeln!(s, "\ndependence: error");
            }
        }
        if let Some(l) = d.laszlo_at_point {
            let _ = writeln!(s, "  gradient rank deficient at the point: {l}");
        }
        if let Some(p) = &d.image {
            let _ = writeln!(
                s,
                "  image dimension {} (principal components {}, max jacobian rank {})",
                p.dimension, p.principal_components, p.max_jacobian_rank
            );
        }
        if let Some(w) = &d.witness {
            let _ = writeln!(
                s,
                "  witness residual {:.3e} over {} samples",
                w.max_residual, w.samples
            );
        }
    }

    if let Some(k) = &r.multipliers {
        let _ = writeln!(
            s,
            "\nmultipliers: {}",
            if k.report.dual_feasible {
                "found"
            } else {
                "none"
            }
        );
        if let Some(c) = &k.report.multipliers {
            let parts: Vec<String> = c
                .lambda
                .iter()
                .map(|(i, l)| format!("λ{i} = {l:.10}"))
                .collect();
            let _ = writeln!(s, "  {}", parts.join(", "));
            if c.minimal_norm_selected {
                let _ = writeln!(s, "  not unique; minimal-norm element shown");
            }
        }
        let _ = writeln!(
            s,
            "  stationarity residual {:.3e}",
            k.report.stationarity_residual
        );
        match &k.report.primal_value {
            cq_core::kkt::PrimalValue::Zero => {
                let _ = writeln!(s, "  linearized primal value: zero (d = 0 optimal)");
            }
            cq_core::kkt::PrimalValue::UnboundedBelow { direction, slope } => {
                let _ = writeln!(
                    s,
                    "  linearized primal value: unbounded below along {} (slope {slope:.6})",
                    fmt_vec(direction)
                );
            }
        }
        if k.assert_local_min {
            let _ = writeln!(
                s,
                "  asserted local minimum; contradiction: {}",
                k.contradiction
            );
        }
        if let Some(n) = &k.note {
            let _ = writeln!(s, "  note: {n}");
        }
    }

    let c = &r.config;
    let _ = writeln!(
        s,
        "\nconfig: tol_rank {:e}, tol_active {:e}, tol_cone {:e}, seed {}, samples {}, radii {:?}, t-schedule {:?}, ratio_tol {:e}",
        c.tol_rank, c.tol_active, c.tol_cone, c.sampler.seed, c.sampler.samples_per_radius, c.sampler.radii, c.t_schedule, c.ratio_tol
    );
    s
}
