//! Effective analysis settings: defaults, then problem-file options, then
//! command-line flags (the seed flag also reads `CQ_ANALYZER_SEED`).

use cq_core::config::AnalysisConfig;

use crate::problem::Options;
use crate::CliError;

/// Overrides taken from the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Flags {
    pub tol_rank: Option<f64>,
    pub tol_active: Option<f64>,
    pub seed: Option<u64>,
    pub radii: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub t_schedule: Option<Vec<f64>>,
    pub ratio_tol: Option<f64>,
}

/// Parses `start:end:xFACTOR` (a geometric run from `start` towards `end`)
/// or a comma-separated list.
pub fn parse_schedule(text: &str) -> Result<Vec<f64>, String> {
    let number = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("`{s}` is not a number"))
            .and_then(|v| {
                if v > 0.0 && v.is_finite() {
                    Ok(v)
                } else {
                    Err(format!("`{s}` must be positive"))
                }
            })
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, end, factor] => {
            let start = number(start)?;
            let end = number(end)?;
            let factor = factor
                .strip_prefix('x')
                .ok_or_else(|| format!("factor `{factor}` must look like x10"))
                .and_then(number)?;
            if factor <= 1.0 {
                return Err("factor must exceed 1".into());
            }
            let descending = start >= end;
            let mut out = vec![start];
            let mut v = start;
            // relative slack absorbs rounding in the repeated division
            let slack = 1.0 + 1e-9;
            loop {
                v = if descending { v / factor } else { v * factor };
                let past = if descending {
                    v * slack < end
                } else {
                    v > end * slack
                };
                if past || out.len() > 10_000 {
                    break;
                }
                out.push(v);
            }
            if out.len() > 10_000 {
                return Err("schedule too long".into());
            }
            Ok(out)
        }
        [list] => list.split(',').map(number).collect(),
        _ => Err(format!("cannot read schedule `{text}`")),
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    !v.is_empty() && v.windows(2).all(|w| w[1] < w[0])
}

/// Applies file options, then flags, over the defaults.
pub fn effective_config(
    options: Option<&Options>,
    flags: &Flags,
) -> Result<AnalysisConfig, CliError> {
    let mut cfg = AnalysisConfig::default();
    let empty = Options::default();
    let o = options.unwrap_or(&empty);
    let pick_f =
        |flag: Option<f64>, file: Option<f64>, default: f64| flag.or(file).unwrap_or(default);
    cfg.tol_rank = pick_f(flags.tol_rank, o.tol_rank, cfg.tol_rank);
    cfg.tol_active = pick_f(flags.tol_active, o.tol_active, cfg.tol_active);
    cfg.ratio_tol = pick_f(flags.ratio_tol, o.ratio_tol, cfg.ratio_tol);
    cfg.sampler.seed = flags.seed.or(o.seed).unwrap_or(cfg.sampler.seed);
    cfg.sampler.samples_per_radius = flags
        .samples
        .or(o.samples)
        .unwrap_or(cfg.sampler.samples_per_radius);
    if let Some(r) = flags.radii.clone().or_else(|| o.radii.clone()) {
        cfg.sampler.radii = r;
    }
    if let Some(t) = flags.t_schedule.clone().or_else(|| o.t_schedule.clone()) {
        cfg.t_schedule = t;
    }
    cfg.solver.pivot_tol = cfg.tol_rank;

    for (name, v) in [
        ("tol-rank", cfg.tol_rank),
        ("tol-active", cfg.tol_active),
        ("ratio-tol", cfg.ratio_tol),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Usage(format!(
                "--{name} must be a positive number"
            )));
        }
    }
    if cfg.sampler.samples_per_radius == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    if !strictly_decreasing(&cfg.sampler.radii) || cfg.sampler.radii.iter().any(|&r| r <= 0.0) {
        return Err(CliError::Usage(
            "radii must be positive and strictly decreasing".into(),
        ));
    }
    if !strictly_decreasing(&cfg.t_schedule) || cfg.t_schedule.iter().any(|&t| t <= 0.0) {
        return Err(CliError::Usage(
            "t-schedule must be positive and strictly decreasing".into(),
        ));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_schedule() {
        let s = parse_schedule("1e-1:1e-5:x10").unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s[0], 0.1);
        assert!((s[4] - 1e-5).abs() < 1e-18);
        assert_eq!(parse_schedule("0.5,0.25").unwrap(), vec![0.5, 0.25]);
        assert!(parse_schedule("1e-1:1e-5:10").is_err());
        assert!(parse_schedule("-1").is_err());
    }

    #[test]
    fn precedence() {
        let options = Options {
            seed: Some(7),
            tol_rank: Some(1e-6),
            ..Options::default()
        };
        let cfg = effective_config(Some(&options), &Flags::default()).unwrap();
        assert_eq!((cfg.sampler.seed, cfg.tol_rank), (7, 1e-6));
        let flags = Flags {
            seed: Some(9),
            ..Flags::default()
        };
        let cfg = effective_config(Some(&options), &flags).unwrap();
        assert_eq!(cfg.sampler.seed, 9);
        assert_eq!(
            effective_config(None, &Flags::default()).unwrap(),
            AnalysisConfig::default()
        );
    }

    #[test]
    fn rejects_bad_schedules() {
        let flags = Flags {
            t_schedule: Some(vec![1e-3, 1e-2]),
            ..Flags::default()
        };
        assert!(matches!(
            effective_config(None, &flags),
            Err(CliError::Usage(_))
        ));
    }
}
