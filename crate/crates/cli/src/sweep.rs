//! Parameter sweeps: one evolution and rate fit per lattice point, run in
//! parallel and aggregated in lattice order.

use rayon::prelude::*;

use wfd_core::config::Config;
use wfd_core::evolve::{fit_rate, run, verify_epi, EvolveError, WindowPolicy};

use crate::commands::{load_config, print_verdicts, trace_verdicts, EPI_FLOOR, EPI_TOL};
use crate::output::{num, opt, write_table, Manifest};
use crate::{Failure, Status};

/// Lattice axes, in the order they vary (last fastest).
const AXES: [(&str, &str); 4] = [
    ("sweep_d", "d"),
    ("sweep_m", "m"),
    ("sweep_beta", "beta"),
    ("sweep_gamma", "gamma"),
];

const HEADER: [&str; 16] = [
    "d",
    "m",
    "beta",
    "gamma",
    "status",
    "f_rate",
    "r2",
    "decades",
    "predicted_paper",
    "predicted_scaled",
    "g_rate",
    "sup_rate",
    "epi_max",
    "mass_drift",
    "verdicts",
    "message",
];

/// Cartesian product of the `sweep_*` lists, as key overrides.
pub fn lattice(cfg: &Config) -> Vec<Vec<(&'static str, String)>> {
    let mut points: Vec<Vec<(&'static str, String)>> = vec![Vec::new()];
    let mut any = false;
    for (axis, key) in AXES {
        let Some(list) = cfg.get_str(axis) else {
            continue;
        };
        any = true;
        let values: Vec<String> = list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key, v.clone()));
                    q
                })
            })
            .collect();
    }
    if any {
        points
    } else {
        Vec::new()
    }
}

struct PointResult {
    row: Vec<String>,
    status: Status,
    verdicts: Vec<(String, bool)>,
}

fn run_point(base: &Config, overrides: &[(&'static str, String)]) -> PointResult {
    let mut cfg = base.clone();
    for (k, v) in overrides {
        cfg.set(k, v);
    }
    let key = |k: &str| cfg.get_str(k).unwrap_or("").to_string();
    let mut row = vec![key("d"), key("m"), key("beta"), key("gamma")];
    let fail = |mut row: Vec<String>, status: Status, label: &str, msg: String| {
        row.push(label.into());
        row.extend(std::iter::repeat_n(String::new(), HEADER.len() - 6));
        row.push(msg);
        PointResult {
            row,
            status,
            verdicts: Vec::new(),
        }
    };
    let params = match cfg.params() {
        Ok(p) => p,
        Err(e) => return fail(row, Status::ConfigError, "invalid", e.to_string()),
    };
    let trace = match cfg
        .evolve_config(params)
        .map_err(Failure::from)
        .and_then(|ec| run(&ec).map_err(Failure::from))
    {
        Ok(t) => t,
        Err(f) => {
            let label = if f.status == Status::NumericalFailure {
                "numerical-failure"
            } else {
                "invalid"
            };
            return fail(row, f.status, label, f.message);
        }
    };
    let mut verdicts = trace_verdicts(&trace);
    let drift = trace
        .rows
        .iter()
        .map(|r| r.mass_err.abs())
        .fold(0.0, f64::max);
    let epi = verify_epi(&trace, EPI_FLOOR).ok();
    if let Some(e) = &epi {
        if e.checked > 0 {
            verdicts.push((
                format!("EPI max mismatch {:.3e} < {EPI_TOL}", e.max_mismatch),
                e.max_mismatch < EPI_TOL,
            ));
        }
    }
    let epi_max = epi.filter(|e| e.checked > 0).map(|e| e.max_mismatch);
    let (status_label, rates, message) = match fit_rate(&trace, WindowPolicy::Default) {
        Ok(fit) => {
            verdicts.extend(fit.verdicts.iter().map(|v| {
                (
                    format!("{} {:.6} vs {:.6}", v.name, v.observed, v.threshold),
                    v.pass,
                )
            }));
            ("fitted", Some(fit), String::new())
        }
        Err(EvolveError::RatesUnavailable(msg)) => ("unrated", None, msg),
        Err(e) => {
            let f = Failure::from(e);
            verdicts.push((f.message.clone(), false));
            ("no-fit", None, f.message)
        }
    };
    row.push(status_label.into());
    match &rates {
        Some(fit) => row.extend([
            num(fit.f.rate),
            num(fit.f.r2),
            num(fit.f.decades),
            num(fit.predicted_f.paper),
            num(fit.predicted_f.scaled),
            opt(fit.g.map(|g| g.rate)),
            opt(fit.sup.map(|s| s.rate)),
        ]),
        None => row.extend(std::iter::repeat_n(String::new(), 7)),
    }
    row.push(opt(epi_max));
    row.push(num(drift));
    let passed = verdicts.iter().filter(|v| v.1).count();
    row.push(format!("{passed}/{}", verdicts.len()));
    row.push(message);
    let status = if passed == verdicts.len() {
        Status::Pass
    } else {
        Status::VerdictFail
    };
    PointResult {
        row,
        status,
        verdicts,
    }
}

pub fn sweep(manifest: &Manifest) -> Result<Status, Failure> {
    let cfg = load_config(manifest)?;
    let points = lattice(&cfg);
    if points.is_empty() {
        println!("no runs");
        return Err(Failure::config(
            "empty sweep lattice (set sweep_d, sweep_m, sweep_beta or sweep_gamma)",
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.jobs)
        .build()
        .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    let results: Vec<PointResult> =
        pool.install(|| points.par_iter().map(|pt| run_point(&cfg, pt)).collect());

    let mut status = Status::Pass;
    for (pt, r) in points.iter().zip(&results) {
        let label: Vec<String> = pt.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("[{}] {}", label.join(" "), r.row[4]);
        print_verdicts(&r.verdicts);
        if r.row[4] != "fitted" && r.row[4] != "unrated" {
            println!("  {}", r.row[HEADER.len() - 1]);
        }
        status = status.max(r.status);
    }
    let rows: Vec<Vec<String>> = results.into_iter().map(|r| r.row).collect();
    let path = write_table(manifest, "summary.csv", None, &HEADER, &rows)?;
    eprintln!("wrote {} ({} runs)", path.display(), rows.len());
    Ok(status)
}
