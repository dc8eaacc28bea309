//! The single-run verbs.

use std::fs;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wfd_core::config::{Config, ConfigError};
use wfd_core::evolve::{
    fit_rate, init_state, run, verify_epi, Bump, EvolutionTrace, EvolveError, WindowPolicy,
};
use wfd_core::functionals::{report, FunctionalError, FunctionalReport};
use wfd_core::grid::GridError;
use wfd_core::params::{beta_fs, classify_regime, derive, spectral_gap, ParamError, Threshold};
use wfd_core::profiles::{
    barenblatt_eval, barenblatt_mass, barenblatt_moment, c_of_mass, sandwich_constants,
    ProfileError,
};
use wfd_core::spectrum::{compare_to_formulas, SpectrumError};
use wfd_core::{BarenblattSpec, Params, RadialField, RadialGrid};

use crate::output::{num, opt, params_line, write_table, Manifest};
use crate::{Failure, Status};

/// Maximum relative mismatch of the entropy-production identity.
pub const EPI_TOL: f64 = 0.02;
/// Maximum relative mass drift along a run.
pub const MASS_TOL: f64 = 1e-10;
/// Samples with F below this are excluded from the identity check.
pub const EPI_FLOOR: f64 = 1e-8;

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(format!("config {e}"))
    }
}

impl From<ParamError> for Failure {
    fn from(e: ParamError) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<GridError> for Failure {
    fn from(e: GridError) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<ProfileError> for Failure {
    fn from(e: ProfileError) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<FunctionalError> for Failure {
    fn from(e: FunctionalError) -> Self {
        match e {
            FunctionalError::Grid(_) | FunctionalError::Profile(_) => {
                Failure::config(e.to_string())
            }
            _ => Failure::numerical(e.to_string()),
        }
    }
}

impl From<EvolveError> for Failure {
    fn from(e: EvolveError) -> Self {
        match e {
            EvolveError::NewtonDiverged { .. }
            | EvolveError::PositivityLost { .. }
            | EvolveError::Functional(_) => Failure::numerical(e.to_string()),
            EvolveError::InsufficientDecay { .. } | EvolveError::TooFewSamples { .. } => {
                Failure::verdict(e.to_string())
            }
            _ => Failure::config(e.to_string()),
        }
    }
}

impl From<SpectrumError> for Failure {
    fn from(e: SpectrumError) -> Self {
        match e {
            SpectrumError::ConvergenceFailure { .. } => Failure::numerical(e.to_string()),
            _ => Failure::config(e.to_string()),
        }
    }
}

/// Every key any command reads.
const KEYS: [&str; 41] = [
    "d",
    "m",
    "beta",
    "gamma",
    "allow_boundary",
    "C",
    "mass",
    "n",
    "r_min",
    "r_max",
    "initial",
    "initial_c",
    "initial_file",
    "eps",
    "bump_centers",
    "bump_widths",
    "bump_amplitudes",
    "dt",
    "dt_init",
    "dt_min",
    "dt_max",
    "dt_target",
    "dt_reject",
    "newton_tol",
    "newton_max_iter",
    "t_end",
    "cadence",
    "max_steps",
    "f_stop_ratio",
    "qs",
    "random_fields",
    "sectors",
    "eigenvalues",
    "spectrum_tol",
    "trace",
    "fit_t_a",
    "fit_t_b",
    "sweep_d",
    "sweep_m",
    "sweep_beta",
    "sweep_gamma",
];

pub fn load_config(manifest: &Manifest) -> Result<Config, Failure> {
    let path = manifest
        .config
        .as_ref()
        .ok_or_else(|| Failure::config("--config is required"))?;
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = Config::parse(&text)?;
    cfg.reject_unknown(&KEYS)?;
    Ok(cfg)
}

fn grid_for(cfg: &Config, p: &Params) -> Result<Arc<RadialGrid>, Failure> {
    let gs = cfg.grid_settings()?;
    Ok(Arc::new(RadialGrid::new(p, gs.r_min, gs.r_max, gs.n)?))
}

/// Prints `PASS`/`FAIL` lines and folds them into a status.
pub fn print_verdicts(verdicts: &[(String, bool)]) -> Status {
    for (line, pass) in verdicts {
        println!("{} {line}", if *pass { "PASS" } else { "FAIL" });
    }
    if verdicts.iter().all(|v| v.1) {
        Status::Pass
    } else {
        Status::VerdictFail
    }
}

pub fn classify(manifest: &Manifest) -> Result<Status, Failure> {
    let cfg = load_config(manifest)?;
    let p = cfg.params()?;
    let dv = derive(&p);
    let tags = classify_regime(&p);
    let mut rows: Vec<(String, String)> = vec![
        ("d".into(), p.d.to_string()),
        ("m".into(), p.m.to_string()),
        ("beta".into(), p.beta.to_string()),
        ("gamma".into(), p.gamma.to_string()),
        ("m_c".into(), format!("{:.6}", dv.m_c)),
        ("m_star".into(), format!("{:.6}", dv.m_star)),
        ("m_1".into(), format!("{:.6}", dv.m_1)),
        ("m_tilde_1".into(), format!("{:.6}", dv.m_tilde_1)),
        ("p_star".into(), format!("{:.6}", dv.p_star)),
        ("alpha".into(), format!("{:.6}", dv.alpha)),
        ("delta".into(), format!("{:.6}", dv.delta)),
        ("n".into(), format!("{:.6}", dv.n)),
        ("eta".into(), format!("{:.6}", dv.eta)),
        (
            "rho".into(),
            dv.rho
                .map_or_else(|| "undefined (m = m_c)".into(), |r| format!("{r:.6}")),
        ),
        ("Lambda_ess".into(), format!("{:.4}", dv.lambda_ess)),
        ("Lambda_01".into(), format!("{:.4}", dv.lambda_01)),
        ("Lambda_10".into(), format!("{:.4}", dv.lambda_10)),
        ("Lambda_star".into(), format!("{:.4}", dv.lambda_star)),
        ("theta".into(), format!("{:.6}", dv.theta)),
    ];
    match spectral_gap(&p) {
        Ok(gap) => {
            rows.push(("Lambda".into(), format!("{:.4}", gap.lambda)));
            rows.push(("branch".into(), gap.branch.to_string()));
            rows.push((
                "Lambda_improved".into(),
                format!("{:.4}", gap.lambda_improved),
            ));
            rows.push((
                "Lambda_01_in_essential".into(),
                gap.lambda_01_in_essential.to_string(),
            ));
            rows.push((
                "Lambda_10_in_essential".into(),
                gap.lambda_10_in_essential.to_string(),
            ));
        }
        Err(e) => rows.push(("Lambda".into(), e.to_string())),
    }
    if let Ok(b) = beta_fs(p.d, p.gamma) {
        rows.push(("beta_FS".into(), format!("{b:.6}")));
    }
    let labels: Vec<String> = tags.labels().iter().map(|s| s.replace('-', " ")).collect();
    rows.push(("tags".into(), tags.labels().join(" ")));
    rows.push(("prediction".into(), tags.prediction.to_string()));
    for t in &tags.near_threshold {
        rows.push(("near_threshold".into(), format!("{t:?}")));
    }
    println!("# {}", params_line(&p));
    for (k, v) in &rows {
        println!("{k:<24} {v}");
    }
    println!("regime: {}", labels.join(", "));
    let table: Vec<Vec<String>> = rows.into_iter().map(|(k, v)| vec![k, v]).collect();
    let path = write_table(
        manifest,
        "classify.csv",
        Some(&p),
        &["quantity", "value"],
        &table,
    )?;
    eprintln!("wrote {}", path.display());
    Ok(Status::Pass)
}

pub fn profile(manifest: &Manifest) -> Result<Status, Failure> {
    let cfg = load_config(manifest)?;
    let p = cfg.params()?;
    let spec = match (cfg.get_f64("C")?, cfg.get_f64("mass")?) {
        (Some(_), Some(_)) => return Err(Failure::config("set at most one of 'C' and 'mass'")),
        (_, Some(mass)) => c_of_mass(mass, &p)?,
        (c, None) => BarenblattSpec::new(&p, c.unwrap_or(1.0))?,
    };
    let grid = grid_for(&cfg, &p)?;
    let b = barenblatt_eval(&spec, &grid);
    let rows: Vec<Vec<String>> = grid
        .r()
        .iter()
        .zip(b.values())
        .map(|(&r, &v)| vec![num(r), num(v), num(spec.pressure(r))])
        .collect();
    let mass = barenblatt_mass(&spec);
    let moment = barenblatt_moment(&spec);
    println!("C        {}", num(spec.c));
    println!(
        "mass     {}",
        mass.as_ref().map_or_else(|e| e.to_string(), |m| num(*m))
    );
    println!(
        "moment   {}",
        moment.map_or_else(|| "infinite (m <= m~_1)".into(), num)
    );
    if let Ok(m) = mass {
        let discrete = grid.integrate_gamma(&b)?;
        println!(
            "grid mass {} (relative difference {:.2e})",
            num(discrete),
            (discrete / m - 1.0).abs()
        );
    }
    let path = write_table(
        manifest,
        "profile.csv",
        Some(&p),
        &["r", "B", "pressure"],
        &rows,
    )?;
    eprintln!("wrote {}", path.display());
    Ok(Status::Pass)
}

/// A perturbed Barenblatt field 𝔅_{C'}(1 + εΣ bumps) that admits a sandwich.
fn random_field(rng: &mut ChaCha8Rng, grid: &Arc<RadialGrid>) -> Result<RadialField, Failure> {
    let p = grid.params().clone();
    for _ in 0..1000 {
        let eps = rng.gen_range(0.02..0.4);
        let bumps: Vec<Bump> = (0..3)
            .map(|_| Bump {
                amplitude: rng.gen_range(-1.0..1.0),
                center: rng.gen_range(-2.5..2.5),
                width: rng.gen_range(0.3..1.5),
            })
            .collect();
        let s = BarenblattSpec::new(&p, rng.gen_range(0.5..2.0))?;
        let v = RadialField::from_fn(grid.clone(), s.tail(), |r| {
            s.value(r) * (1.0 + eps * bumps.iter().map(|b| b.eval(r)).sum::<f64>())
        });
        if v.values().iter().all(|x| *x > 0.0) && sandwich_constants(&v, None).is_ok() {
            return Ok(v);
        }
    }
    Err(Failure::numerical(
        "no sandwiched random field found in 1000 draws",
    ))
}

fn functional_row(label: String, r: &FunctionalReport) -> Vec<String> {
    let mut row = vec![
        label,
        num(r.f),
        num(r.i),
        opt(r.g),
        opt(r.j),
        opt(r.mu_star),
        opt(r.ckp_bound),
        num(r.ep_ratio),
    ];
    row.extend(r.rel_err_norms.iter().map(|n| num(n.value)));
    row
}

pub fn functionals(manifest: &Manifest) -> Result<Status, Failure> {
    let cfg = load_config(manifest)?;
    let p = cfg.params()?;
    let ecfg = cfg.evolve_config(p.clone())?;
    let state = init_state(&ecfg)?;
    let qs = ecfg.qs.clone();
    let mut reports = vec![(
        "datum".to_string(),
        report(&state.v, &state.spec, &qs, None)?,
    )];
    let count = cfg.get_usize("random_fields")?.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    for k in 0..count {
        let v = random_field(&mut rng, state.grid())?;
        let spec = if p.compare_m(Threshold::Mc).is_above() {
            c_of_mass(state.grid().integrate_gamma(&v)?, &p)?
        } else {
            state.spec.clone()
        };
        reports.push((format!("random_{k}"), report(&v, &spec, &qs, None)?));
    }

    let eep = (p.gamma >= 0.0).then(|| p.two_alpha().powi(2));
    let mut verdicts = Vec::new();
    for (label, r) in &reports {
        if let (Some(g), Some(b)) = (r.g, r.ckp_bound) {
            verdicts.push((
                format!("{label}: CKP bound {} <= G {}", num(b), num(g)),
                b <= g,
            ));
        }
        if let Some(target) = eep {
            verdicts.push((
                format!("{label}: ep_ratio {:.6} >= {target:.6}", r.ep_ratio),
                r.ep_ratio >= target,
            ));
        }
    }
    let datum = &reports[0].1;
    println!("C      {}", num(state.spec.c));
    println!("F      {}", num(datum.f));
    println!("I      {}", num(datum.i));
    println!("G      {}", opt(datum.g));
    println!("mu_*   {}", opt(datum.mu_star));
    let mut header: Vec<String> = [
        "field",
        "F",
        "I",
        "G",
        "J",
        "mu_star",
        "ckp_bound",
        "ep_ratio",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(qs.iter().map(|q| {
        if q.is_infinite() {
            "lq_inf".into()
        } else {
            format!("lq_{q}")
        }
    }));
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|(l, r)| functional_row(l.clone(), r))
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let path = write_table(manifest, "functionals.csv", Some(&p), &header_refs, &rows)?;
    eprintln!("wrote {}", path.display());
    Ok(print_verdicts(&verdicts))
}

pub fn spectrum(manifest: &Manifest) -> Result<Status, Failure> {
    let cfg = load_config(manifest)?;
    let p = cfg.params()?;
    let grid = grid_for(&cfg, &p)?;
    let sectors: Vec<u32> = match cfg.get_list("sectors")? {
        Some(v) => v
            .iter()
            .map(|&x| {
                if x >= 0.0 && x.fract() == 0.0 {
                    Ok(x as u32)
                } else {
                    Err(Failure::config(format!(
                        "sector {x} is not a nonnegative integer"
                    )))
                }
            })
            .collect::<Result<_, _>>()?,
        None => vec![0, 1],
    };
    let k = cfg.get_usize("eigenvalues")?.unwrap_or(3).max(1);
    let tol = cfg.f64_or("spectrum_tol", 1e-2)?;
    let rep = compare_to_formulas(&p, cfg.f64_or("C", 1.0)?, &grid, &sectors, k)?;
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    println!(
        "Lambda_ess {:.6}   alpha^2 {:.6}",
        rep.lambda_ess, rep.alpha2
    );
    for s in &rep.sectors {
        for (j, (&raw, &norm)) in s.eigenvalues.iter().zip(&s.normalized).enumerate() {
            let pred = if j == 0 { s.prediction } else { None };
            rows.push(vec![
                s.ell.to_string(),
                j.to_string(),
                num(raw),
                num(norm),
                opt(pred),
                opt(s.rel_errors[j]),
                s.reliable[j].to_string(),
            ]);
            println!(
                "l={} k={j} lambda/alpha^2 = {norm:.6}{}",
                s.ell,
                pred.map_or_else(String::new, |v| format!("  (closed form {v:.6})"))
            );
            if let (Some(err), true) = (s.rel_errors[j], s.reliable[j]) {
                verdicts.push((
                    format!("sector {}: relative error {err:.3e} < {tol:e}", s.ell),
                    err < tol,
                ));
            }
        }
    }
    for w in &rep.warnings {
        println!("warning: {w}");
    }
    let path = write_table(
        manifest,
        "spectrum.csv",
        Some(&p),
        &[
            "ell",
            "index",
            "eigenvalue",
            "normalized",
            "closed_form",
            "rel_error",
            "reliable",
        ],
        &rows,
    )?;
    eprintln!("wrote {}", path.display());
    Ok(print_verdicts(&verdicts))
}

/// Conservation and monotonicity verdicts of a trace.
pub fn trace_verdicts(trace: &EvolutionTrace) -> Vec<(String, bool)> {
    let drift = trace
        .rows
        .iter()
        .map(|r| r.mass_err.abs())
        .fold(0.0, f64::max);
    let rises = trace
        .rows
        .windows(2)
        .filter(|w| w[1].f > w[0].f * (1.0 + 1e-12))
        .count();
    vec![
        (
            format!("mass: max relative drift {drift:.3e} < {MASS_TOL:e}"),
            drift < MASS_TOL,
        ),
        (format!("F nonincreasing: {rises} increases"), rises == 0),
    ]
}

pub fn evolve(manifest: &Manifest) -> Result<Status, Failure> {
    let cfg = load_config(manifest)?;
    let p = cfg.params()?;
    let ecfg = cfg.evolve_config(p)?;
    let trace = run(&ecfg)?;
    let mut out = manifest.create("trace.csv")?;
    trace
        .write_csv(&mut out, &manifest.provenance())
        .map_err(|e| Failure::config(format!("writing trace.csv: {e}")))?;
    let last = trace.rows.last().expect("a trace has its initial sample");
    println!(
        "steps {}  samples {}  t {}  C {}",
        trace.steps,
        trace.rows.len(),
        num(last.t),
        num(trace.c)
    );
    println!(
        "F(0) {}  F(t) {}  sup|w-1| {}",
        num(trace.rows[0].f),
        num(last.f),
        num(last.sup_rel_err)
    );
    eprintln!("wrote {}", manifest.path("trace.csv").display());
    Ok(print_verdicts(&trace_verdicts(&trace)))
}

pub fn rates(manifest: &Manifest) -> Result<Status, Failure> {
    let cfg = match &manifest.config {
        Some(_) => Some(load_config(manifest)?),
        None => None,
    };
    let path = match cfg.as_ref().and_then(|c| c.get_str("trace")) {
        Some(t) => t.into(),
        None => manifest.path("trace.csv"),
    };
    let text = fs::read(&path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let params = match &cfg {
        Some(c) if c.contains("d") => Some(c.params()?),
        _ => None,
    };
    let trace = EvolutionTrace::read_csv(&text[..], params.as_ref())?;
    let policy = match (
        cfg.as_ref()
            .map(|c| c.get_f64("fit_t_a"))
            .transpose()?
            .flatten(),
        cfg.as_ref()
            .map(|c| c.get_f64("fit_t_b"))
            .transpose()?
            .flatten(),
    ) {
        (Some(t_a), Some(t_b)) => WindowPolicy::Explicit { t_a, t_b },
        (None, None) => WindowPolicy::Default,
        _ => {
            return Err(Failure::config(
                "set both 'fit_t_a' and 'fit_t_b' or neither",
            ))
        }
    };
    let fit = fit_rate(&trace, policy)?;
    let epi = verify_epi(&trace, EPI_FLOOR)?;

    let mut verdicts: Vec<(String, bool)> = fit
        .verdicts
        .iter()
        .map(|v| {
            (
                format!(
                    "{}: observed {:.6}, threshold {:.6}",
                    v.name, v.observed, v.threshold
                ),
                v.pass,
            )
        })
        .collect();
    verdicts.push((
        format!(
            "EPI: max mismatch {:.3e} < {EPI_TOL} over {} samples",
            epi.max_mismatch, epi.checked
        ),
        epi.max_mismatch < EPI_TOL,
    ));
    verdicts.extend(trace_verdicts(&trace).into_iter().take(1));

    println!("window [{:.4}, {:.4}]", fit.window.0, fit.window.1);
    println!(
        "F-rate {:.6} (R^2 {:.6}, {:.2} decades); predicted {:.6} as stated, {:.6} with alpha^2",
        fit.f.rate, fit.f.r2, fit.f.decades, fit.predicted_f.paper, fit.predicted_f.scaled
    );
    let mut rows = vec![vec![
        "F".into(),
        num(fit.f.rate),
        num(fit.f.r2),
        num(fit.f.decades),
        num(fit.predicted_f.paper),
        num(fit.predicted_f.scaled),
    ]];
    let mut push = |name: String,
                    f: Option<wfd_core::evolve::ExpFit>,
                    pred: Option<wfd_core::evolve::RatePair>| {
        rows.push(vec![
            name,
            opt(f.map(|f| f.rate)),
            opt(f.map(|f| f.r2)),
            opt(f.map(|f| f.decades)),
            opt(pred.map(|p| p.paper)),
            opt(pred.map(|p| p.scaled)),
        ]);
    };
    push("G".into(), fit.g, Some(fit.predicted_g));
    push("sup_rel_err".into(), fit.sup, Some(fit.predicted_sup));
    for ((q, f), (_, pred)) in fit.norms.iter().zip(&fit.predicted_norms) {
        push(
            if q.is_infinite() {
                "lq_inf".into()
            } else {
                format!("lq_{q}")
            },
            *f,
            *pred,
        );
    }
    let mut out = manifest.create("rates.csv")?;
    let io = |e: std::io::Error| Failure::config(format!("writing rates.csv: {e}"));
    use std::io::Write;
    for line in manifest.provenance() {
        writeln!(out, "# {line}").map_err(io)?;
    }
    writeln!(out, "# trace {}", path.display()).map_err(io)?;
    writeln!(out, "# {} C={:e}", params_line(&trace.params), trace.c).map_err(io)?;
    writeln!(out, "# window {:e} {:e}", fit.window.0, fit.window.1).map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Failure::config(format!("writing rates.csv: {e}"));
    w.write_record([
        "quantity",
        "rate",
        "r2",
        "decades",
        "predicted_paper",
        "predicted_scaled",
    ])
    .map_err(csv_err)?;
    for r in &rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(io)?;
    eprintln!("wrote {}", manifest.path("rates.csv").display());
    Ok(print_verdicts(&verdicts))
}
