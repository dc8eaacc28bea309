//! Implicit radial solver for `|x|^{−γ} v_t = −∇·(|x|^{−β} v ∇(v^{m−1} − 𝔅^{m−1}))`,
//! evolution traces, entropy-production checks and exponential rate fits.
//!
//! Finite volumes on the geometric mesh: cell volumes are the γ-quadrature
//! weights, face fluxes are `T · (v_i + v_{i+1})/2 · (g_{i+1} − g_i)` with
//! `g = v^{m−1} − r^{2+β−γ}` and `T` the exact face transmissibility of the
//! β-weight. Fluxes vanish at both ends. Time stepping is backward Euler with
//! a damped Newton iteration on the tridiagonal Jacobian.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::functionals::{best_match_entropy, fisher_information, free_energy, FunctionalError};
use crate::grid::{read_samples_csv, GridError, RadialField, RadialGrid, Tail};
use crate::params::{derive, radial_gap, zeta, ParamError, Params, Threshold};
use crate::profiles::{resample, sandwich_constants, BarenblattSpec, ProfileError, Sandwich};
use crate::tridiag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error("Newton iteration diverged at t = {t} (dt = {dt:e}, {retries} retries)")]
    NewtonDiverged { t: f64, dt: f64, retries: usize },
    #[error("positivity lost at t = {t}, r = {r}")]
    PositivityLost { t: f64, r: f64 },
    #[error("insufficient decay for a rate fit: {decades:.2} decades, R^2 = {r2:.6}")]
    InsufficientDecay { decades: f64, r2: f64 },
    #[error("rates unavailable: {0}")]
    RatesUnavailable(String),
    #[error("trace needs at least {needed} samples, has {have}")]
    TooFewSamples { needed: usize, have: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("trace file: {0}")]
    TraceFormat(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
}

type Result<T> = std::result::Result<T, EvolveError>;

/// Gaussian bump `amplitude · exp(−(ln r − center)²/(2 width²))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bump {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl Bump {
    pub fn eval(&self, r: f64) -> f64 {
        let z = (r.ln() - self.center) / self.width;
        self.amplitude * (-0.5 * z * z).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialDatum {
    /// 𝔅_{C'}.
    Barenblatt { c: f64 },
    /// 𝔅_{C'} · (1 + ε Σ bumps).
    Perturbed {
        c_base: f64,
        eps: f64,
        bumps: Vec<Bump>,
    },
    /// Samples `(r, v)`, resampled by monotone cubic interpolation.
    Samples { r: Vec<f64>, v: Vec<f64> },
    /// Two-column CSV file of samples.
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSettings {
    pub r_min: f64,
    pub r_max: f64,
    pub n: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            r_min: 1e-4,
            r_max: 1e4,
            n: 2000,
        }
    }
}

/// Time-step control. With `dt_min == dt_max` the step is fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtControl {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Target relative change of F per step.
    pub target_change: f64,
    /// Steps changing F by more than this (relative) are rejected.
    pub reject_change: f64,
}

impl DtControl {
    pub fn fixed(dt: f64) -> Self {
        DtControl {
            dt_init: dt,
            dt_min: dt,
            dt_max: dt,
            ..Default::default()
        }
    }
}

impl Default for DtControl {
    fn default() -> Self {
        DtControl {
            dt_init: 1e-4,
            dt_min: 1e-9,
            dt_max: 0.05,
            target_change: 2e-3,
            reject_change: 2e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveConfig {
    pub params: Params,
    /// Explicit reference constant; required when m ≤ m_*.
    pub c: Option<f64>,
    pub grid: GridSettings,
    pub initial: InitialDatum,
    pub dt: DtControl,
    pub t_end: f64,
    /// Relative Newton update tolerance.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// A trace row every `cadence` accepted steps.
    pub cadence: usize,
    /// Exponents q of the tracked ‖w − 1‖_{q,γ} norms (∞ allowed).
    pub qs: Vec<f64>,
    /// Stop once F ≤ ratio · F(0).
    pub f_stop_ratio: Option<f64>,
    pub max_steps: usize,
}

impl EvolveConfig {
    pub fn new(params: Params, initial: InitialDatum) -> Self {
        EvolveConfig {
            params,
            c: None,
            grid: GridSettings::default(),
            initial,
            dt: DtControl::default(),
            t_end: 1.0,
            newton_tol: 1e-12,
            newton_max_iter: 40,
            cadence: 1,
            qs: Vec::new(),
            f_stop_ratio: None,
            max_steps: 2_000_000,
        }
    }

    fn check(&self) -> Result<()> {
        let d = &self.dt;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(EvolveError::BadConfig(format!(
                "t_end = {} must be positive",
                self.t_end
            )));
        }
        if !(d.dt_init > 0.0 && d.dt_min > 0.0 && d.dt_min <= d.dt_max && d.target_change > 0.0) {
            return Err(EvolveError::BadConfig(
                "time steps must satisfy 0 < dt_min <= dt_max".into(),
            ));
        }
        if self.cadence == 0 || self.newton_max_iter == 0 || !(self.newton_tol > 0.0) {
            return Err(EvolveError::BadConfig(
                "cadence, newton_max_iter and newton_tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Discrete operator data shared by all steps.
#[derive(Clone, Debug)]
struct Stepper {
    m: f64,
    vol: Vec<f64>,
    trans: Vec<f64>,
    p0: Vec<f64>,
}

impl Stepper {
    fn new(grid: &RadialGrid) -> Self {
        let p = grid.params();
        let k = p.d as f64 - 2.0 - p.beta;
        let x = grid.x();
        let trans = x
            .windows(2)
            .map(|w| {
                let h = w[1] - w[0];
                let integral = if k.abs() < 1e-14 {
                    h
                } else {
                    (-k * w[0]).exp() * -(-k * h).exp_m1() / k
                };
                grid.omega() / integral
            })
            .collect();
        let ta = p.two_alpha();
        Stepper {
            m: p.m,
            vol: grid.quad_gamma().to_vec(),
            trans,
            p0: grid.r().iter().map(|r| r.powf(ta)).collect(),
        }
    }

    /// One backward-Euler step from `vn`; `v` holds the initial guess and
    /// receives the solution. Returns the number of Newton iterations.
    fn solve(
        &self,
        vn: &[f64],
        v: &mut [f64],
        dt: f64,
        tol: f64,
        max_iter: usize,
    ) -> Option<usize> {
        let n = v.len();
        let m = self.m;
        let mut g = vec![0.0; n];
        let mut gp = vec![0.0; n];
        let mut res = vec![0.0; n];
        let mut lo = vec![0.0; n];
        let mut di = vec![0.0; n];
        let mut up = vec![0.0; n];
        for iter in 0..max_iter {
            for i in 0..n {
                let q = v[i].powf(m - 1.0);
                g[i] = q - self.p0[i];
                gp[i] = (m - 1.0) * q / v[i];
                res[i] = -(self.vol[i] / dt) * (v[i] - vn[i]);
                di[i] = self.vol[i] / dt;
                lo[i] = 0.0;
                up[i] = 0.0;
            }
            for f in 0..n - 1 {
                let t = self.trans[f];
                let vt = 0.5 * (v[f] + v[f + 1]);
                let dg = g[f + 1] - g[f];
                let flux = t * vt * dg;
                res[f] -= flux;
                res[f + 1] += flux;
                let dl = t * (0.5 * dg - vt * gp[f]);
                let dr = t * (0.5 * dg + vt * gp[f + 1]);
                di[f] += dl;
                up[f] += dr;
                lo[f + 1] -= dl;
                di[f + 1] -= dr;
            }
            let delta = tridiag::solve(&lo, &di, &up, &res)?;
            let mut lambda = 1.0_f64;
            for (vi, di) in v.iter().zip(&delta) {
                if !di.is_finite() {
                    return None;
                }
                if *di < -0.5 * vi {
                    lambda = lambda.min(-0.5 * vi / di);
                }
            }
            let mut rel = 0.0_f64;
            for (vi, di) in v.iter_mut().zip(&delta) {
                let step = lambda * di;
                rel = rel.max((step / *vi).abs());
                *vi += step;
            }
            if rel < tol {
                return Some(iter + 1);
            }
        }
        None
    }
}

/// Solver state at time `t`.
#[derive(Clone, Debug)]
pub struct State {
    pub t: f64,
    pub v: RadialField,
    /// Reference profile 𝔅 = 𝔅_C.
    pub spec: BarenblattSpec,
    pub sandwich: Sandwich,
    /// Mass `∫ v₀ |x|^{−γ} dx` (with tail correction when finite).
    pub mass: f64,
    /// Discrete relative mass at t = 0.
    pub rel_mass0: f64,
    pub steps: usize,
    pub warnings: Vec<String>,
    v0_sum: f64,
    stepper: Stepper,
}

impl State {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.v.grid()
    }

    /// `(Σ V_i v_i − Σ V_i v_i(0)) / M`.
    pub fn mass_error(&self) -> f64 {
        (self.v.grid().sum_gamma(self.v.values()) - self.v0_sum) / self.mass
    }

    /// Nodal ratios w = v/𝔅.
    pub fn ratio(&self) -> Vec<f64> {
        self.v
            .grid()
            .r()
            .iter()
            .zip(self.v.values())
            .map(|(&r, &v)| v / self.spec.value(r))
            .collect()
    }

    /// Discrete relative mass `Σ V_i (v_i − 𝔅(r_i))`.
    pub fn relative_mass(&self) -> f64 {
        crate::profiles::relative_mass(&self.v, &self.spec)
    }
}

fn initial_field(cfg: &EvolveConfig, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    let p = &cfg.params;
    match &cfg.initial {
        InitialDatum::Barenblatt { c } => {
            let s = BarenblattSpec::new(p, *c)?;
            Ok(RadialField::from_fn(grid.clone(), s.tail(), |r| s.value(r)))
        }
        InitialDatum::Perturbed { c_base, eps, bumps } => {
            let s = BarenblattSpec::new(p, *c_base)?;
            let v = RadialField::from_fn(grid.clone(), s.tail(), |r| {
                s.value(r) * (1.0 + eps * bumps.iter().map(|b| b.eval(r)).sum::<f64>())
            });
            Ok(v)
        }
        InitialDatum::Samples { r, v } => samples_field(p, r, v, grid),
        InitialDatum::File(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| EvolveError::BadConfig(format!("{}: {e}", path.display())))?;
            let (r, v): (Vec<f64>, Vec<f64>) = read_samples_csv(file)?.into_iter().unzip();
            samples_field(p, &r, &v, grid)
        }
    }
}

fn samples_field(p: &Params, r: &[f64], v: &[f64], grid: &Arc<RadialGrid>) -> Result<RadialField> {
    if r.len() < 2 || r.len() != v.len() {
        return Err(EvolveError::BadConfig(
            "initial samples need at least two (r, v) pairs".into(),
        ));
    }
    let (rl, vl) = (r[r.len() - 1], v[v.len() - 1]);
    let c_tail = vl.powf(p.m - 1.0) - rl.powf(p.two_alpha());
    let tail = if c_tail > 0.0 {
        Tail::BarenblattPower {
            scale: 1.0,
            c: c_tail,
        }
    } else {
        Tail::None
    };
    Ok(resample(r, v, grid, tail))
}

/// Builds the initial state: field, sandwich constants and reference 𝔅.
pub fn init_state(cfg: &EvolveConfig) -> Result<State> {
    cfg.check()?;
    let p = &cfg.params;
    let gs = cfg.grid;
    let grid = Arc::new(RadialGrid::new(p, gs.r_min, gs.r_max, gs.n)?);
    let v = initial_field(cfg, &grid)?;
    let c_explicit = match cfg.c {
        Some(c) => Some(c),
        None if p.compare_m(Threshold::MStar).is_above() => None,
        None => {
            return Err(EvolveError::BadConfig(format!(
                "m = {} <= m_* = {}: the reference constant C must be given explicitly",
                p.m,
                p.threshold_value(Threshold::MStar)
            )))
        }
    };
    let sandwich = sandwich_constants(&v, c_explicit)?;
    let spec = BarenblattSpec::new(p, sandwich.c)?;
    let mut warnings = Vec::new();
    let b2 = BarenblattSpec::new(p, sandwich.c2)?;
    if b2.value(gs.r_max) >= 1e-12 * b2.value(1.0) {
        warnings.push(format!(
            "r_max = {} is short: B_C2(r_max)/B_C2(1) >= 1e-12",
            gs.r_max
        ));
    }
    let v0_sum = grid.sum_gamma(v.values());
    let mass = match grid.moment_gamma(&v, 0.0)? {
        Some(mv) if mv > 0.0 => mv,
        _ => v0_sum,
    };
    let stepper = Stepper::new(&grid);
    let rel_mass0 = crate::profiles::relative_mass(&v, &spec);
    Ok(State {
        t: 0.0,
        v,
        spec,
        sandwich,
        mass,
        rel_mass0,
        steps: 0,
        warnings,
        v0_sum,
        stepper,
    })
}

/// Advances `state` by one backward-Euler step of size `dt`. On failure the
/// state is left unchanged.
pub fn step(state: &mut State, dt: f64, newton_tol: f64, newton_max_iter: usize) -> Result<usize> {
    let vn = state.v.values().to_vec();
    let mut v = vn.clone();
    let iters = state
        .stepper
        .solve(&vn, &mut v, dt, newton_tol, newton_max_iter)
        .ok_or(EvolveError::NewtonDiverged {
            t: state.t,
            dt,
            retries: 0,
        })?;
    if let Some(i) = v.iter().position(|x| !(*x > 0.0)) {
        return Err(EvolveError::PositivityLost {
            t: state.t,
            r: state.grid().r()[i],
        });
    }
    state.v.values_mut().copy_from_slice(&v);
    state.t += dt;
    state.steps += 1;
    Ok(iters)
}

/// One sample of the evolution trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub f: f64,
    pub i: f64,
    pub g: Option<f64>,
    pub mu_star: Option<f64>,
    pub mass_err: f64,
    /// h(t) = sup |w − 1| over nodes.
    pub sup_rel_err: f64,
    /// ‖w − 1‖_{q,γ} for the configured q.
    pub norms: Vec<f64>,
    pub ep_ratio: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionTrace {
    pub params: Params,
    pub c: f64,
    pub qs: Vec<f64>,
    pub rows: Vec<TraceRow>,
    pub steps: usize,
}

/// Diagnostics of a state.
pub fn sample(state: &State, qs: &[f64], dt: f64) -> Result<TraceRow> {
    let m = state.spec.params.m;
    let f = free_energy(&state.v, &state.spec)?;
    let i = fisher_information(&state.v, &state.spec)?;
    let (g, mu_star) = match best_match_entropy(&state.v, &state.spec) {
        Ok((g, mu)) => (Some(g), Some(mu)),
        Err(FunctionalError::MomentDiverges) | Err(FunctionalError::MassMismatch { .. }) => {
            (None, None)
        }
        Err(e) => return Err(e.into()),
    };
    let w1: Vec<f64> = state.ratio().into_iter().map(|w| w - 1.0).collect();
    let grid = state.grid();
    Ok(TraceRow {
        t: state.t,
        f,
        i,
        g,
        mu_star,
        mass_err: state.mass_error(),
        sup_rel_err: grid.norm_q_values(&w1, f64::INFINITY),
        norms: qs.iter().map(|&q| grid.norm_q_values(&w1, q)).collect(),
        ep_ratio: m / (1.0 - m) * i / f,
        dt,
    })
}

/// Integrates to `cfg.t_end`, calling `observe` on every recorded state.
pub fn run_observed(cfg: &EvolveConfig, mut observe: impl FnMut(&State)) -> Result<EvolutionTrace> {
    let mut state = init_state(cfg)?;
    let ctl = cfg.dt;
    let mut dt = ctl.dt_init.clamp(ctl.dt_min, ctl.dt_max);
    let first = sample(&state, &cfg.qs, 0.0)?;
    let f0 = first.f;
    let m = cfg.params.m;
    let b_m: Vec<f64> = state
        .grid()
        .r()
        .iter()
        .map(|&r| state.spec.value(r).powf(m))
        .collect();
    let noise = (1e-13 * f0).max(1e-14 * state.grid().sum_gamma(&b_m) / (1.0 - m));
    let mut f_prev = f0;
    let mut rows = vec![first];
    observe(&state);
    let mut accepted = 0usize;
    let eps_t = 1e-12 * cfg.t_end;
    while state.t < cfg.t_end - eps_t && accepted < cfg.max_steps {
        let dt_try = dt.min(cfg.t_end - state.t);
        let saved = state.v.values().to_vec();
        let (t_saved, steps_saved) = (state.t, state.steps);
        let mut retries = 0;
        let mut h = dt_try;
        loop {
            match step(&mut state, h, cfg.newton_tol, cfg.newton_max_iter) {
                Ok(_) => break,
                Err(EvolveError::NewtonDiverged { .. })
                | Err(EvolveError::PositivityLost { .. })
                    if h * 0.5 >= ctl.dt_min * (1.0 - 1e-12) =>
                {
                    h *= 0.5;
                    retries += 1;
                }
                Err(EvolveError::NewtonDiverged { t, dt, .. }) => {
                    return Err(EvolveError::NewtonDiverged { t, dt, retries })
                }
                Err(e) => return Err(e),
            }
        }
        let f_new = free_energy(&state.v, &state.spec)?;
        let change = if f_prev > noise {
            (f_prev - f_new).abs() / f_prev
        } else {
            0.0
        };
        if change > ctl.reject_change && h * 0.5 >= ctl.dt_min {
            state.v.values_mut().copy_from_slice(&saved);
            state.t = t_saved;
            state.steps = steps_saved;
            dt = h * 0.5;
            continue;
        }
        accepted += 1;
        f_prev = f_new;
        let at_end = state.t >= cfg.t_end - eps_t;
        let stop = cfg.f_stop_ratio.is_some_and(|q| f_new <= q * f0);
        if accepted.is_multiple_of(cfg.cadence) || at_end || stop {
            rows.push(sample(&state, &cfg.qs, h)?);
            observe(&state);
        }
        if stop {
            break;
        }
        let factor = if change > 0.0 {
            (ctl.target_change / change).clamp(0.5, 2.0)
        } else {
            2.0
        };
        dt = (h * factor).clamp(ctl.dt_min, ctl.dt_max);
    }
    Ok(EvolutionTrace {
        params: cfg.params.clone(),
        c: state.spec.c,
        qs: cfg.qs.clone(),
        rows,
        steps: state.steps,
    })
}

pub fn run(cfg: &EvolveConfig) -> Result<EvolutionTrace> {
    run_observed(cfg, |_| {})
}

fn q_label(q: f64) -> String {
    if q.is_infinite() {
        "lq_inf".into()
    } else {
        format!("lq_{q}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:e}"))
}

impl EvolutionTrace {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["t", "F", "I", "G", "mu_star", "mass_err", "sup_rel_err"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(self.qs.iter().map(|&q| q_label(q)));
        h.push("ep_ratio".into());
        h.push("dt".into());
        h
    }

    /// Writes `#`-prefixed provenance lines, the parameter line, a header and
    /// one row per sample.
    pub fn write_csv<W: Write>(&self, mut out: W, provenance: &[String]) -> std::io::Result<()> {
        for line in provenance {
            writeln!(out, "# {line}")?;
        }
        let p = &self.params;
        writeln!(
            out,
            "# params d={} m={} beta={} gamma={} C={:e}",
            p.d, p.m, p.beta, p.gamma, self.c
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                format!("{:e}", r.t),
                format!("{:e}", r.f),
                format!("{:e}", r.i),
                fmt_opt(r.g),
                fmt_opt(r.mu_star),
                format!("{:e}", r.mass_err),
                format!("{:e}", r.sup_rel_err),
            ];
            rec.extend(r.norms.iter().map(|v| format!("{v:e}")));
            rec.push(format!("{:e}", r.ep_ratio));
            rec.push(format!("{:e}", r.dt));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a trace written by [`EvolutionTrace::write_csv`]. Parameters are
    /// taken from the `# params` line unless `params` is given.
    pub fn read_csv<R: Read>(input: R, params: Option<&Params>) -> Result<Self> {
        let mut text = String::new();
        let mut input = input;
        input
            .read_to_string(&mut text)
            .map_err(|e| EvolveError::TraceFormat(e.to_string()))?;
        let mut kv = BTreeMap::new();
        for line in text.lines().filter_map(|l| l.strip_prefix("# params")) {
            for tok in line.split_whitespace() {
                if let Some((k, v)) = tok.split_once('=') {
                    kv.insert(k.to_string(), v.to_string());
                }
            }
        }
        let num = |k: &str| -> Result<f64> {
            kv.get(k)
                .ok_or_else(|| EvolveError::TraceFormat(format!("missing '{k}' in # params line")))?
                .parse::<f64>()
                .map_err(|e| EvolveError::TraceFormat(format!("{k}: {e}")))
        };
        let params = match params {
            Some(p) => p.clone(),
            None => Params::new(
                num("d")? as i64,
                num("m")?,
                num("beta")?,
                num("gamma")?,
                true,
            )?,
        };
        let c = num("C").unwrap_or(f64::NAN);
        let body: String = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n");
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| EvolveError::TraceFormat(e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        let col = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| EvolveError::TraceFormat(format!("missing column '{name}'")))
        };
        let (ct, cf, ci, cg, cmu, cme, csup, cep, cdt) = (
            col("t")?,
            col("F")?,
            col("I")?,
            col("G")?,
            col("mu_star")?,
            col("mass_err")?,
            col("sup_rel_err")?,
            col("ep_ratio")?,
            col("dt")?,
        );
        let qcols: Vec<(f64, usize)> = header
            .iter()
            .enumerate()
            .filter_map(|(j, h)| {
                let q = h.strip_prefix("lq_")?;
                let q = if q == "inf" {
                    f64::INFINITY
                } else {
                    q.parse().ok()?
                };
                Some((q, j))
            })
            .collect();
        let mut rows = Vec::new();
        for (ln, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| EvolveError::TraceFormat(e.to_string()))?;
            let get = |j: usize| -> Result<f64> {
                rec.get(j).unwrap_or("").trim().parse::<f64>().map_err(|e| {
                    EvolveError::TraceFormat(format!("row {}: column {}: {e}", ln + 1, header[j]))
                })
            };
            let opt = |j: usize| -> Option<f64> { rec.get(j).and_then(|s| s.trim().parse().ok()) };
            rows.push(TraceRow {
                t: get(ct)?,
                f: get(cf)?,
                i: get(ci)?,
                g: opt(cg),
                mu_star: opt(cmu),
                mass_err: get(cme)?,
                sup_rel_err: get(csup)?,
                norms: qcols.iter().map(|&(_, j)| get(j)).collect::<Result<_>>()?,
                ep_ratio: get(cep)?,
                dt: get(cdt)?,
            });
        }
        Ok(EvolutionTrace {
            params,
            c,
            qs: qcols.iter().map(|x| x.0).collect(),
            rows,
            steps: 0,
        })
    }
}

/// Comparison of the discrete dF/dt with −(m/(1−m)) I.
#[derive(Clone, Debug, PartialEq)]
pub struct EpiReport {
    /// Largest relative mismatch over checked samples.
    pub max_mismatch: f64,
    pub worst_t: f64,
    pub checked: usize,
    /// Interior samples skipped because F is below the floor.
    pub below_noise: usize,
    /// `(t, relative mismatch)` per checked sample.
    pub mismatches: Vec<(f64, f64)>,
}

/// Checks the entropy-production identity at interior samples with F > `f_min`,
/// using the three-point derivative on the nonuniform sample times.
pub fn verify_epi(trace: &EvolutionTrace, f_min: f64) -> Result<EpiReport> {
    let rows = &trace.rows;
    if rows.len() < 3 {
        return Err(EvolveError::TooFewSamples {
            needed: 3,
            have: rows.len(),
        });
    }
    let m = trace.params.m;
    let mut rep = EpiReport {
        max_mismatch: 0.0,
        worst_t: f64::NAN,
        checked: 0,
        below_noise: 0,
        mismatches: Vec::new(),
    };
    for k in 1..rows.len() - 1 {
        let (a, b, c) = (&rows[k - 1], &rows[k], &rows[k + 1]);
        if !(b.f > f_min) || !(a.f > f_min) || !(c.f > f_min) {
            rep.below_noise += 1;
            continue;
        }
        let (h1, h2) = (b.t - a.t, c.t - b.t);
        let dfdt = (h1 * h1 * (c.f - b.f) + h2 * h2 * (b.f - a.f)) / (h1 * h2 * (h1 + h2));
        let rhs = m / (1.0 - m) * b.i;
        let mis = (dfdt + rhs).abs() / rhs;
        rep.checked += 1;
        rep.mismatches.push((b.t, mis));
        if !(mis <= rep.max_mismatch) {
            rep.max_mismatch = mis;
            rep.worst_t = b.t;
        }
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WindowPolicy {
    /// Last half of the samples with noise floor ≤ F ≤ 1e−2·F(0).
    Default,
    Explicit {
        t_a: f64,
        t_b: f64,
    },
}

/// Least-squares fit `ln Q ≈ a − rate·t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpFit {
    pub rate: f64,
    pub r2: f64,
    pub samples: usize,
    /// ln(Q(t_a)/Q(t_b)) / ln 10 over the window.
    pub decades: f64,
}

fn exp_fit(pts: &[(f64, f64)]) -> Option<ExpFit> {
    let pts: Vec<(f64, f64)> = pts
        .iter()
        .filter(|(_, q)| *q > 0.0 && q.is_finite())
        .map(|&(t, q)| (t, q.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in &pts {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
        syy += (y - my) * (y - my);
    }
    if stt <= 0.0 {
        return None;
    }
    let slope = sty / stt;
    let r2 = if syy > 0.0 {
        sty * sty / (stt * syy)
    } else {
        1.0
    };
    let decades = (pts[0].1 - pts[pts.len() - 1].1) / std::f64::consts::LN_10;
    Some(ExpFit {
        rate: -slope,
        r2,
        samples: pts.len(),
        decades,
    })
}

/// Predicted rates, as stated (`paper`) and with the α² normalization of the
/// closed-form spectrum applied (`scaled`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatePair {
    pub paper: f64,
    pub scaled: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub observed: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub window: (f64, f64),
    pub f: ExpFit,
    pub g: Option<ExpFit>,
    pub sup: Option<ExpFit>,
    pub norms: Vec<(f64, Option<ExpFit>)>,
    /// 2(1−m) min{Λ_ess, Λ_1,0}.
    pub predicted_f: RatePair,
    /// 2(1−m) min{Λ_ess, Λ_0,1}.
    pub predicted_g: RatePair,
    /// 2(1−m)²/(2−m) Λ_rad ζ(∞) for sup|w − 1|.
    pub predicted_sup: RatePair,
    /// Same with ζ(q) for each tracked q (None outside the theorem's range).
    pub predicted_norms: Vec<(f64, Option<RatePair>)>,
    pub verdicts: Vec<Verdict>,
}

impl RateFit {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Relative tolerance of the two-sided F-rate verdict.
pub const F_RATE_TOL: f64 = 0.10;
/// Slack of the one-sided relative-error verdicts.
pub const REL_RATE_SLACK: f64 = 0.05;
/// Minimum fit quality and decay for an F-rate.
pub const MIN_R2: f64 = 0.999;
pub const MIN_DECADES: f64 = 3.0;

pub fn fit_rate(trace: &EvolutionTrace, policy: WindowPolicy) -> Result<RateFit> {
    let p = &trace.params;
    if !p.compare_m(Threshold::Mc).is_above() {
        return Err(EvolveError::RatesUnavailable(format!(
            "m = {} <= m_c: no rates are predicted",
            p.m
        )));
    }
    if p.compare_m(Threshold::MStar).is_equal() {
        return Err(ParamError::DegenerateGap(p.threshold_value(Threshold::MStar)).into());
    }
    let rows = &trace.rows;
    if rows.len() < 3 {
        return Err(EvolveError::TooFewSamples {
            needed: 3,
            have: rows.len(),
        });
    }
    let sel: Vec<&TraceRow> = match policy {
        WindowPolicy::Default => {
            let f0 = rows[0].f;
            let floor = (1e-12 * f0).max(1e-30);
            let cand: Vec<&TraceRow> = rows
                .iter()
                .filter(|r| r.f <= 1e-2 * f0 && r.f >= floor)
                .collect();
            cand[cand.len() / 2..].to_vec()
        }
        WindowPolicy::Explicit { t_a, t_b } => {
            rows.iter().filter(|r| r.t >= t_a && r.t <= t_b).collect()
        }
    };
    let series = |q: &dyn Fn(&TraceRow) -> Option<f64>| -> Vec<(f64, f64)> {
        sel.iter().filter_map(|r| q(r).map(|v| (r.t, v))).collect()
    };
    let f = exp_fit(&series(&|r| Some(r.f))).ok_or(EvolveError::InsufficientDecay {
        decades: 0.0,
        r2: 0.0,
    })?;
    if f.decades < MIN_DECADES || f.r2 < MIN_R2 {
        return Err(EvolveError::InsufficientDecay {
            decades: f.decades,
            r2: f.r2,
        });
    }
    let window = (sel[0].t, sel[sel.len() - 1].t);
    let g = exp_fit(&series(&|r| r.g));
    let sup = exp_fit(&series(&|r| Some(r.sup_rel_err)));
    let norms: Vec<(f64, Option<ExpFit>)> = trace
        .qs
        .iter()
        .enumerate()
        .map(|(j, &q)| (q, exp_fit(&series(&|r| r.norms.get(j).copied()))))
        .collect();

    let dv = derive(p);
    let a2 = dv.alpha * dv.alpha;
    let m = p.m;
    let pair = |paper: f64| RatePair {
        paper,
        scaled: a2 * paper,
    };
    let lam_rad = radial_gap(p);
    let predicted_f = pair(2.0 * (1.0 - m) * lam_rad);
    let predicted_g = pair(2.0 * (1.0 - m) * dv.lambda_ess.min(dv.lambda_01));
    let rel = |q: f64| {
        zeta(p, q)
            .ok()
            .map(|z| pair(2.0 * (1.0 - m).powi(2) / (2.0 - m) * lam_rad * z))
    };
    let predicted_sup = rel(f64::INFINITY).expect("zeta is defined at q = infinity");
    let predicted_norms: Vec<(f64, Option<RatePair>)> =
        trace.qs.iter().map(|&q| (q, rel(q))).collect();

    let mut verdicts = vec![Verdict {
        name: "F-rate".into(),
        observed: f.rate,
        threshold: predicted_f.scaled,
        pass: (f.rate - predicted_f.scaled).abs() <= F_RATE_TOL * predicted_f.scaled,
    }];
    if let Some(gf) = g {
        verdicts.push(Verdict {
            name: "G-rate>=F-rate".into(),
            observed: gf.rate,
            threshold: f.rate,
            pass: gf.rate >= f.rate,
        });
    }
    if let Some(sf) = sup {
        let thr = (1.0 - REL_RATE_SLACK) * predicted_sup.scaled;
        verdicts.push(Verdict {
            name: "sup-rate".into(),
            observed: sf.rate,
            threshold: thr,
            pass: sf.rate >= thr,
        });
    }
    for ((q, fit), (_, pred)) in norms.iter().zip(&predicted_norms) {
        if let (Some(fit), Some(pred)) = (fit, pred) {
            let thr = (1.0 - REL_RATE_SLACK) * pred.scaled;
            verdicts.push(Verdict {
                name: format!("{}-rate", q_label(*q)),
                observed: fit.rate,
                threshold: thr,
                pass: fit.rate >= thr,
            });
        }
    }
    Ok(RateFit {
        window,
        f,
        g,
        sup,
        norms,
        predicted_f,
        predicted_g,
        predicted_sup,
        predicted_norms,
        verdicts,
    })
}
