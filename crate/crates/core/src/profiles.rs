//! Barenblatt profiles, masses, scalings and the self-similar change of variables.

use std::sync::Arc;

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::grid::{sphere_area, GridError, RadialField, RadialGrid, Tail};
use crate::params::{derive, Params, Threshold};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("profile constant C must be positive (got {0})")]
    NonpositiveC(f64),
    #[error("mass is infinite for m <= m_c ({m} <= {m_c})")]
    InfiniteMass { m: f64, m_c: f64 },
    #[error("mass must be positive (got {0})")]
    NonpositiveMass(f64),
    #[error("tau = {tau} is at or beyond the extinction time T = {t_ext}")]
    BeyondExtinction { tau: f64, t_ext: f64 },
    #[error("time offset T must be positive for m != m_c (got {0})")]
    BadOffset(f64),
    #[error("datum is not sandwiched between two Barenblatt profiles: {0}")]
    NotSandwichable(String),
    #[error("relative-mass condition does not determine C for m <= m_*; supply C explicitly")]
    RelativeMassUnsolvable,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// 𝔅(x) = (C + |x|^{2+β−γ})^{−1/(1−m)}.
#[derive(Clone, Debug, PartialEq)]
pub struct BarenblattSpec {
    pub c: f64,
    pub params: Params,
}

impl BarenblattSpec {
    pub fn new(params: &Params, c: f64) -> Result<Self, ProfileError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(ProfileError::NonpositiveC(c));
        }
        Ok(BarenblattSpec {
            c,
            params: params.clone(),
        })
    }

    fn delta(&self) -> f64 {
        1.0 / (1.0 - self.params.m)
    }

    /// 𝔅^{m−1} = C + r^{2+β−γ}.
    pub fn pressure(&self, r: f64) -> f64 {
        self.c + r.powf(self.params.two_alpha())
    }

    pub fn value(&self, r: f64) -> f64 {
        (-self.delta() * self.pressure(r).ln()).exp()
    }

    /// Value of the mass-preserving rescaling 𝔅_μ(r) = μ^{d−γ} 𝔅(μr).
    pub fn value_mu(&self, r: f64, mu: f64) -> f64 {
        let p = &self.params;
        mu.powf(p.d as f64 - p.gamma) * self.value(mu * r)
    }

    /// 𝔅_μ^{m−1} = μ^{(d−γ)(m−1)} (C + μ^{2α} r^{2α}).
    pub fn pressure_mu(&self, r: f64, mu: f64) -> f64 {
        let p = &self.params;
        mu.powf((p.d as f64 - p.gamma) * (p.m - 1.0)) * self.pressure(mu * r)
    }

    pub fn tail(&self) -> Tail {
        Tail::BarenblattPower {
            scale: 1.0,
            c: self.c,
        }
    }

    pub fn tail_mu(&self, mu: f64) -> Tail {
        let p = &self.params;
        let k = (p.d as f64 - p.gamma) * (1.0 - p.m);
        Tail::BarenblattPower {
            scale: mu.powf(p.two_alpha() - k),
            c: self.c * mu.powf(-k),
        }
    }
}

pub fn barenblatt_eval(spec: &BarenblattSpec, grid: &Arc<RadialGrid>) -> RadialField {
    RadialField::from_fn(grid.clone(), spec.tail(), |r| spec.value(r))
}

/// Field of 𝔅_μ(x) = μ^{d−γ} 𝔅(μx).
pub fn rescale_mu(spec: &BarenblattSpec, mu: f64, grid: &Arc<RadialGrid>) -> RadialField {
    RadialField::from_fn(grid.clone(), spec.tail_mu(mu), |r| spec.value_mu(r, mu))
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// M₁ = ω_{d−1}/(2+β−γ) · B(n/2, δ − n/2), the mass of 𝔅 with C = 1.
pub fn unit_mass(p: &Params) -> Result<f64, ProfileError> {
    if !p.compare_m(Threshold::Mc).is_above() {
        return Err(ProfileError::InfiniteMass {
            m: p.m,
            m_c: p.threshold_value(Threshold::Mc),
        });
    }
    let dv = derive(p);
    Ok(sphere_area(p.d) / p.two_alpha() * ln_beta(dv.n / 2.0, dv.delta - dv.n / 2.0).exp())
}

/// M(C) = C^{n/2−δ} M₁.
pub fn barenblatt_mass(spec: &BarenblattSpec) -> Result<f64, ProfileError> {
    let m1 = unit_mass(&spec.params)?;
    let dv = derive(&spec.params);
    Ok(spec.c.powf(dv.n / 2.0 - dv.delta) * m1)
}

/// C(M) = (M/M₁)^{1/(n/2−δ)}.
pub fn c_of_mass(mass: f64, p: &Params) -> Result<BarenblattSpec, ProfileError> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(ProfileError::NonpositiveMass(mass));
    }
    let m1 = unit_mass(p)?;
    let dv = derive(p);
    BarenblattSpec::new(p, (mass / m1).powf(1.0 / (dv.n / 2.0 - dv.delta)))
}

/// Closed-form `∫ |x|^{2+β−γ} 𝔅 |x|^{−γ} dx`; `None` when m ≤ m̃_1.
pub fn barenblatt_moment(spec: &BarenblattSpec) -> Option<f64> {
    let p = &spec.params;
    if !p.compare_m(Threshold::MTilde1).is_above() {
        return None;
    }
    let dv = derive(p);
    let a = dv.n / 2.0 + 1.0;
    let b = dv.delta - a;
    Some(sphere_area(p.d) / p.two_alpha() * spec.c.powf(a - dv.delta) * ln_beta(a, b).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameBranch {
    Supercritical,
    Critical,
    Subcritical,
}

/// Time offset and scaling law R(τ) of the self-similar variables.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfSimilarFrame {
    pub t_offset: f64,
    pub branch: FrameBranch,
    /// k = (d−γ)(m−m_c), with dR/dτ = R^{1−k}.
    k: f64,
}

impl SelfSimilarFrame {
    pub fn new(p: &Params, t_offset: f64) -> Result<Self, ProfileError> {
        let cmp = p.compare_m(Threshold::Mc);
        let branch = if cmp.is_equal() {
            FrameBranch::Critical
        } else if cmp.is_above() {
            FrameBranch::Supercritical
        } else {
            FrameBranch::Subcritical
        };
        if branch != FrameBranch::Critical && !(t_offset > 0.0) {
            return Err(ProfileError::BadOffset(t_offset));
        }
        let k = (p.d as f64 - p.gamma) * (p.m - p.threshold_value(Threshold::Mc));
        Ok(SelfSimilarFrame {
            t_offset,
            branch,
            k,
        })
    }

    pub fn r0(&self) -> f64 {
        self.r_of_tau(0.0).expect("τ = 0 is always admissible")
    }

    pub fn r_of_tau(&self, tau: f64) -> Result<f64, ProfileError> {
        let t = self.t_offset;
        match self.branch {
            FrameBranch::Supercritical => Ok((self.k * (t + tau)).powf(1.0 / self.k)),
            FrameBranch::Critical => Ok((t + tau).exp()),
            FrameBranch::Subcritical => {
                if tau >= t {
                    return Err(ProfileError::BeyondExtinction { tau, t_ext: t });
                }
                let k = -self.k;
                Ok((k * (t - tau)).powf(-1.0 / k))
            }
        }
    }

    pub fn tau_of_r(&self, r: f64) -> f64 {
        let t = self.t_offset;
        match self.branch {
            FrameBranch::Supercritical => r.powf(self.k) / self.k - t,
            FrameBranch::Critical => r.ln() - t,
            FrameBranch::Subcritical => t + r.powf(self.k) / self.k,
        }
    }
}

/// Interpolant used for resampling: monotone cubic Hermite in log r,
/// on log values when the data are positive.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    log_values: bool,
}

impl MonotoneCubic {
    /// `r` strictly increasing and positive; `v` the sampled values.
    pub fn new(r: &[f64], v: &[f64]) -> Self {
        assert!(r.len() >= 2 && r.len() == v.len());
        let x: Vec<f64> = r.iter().map(|t| t.ln()).collect();
        let log_values = v.iter().all(|&t| t > 0.0);
        let y: Vec<f64> = if log_values {
            v.iter().map(|t| t.ln()).collect()
        } else {
            v.to_vec()
        };
        let d = slopes(&x, &y);
        MonotoneCubic {
            x,
            y,
            d,
            log_values,
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let xq = r.ln();
        let n = self.x.len();
        let y = if xq <= self.x[0] {
            self.y[0]
        } else if xq >= self.x[n - 1] {
            let slope = if self.log_values {
                self.d[n - 1].min(0.0)
            } else {
                0.0
            };
            self.y[n - 1] + slope * (xq - self.x[n - 1])
        } else {
            let k = match self.x.binary_search_by(|p| p.partial_cmp(&xq).unwrap()) {
                Ok(i) => return self.finish(self.y[i]),
                Err(i) => i - 1,
            };
            let h = self.x[k + 1] - self.x[k];
            let t = (xq - self.x[k]) / h;
            let (t2, t3) = (t * t, t * t * t);
            (2.0 * t3 - 3.0 * t2 + 1.0) * self.y[k]
                + (t3 - 2.0 * t2 + t) * h * self.d[k]
                + (-2.0 * t3 + 3.0 * t2) * self.y[k + 1]
                + (t3 - t2) * h * self.d[k + 1]
        };
        self.finish(y)
    }

    fn finish(&self, y: f64) -> f64 {
        if self.log_values {
            y.exp()
        } else {
            y.max(0.0)
        }
    }
}

fn slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let delta: Vec<f64> = (0..n - 1)
        .map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k]))
        .collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let uniform = |i: usize| -> bool {
        if i < 2 || i + 2 >= n {
            return false;
        }
        let h = x[i + 1] - x[i];
        (i - 2..i + 2).all(|j| ((x[j + 1] - x[j]) - h).abs() <= 1e-9 * h.abs())
    };
    let mut d = vec![0.0; n];
    for i in 0..n {
        d[i] = if uniform(i) {
            let h = x[i + 1] - x[i];
            (y[i - 2] - 8.0 * y[i - 1] + 8.0 * y[i + 1] - y[i + 2]) / (12.0 * h)
        } else if i == 0 {
            delta[0]
        } else if i == n - 1 {
            delta[n - 2]
        } else {
            let (h1, h2) = (x[i] - x[i - 1], x[i + 1] - x[i]);
            (h1 * delta[i] + h2 * delta[i - 1]) / (h1 + h2)
        };
    }
    // Fritsch–Carlson limiter
    for k in 0..n - 1 {
        if delta[k] == 0.0 {
            d[k] = 0.0;
            d[k + 1] = 0.0;
            continue;
        }
        if d[k] * delta[k] < 0.0 {
            d[k] = 0.0;
        }
        if d[k + 1] * delta[k] < 0.0 {
            d[k + 1] = 0.0;
        }
        let a = d[k] / delta[k];
        let b = d[k + 1] / delta[k];
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            d[k] = tau * a * delta[k];
            d[k + 1] = tau * b * delta[k];
        }
    }
    d
}

/// Resamples `(r, v)` data onto a grid.
pub fn resample(r: &[f64], v: &[f64], grid: &Arc<RadialGrid>, tail: Tail) -> RadialField {
    let interp = MonotoneCubic::new(r, v);
    RadialField::from_fn(grid.clone(), tail, |x| interp.eval(x))
}

fn scale_tail(tail: Tail, p: &Params, big_r: f64) -> Tail {
    match tail {
        Tail::None => Tail::None,
        Tail::BarenblattPower { scale, c } => {
            let k = (p.d as f64 - p.gamma) * (1.0 - p.m);
            Tail::BarenblattPower {
                scale: scale * big_r.powf(p.two_alpha() - k),
                c: c * big_r.powf(-k),
            }
        }
    }
}

/// v(t, x) = R^{d−γ} u(τ, R x) with t = log(R(τ)/R(0)), sampled on `target`.
pub fn to_self_similar(
    u: &RadialField,
    tau: f64,
    frame: &SelfSimilarFrame,
    target: &Arc<RadialGrid>,
) -> Result<(RadialField, f64), ProfileError> {
    let p = target.params().clone();
    let big_r = frame.r_of_tau(tau)?;
    let interp = MonotoneCubic::new(u.grid().r(), u.values());
    let amp = big_r.powf(p.d as f64 - p.gamma);
    let v = RadialField::from_fn(target.clone(), scale_tail(u.tail(), &p, big_r), |x| {
        amp * interp.eval(big_r * x)
    });
    Ok((v, (big_r / frame.r0()).ln()))
}

/// u(τ, y) = R^{γ−d} v(t, y/R) with R = R(0) e^t, sampled on `target`.
pub fn from_self_similar(
    v: &RadialField,
    t: f64,
    frame: &SelfSimilarFrame,
    target: &Arc<RadialGrid>,
) -> Result<(RadialField, f64), ProfileError> {
    let p = target.params().clone();
    let big_r = frame.r0() * t.exp();
    let tau = frame.tau_of_r(big_r);
    if frame.branch == FrameBranch::Subcritical && tau >= frame.t_offset {
        return Err(ProfileError::BeyondExtinction {
            tau,
            t_ext: frame.t_offset,
        });
    }
    let interp = MonotoneCubic::new(v.grid().r(), v.values());
    let amp = big_r.powf(p.gamma - p.d as f64);
    let u = RadialField::from_fn(target.clone(), scale_tail(v.tail(), &p, 1.0 / big_r), |y| {
        amp * interp.eval(y / big_r)
    });
    Ok((u, tau))
}

/// Barenblatt profile U_{C,T}(τ, ·) in original variables, sampled on `grid`.
pub fn barenblatt_solution(
    spec: &BarenblattSpec,
    frame: &SelfSimilarFrame,
    tau: f64,
    grid: &Arc<RadialGrid>,
) -> Result<RadialField, ProfileError> {
    let big_r = frame.r_of_tau(tau)?;
    let p = &spec.params;
    let amp = big_r.powf(p.gamma - p.d as f64);
    Ok(RadialField::from_fn(
        grid.clone(),
        scale_tail(spec.tail(), p, 1.0 / big_r),
        |y| amp * spec.value(y / big_r),
    ))
}

/// Tightest Barenblatt bounds 𝔅_{C1} ≤ v0 ≤ 𝔅_{C2} and the ratios W1, W2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sandwich {
    pub c1: f64,
    pub c2: f64,
    /// Reference constant (relative-mass condition or explicit).
    pub c: f64,
    pub w1: f64,
    pub w2: f64,
}

/// Sup and inf of `v0^{m−1} − r^{2+β−γ}` over nodes and the tail limit.
pub fn sandwich_bounds(v0: &RadialField) -> Result<(f64, f64), ProfileError> {
    let grid = v0.grid();
    let p = grid.params();
    let ta = p.two_alpha();
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for (&r, &v) in grid.r().iter().zip(v0.values()) {
        if !(v > 0.0) {
            return Err(ProfileError::NotSandwichable(format!(
                "nonpositive value {v} at r = {r}"
            )));
        }
        let q = v.powf(p.m - 1.0) - r.powf(ta);
        hi = hi.max(q);
        lo = lo.min(q);
    }
    if let Tail::BarenblattPower { scale, c } = v0.tail() {
        if (scale - 1.0).abs() > 1e-12 {
            return Err(ProfileError::NotSandwichable(format!(
                "tail decays like a Barenblatt with scale {scale} != 1"
            )));
        }
        hi = hi.max(c);
        lo = lo.min(c);
    }
    if !(lo > 0.0) {
        return Err(ProfileError::NotSandwichable(format!("C2 = {lo} <= 0")));
    }
    Ok((hi, lo))
}

/// Discrete relative mass `Σ V_i (v_i − 𝔅_C(r_i))`.
pub fn relative_mass(v: &RadialField, spec: &BarenblattSpec) -> f64 {
    let g = v.grid();
    g.quad_gamma()
        .iter()
        .zip(v.values())
        .zip(g.r())
        .map(|((w, vi), &r)| w * (vi - spec.value(r)))
        .sum()
}

/// The unique C ∈ [c_lo, c_hi] with zero discrete relative mass.
pub fn solve_relative_mass(v: &RadialField, c_lo: f64, c_hi: f64) -> Result<f64, ProfileError> {
    let p = v.grid().params().clone();
    if !p.compare_m(Threshold::MStar).is_above() {
        return Err(ProfileError::RelativeMassUnsolvable);
    }
    let f = |c: f64| {
        relative_mass(
            v,
            &BarenblattSpec {
                c,
                params: p.clone(),
            },
        )
    };
    let (mut lo, mut hi) = (c_lo, c_hi);
    if hi <= lo {
        return Ok(lo);
    }
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo >= 0.0 {
        return Ok(lo);
    }
    if fhi <= 0.0 {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Sandwich constants with C from the relative-mass condition (m > m_*) or
/// from `c_explicit`.
pub fn sandwich_constants(
    v0: &RadialField,
    c_explicit: Option<f64>,
) -> Result<Sandwich, ProfileError> {
    let (c1, c2) = sandwich_bounds(v0)?;
    let p = v0.grid().params();
    let c = match c_explicit {
        Some(c) => c,
        None => solve_relative_mass(v0, c2, c1)?,
    };
    if !(c > 0.0) {
        return Err(ProfileError::NonpositiveC(c));
    }
    let delta = 1.0 / (1.0 - p.m);
    Ok(Sandwich {
        c1,
        c2,
        c,
        w1: (c / c1).powf(delta),
        w2: (c / c2).powf(delta),
    })
}

#[cfg(test)]
mod suite;
