//! Entropy-type functionals: free energy, Fisher information, best matching,
//! linearized forms, relative-error norms and the radial CKN constant.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{GridError, RadialField, RadialGrid};
use crate::params::{derive, vartheta_ckn, Params, Threshold};
use crate::profiles::{barenblatt_eval, c_of_mass, rescale_mu, BarenblattSpec, ProfileError};

/// Relative mass mismatch tolerated by the two-term best-matching entropy.
pub const MASS_MATCH_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error("field is negative ({v}) at r = {r}")]
    NegativeField { r: f64, v: f64 },
    #[error("field is not positive ({v}) at r = {r}")]
    NonpositiveField { r: f64, v: f64 },
    #[error("the (2+beta-gamma)-moment diverges (m <= m~_1)")]
    MomentDiverges,
    #[error("mass of the field differs from the Barenblatt mass by {rel:e} (relative)")]
    MassMismatch { rel: f64 },
    #[error("CKN exponent p = {p} exceeds p_* = {p_star}")]
    SupercriticalExponent { p: f64, p_star: f64 },
    #[error("CKN exponent p = {p} does not correspond to m = {m} (need p = 1/(2m-1), m > 1/2)")]
    InconsistentPair { p: f64, m: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

type Result<T> = std::result::Result<T, FunctionalError>;

/// (1+x)^m − 1 − m x, accurate for small |x|.
fn bregman_kernel(m: f64, x: f64) -> f64 {
    if x.abs() < 0.1 {
        let mut coef = m * (m - 1.0) / 2.0;
        let mut pow = x * x;
        let mut sum = 0.0;
        for k in 2..80 {
            let term = coef * pow;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            coef *= (m - k as f64) / (k as f64 + 1.0);
            pow *= x;
        }
        sum
    } else {
        (m * x.ln_1p()).exp_m1() - m * x
    }
}

fn check_nonnegative(v: &RadialField) -> Result<()> {
    for (&r, &x) in v.grid().r().iter().zip(v.values()) {
        if !(x >= 0.0) {
            return Err(FunctionalError::NegativeField { r, v: x });
        }
    }
    Ok(())
}

fn check_positive(v: &RadialField) -> Result<()> {
    for (&r, &x) in v.grid().r().iter().zip(v.values()) {
        if !(x > 0.0) {
            return Err(FunctionalError::NonpositiveField { r, v: x });
        }
    }
    Ok(())
}

/// Bregman form `(1/(m−1)) ∫ [v^m − b^m − m b^{m−1}(v − b)] |x|^{−γ} dx`
/// against an arbitrary positive reference `b`.
fn bregman(grid: &RadialGrid, v: &[f64], b: impl Fn(usize) -> f64) -> f64 {
    let m = grid.params().m;
    let mut s = 0.0;
    for (i, (&w, &vi)) in grid.quad_gamma().iter().zip(v).enumerate() {
        let bi = b(i);
        s += w * bi.powf(m) * bregman_kernel(m, vi / bi - 1.0);
    }
    s / (m - 1.0)
}

/// Free energy ℱ[v] relative to 𝔅.
pub fn free_energy(v: &RadialField, spec: &BarenblattSpec) -> Result<f64> {
    check_nonnegative(v)?;
    let g = v.grid();
    let r = g.r();
    Ok(bregman(g, v.values(), |i| spec.value(r[i])))
}

/// `∫ v |∇(v^{m−1} − P)|² |x|^{−β} dx` with `P` given pointwise.
fn fisher_against(v: &RadialField, pressure: impl Fn(f64) -> f64) -> Result<f64> {
    check_positive(v)?;
    let g = v.grid();
    let m = g.params().m;
    let diff: Vec<f64> = g
        .r()
        .iter()
        .zip(v.values())
        .map(|(&r, &x)| x.powf(m - 1.0) - pressure(r))
        .collect();
    let grad = g.gradient_values(&diff);
    Ok(g.quad_beta()
        .iter()
        .zip(v.values())
        .zip(&grad)
        .map(|((w, x), d)| w * x * d * d)
        .sum())
}

/// Relative Fisher information 𝓘[v]. The gradient is taken of the
/// difference `v^{m−1} − 𝔅^{m−1}`, so any 𝔅_{C'} gives exactly zero.
pub fn fisher_information(v: &RadialField, spec: &BarenblattSpec) -> Result<f64> {
    fisher_against(v, |r| spec.pressure(r))
}

fn masses(v: &RadialField, spec: &BarenblattSpec) -> Result<(f64, f64)> {
    let g = v.grid();
    let b = barenblatt_eval(spec, g);
    let mv = g
        .moment_gamma(v, 0.0)?
        .ok_or(FunctionalError::MomentDiverges)?;
    let mb = g
        .moment_gamma(&b, 0.0)?
        .ok_or(FunctionalError::MomentDiverges)?;
    Ok((mv, mb))
}

/// Scale μ_⋆ matching the (2+β−γ)-moment of `v` with that of 𝔅_μ.
pub fn best_match_mu(v: &RadialField, spec: &BarenblattSpec) -> Result<f64> {
    let p = &spec.params;
    if !p.compare_m(Threshold::MTilde1).is_above() {
        return Err(FunctionalError::MomentDiverges);
    }
    let g = v.grid();
    let k = p.two_alpha();
    let mv = g
        .moment_gamma(v, k)?
        .ok_or(FunctionalError::MomentDiverges)?;
    let mb = g
        .moment_gamma(&barenblatt_eval(spec, g), k)?
        .ok_or(FunctionalError::MomentDiverges)?;
    Ok((mb / mv).powf(1.0 / k))
}

/// Best-matching entropy 𝒢[v] and the matched scale μ_⋆.
///
/// Evaluated as the full Bregman divergence against 𝔅_{μ_⋆}, which equals
/// the two-term form once mass and moment match and stays nonnegative.
pub fn best_match_entropy(v: &RadialField, spec: &BarenblattSpec) -> Result<(f64, f64)> {
    check_nonnegative(v)?;
    let mu = best_match_mu(v, spec)?;
    let (mv, mb) = masses(v, spec)?;
    let rel = (mv - mb).abs() / mb;
    if rel > MASS_MATCH_TOL {
        return Err(FunctionalError::MassMismatch { rel });
    }
    let g = v.grid();
    let r = g.r();
    Ok((bregman(g, v.values(), |i| spec.value_mu(r[i], mu)), mu))
}

/// Relative Fisher information 𝒥[v] with respect to 𝔅_μ.
pub fn best_match_fisher(v: &RadialField, spec: &BarenblattSpec, mu: f64) -> Result<f64> {
    fisher_against(v, |r| spec.pressure_mu(r, mu))
}

/// Right-hand side of the Csiszár–Kullback–Pinsker type bound
/// `m / (8 ‖𝔅_μ^m‖_{1,γ}^m) · (C(M) ‖v − 𝔅_μ‖_{1,γ} + ∫ |x|^{2+β−γ} |v − 𝔅_μ| |x|^{−γ} dx)²`.
pub fn ckp_lower_bound(v: &RadialField, mu: f64, spec: &BarenblattSpec) -> Result<f64> {
    let p = &spec.params;
    if !p.compare_m(Threshold::MTilde1).is_above() {
        return Err(FunctionalError::MomentDiverges);
    }
    let g = v.grid();
    let m = p.m;
    let bmu = rescale_mu(spec, mu, g);
    let mass = g
        .moment_gamma(v, 0.0)?
        .ok_or(FunctionalError::MomentDiverges)?;
    let c_m = c_of_mass(mass, p)?.c;
    let absdiff: Vec<f64> = v
        .values()
        .iter()
        .zip(bmu.values())
        .map(|(a, b)| (a - b).abs())
        .collect();
    let l1 = g.sum_gamma(&absdiff);
    let w_mom = g.weights_for_power(p.d as f64 - p.gamma + p.two_alpha());
    let mom: f64 = w_mom.iter().zip(&absdiff).map(|(w, a)| w * a).sum();
    let bm: Vec<f64> = bmu.values().iter().map(|b| b.powf(m)).collect();
    let norm_bm = g.sum_gamma(&bm);
    Ok(m / (8.0 * norm_bm.powf(m)) * (c_m * l1 + mom).powi(2))
}

/// Face conductances `ω / ∫_{r_i}^{r_{i+1}} dr / (𝔅 r^{d−1−β})`, the discrete
/// weights of `∫ |f'|² 𝔅 |x|^{−β} dx`. Computed by 8-point Gauss–Legendre in log r.
pub fn face_conductances(grid: &RadialGrid, spec: &BarenblattSpec) -> Vec<f64> {
    const GL_X: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_2,
    ];
    const GL_W: [f64; 4] = [
        0.362_683_783_378_362,
        0.31370664587788729,
        0.22238103445337447,
        0.10122853629037626,
    ];
    let p = &spec.params;
    let k = p.d as f64 - 2.0 - p.beta;
    let delta = 1.0 / (1.0 - p.m);
    let x = grid.x();
    let integrand = |t: f64| (delta * spec.pressure(t.exp()).ln() - k * t).exp();
    x.windows(2)
        .map(|w| {
            let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            let mut s = 0.0;
            for (gx, gw) in GL_X.iter().zip(GL_W) {
                s += gw * (integrand(mid - half * gx) + integrand(mid + half * gx));
            }
            grid.omega() / (half * s)
        })
        .collect()
}

/// ℱ_lin[f] = ½ ∫ f² 𝔅^{2−m} |x|^{−γ} dx.
pub fn linearized_free_energy(f: &RadialField, spec: &BarenblattSpec) -> f64 {
    let g = f.grid();
    let m = spec.params.m;
    let r = g.r();
    0.5 * g
        .quad_gamma()
        .iter()
        .zip(f.values())
        .enumerate()
        .map(|(i, (w, fi))| w * fi * fi * spec.value(r[i]).powf(2.0 - m))
        .sum::<f64>()
}

/// 𝓘_lin[f] = (1−m) ∫ |∇f|² 𝔅 |x|^{−β} dx.
pub fn linearized_fisher(f: &RadialField, spec: &BarenblattSpec) -> f64 {
    let c = face_conductances(f.grid(), spec);
    linearized_fisher_with(&c, f.values(), spec.params.m)
}

pub fn linearized_fisher_with(conductances: &[f64], f: &[f64], m: f64) -> f64 {
    (1.0 - m)
        * conductances
            .iter()
            .zip(f.windows(2))
            .map(|(c, w)| c * (w[1] - w[0]).powi(2))
            .sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelErrNorm {
    pub q: f64,
    pub value: f64,
    /// q ≥ (2−m)/(1−m), the range covered by the relative-error decay theorem.
    pub in_range: bool,
}

/// ‖v/𝔅 − 1‖_{q,γ} for each q (q = ∞ is the nodal sup).
pub fn relative_error_norms(v: &RadialField, spec: &BarenblattSpec, qs: &[f64]) -> Vec<RelErrNorm> {
    let g = v.grid();
    let m = spec.params.m;
    let qmin = (2.0 - m) / (1.0 - m);
    let w: Vec<f64> = g
        .r()
        .iter()
        .zip(v.values())
        .map(|(&r, &x)| x / spec.value(r) - 1.0)
        .collect();
    qs.iter()
        .map(|&q| RelErrNorm {
            q,
            value: g.norm_q_values(&w, q),
            in_range: q >= qmin * (1.0 - 1e-12),
        })
        .collect()
}

/// Radial CKN constant from w_⋆ = 𝔅^{m−1/2} with p = 1/(2m−1).
pub fn ckn_star_constant(p: &Params, pexp: f64) -> Result<f64> {
    let grid = Arc::new(RadialGrid::new(p, 1e-6, 1e6, 6000)?);
    ckn_star_constant_on(&grid, pexp, 1.0)
}

/// As [`ckn_star_constant`], on a given grid and with profile constant `c`.
pub fn ckn_star_constant_on(grid: &Arc<RadialGrid>, pexp: f64, c: f64) -> Result<f64> {
    let p = grid.params();
    let m = p.m;
    if !(m > 0.5 && pexp > 1.0) || (pexp - 1.0 / (2.0 * m - 1.0)).abs() > 1e-12 * pexp {
        return Err(FunctionalError::InconsistentPair { p: pexp, m });
    }
    let p_star = derive(p).p_star;
    if pexp > p_star * (1.0 + 1e-14) {
        return Err(FunctionalError::SupercriticalExponent { p: pexp, p_star });
    }
    let spec = BarenblattSpec::new(p, c)?;
    let ta = p.two_alpha();
    let delta = 1.0 / (1.0 - m);
    let r = grid.r();
    let b: Vec<f64> = r.iter().map(|&x| spec.value(x)).collect();
    let w: Vec<f64> = b.iter().map(|x| x.powf(m - 0.5)).collect();
    // w' = (m − ½) 𝔅^{m−3/2} 𝔅', 𝔅' = −δ (2+β−γ) r^{1+β−γ} 𝔅^{2−m}
    let dw: Vec<f64> = r
        .iter()
        .zip(&b)
        .map(|(&x, &bi)| -(m - 0.5) * delta * ta * x.powf(ta - 1.0) * bi.powf(m - 1.5 + 2.0 - m))
        .collect();
    let grad_norm = grid
        .sum_beta(&dw.iter().map(|x| x * x).collect::<Vec<_>>())
        .sqrt();
    let n_p1 = grid.norm_q_values(&w, pexp + 1.0);
    let n_2p = grid.norm_q_values(&w, 2.0 * pexp);
    let th = vartheta_ckn(p, pexp);
    Ok(grad_norm.powf(-th) * n_p1.powf(th - 1.0) * n_2p)
}

/// All functionals of a field against a reference profile.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalReport {
    pub f: f64,
    pub i: f64,
    /// `None` when the moment diverges or masses differ.
    pub g: Option<f64>,
    pub j: Option<f64>,
    pub mu_star: Option<f64>,
    pub f_lin: Option<f64>,
    pub i_lin: Option<f64>,
    pub rel_err_norms: Vec<RelErrNorm>,
    pub ckp_bound: Option<f64>,
    pub ep_ratio: f64,
}

pub fn report(
    v: &RadialField,
    spec: &BarenblattSpec,
    qs: &[f64],
    perturbation: Option<&RadialField>,
) -> Result<FunctionalReport> {
    let m = spec.params.m;
    let f = free_energy(v, spec)?;
    let i = fisher_information(v, spec)?;
    let (g, mu_star, j, ckp_bound) = match best_match_entropy(v, spec) {
        Ok((g, mu)) => (
            Some(g),
            Some(mu),
            Some(best_match_fisher(v, spec, mu)?),
            ckp_lower_bound(v, mu, spec).ok(),
        ),
        Err(FunctionalError::MomentDiverges) | Err(FunctionalError::MassMismatch { .. }) => {
            (None, None, None, None)
        }
        Err(e) => return Err(e),
    };
    let (f_lin, i_lin) = match perturbation {
        Some(h) => (
            Some(linearized_free_energy(h, spec)),
            Some(linearized_fisher(h, spec)),
        ),
        None => (None, None),
    };
    Ok(FunctionalReport {
        f,
        i,
        g,
        j,
        mu_star,
        f_lin,
        i_lin,
        rel_err_norms: relative_error_norms(v, spec, qs),
        ckp_bound,
        ep_ratio: m / (1.0 - m) * i / f,
    })
}

#[cfg(test)]
mod suite;
