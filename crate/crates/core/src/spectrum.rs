//! Linearized operator per spherical-harmonic sector, in the equal-weight
//! coordinate s = r^α, and comparison with the closed-form spectrum.
//!
//! The discrete pencil realizes the Rayleigh quotient
//! `∫|∇f|²𝔅|x|^{−β} / ∫f²𝔅^{2−m}|x|^{−γ}` of the original variables. Its
//! eigenvalues equal α² times the closed forms, so reports carry both the
//! raw eigenvalues and the normalized values `λ/α²` that are compared.

use thiserror::Error;

use crate::functionals::face_conductances;
use crate::grid::{GridError, RadialGrid};
use crate::params::{derive, ParamError, Params, Threshold};
use crate::profiles::{BarenblattSpec, ProfileError};
use crate::tridiag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("eigenvalue {lambda} did not converge (residual {residual:e})")]
    ConvergenceFailure { lambda: f64, residual: f64 },
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Generalized symmetric tridiagonal eigenproblem `K f = λ M f` for sector ℓ.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorOperator {
    pub ell: u32,
    /// Diagonal of the stiffness matrix.
    pub stiff_diag: Vec<f64>,
    /// Off-diagonal of the stiffness matrix (`[i]` couples i and i+1).
    pub stiff_off: Vec<f64>,
    /// Diagonal mass matrix, strictly positive.
    pub mass: Vec<f64>,
    /// Mass-weighted constant direction, present when the zero-mean
    /// constraint is active (ℓ = 0, m > m_*).
    pub constraint: Option<Vec<f64>>,
    /// α², the factor between raw eigenvalues and the closed forms.
    pub alpha2: f64,
}

impl SectorOperator {
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// `(fᵀ K f, fᵀ M f)`.
    pub fn forms(&self, f: &[f64]) -> (f64, f64) {
        let n = self.len();
        let mut k = 0.0;
        let mut m = 0.0;
        for i in 0..n {
            k += self.stiff_diag[i] * f[i] * f[i];
            if i + 1 < n {
                k += 2.0 * self.stiff_off[i] * f[i] * f[i + 1];
            }
            m += self.mass[i] * f[i] * f[i];
        }
        (k, m)
    }

    pub fn rayleigh_quotient(&self, f: &[f64]) -> f64 {
        let (k, m) = self.forms(f);
        k / m
    }

    /// `K f`.
    pub fn apply_stiffness(&self, f: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.stiff_diag[i] * f[i];
                if i > 0 {
                    y += self.stiff_off[i - 1] * f[i - 1];
                }
                if i + 1 < n {
                    y += self.stiff_off[i] * f[i + 1];
                }
                y
            })
            .collect()
    }

    /// Symmetric tridiagonal `M^{−1/2} K M^{−1/2}`.
    fn symmetric_form(&self) -> (Vec<f64>, Vec<f64>) {
        let sq: Vec<f64> = self.mass.iter().map(|m| m.sqrt()).collect();
        let d = self
            .stiff_diag
            .iter()
            .zip(&self.mass)
            .map(|(k, m)| k / m)
            .collect();
        let e = self
            .stiff_off
            .iter()
            .enumerate()
            .map(|(i, k)| k / (sq[i] * sq[i + 1]))
            .collect();
        (d, e)
    }
}

/// Assembles sector ℓ of the linearized operator around 𝔅 with constant `c`.
pub fn assemble_sector(
    p: &Params,
    c: f64,
    grid: &RadialGrid,
    ell: u32,
) -> Result<SectorOperator, SpectrumError> {
    if grid.params() != p {
        return Err(GridError::GridMismatch.into());
    }
    let spec = BarenblattSpec::new(p, c)?;
    let n = grid.len();
    let alpha = grid.alpha();
    // In s the radial form α²∫(f')²𝔅 s^{n−1} ds and the mass ∫f²𝔅^{2−m}s^{n−1} ds
    // are the original-variable forms times α/ω.
    let scale = alpha / grid.omega();
    let cond: Vec<f64> = face_conductances(grid, &spec)
        .into_iter()
        .map(|k| k * scale)
        .collect();
    let b: Vec<f64> = grid.r().iter().map(|&r| spec.value(r)).collect();
    let ang = (ell as f64) * (ell as f64 + p.d as f64 - 2.0);
    let mut diag = vec![0.0; n];
    for (i, k) in cond.iter().enumerate() {
        diag[i] += k;
        diag[i + 1] += k;
    }
    if ell > 0 {
        for (i, di) in diag.iter_mut().enumerate() {
            let s = grid.s()[i];
            *di += ang * grid.quad_n()[i] * b[i] / (s * s);
        }
    }
    let off: Vec<f64> = cond.iter().map(|k| -k).collect();
    let mass: Vec<f64> = grid
        .quad_n()
        .iter()
        .zip(&b)
        .map(|(w, bi)| w * bi.powf(2.0 - p.m))
        .collect();
    let constraint = (ell == 0 && p.compare_m(Threshold::MStar).is_above()).then(|| mass.clone());
    Ok(SectorOperator {
        ell,
        stiff_diag: diag,
        stiff_off: off,
        mass,
        constraint,
        alpha2: alpha * alpha,
    })
}

/// The `k` smallest raw generalized eigenvalues. With an active constraint
/// the constant zero mode is deflated: every other eigenvector of the pencil
/// is M-orthogonal to constants, so the constrained values are the next `k`.
pub fn lowest_eigenvalues(op: &SectorOperator, k: usize) -> Result<Vec<f64>, SpectrumError> {
    let skip = usize::from(op.constraint.is_some());
    let (d, e) = op.symmetric_form();
    let all = tridiag::lowest_eigenvalues(&d, &e, k + skip);
    let norm = d.iter().enumerate().fold(0.0_f64, |acc, (i, di)| {
        let left = if i > 0 { e[i - 1].abs() } else { 0.0 };
        let right = if i < e.len() { e[i].abs() } else { 0.0 };
        acc.max(di.abs() + left + right)
    });
    let vals: Vec<f64> = all.into_iter().skip(skip).collect();
    for &lambda in &vals {
        let (_, residual) = tridiag::inverse_iteration(&d, &e, lambda);
        if !lambda.is_finite() || residual > 1e-8 * norm.max(1.0) {
            return Err(SpectrumError::ConvergenceFailure { lambda, residual });
        }
    }
    Ok(vals)
}

/// Ground eigenvector (nodal values of f) of the sector, after deflation.
pub fn ground_state(op: &SectorOperator) -> Result<(f64, Vec<f64>), SpectrumError> {
    let lambda = lowest_eigenvalues(op, 1)?[0];
    let (d, e) = op.symmetric_form();
    let (y, _) = tridiag::inverse_iteration(&d, &e, lambda);
    let f = y
        .iter()
        .zip(&op.mass)
        .map(|(yi, m)| yi / m.sqrt())
        .collect();
    Ok((lambda, f))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SectorResult {
    pub ell: u32,
    /// Raw eigenvalues of the pencil, ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues divided by α².
    pub normalized: Vec<f64>,
    /// Closed-form value for the lowest eigenvalue (Λ_1,0 for ℓ = 0, Λ_0,1 for ℓ = 1).
    pub prediction: Option<f64>,
    /// Relative errors of the normalized values against the prediction.
    pub rel_errors: Vec<Option<f64>>,
    /// Per eigenvalue: below Λ_ess, and the prediction (if any) is below Λ_ess.
    pub reliable: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    pub lambda_ess: f64,
    pub alpha2: f64,
    pub sectors: Vec<SectorResult>,
    pub warnings: Vec<String>,
}

pub fn compare_to_formulas(
    p: &Params,
    c: f64,
    grid: &RadialGrid,
    sectors: &[u32],
    k: usize,
) -> Result<SpectralReport, SpectrumError> {
    if p.compare_m(Threshold::MStar).is_equal() {
        return Err(ParamError::DegenerateGap(p.threshold_value(Threshold::MStar)).into());
    }
    let dv = derive(p);
    let alpha2 = dv.alpha * dv.alpha;
    let mut warnings = Vec::new();
    if dv.lambda_ess < 1e-2 {
        warnings.push(format!(
            "spectral gap collapse: Lambda_ess = {:e}, all discrete values are unreliable",
            dv.lambda_ess
        ));
    }
    let mut out = Vec::new();
    for &ell in sectors {
        let op = assemble_sector(p, c, grid, ell)?;
        let eigenvalues = lowest_eigenvalues(&op, k)?;
        let normalized: Vec<f64> = eigenvalues.iter().map(|l| l / alpha2).collect();
        let prediction = match ell {
            0 => Some(dv.lambda_10),
            1 => Some(dv.lambda_01),
            _ => None,
        };
        let pred_ok = prediction.is_none_or(|v| v > 0.0 && v < dv.lambda_ess);
        let rel_errors = normalized
            .iter()
            .enumerate()
            .map(|(j, l)| {
                if j == 0 {
                    prediction.map(|v| (l - v).abs() / v.abs())
                } else {
                    None
                }
            })
            .collect();
        let reliable = normalized
            .iter()
            .map(|&l| pred_ok && l < dv.lambda_ess)
            .collect();
        if !pred_ok {
            warnings.push(format!(
                "sector {ell}: closed-form value {:.6} lies at or above Lambda_ess = {:.6}",
                prediction.unwrap_or(f64::NAN),
                dv.lambda_ess
            ));
        }
        out.push(SectorResult {
            ell,
            eigenvalues,
            normalized,
            prediction,
            rel_errors,
            reliable,
        });
    }
    Ok(SpectralReport {
        lambda_ess: dv.lambda_ess,
        alpha2,
        sectors: out,
        warnings,
    })
}

#[cfg(test)]
mod suite;
