//! Parameter validation and the closed-form constants of the weighted problem.
//!
//! A problem instance is the quadruple `(d, m, β, γ)`. Everything else in the
//! crate (critical exponents, spectral values, predicted decay rates) is a
//! closed-form function of it and lives here.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Half-width of the band used for threshold comparisons on inexact inputs.
pub const THRESHOLD_BAND: f64 = 1e-12;

/// A real input that remembers its exact decimal value when it has one.
#[derive(Clone, Debug, PartialEq)]
pub struct Scalar {
    value: f64,
    exact: Option<BigRational>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("cannot parse `{0}` as a decimal number")]
pub struct ParseScalarError(pub String);

impl Scalar {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> Option<&BigRational> {
        self.exact.as_ref()
    }

    fn from_rational(q: BigRational) -> Self {
        Scalar {
            value: rat_to_f64(&q),
            exact: Some(q),
        }
    }
}

impl From<f64> for Scalar {
    fn from(value: f64) -> Self {
        Scalar { value, exact: None }
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::from_rational(BigRational::from_integer(BigInt::from(v)))
    }
}

impl FromStr for Scalar {
    type Err = ParseScalarError;

    /// Parses `[-+]digits[.digits][e[-+]digits]` exactly; anything else that
    /// `f64` accepts is kept as an inexact value.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if let Some(q) = parse_decimal(t) {
            return Ok(Scalar::from_rational(q));
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Scalar::from(v)),
            _ => Err(ParseScalarError(s.to_string())),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

fn parse_decimal(s: &str) -> Option<BigRational> {
    let (neg, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (mantissa, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part
        .bytes()
        .chain(frac_part.bytes())
        .all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let num: BigInt = digits.parse().ok()?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut q = BigRational::from_integer(num);
    if scale >= 0 {
        q *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        q /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -q } else { q })
}

fn rat_to_f64(q: &BigRational) -> f64 {
    let n = q.numer().to_f64().unwrap_or(f64::NAN);
    let d = q.denom().to_f64().unwrap_or(f64::NAN);
    if n.is_finite() && d.is_finite() {
        n / d
    } else {
        f64::NAN
    }
}

/// Unvalidated parameter quadruple.
#[derive(Clone, Debug, PartialEq)]
pub struct RawParams {
    pub d: i64,
    pub m: Scalar,
    pub beta: Scalar,
    pub gamma: Scalar,
}

impl RawParams {
    pub fn new(
        d: i64,
        m: impl Into<Scalar>,
        beta: impl Into<Scalar>,
        gamma: impl Into<Scalar>,
    ) -> Self {
        RawParams {
            d,
            m: m.into(),
            beta: beta.into(),
            gamma: gamma.into(),
        }
    }

    /// Parses all three real entries as exact decimals.
    pub fn parse(d: i64, m: &str, beta: &str, gamma: &str) -> Result<Self, ParseScalarError> {
        Ok(RawParams {
            d,
            m: m.parse()?,
            beta: beta.parse()?,
            gamma: gamma.parse()?,
        })
    }
}

/// Which of the admissibility inequalities failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightConstraint {
    /// γ < d
    GammaBelowDimension,
    /// γ − 2 < β
    BetaAboveGammaMinusTwo,
    /// β < (d−2)γ/d, or β ≤ (d−2)γ/d with the boundary flag
    BetaBelowCritical,
}

impl fmt::Display for WeightConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WeightConstraint::GammaBelowDimension => "gamma < d",
            WeightConstraint::BetaAboveGammaMinusTwo => "gamma - 2 < beta",
            WeightConstraint::BetaBelowCritical => "beta < (d-2)*gamma/d",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("dimension d = {0} is too small (need d >= 2)")]
    DimensionTooSmall(i64),
    #[error("diffusion exponent m = {0} is outside (0, 1)")]
    ExponentOutOfRange(f64),
    #[error("weight constraint violated: {constraint} (lhs = {lhs}, rhs = {rhs})")]
    WeightConstraintViolated {
        constraint: WeightConstraint,
        lhs: f64,
        rhs: f64,
    },
    #[error("no spectral gap at m = m_* = {0}")]
    DegenerateGap(f64),
    #[error("Felli-Schneider discriminant is negative ({0})")]
    ComplexRoot(f64),
    #[error("norm exponent q = {q} is below (2-m)/(1-m) = {min}")]
    ExponentBelowRange { q: f64, min: f64 },
}

#[derive(Clone, Debug, PartialEq)]
struct Exact {
    m: BigRational,
    beta: BigRational,
    gamma: BigRational,
}

/// A validated parameter quadruple.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub d: u32,
    pub m: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Set when β = (d−2)γ/d was admitted through `allow_boundary`.
    pub boundary: bool,
    exact: Option<Exact>,
}

/// Outcome of comparing `m` (or another value) with a threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThresholdCmp {
    pub ordering: Ordering,
    /// Inexact comparison that fell inside the tolerance band.
    pub near: bool,
}

impl ThresholdCmp {
    pub fn is_above(&self) -> bool {
        self.ordering == Ordering::Greater
    }
    pub fn is_below(&self) -> bool {
        self.ordering == Ordering::Less
    }
    pub fn is_equal(&self) -> bool {
        self.ordering == Ordering::Equal
    }
}

fn compare(a: f64, b: f64, exact: Option<(BigRational, BigRational)>) -> ThresholdCmp {
    if let Some((qa, qb)) = exact {
        return ThresholdCmp {
            ordering: qa.cmp(&qb),
            near: false,
        };
    }
    if (a - b).abs() <= THRESHOLD_BAND {
        ThresholdCmp {
            ordering: Ordering::Equal,
            near: true,
        }
    } else {
        ThresholdCmp {
            ordering: a.partial_cmp(&b).unwrap_or(Ordering::Equal),
            near: false,
        }
    }
}

fn rat(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Validates the quadruple against d ≥ 2, 0 < m < 1, γ < d, γ−2 < β and
/// β < (d−2)γ/d (β = (d−2)γ/d only with `allow_boundary`).
pub fn validate(raw: &RawParams, allow_boundary: bool) -> Result<Params, ParamError> {
    if raw.d < 2 {
        return Err(ParamError::DimensionTooSmall(raw.d));
    }
    let d = raw.d;
    let (m, beta, gamma) = (raw.m.value(), raw.beta.value(), raw.gamma.value());
    if !(m.is_finite() && beta.is_finite() && gamma.is_finite()) {
        return Err(ParamError::ExponentOutOfRange(m));
    }
    let exact = match (raw.m.exact(), raw.beta.exact(), raw.gamma.exact()) {
        (Some(m), Some(b), Some(g)) => Some(Exact {
            m: m.clone(),
            beta: b.clone(),
            gamma: g.clone(),
        }),
        _ => None,
    };
    let df = d as f64;

    let in_unit = match &exact {
        Some(e) => e.m.is_positive() && e.m < BigRational::one(),
        None => m > 0.0 && m < 1.0,
    };
    if !in_unit {
        return Err(ParamError::ExponentOutOfRange(m));
    }

    let cmp_gamma_d = compare(gamma, df, exact.as_ref().map(|e| (e.gamma.clone(), rat(d))));
    if !cmp_gamma_d.is_below() {
        return Err(ParamError::WeightConstraintViolated {
            constraint: WeightConstraint::GammaBelowDimension,
            lhs: gamma,
            rhs: df,
        });
    }
    let cmp_low = compare(
        gamma - 2.0,
        beta,
        exact.as_ref().map(|e| (&e.gamma - rat(2), e.beta.clone())),
    );
    if !cmp_low.is_below() {
        return Err(ParamError::WeightConstraintViolated {
            constraint: WeightConstraint::BetaAboveGammaMinusTwo,
            lhs: gamma - 2.0,
            rhs: beta,
        });
    }
    let crit = (df - 2.0) * gamma / df;
    let cmp_high = compare(
        beta,
        crit,
        exact
            .as_ref()
            .map(|e| (e.beta.clone(), rat(d - 2) * &e.gamma / rat(d))),
    );
    let boundary = cmp_high.is_equal();
    let ok = cmp_high.is_below() || (boundary && allow_boundary);
    if !ok {
        return Err(ParamError::WeightConstraintViolated {
            constraint: WeightConstraint::BetaBelowCritical,
            lhs: beta,
            rhs: crit,
        });
    }
    Ok(Params {
        d: d as u32,
        m,
        beta,
        gamma,
        boundary,
        exact,
    })
}

/// Thresholds on `m` that drive regime classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Threshold {
    Mc,
    MStar,
    M1,
    MTilde1,
}

impl Params {
    /// Convenience constructor for inexact inputs.
    pub fn new(
        d: i64,
        m: f64,
        beta: f64,
        gamma: f64,
        allow_boundary: bool,
    ) -> Result<Self, ParamError> {
        validate(&RawParams::new(d, m, beta, gamma), allow_boundary)
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    fn threshold_exact(&self, t: Threshold) -> Option<BigRational> {
        let e = self.exact.as_ref()?;
        let d = rat(self.d as i64);
        let (b, g) = (&e.beta, &e.gamma);
        Some(match t {
            Threshold::Mc => (&d - rat(2) - b) / (&d - g),
            Threshold::MStar => (&d - rat(4) - rat(2) * b + g) / (&d - rat(2) - b),
            Threshold::M1 => (rat(2) * &d - rat(2) - b - g) / (rat(2) * (&d - g)),
            Threshold::MTilde1 => (&d - g) / (&d + rat(2) + b - rat(2) * g),
        })
    }

    pub fn threshold_value(&self, t: Threshold) -> f64 {
        let (d, b, g) = (self.d as f64, self.beta, self.gamma);
        match t {
            Threshold::Mc => (d - 2.0 - b) / (d - g),
            Threshold::MStar => (d - 4.0 - 2.0 * b + g) / (d - 2.0 - b),
            Threshold::M1 => (2.0 * d - 2.0 - b - g) / (2.0 * (d - g)),
            Threshold::MTilde1 => (d - g) / (d + 2.0 + b - 2.0 * g),
        }
    }

    /// Compares `m` with a threshold, exactly when the inputs were exact.
    pub fn compare_m(&self, t: Threshold) -> ThresholdCmp {
        let exact = self.threshold_exact(t).map(|q| {
            (
                self.exact
                    .as_ref()
                    .map(|e| e.m.clone())
                    .unwrap_or_else(BigRational::zero),
                q,
            )
        });
        compare(self.m, self.threshold_value(t), exact)
    }

    /// 2 + β − γ, the exponent of |x| inside the Barenblatt profile.
    pub fn two_alpha(&self) -> f64 {
        2.0 + self.beta - self.gamma
    }
}

/// All closed-form constants of an instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Derived {
    pub m_c: f64,
    pub m_star: f64,
    pub m_1: f64,
    pub m_tilde_1: f64,
    pub p_star: f64,
    pub alpha: f64,
    pub delta: f64,
    pub n: f64,
    pub eta: f64,
    /// `None` when m = m_c (logarithmic self-similar scaling).
    pub rho: Option<f64>,
    pub lambda_ess: f64,
    pub lambda_01: f64,
    pub lambda_10: f64,
    pub lambda_star: f64,
    pub theta: f64,
}

impl Derived {
    /// Interpolation exponent of the CKN inequality for exponent `p`.
    pub fn vartheta_ckn(&self, p: &Params, pexp: f64) -> f64 {
        vartheta_ckn(p, pexp)
    }
}

pub fn vartheta_ckn(p: &Params, pexp: f64) -> f64 {
    let (d, b, g) = (p.d as f64, p.beta, p.gamma);
    (d - g) * (pexp - 1.0) / (pexp * (d + b + 2.0 - 2.0 * g - pexp * (d - b - 2.0)))
}

pub fn derive(p: &Params) -> Derived {
    let (d, m, b, g) = (p.d as f64, p.m, p.beta, p.gamma);
    let alpha = 1.0 + (b - g) / 2.0;
    let delta = 1.0 / (1.0 - m);
    let n = 2.0 * (d - g) / (b + 2.0 - g);
    let q = (d - 1.0) / (alpha * alpha);
    let h = (n - 2.0) / 2.0;
    // positive root of η² + (n−2)η − q = 0 without cancellation
    let eta = q / ((q + h * h).sqrt() + h);
    let m_c = p.threshold_value(Threshold::Mc);
    let rho = if p.compare_m(Threshold::Mc).is_equal() {
        None
    } else {
        Some(1.0 / ((d - g) * (m - m_c)))
    };
    let (lambda_ess, lambda_01, lambda_10) = spectral_values(n, delta, eta);
    let theta = if g > 0.0 {
        (1.0 - m) * (2.0 + b - g) / ((1.0 - m) * (2.0 + b) + 2.0 + b - g)
    } else {
        (1.0 - m) / (2.0 - m)
    };
    Derived {
        m_c,
        m_star: p.threshold_value(Threshold::MStar),
        m_1: p.threshold_value(Threshold::M1),
        m_tilde_1: p.threshold_value(Threshold::MTilde1),
        p_star: (d - g) / (d - b - 2.0),
        alpha,
        delta,
        n,
        eta,
        rho,
        lambda_ess,
        lambda_01,
        lambda_10,
        lambda_star: (2.0 + b - g).powi(2) / (2.0 * (1.0 - m)),
        theta,
    }
}

fn spectral_values(n: f64, delta: f64, eta: f64) -> (f64, f64, f64) {
    let ess = 0.25 * (n - 2.0 - 2.0 * delta).powi(2);
    (ess, 2.0 * delta * eta, 2.0 * (2.0 * delta - n))
}

/// Closed-form spectral values of the linearized operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralFormulas {
    pub lambda_ess: f64,
    pub lambda_01: f64,
    pub lambda_10: f64,
    /// Λ_1,0 < 0 (δ < n/2): reported raw, not a physical eigenvalue.
    pub lambda_10_nonphysical: bool,
}

pub fn spectral_formulas(p: &Params) -> SpectralFormulas {
    let dv = derive(p);
    SpectralFormulas {
        lambda_ess: dv.lambda_ess,
        lambda_01: dv.lambda_01,
        lambda_10: dv.lambda_10,
        lambda_10_nonphysical: dv.lambda_10 < 0.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapBranch {
    Ess,
    /// Λ_0,1: lowest non-radial eigenvalue.
    Ell01,
    /// Λ_1,0: lowest positive radial eigenvalue.
    Ell10,
}

impl fmt::Display for GapBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GapBranch::Ess => "ess",
            GapBranch::Ell01 => "(0,1)",
            GapBranch::Ell10 => "(1,0)",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapReport {
    pub lambda: f64,
    pub branch: GapBranch,
    pub lambda_improved: f64,
    /// Λ_0,1 ≥ Λ_ess.
    pub lambda_01_in_essential: bool,
    /// Λ_1,0 ≥ Λ_ess.
    pub lambda_10_in_essential: bool,
}

pub fn spectral_gap(p: &Params) -> Result<GapReport, ParamError> {
    if p.compare_m(Threshold::MStar).is_equal() {
        return Err(ParamError::DegenerateGap(
            p.threshold_value(Threshold::MStar),
        ));
    }
    let dv = derive(p);
    let (ess, l01, l10) = (dv.lambda_ess, dv.lambda_01, dv.lambda_10);
    let low_delta = dv.delta <= (dv.n + 2.0) / 2.0;
    let (lambda, branch) = if low_delta {
        (ess, GapBranch::Ess)
    } else {
        [
            (ess, GapBranch::Ess),
            (l01, GapBranch::Ell01),
            (l10, GapBranch::Ell10),
        ]
        .into_iter()
        .fold((f64::INFINITY, GapBranch::Ess), |acc, c| {
            if c.0 < acc.0 {
                c
            } else {
                acc
            }
        })
    };
    let lambda_improved = if low_delta { ess } else { ess.min(l01) };
    Ok(GapReport {
        lambda,
        branch,
        lambda_improved,
        lambda_01_in_essential: l01 >= ess,
        lambda_10_in_essential: l10 >= ess,
    })
}

/// Radial-sector gap min{Λ_ess, Λ_1,0} that governs radial evolutions.
pub fn radial_gap(p: &Params) -> f64 {
    let dv = derive(p);
    dv.lambda_ess.min(dv.lambda_10)
}

/// The Felli–Schneider curve β_FS(γ) = d − 2 − √((γ−d)² − 4(d−1)).
pub fn beta_fs(d: u32, gamma: f64) -> Result<f64, ParamError> {
    let d = d as f64;
    let disc = (gamma - d).powi(2) - 4.0 * (d - 1.0);
    if disc < 0.0 {
        return Err(ParamError::ComplexRoot(disc));
    }
    Ok(d - 2.0 - disc.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymmetrySide {
    Symmetry,
    Breaking,
}

impl fmt::Display for SymmetrySide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SymmetrySide::Symmetry => "symmetry",
            SymmetrySide::Breaking => "symmetry breaking",
        })
    }
}

/// Symmetry holds for 0 ≤ γ < d, or γ < 0 with β ≤ β_FS(γ).
pub fn symmetry_side(p: &Params) -> SymmetrySide {
    if p.gamma >= 0.0 {
        return SymmetrySide::Symmetry;
    }
    match beta_fs(p.d, p.gamma) {
        Ok(bfs) if p.beta > bfs => SymmetrySide::Breaking,
        _ => SymmetrySide::Symmetry,
    }
}

/// Rate-reduction factor for relative-error norms of order `q`.
pub fn zeta(p: &Params, q: f64) -> Result<f64, ParamError> {
    let m = p.m;
    let qmin = (2.0 - m) / (1.0 - m);
    if q < qmin && !(q - qmin).abs().le(&(THRESHOLD_BAND * qmin)) {
        return Err(ParamError::ExponentBelowRange { q, min: qmin });
    }
    if p.gamma <= 0.0 {
        return Ok(1.0);
    }
    let theta = derive(p).theta;
    let first = if q.is_infinite() { 1.0 } else { 1.0 - qmin / q };
    Ok(1.0 - first * (1.0 - qmin * theta))
}

/// Prediction on the best constant Λ(M) of the entropy–entropy production
/// inequality, relative to Λ_*.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LambdaPrediction {
    /// Λ(M) > Λ_*.
    AboveStar,
    /// Λ(M) ≤ Λ_0,1 < Λ_*.
    BelowStar,
    /// m < m_1: no prediction.
    NotApplicable,
}

impl fmt::Display for LambdaPrediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LambdaPrediction::AboveStar => "Lambda(M) > Lambda_*",
            LambdaPrediction::BelowStar => "Lambda(M) <= Lambda_01 < Lambda_*",
            LambdaPrediction::NotApplicable => "no prediction (m < m_1)",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeTags {
    pub extinction: bool,
    pub mass_finite: bool,
    /// m = m_c: no rates are stated for the logarithmic case.
    pub unrated: bool,
    pub l1_difference: bool,
    pub moment_finite: bool,
    pub ckn_subcritical: bool,
    pub symmetry: SymmetrySide,
    pub prediction: LambdaPrediction,
    /// Thresholds that `m` sits within the tolerance band of.
    pub near_threshold: Vec<Threshold>,
}

impl RegimeTags {
    pub fn labels(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.extinction {
            v.push("extinction");
        }
        if self.mass_finite {
            v.push("mass-finite");
        }
        if self.unrated {
            v.push("unrated");
        }
        if self.l1_difference {
            v.push("L1-difference");
        }
        if self.moment_finite {
            v.push("moment-finite");
        }
        if self.ckn_subcritical {
            v.push("CKN-subcritical");
        }
        v.push(match self.symmetry {
            SymmetrySide::Symmetry => "symmetry",
            SymmetrySide::Breaking => "symmetry-breaking",
        });
        v
    }
}

pub fn classify_regime(p: &Params) -> RegimeTags {
    let mc = p.compare_m(Threshold::Mc);
    let ms = p.compare_m(Threshold::MStar);
    let m1 = p.compare_m(Threshold::M1);
    let mt = p.compare_m(Threshold::MTilde1);
    let near_threshold = [
        (Threshold::Mc, mc),
        (Threshold::MStar, ms),
        (Threshold::M1, m1),
        (Threshold::MTilde1, mt),
    ]
    .into_iter()
    .filter(|(_, c)| c.near)
    .map(|(t, _)| t)
    .collect();
    let symmetry = symmetry_side(p);
    let ckn_subcritical = !m1.is_below();
    let prediction = if !ckn_subcritical {
        LambdaPrediction::NotApplicable
    } else {
        match symmetry {
            SymmetrySide::Symmetry => LambdaPrediction::AboveStar,
            SymmetrySide::Breaking => LambdaPrediction::BelowStar,
        }
    };
    RegimeTags {
        extinction: mc.is_below(),
        mass_finite: mc.is_above(),
        unrated: mc.is_equal(),
        l1_difference: ms.is_above(),
        moment_finite: mt.is_above(),
        ckn_subcritical,
        symmetry,
        prediction,
        near_threshold,
    }
}
