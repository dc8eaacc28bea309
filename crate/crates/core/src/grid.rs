//! Geometric radial mesh with weighted quadrature.
//!
//! Nodes are uniform in `x = log r`. Integrals `∫ f(r) r^{p-1} dr` become
//! `∫ f(e^x) e^{p x} dx`, integrated by the trapezoid rule with fifth-order
//! Gregory end corrections, which keeps all weights positive and is exact to
//! round-off on the power laws that make up Barenblatt profiles.

use std::io::{Read, Write};
use std::sync::Arc;

use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::params::{derive, Params};

/// Gregory end weights (trapezoid plus corrections through fourth differences).
const GREGORY: [f64; 5] = [
    95.0 / 288.0,
    317.0 / 240.0,
    23.0 / 30.0,
    793.0 / 720.0,
    157.0 / 160.0,
];

pub const MIN_NODES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("bad grid bounds: need 0 < r_min < 1 < r_max and N >= {MIN_NODES} (got r_min={r_min}, r_max={r_max}, N={n})")]
    BadBounds { r_min: f64, r_max: f64, n: usize },
    #[error("field does not live on this grid")]
    GridMismatch,
    #[error("field CSV: {0}")]
    Csv(String),
}

/// Surface area of the unit sphere in ℝ^d, 2π^{d/2}/Γ(d/2).
pub fn sphere_area(d: u32) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadialGrid {
    params: Params,
    alpha: f64,
    omega: f64,
    h: f64,
    r: Vec<f64>,
    x: Vec<f64>,
    s: Vec<f64>,
    faces: Vec<f64>,
    gregory: Vec<f64>,
    quad_gamma: Vec<f64>,
    quad_beta: Vec<f64>,
    quad_n: Vec<f64>,
}

impl RadialGrid {
    pub fn new(p: &Params, r_min: f64, r_max: f64, n: usize) -> Result<Self, GridError> {
        if !(r_min > 0.0 && r_min < 1.0 && r_max > 1.0 && r_max.is_finite() && n >= MIN_NODES) {
            return Err(GridError::BadBounds { r_min, r_max, n });
        }
        let (x0, x1) = (r_min.ln(), r_max.ln());
        let h = (x1 - x0) / (n - 1) as f64;
        let x: Vec<f64> = (0..n)
            .map(|i| if i == n - 1 { x1 } else { x0 + h * i as f64 })
            .collect();
        let mut r: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        r[0] = r_min;
        r[n - 1] = r_max;
        let alpha = derive(p).alpha;
        let s = r.iter().map(|v| v.powf(alpha)).collect();
        let faces = x.windows(2).map(|w| (0.5 * (w[0] + w[1])).exp()).collect();
        let mut gregory = vec![1.0; n];
        for (k, w) in GREGORY.iter().enumerate() {
            gregory[k] = *w;
            gregory[n - 1 - k] = *w;
        }
        let omega = sphere_area(p.d);
        let (d, b, g) = (p.d as f64, p.beta, p.gamma);
        let base = |pw: f64| -> Vec<f64> {
            x.iter()
                .zip(&gregory)
                .map(|(xi, gi)| h * gi * (pw * xi).exp())
                .collect()
        };
        let b_gamma = base(d - g);
        let quad_gamma = b_gamma.iter().map(|w| omega * w).collect();
        let quad_n = b_gamma.iter().map(|w| alpha * w).collect();
        let quad_beta = base(d - b).iter().map(|w| omega * w).collect();
        Ok(RadialGrid {
            params: p.clone(),
            alpha,
            omega,
            h,
            r,
            x,
            s,
            faces,
            gregory,
            quad_gamma,
            quad_beta,
            quad_n,
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }
    pub fn len(&self) -> usize {
        self.r.len()
    }
    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
    pub fn r(&self) -> &[f64] {
        &self.r
    }
    /// Log-radius nodes.
    pub fn x(&self) -> &[f64] {
        &self.x
    }
    /// Transformed nodes s = r^α.
    pub fn s(&self) -> &[f64] {
        &self.s
    }
    /// Interior cell faces (geometric midpoints), length N−1.
    pub fn faces(&self) -> &[f64] {
        &self.faces
    }
    pub fn r_min(&self) -> f64 {
        self.r[0]
    }
    pub fn r_max(&self) -> f64 {
        self.r[self.r.len() - 1]
    }
    /// Spacing in log r.
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    /// ω_{d−1}, the area of the unit sphere.
    pub fn omega(&self) -> f64 {
        self.omega
    }
    /// Weights for `ω ∫ f r^{d−1−γ} dr`; also the finite-volume cell measures.
    pub fn quad_gamma(&self) -> &[f64] {
        &self.quad_gamma
    }
    /// Weights for `ω ∫ f r^{d−1−β} dr`.
    pub fn quad_beta(&self) -> &[f64] {
        &self.quad_beta
    }
    /// Weights for `∫ g s^{n−1} ds` in the transformed variable.
    pub fn quad_n(&self) -> &[f64] {
        &self.quad_n
    }

    /// Weights for `ω ∫ f r^{p−1} dr` with an arbitrary power.
    pub fn weights_for_power(&self, pw: f64) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.gregory)
            .map(|(xi, gi)| self.omega * self.h * gi * (pw * xi).exp())
            .collect()
    }

    pub fn same_as(&self, other: &RadialGrid) -> bool {
        std::ptr::eq(self, other)
            || (self.r.len() == other.r.len()
                && self.r_min() == other.r_min()
                && self.r_max() == other.r_max()
                && self.params == other.params)
    }

    fn check(&self, f: &RadialField) -> Result<(), GridError> {
        if self.same_as(&f.grid) {
            Ok(())
        } else {
            Err(GridError::GridMismatch)
        }
    }

    /// `Σ w_i f_i` with the γ-weights.
    pub fn sum_gamma(&self, f: &[f64]) -> f64 {
        dot(&self.quad_gamma, f)
    }

    pub fn sum_beta(&self, f: &[f64]) -> f64 {
        dot(&self.quad_beta, f)
    }

    /// `∫ f |x|^{−γ} dx` over the truncated ball r_min ≤ |x| ≤ r_max.
    pub fn integrate_gamma(&self, f: &RadialField) -> Result<f64, GridError> {
        self.check(f)?;
        Ok(self.sum_gamma(&f.values))
    }

    /// `∫ f |x|^{−β} dx` over the truncated ball.
    pub fn integrate_beta(&self, f: &RadialField) -> Result<f64, GridError> {
        self.check(f)?;
        Ok(self.sum_beta(&f.values))
    }

    /// `∫ |x|^k f |x|^{−γ} dx`, adding the analytic tail beyond r_max when the
    /// field carries a Barenblatt power-law tail. Returns `None` when the tail
    /// integral diverges.
    pub fn moment_gamma(&self, f: &RadialField, k: f64) -> Result<Option<f64>, GridError> {
        self.check(f)?;
        let pw = self.params.d as f64 - self.params.gamma + k;
        let w = self.weights_for_power(pw);
        let body = dot(&w, &f.values);
        let tail = match f.tail {
            Tail::None => 0.0,
            Tail::BarenblattPower { .. } => {
                let decay = 2.0 * self.alpha / (1.0 - self.params.m);
                if decay <= pw {
                    return Ok(None);
                }
                let vn = *f.values.last().unwrap_or(&0.0);
                self.omega * vn * self.r_max().powf(pw) / (decay - pw)
            }
        };
        Ok(Some(body + tail))
    }

    /// `(∫ |f|^q |x|^{−γ} dx)^{1/q}`; `q = ∞` gives the nodal maximum.
    pub fn norm_qgamma(&self, f: &RadialField, q: f64) -> Result<f64, GridError> {
        self.check(f)?;
        Ok(self.norm_q_values(&f.values, q))
    }

    pub fn norm_q_values(&self, f: &[f64], q: f64) -> f64 {
        if q.is_infinite() {
            return f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        }
        let s: f64 = self
            .quad_gamma
            .iter()
            .zip(f)
            .map(|(w, v)| w * v.abs().powf(q))
            .sum();
        s.powf(1.0 / q)
    }

    /// Derivative in r: three-point formula on the non-uniform mesh, one-sided
    /// at both ends. Exact for quadratics, zero on constants.
    pub fn gradient_values(&self, f: &[f64]) -> Vec<f64> {
        let r = &self.r;
        let n = r.len();
        let mut g = vec![0.0; n];
        for i in 1..n - 1 {
            let (h1, h2) = (r[i] - r[i - 1], r[i + 1] - r[i]);
            g[i] =
                (h1 * h1 * (f[i + 1] - f[i]) + h2 * h2 * (f[i] - f[i - 1])) / (h1 * h2 * (h1 + h2));
        }
        let (h1, h2) = (r[1] - r[0], r[2] - r[1]);
        g[0] = (f[1] - f[0]) * (h1 + h2) / (h1 * h2) - (f[2] - f[0]) * h1 / (h2 * (h1 + h2));
        let (h1, h2) = (r[n - 1] - r[n - 2], r[n - 2] - r[n - 3]);
        g[n - 1] = -(f[n - 2] - f[n - 1]) * (h1 + h2) / (h1 * h2)
            + (f[n - 3] - f[n - 1]) * h1 / (h2 * (h1 + h2));
        g
    }

    pub fn gradient(&self, f: &RadialField) -> Result<RadialField, GridError> {
        self.check(f)?;
        Ok(RadialField {
            grid: f.grid.clone(),
            values: self.gradient_values(&f.values),
            tail: Tail::None,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Behaviour of a field beyond r_max.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tail {
    None,
    /// `v ≈ (c + scale·r^{2+β−γ})^{−1/(1−m)}` as r → ∞.
    BarenblattPower {
        scale: f64,
        c: f64,
    },
}

/// Nodal values on a shared grid.
#[derive(Clone, Debug)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    tail: Tail,
}

impl RadialField {
    /// Panics if the length does not match the grid.
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>, tail: Tail) -> Self {
        assert_eq!(grid.len(), values.len(), "field length must match grid");
        RadialField { grid, values, tail }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, tail: Tail, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.r().iter().map(|&r| f(r)).collect();
        RadialField { grid, values, tail }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn tail(&self) -> Tail {
        self.tail
    }
    pub fn with_tail(mut self, tail: Tail) -> Self {
        self.tail = tail;
        self
    }

    /// `a·self + b·other` (tail dropped).
    pub fn combine(&self, a: f64, other: &RadialField, b: f64) -> Result<RadialField, GridError> {
        self.grid.check(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(RadialField {
            grid: self.grid.clone(),
            values,
            tail: Tail::None,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RadialField {
        RadialField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            tail: Tail::None,
        }
    }

    /// Two-column `r,value` CSV preceded by a `#` provenance line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GridError> {
        let g = &self.grid;
        let p = g.params();
        let mut out = out;
        writeln!(
            out,
            "# d={} m={} beta={} gamma={} N={} r_min={} r_max={}",
            p.d,
            p.m,
            p.beta,
            p.gamma,
            g.len(),
            g.r_min(),
            g.r_max()
        )
        .map_err(|e| GridError::Csv(e.to_string()))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "value"])
            .map_err(|e| GridError::Csv(e.to_string()))?;
        for (r, v) in g.r().iter().zip(&self.values) {
            w.write_record([format!("{r:.17e}"), format!("{v:.17e}")])
                .map_err(|e| GridError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| GridError::Csv(e.to_string()))
    }
}

/// Reads `(r, value)` pairs from a CSV written by [`RadialField::write_csv`]
/// or any two-column file with a header; `#` lines are skipped.
pub fn read_samples_csv<R: Read>(input: R) -> Result<Vec<(f64, f64)>, GridError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| GridError::Csv(e.to_string()))?;
        let parse = |k: usize| -> Result<f64, GridError> {
            rec.get(k)
                .ok_or_else(|| GridError::Csv(format!("row {}: missing column {}", i + 1, k + 1)))?
                .parse::<f64>()
                .map_err(|e| GridError::Csv(format!("row {}: {e}", i + 1)))
        };
        out.push((parse(0)?, parse(1)?));
    }
    if out.len() < 2 {
        return Err(GridError::Csv("need at least two samples".into()));
    }
    Ok(out)
}
