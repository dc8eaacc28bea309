//! Shared fixtures for unit-test suites.

use std::sync::Arc;

use rand::Rng;

use crate::evolve::Bump;
use crate::grid::{RadialField, RadialGrid};
use crate::params::{validate, Params, RawParams};
use crate::profiles::{sandwich_constants, BarenblattSpec, Sandwich};

pub fn exact(d: i64, m: &str, beta: &str, gamma: &str, boundary: bool) -> Params {
    validate(&RawParams::parse(d, m, beta, gamma).unwrap(), boundary).unwrap()
}

pub fn ex_a() -> Params {
    exact(5, "0.9", "0.2", "1", false)
}

pub fn classical() -> Params {
    exact(5, "0.8", "0", "0", true)
}

pub fn breaking() -> Params {
    exact(5, "0.9", "-1", "-1", false)
}

pub fn grid(p: &Params, n: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::new(p, 1e-4, 1e4, n).unwrap())
}

pub fn random_bumps<R: Rng>(rng: &mut R, k: usize) -> Vec<Bump> {
    (0..k)
        .map(|_| Bump {
            amplitude: rng.gen_range(-1.0..1.0),
            center: rng.gen_range(-2.5..2.5),
            width: rng.gen_range(0.3..1.5),
        })
        .collect()
}

/// A perturbed Barenblatt 𝔅_{C'}(1 + εΣ bumps) admitting a sandwich, with
/// its sandwich constants.
pub fn random_sandwiched<R: Rng>(rng: &mut R, g: &Arc<RadialGrid>) -> (RadialField, Sandwich) {
    let p = g.params().clone();
    loop {
        let eps = rng.gen_range(0.02..0.4);
        let bumps = random_bumps(rng, 3);
        let s = BarenblattSpec::new(&p, rng.gen_range(0.5..2.0)).unwrap();
        let v = RadialField::from_fn(g.clone(), s.tail(), |r| {
            s.value(r) * (1.0 + eps * bumps.iter().map(|b| b.eval(r)).sum::<f64>())
        });
        if v.values().iter().any(|x| !(*x > 0.0)) {
            continue;
        }
        if let Ok(sw) = sandwich_constants(&v, None) {
            return (v, sw);
        }
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`: absolute tolerance `tol`,
/// floored at round-off relative to the coarse estimate, recursion depth 24.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = tol.max(1e-15 * whole.abs());
    rec(f, a, b, fa, fm, fb, whole, tol, 24)
}
