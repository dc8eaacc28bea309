//! Property suites over the admissible parameter region.

use std::sync::Arc;

use proptest::prelude::*;

use crate::functionals::{free_energy, linearized_free_energy};
use crate::grid::{RadialField, RadialGrid, Tail};
use crate::params::{derive, Params};
use crate::profiles::BarenblattSpec;

fn admissible() -> impl Strategy<Value = Params> {
    (2u32..=8, -3.0f64..3.0, -3.0f64..3.0, 0.05f64..0.99)
        .prop_filter_map("inadmissible", |(d, gamma, beta, m)| {
            Params::new(d as i64, m, beta, gamma, false).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn quadrature_weights_positive(p in admissible(), n in 16usize..300, lo in -8.0f64..-0.5, hi in 0.5f64..8.0) {
        let g = RadialGrid::new(&p, 10f64.powf(lo), 10f64.powf(hi), n).unwrap();
        prop_assert!(g.quad_gamma().iter().chain(g.quad_beta()).chain(g.quad_n()).all(|w| *w > 0.0 && w.is_finite()));
        prop_assert!(g.s().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn eta_solves_its_equation(p in admissible()) {
        let dv = derive(&p);
        let lhs = dv.eta * (dv.eta + dv.n - 2.0);
        let rhs = (p.d as f64 - 1.0) / (dv.alpha * dv.alpha);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
        prop_assert!(dv.eta > 0.0);
    }

    #[test]
    fn free_energy_is_a_divergence(
        p in admissible(),
        c in 0.2f64..5.0,
        amps in proptest::collection::vec(-0.95f64..3.0, 3),
        centers in proptest::collection::vec(-3.0f64..3.0, 3),
    ) {
        let g = Arc::new(RadialGrid::new(&p, 1e-3, 1e3, 200).unwrap());
        let spec = BarenblattSpec::new(&p, c).unwrap();
        let v = RadialField::from_fn(g.clone(), Tail::None, |r| {
            let x = r.ln();
            let s: f64 = amps.iter().zip(&centers).map(|(a, x0)| a * (-(x - x0).powi(2)).exp()).sum();
            spec.value(r) * (1.0 + s).max(0.0)
        });
        let f = free_energy(&v, &spec).unwrap();
        prop_assert!(f >= 0.0);
        let b = RadialField::from_fn(g.clone(), Tail::None, |r| spec.value(r));
        prop_assert!(free_energy(&b, &spec).unwrap().abs() <= 1e-12);
        let h = RadialField::from_fn(g.clone(), Tail::None, |r| (r.ln() * 0.7).sin());
        let scaled = h.map(|x| 2.5 * x);
        let ratio = linearized_free_energy(&scaled, &spec) / linearized_free_energy(&h, &spec);
        prop_assert!((ratio - 6.25).abs() < 1e-12);
    }
}
