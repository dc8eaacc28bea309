use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use super::*;
use crate::profiles::{barenblatt_mass, unit_mass};
use crate::spectrum::{assemble_sector, ground_state};
use crate::testkit::{adaptive_simpson, ex_a, exact, grid, random_sandwiched};

fn omega(d: u32) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / ln_gamma(d as f64 / 2.0).exp()
}

fn bump(r: f64) -> f64 {
    (-(r.ln() - 0.3).powi(2)).exp()
}

/// 𝔅(1 + ε𝔅^{1−m} f) with its perturbation field f.
fn linear_pair(spec: &BarenblattSpec, g: &Arc<RadialGrid>, eps: f64) -> (RadialField, RadialField) {
    let m = spec.params.m;
    let v = RadialField::from_fn(g.clone(), spec.tail(), |r| {
        let b = spec.value(r);
        b * (1.0 + eps * b.powf(1.0 - m) * bump(r))
    });
    (
        v,
        RadialField::from_fn(g.clone(), crate::grid::Tail::None, bump),
    )
}

/// Same-mass reference for `v`.
fn mass_spec(v: &RadialField) -> BarenblattSpec {
    let g = v.grid();
    c_of_mass(g.moment_gamma(v, 0.0).unwrap().unwrap(), g.params()).unwrap()
}

#[test]
fn free_energy_of_other_barenblatt_against_quadrature() {
    let p = ex_a();
    let g = grid(&p, 2000);
    let spec = BarenblattSpec::new(&p, 1.0).unwrap();
    let other = BarenblattSpec::new(&p, 1.3).unwrap();
    let v = barenblatt_eval(&other, &g);
    let f = free_energy(&v, &spec).unwrap();
    let m = p.m;
    let pw = p.d as f64 - p.gamma;
    let integrand = |x: f64| {
        let r = x.exp();
        let (a, b) = (other.value(r), spec.value(r));
        (a.powf(m) - b.powf(m) - m * b.powf(m - 1.0) * (a - b)) / (m - 1.0) * (pw * x).exp()
    };
    let oracle = omega(5)
        * (-12..12)
            .map(|k| adaptive_simpson(&integrand, k as f64, k as f64 + 1.0, 1e-16))
            .sum::<f64>();
    assert!(f > 0.0);
    assert!((f / oracle - 1.0).abs() < 1e-6, "{f} vs {oracle}");
    assert_eq!(
        free_energy(&barenblatt_eval(&spec, &g), &spec).unwrap(),
        0.0
    );
}

#[test]
fn quadratic_regime() {
    let p = ex_a();
    let g = grid(&p, 2000);
    let spec = BarenblattSpec::new(&p, 1.0).unwrap();
    let eps = 1e-3;
    let (v, f) = linear_pair(&spec, &g, eps);
    let f_lin = linearized_free_energy(&f, &spec);
    let i_lin = linearized_fisher(&f, &spec);
    let ratio_f = free_energy(&v, &spec).unwrap() / (p.m * eps * eps * f_lin);
    assert!((ratio_f - 1.0).abs() < 1e-2, "{ratio_f}");
    let ratio_i = fisher_information(&v, &spec).unwrap() / ((1.0 - p.m) * eps * eps * i_lin);
    assert!((ratio_i - 1.0).abs() < 2e-2, "{ratio_i}");
}

#[test]
fn linearized_forms() {
    let p = ex_a();
    let g = grid(&p, 1500);
    let spec = BarenblattSpec::new(&p, 1.0).unwrap();
    let one = RadialField::from_fn(g.clone(), crate::grid::Tail::None, |_| 1.0);
    assert_eq!(linearized_fisher(&one, &spec), 0.0);
    let half_mass = 0.5
        * g.sum_gamma(
            &g.r()
                .iter()
                .map(|&r| spec.value(r).powf(2.0 - p.m))
                .collect::<Vec<_>>(),
        );
    assert!((linearized_free_energy(&one, &spec) / half_mass - 1.0).abs() < 1e-14);
    let f = RadialField::from_fn(g.clone(), crate::grid::Tail::None, bump);
    let f3 = f.map(|x| 3.0 * x);
    assert!(
        (linearized_free_energy(&f3, &spec) / linearized_free_energy(&f, &spec) - 9.0).abs()
            < 1e-12
    );
    assert!((linearized_fisher(&f3, &spec) / linearized_fisher(&f, &spec) - 9.0).abs() < 1e-12);
}

#[test]
fn fisher_vanishes_on_the_barenblatt_family() {
    let p = ex_a();
    let g = grid(&p, 2000);
    let spec = BarenblattSpec::new(&p, 1.0).unwrap();
    let (v, _) = linear_pair(&spec, &g, 0.1);
    let generic = fisher_information(&v, &spec).unwrap();
    for c in [0.5, 1.0, 1.7] {
        let other = barenblatt_eval(&BarenblattSpec::new(&p, c).unwrap(), &g);
        assert!(
            fisher_information(&other, &spec).unwrap() <= 1e-12 * generic,
            "C' = {c}"
        );
    }
    let mut bad = v.clone();
    bad.values_mut()[3] = 0.0;
    assert!(matches!(
        fisher_information(&bad, &spec),
        Err(FunctionalError::NonpositiveField { .. })
    ));
    bad.values_mut()[3] = -1.0;
    assert!(matches!(
        free_energy(&bad, &spec),
        Err(FunctionalError::NegativeField { .. })
    ));
}

#[test]
fn fisher_self_convergence() {
    let p = ex_a();
    let spec = BarenblattSpec::new(&p, 1.0).unwrap();
    let vals: Vec<f64> = [500, 1000, 2000, 4000]
        .iter()
        .map(|&n| {
            let (v, _) = linear_pair(&spec, &grid(&p, n), 0.2);
            fisher_information(&v, &spec).unwrap()
        })
        .collect();
    let d1 = (vals[1] - vals[0]).abs();
    let d2 = (vals[2] - vals[1]).abs();
    let d3 = (vals[3] - vals[2]).abs();
    assert!(d1 / d2 > 3.0 && d2 / d3 > 3.0, "{vals:?}");
    assert!(d3 < 1e-4 * vals[3]);
}

#[test]
fn best_match_scale() {
    let p = ex_a();
    let g = grid(&p, 2000);
    let spec = BarenblattSpec::new(&p, 1.0).unwrap();
    let b = barenblatt_eval(&spec, &g);
    assert!((best_match_mu(&b, &spec).unwrap() - 1.0).abs() < 1e-12);
    let b2 = rescale_mu(&spec, 2.0, &g);
    assert!((best_match_mu(&b2, &spec).unwrap() - 2.0).abs() < 1e-6);
    let (g0, mu0) = best_match_entropy(&b, &spec).unwrap();
    assert_eq!(g0, 0.0);
    assert!((mu0 - 1.0).abs() < 1e-12);
    let b15 = rescale_mu(&spec, 1.5, &g);
    let (gm, mu) = best_match_entropy(&b15, &spec).unwrap();
    assert!((mu - 1.5).abs() < 1e-6);
    assert!(gm.abs() <= 1e-8, "{gm}");
    assert!(free_energy(&b15, &spec).unwrap() > 1e-3);
    let low = exact(5, "0.75", "0.2", "1", false);
    let gl = grid(&low, 400);
    let sl = BarenblattSpec::new(&low, 1.0).unwrap();
    assert_eq!(
        best_match_mu(&barenblatt_eval(&sl, &gl), &sl),
        Err(FunctionalError::MomentDiverges)
    );
    let heavier = BarenblattSpec::new(&p, 0.8).unwrap();
    assert!(matches!(
        best_match_entropy(&barenblatt_eval(&heavier, &g), &spec),
        Err(FunctionalError::MassMismatch { .. })
    ));
}

#[test]
fn matched_entropy_below_free_energy_and_ckp_bound() {
    let p = ex_a();
    let g = grid(&p, 1200);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..100 {
        let (v, _) = random_sandwiched(&mut rng, &g);
        let spec = mass_spec(&v);
        let f = free_energy(&v, &spec).unwrap();
        let (gm, mu) = best_match_entropy(&v, &spec).unwrap();
        assert!(
            gm >= 0.0 && gm <= f * (1.0 + 1e-9),
            "seed {seed}: G = {gm}, F = {f}"
        );
        if (mu - 1.0).abs() > 1e-3 {
            assert!(gm < f, "seed {seed}");
        }
        let bound = ckp_lower_bound(&v, mu, &spec).unwrap();
        assert!(bound <= gm, "seed {seed}: bound {bound} > G {gm}");
    }
    let spec = BarenblattSpec::new(&p, 1.0).unwrap();
    assert!(ckp_lower_bound(&rescale_mu(&spec, 1.3, &g), 1.3, &spec).unwrap() < 1e-20);
}

#[test]
fn rayleigh_quotient_of_ground_state() {
    let p = ex_a();
    let g = grid(&p, 2000);
    let spec = BarenblattSpec::new(&p, 1.0).unwrap();
    for ell in [0, 1] {
        let op = assemble_sector(&p, 1.0, &g, ell).unwrap();
        let (lambda, f) = ground_state(&op).unwrap();
        let field = RadialField::new(g.clone(), f, crate::grid::Tail::None);
        let q = linearized_fisher(&field, &spec)
            / (2.0 * (1.0 - p.m) * linearized_free_energy(&field, &spec));
        if ell == 0 {
            assert!((q / lambda - 1.0).abs() < 5e-3, "{q} vs {lambda}");
        } else {
            assert!(q < lambda);
        }
    }
}

#[test]
fn relative_error_norms_examples() {
    let p = ex_a();
    let g = grid(&p, 1000);
    let spec = BarenblattSpec::new(&p, 1.0).unwrap();
    let qs = [2.0, 12.0, f64::INFINITY];
    let zero = relative_error_norms(&barenblatt_eval(&spec, &g), &spec, &qs);
    assert!(zero.iter().all(|n| n.value == 0.0));
    let eps = 0.03;
    let v = barenblatt_eval(&spec, &g).map(|x| (1.0 + eps) * x);
    let norms = relative_error_norms(&v, &spec, &qs);
    assert!((norms[2].value - eps).abs() < 1e-15);
    for n in &norms[..2] {
        let ones = g.norm_q_values(&vec![1.0; g.len()], n.q);
        assert!((n.value / (eps * ones) - 1.0).abs() < 1e-12);
    }
    assert!(!norms[0].in_range && norms[1].in_range && norms[2].in_range);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let (v, sw) = random_sandwiched(&mut rng, &g);
        let spec = BarenblattSpec::new(&p, sw.c).unwrap();
        let sup = relative_error_norms(&v, &spec, &[f64::INFINITY])[0].value;
        assert!(sup <= (sw.w2 - 1.0).max(1.0 - sw.w1) * (1.0 + 1e-10));
    }
}

#[test]
fn entropy_production_inequality_on_random_fields() {
    let p = ex_a();
    let g = grid(&p, 1200);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let target = p.two_alpha().powi(2);
    assert!((target - 1.44).abs() < 1e-14);
    for seed in 0..40 {
        let (v, sw) = random_sandwiched(&mut rng, &g);
        let spec = BarenblattSpec::new(&p, sw.c).unwrap();
        let r = report(&v, &spec, &[], None).unwrap();
        assert!(r.ep_ratio >= target, "seed {seed}: {}", r.ep_ratio);
    }
}

#[test]
fn ckn_constant() {
    let p = ex_a();
    assert!((crate::params::vartheta_ckn(&p, 1.25) - 1.0 / (1.25 * 1.7)).abs() < 1e-12);
    assert!((1.0 / (1.25 * 1.7) - 0.470588_f64).abs() < 1e-6);
    let coarse = ckn_star_constant_on(
        &Arc::new(RadialGrid::new(&p, 1e-6, 1e6, 3000).unwrap()),
        1.25,
        1.0,
    )
    .unwrap();
    let fine = ckn_star_constant(&p, 1.25).unwrap();
    assert!(fine > 0.0 && fine.is_finite());
    assert!((coarse / fine - 1.0).abs() < 1e-5, "{coarse} {fine}");
    let other_c = ckn_star_constant_on(
        &Arc::new(RadialGrid::new(&p, 1e-6, 1e6, 6000).unwrap()),
        1.25,
        2.0,
    )
    .unwrap();
    assert!((other_c / fine - 1.0).abs() < 1e-5);
    assert!(matches!(
        ckn_star_constant(&p, 1.3),
        Err(FunctionalError::InconsistentPair { .. })
    ));
    let sup = exact(5, "0.55", "0.2", "1", false);
    assert!(matches!(
        ckn_star_constant(&sup, 1.0 / 0.1),
        Err(FunctionalError::SupercriticalExponent { .. })
    ));
}

#[test]
fn report_assembles_everything() {
    let p = ex_a();
    let g = grid(&p, 1200);
    let m1 = unit_mass(&p).unwrap();
    let spec = c_of_mass(m1, &p).unwrap();
    assert!((barenblatt_mass(&spec).unwrap() / m1 - 1.0).abs() < 1e-12);
    let (v, f) = linear_pair(&spec, &g, 0.05);
    let r = report(&v, &mass_spec(&v), &[12.0, f64::INFINITY], Some(&f)).unwrap();
    assert!(r.f > 0.0 && r.i > 0.0);
    assert!(r.g.unwrap() <= r.f);
    assert!(r.j.unwrap() > 0.0 && r.mu_star.is_some() && r.ckp_bound.is_some());
    assert!(r.f_lin.unwrap() > 0.0 && r.i_lin.unwrap() > 0.0);
    assert_eq!(r.rel_err_norms.len(), 2);
    let r = report(&v, &spec, &[], None).unwrap();
    assert!(r.g.is_none() && r.f_lin.is_none());
}
