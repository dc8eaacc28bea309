use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use super::*;
use crate::testkit::{adaptive_simpson, ex_a, exact, grid};

fn quad_mass(spec: &BarenblattSpec) -> f64 {
    let p = &spec.params;
    let pw = p.d as f64 - p.gamma;
    let omega = 2.0 * PI.powf(p.d as f64 / 2.0) / ln_gamma(p.d as f64 / 2.0).exp();
    let f = |x: f64| spec.value(x.exp()) * (pw * x).exp();
    let pass = |tol: f64| {
        (-30..40)
            .map(|k| adaptive_simpson(&f, k as f64, k as f64 + 1.0, tol))
            .sum::<f64>()
    };
    omega * pass(1e-14 * pass(1e-3))
}

#[test]
fn pointwise_and_monotone() {
    let p = ex_a();
    let s = BarenblattSpec::new(&p, 1.0).unwrap();
    assert!((s.value(1.0) / 2f64.powi(-10) - 1.0).abs() < 1e-14);
    let s3 = BarenblattSpec::new(&p, 3.0).unwrap();
    assert!((s3.value(0.0) / 3f64.powf(-10.0) - 1.0).abs() < 1e-14);
    let g = grid(&p, 500);
    let f = barenblatt_eval(&s3, &g);
    assert!(f.values().windows(2).all(|w| w[1] < w[0]));
    assert_eq!(f.tail(), Tail::BarenblattPower { scale: 1.0, c: 3.0 });
}

#[test]
fn unit_mass_against_quadrature() {
    let p = ex_a();
    let m1 = unit_mass(&p).unwrap();
    let s = BarenblattSpec::new(&p, 1.0).unwrap();
    assert!((quad_mass(&s) / m1 - 1.0).abs() < 1e-8);
    let g = grid(&p, 2000);
    assert!((g.integrate_gamma(&barenblatt_eval(&s, &g)).unwrap() / m1 - 1.0).abs() < 1e-6);
    let beta = (ln_gamma(10.0 / 3.0) + ln_gamma(20.0 / 3.0) - ln_gamma(10.0)).exp();
    assert!((m1 / (26.318945069571623 / 1.2 * beta) - 1.0).abs() < 1e-12);
}

#[test]
fn mass_scaling_against_quadrature() {
    for p in [
        ex_a(),
        exact(5, "0.95", "0.2", "1", false),
        crate::testkit::classical(),
        crate::testkit::breaking(),
    ] {
        let dv = derive(&p);
        for c in [0.3, 1.0, 2.5] {
            let s = BarenblattSpec::new(&p, c).unwrap();
            let s4 = BarenblattSpec::new(&p, 4.0 * c).unwrap();
            let q = quad_mass(&s4) / quad_mass(&s);
            assert!(
                (q / 4f64.powf(dv.n / 2.0 - dv.delta) - 1.0).abs() < 1e-7,
                "{p:?} c={c} q={q} {}",
                4f64.powf(dv.n / 2.0 - dv.delta)
            );
            assert!((barenblatt_mass(&s).unwrap() / quad_mass(&s) - 1.0).abs() < 1e-7);
        }
        assert!(dv.n / 2.0 - dv.delta < 0.0);
    }
    let crit = exact(5, "0.7", "0.2", "1", false);
    assert!(matches!(
        barenblatt_mass(&BarenblattSpec::new(&crit, 1.0).unwrap()),
        Err(ProfileError::InfiniteMass { .. })
    ));
    assert!(matches!(
        c_of_mass(-1.0, &ex_a()),
        Err(ProfileError::NonpositiveMass(_))
    ));
}

#[test]
fn rescaling_preserves_mass_and_scales_moment() {
    let p = ex_a();
    let s = BarenblattSpec::new(&p, 1.0).unwrap();
    let g = grid(&p, 2000);
    let base = barenblatt_eval(&s, &g);
    let same = rescale_mu(&s, 1.0, &g);
    assert_eq!(base.values(), same.values());
    let m0 = g.integrate_gamma(&base).unwrap();
    let mom0 = g.moment_gamma(&base, p.two_alpha()).unwrap().unwrap();
    let exact_mom = barenblatt_moment(&s).unwrap();
    assert!((mom0 / exact_mom - 1.0).abs() < 1e-6);
    for mu in [0.5, 2.0] {
        let f = rescale_mu(&s, mu, &g);
        assert!(
            (g.integrate_gamma(&f).unwrap() / m0 - 1.0).abs() < 1e-6,
            "mu = {mu}"
        );
        let mom = g.moment_gamma(&f, p.two_alpha()).unwrap().unwrap();
        assert!(
            (mom / (mu.powf(-p.two_alpha()) * mom0) - 1.0).abs() < 1e-6,
            "mu = {mu}"
        );
    }
}

#[test]
fn scaling_law_branches_and_ode() {
    let p = ex_a();
    let t = 1.5;
    let f = SelfSimilarFrame::new(&p, t).unwrap();
    let k = (5.0 - 1.0) * (0.9 - 0.7);
    assert!((f.r0() - (k * t).powf(1.0 / k)).abs() < 1e-13);
    let crit = SelfSimilarFrame::new(&exact(5, "0.7", "0.2", "1", false), 0.25).unwrap();
    assert_eq!(crit.branch, FrameBranch::Critical);
    assert!((crit.r_of_tau(2.0).unwrap() - 2.25f64.exp()).abs() < 1e-12);
    let sub_p = exact(5, "0.5", "0.2", "1", false);
    let sub = SelfSimilarFrame::new(&sub_p, 2.0).unwrap();
    let rs: Vec<f64> = [1.9, 1.99, 1.999]
        .iter()
        .map(|&tau| sub.r_of_tau(tau).unwrap())
        .collect();
    assert!(rs[0] < rs[1] && rs[1] < rs[2] && rs[2] > 1e3);
    assert!(matches!(
        sub.r_of_tau(2.0),
        Err(ProfileError::BeyondExtinction { .. })
    ));
    for (pp, frame) in [(p.clone(), f), (sub_p.clone(), sub)] {
        let k = (pp.d as f64 - pp.gamma) * (pp.m - pp.threshold_value(Threshold::Mc));
        for tau in [0.1, 0.7, 1.2] {
            let h = 1e-5;
            let fd =
                (frame.r_of_tau(tau + h).unwrap() - frame.r_of_tau(tau - h).unwrap()) / (2.0 * h);
            let r = frame.r_of_tau(tau).unwrap();
            assert!((fd / r.powf(1.0 - k) - 1.0).abs() < 1e-8, "tau = {tau}");
        }
    }
}

#[test]
fn barenblatt_solution_is_stationary_in_self_similar_variables() {
    let p = ex_a();
    let s = BarenblattSpec::new(&p, 1.0).unwrap();
    let frame = SelfSimilarFrame::new(&p, 1.0).unwrap();
    let wide = Arc::new(RadialGrid::new(&p, 1e-7, 1e7, 4000).unwrap());
    let target = grid(&p, 2000);
    let b = barenblatt_eval(&s, &target);
    for tau in [0.0, 0.5, 4.0] {
        let u = barenblatt_solution(&s, &frame, tau, &wide).unwrap();
        let (v, t) = to_self_similar(&u, tau, &frame, &target).unwrap();
        let expected_t = (frame.r_of_tau(tau).unwrap() / frame.r0()).ln();
        assert!((t - expected_t).abs() < 1e-14);
        let worst = v
            .values()
            .iter()
            .zip(b.values())
            .map(|(a, e)| (a / e - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "tau = {tau}: {worst}");
    }
    let (_, t0) = to_self_similar(
        &barenblatt_solution(&s, &frame, 0.0, &wide).unwrap(),
        0.0,
        &frame,
        &target,
    )
    .unwrap();
    assert_eq!(t0, 0.0);
}

#[test]
fn change_of_variables_round_trip() {
    let p = ex_a();
    let frame = SelfSimilarFrame::new(&p, 0.8).unwrap();
    let wide = Arc::new(RadialGrid::new(&p, 1e-6, 1e6, 3000).unwrap());
    let inner = Arc::new(RadialGrid::new(&p, 1e-2, 1e2, 800).unwrap());
    let u = RadialField::from_fn(wide.clone(), Tail::None, |r| {
        (1.0 + r * r).powf(-3.0) * (1.0 + 0.3 * (-(r.ln() - 0.5).powi(2)).exp())
    });
    let tau = 0.6;
    let (v, t) = to_self_similar(&u, tau, &frame, &wide).unwrap();
    let (back, tau_back) = from_self_similar(&v, t, &frame, &inner).unwrap();
    assert!((tau_back - tau).abs() < 1e-12);
    for (r, b) in inner.r().iter().zip(back.values()) {
        let e = (1.0 + r * r).powf(-3.0) * (1.0 + 0.3 * (-(r.ln() - 0.5).powi(2)).exp());
        assert!((b / e - 1.0).abs() < 1e-6, "r = {r}");
    }
}

#[test]
fn sandwich_examples() {
    let p = ex_a();
    let g = grid(&p, 1200);
    let s2 = BarenblattSpec::new(&p, 2.0).unwrap();
    let sw = sandwich_constants(&barenblatt_eval(&s2, &g), None).unwrap();
    assert!((sw.c - 2.0).abs() < 1e-9);
    assert!(sw.w1 <= 1.0 + 1e-9 && 1.0 - 1e-9 <= sw.w2);
    let explicit = sandwich_constants(&barenblatt_eval(&s2, &g), Some(1.0)).unwrap();
    assert!((explicit.w1 - 2f64.powi(-10)).abs() < 1e-12);
    let bumped = RadialField::from_fn(g.clone(), s2.tail(), |r| {
        s2.value(r) * (1.0 + 0.2 * (-(r.ln()).powi(2)).exp())
    });
    let sw = sandwich_constants(&bumped, None).unwrap();
    assert!(sw.c2 < sw.c && sw.c < sw.c1, "{sw:?}");
    assert!((sw.c1 - 2.0).abs() < 1e-9);
    assert!(sw.w1 < 1.0 && sw.w2 > 1.0);
    let mut neg = bumped.clone();
    neg.values_mut()[10] = 0.0;
    assert!(matches!(
        sandwich_constants(&neg, None),
        Err(ProfileError::NotSandwichable(_))
    ));
}

#[test]
fn relative_mass_of_bounds_converges() {
    let p = ex_a();
    let s1 = BarenblattSpec::new(&p, 2.0).unwrap();
    let s2 = BarenblattSpec::new(&p, 0.5).unwrap();
    let pw = p.d as f64 - p.gamma;
    let diff = |x: f64| (s2.value(x.exp()) - s1.value(x.exp())) * (pw * x).exp();
    let parts: Vec<f64> = [(2.0, 4.0), (4.0, 6.0), (6.0, 8.0)]
        .iter()
        .map(|&(a, b)| adaptive_simpson(&diff, a, b, 1e-16))
        .collect();
    assert!(parts.iter().all(|v| *v > 0.0));
    assert!(parts[1] < 1e-2 * parts[0] && parts[2] < 1e-2 * parts[1]);
    let sub = exact(5, "0.5", "0.2", "1", false);
    let g = grid(&sub, 400);
    let b = barenblatt_eval(&BarenblattSpec::new(&sub, 1.0).unwrap(), &g);
    assert_eq!(
        solve_relative_mass(&b, 0.5, 2.0),
        Err(ProfileError::RelativeMassUnsolvable)
    );
}
