use std::sync::Arc;

use super::*;
use crate::functionals::{linearized_fisher, linearized_free_energy};
use crate::grid::{RadialField, Tail};
use crate::testkit::{classical, ex_a, exact, grid};

fn lowest(p: &Params, r_max: f64, n: usize, ell: u32) -> f64 {
    let g = RadialGrid::new(p, 1e-4, r_max, n).unwrap();
    let op = assemble_sector(p, 1.0, &g, ell).unwrap();
    lowest_eigenvalues(&op, 1).unwrap()[0] / op.alpha2
}

#[test]
fn operator_structure() {
    let p = ex_a();
    let g = grid(&p, 400);
    for ell in 0..3 {
        let op = assemble_sector(&p, 1.0, &g, ell).unwrap();
        assert_eq!(op.stiff_off.len(), op.len() - 1);
        assert!(op.mass.iter().all(|m| *m > 0.0));
        assert!(op.stiff_diag.iter().all(|d| *d > 0.0));
        let mut rng = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let x: Vec<f64> = (0..op.len()).map(|_| next()).collect();
        let y: Vec<f64> = (0..op.len()).map(|_| next()).collect();
        let kx = op.apply_stiffness(&x);
        let ky = op.apply_stiffness(&y);
        let a: f64 = kx.iter().zip(&y).map(|(u, v)| u * v).sum();
        let b: f64 = ky.iter().zip(&x).map(|(u, v)| u * v).sum();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        assert!(op.forms(&x).0 >= 0.0);
    }
    let other = grid(&classical(), 400);
    assert!(matches!(
        assemble_sector(&p, 1.0, &other, 0),
        Err(SpectrumError::Grid(_))
    ));
}

#[test]
fn rayleigh_quotient_matches_linearized_functionals() {
    let p = ex_a();
    let g = grid(&p, 1000);
    let spec = BarenblattSpec::new(&p, 1.0).unwrap();
    let op = assemble_sector(&p, 1.0, &g, 0).unwrap();
    for shift in [-1.0, 0.0, 2.0] {
        let f = RadialField::from_fn(g.clone(), Tail::None, |r| {
            (-(r.ln() - shift).powi(2)).exp() + 0.1 * r.ln().sin()
        });
        let q =
            linearized_fisher(&f, &spec) / (2.0 * (1.0 - p.m) * linearized_free_energy(&f, &spec));
        assert!((op.rayleigh_quotient(f.values()) / q - 1.0).abs() < 1e-10);
    }
}

#[test]
fn closed_form_examples() {
    let p = ex_a();
    let l0 = lowest(&p, 1e4, 2000, 0);
    let l1 = lowest(&p, 1e4, 2000, 1);
    assert!((l0 / 26.667 - 1.0).abs() < 1e-2, "{l0}");
    assert!((l1 / 34.710 - 1.0).abs() < 1e-2, "{l1}");
    let dv = derive(&p);
    assert!((l0 / dv.lambda_10 - 1.0).abs() < 1e-3);
    assert!((l1 / dv.lambda_01 - 1.0).abs() < 1e-3);
    let c = classical();
    let lc = lowest(&c, 1e4, 2000, 1);
    assert!((lc / 10.0 - 1.0).abs() < 1e-2, "{lc}");
}

#[test]
fn refinement_convergence() {
    let p = ex_a();
    let target = derive(&p).lambda_10;
    let errs: Vec<f64> = [500, 1000, 2000, 4000]
        .iter()
        .map(|&n| (lowest(&p, 1e4, n, 0) / target - 1.0).abs())
        .collect();
    for w in errs.windows(2) {
        assert!(w[1] <= 1.1 * w[0], "{errs:?}");
    }
    assert!(errs[3] < 1e-4);
}

#[test]
fn truncation_robustness() {
    let p = ex_a();
    for ell in [0, 1] {
        let a = lowest(&p, 1e4, 2000, ell);
        let b = lowest(&p, 1e5, 2250, ell);
        assert!((a / b - 1.0).abs() < 1e-3, "ell = {ell}: {a} {b}");
    }
}

#[test]
fn constraint_removes_the_constant_mode() {
    let p = ex_a();
    let g = grid(&p, 800);
    let mut op = assemble_sector(&p, 1.0, &g, 0).unwrap();
    let constrained = lowest_eigenvalues(&op, 2).unwrap();
    assert!(constrained[0] > 1.0);
    op.constraint = None;
    let free = lowest_eigenvalues(&op, 2).unwrap();
    assert!(free[0].abs() < 1e-8 * constrained[0]);
    assert!((free[1] / constrained[0] - 1.0).abs() < 1e-12);
    let below = exact(5, "0.5", "0.2", "1", false);
    let gb = grid(&below, 400);
    assert!(assemble_sector(&below, 1.0, &gb, 0)
        .unwrap()
        .constraint
        .is_none());
}

#[test]
fn sectors_are_ordered() {
    let p = ex_a();
    let g = grid(&p, 1000);
    let mut prev = 0.0;
    for ell in 1..6 {
        let op = assemble_sector(&p, 1.0, &g, ell).unwrap();
        let l = lowest_eigenvalues(&op, 1).unwrap()[0];
        assert!(l >= prev, "ell = {ell}");
        prev = l;
    }
    let (l, f) = ground_state(&assemble_sector(&p, 1.0, &g, 1).unwrap()).unwrap();
    assert!(l > 0.0 && f.len() == g.len());
}

#[test]
fn reliability_flags() {
    let p = ex_a();
    let g = RadialGrid::new(&p, 1e-4, 1e4, 1500).unwrap();
    let rep = compare_to_formulas(&p, 1.0, &g, &[0, 1], 2).unwrap();
    assert!((rep.lambda_ess - 58.78).abs() < 0.01);
    for s in &rep.sectors {
        assert!(s.reliable[0], "sector {}", s.ell);
        assert!(s.rel_errors[0].unwrap() < 1e-2);
        assert!(s.eigenvalues.windows(2).all(|w| w[1] >= w[0]));
        assert!((s.eigenvalues[0] / rep.alpha2 - s.normalized[0]).abs() < 1e-12 * s.normalized[0]);
    }
    assert!(rep.warnings.is_empty());

    let mut found = false;
    for k in 0..40 {
        let m = format!("{:.3}", 0.60 + 0.01 * k as f64);
        let q = exact(5, &m, "0.2", "1", false);
        let dv = derive(&q);
        if q.compare_m(Threshold::MStar).is_equal() || dv.delta >= (dv.n + 2.0) / 2.0 {
            continue;
        }
        if dv.lambda_01 < dv.lambda_ess && (dv.lambda_10 <= 0.0 || dv.lambda_10 < dv.lambda_ess) {
            continue;
        }
        let gq = RadialGrid::new(&q, 1e-4, 1e4, 600).unwrap();
        let rep = compare_to_formulas(&q, 1.0, &gq, &[0, 1], 1).unwrap();
        for s in &rep.sectors {
            let pred = s.prediction.unwrap();
            if pred >= dv.lambda_ess || pred <= 0.0 {
                assert!(!s.reliable[0]);
                found = true;
            }
        }
        assert!(!rep.warnings.is_empty());
    }
    assert!(found);

    let near = exact(5, "0.58", "0.2", "1", false);
    let gn = RadialGrid::new(&near, 1e-4, 1e4, 800).unwrap();
    let rep = compare_to_formulas(&near, 1.0, &gn, &[0, 1], 3).unwrap();
    assert!(rep.lambda_ess < 1e-2);
    assert!(rep.warnings.iter().any(|w| w.contains("collapse")));
    assert!(rep.sectors.iter().all(|s| s.reliable.iter().all(|r| !r)));
}

#[test]
fn degenerate_gap_at_m_star() {
    let p = exact(6, "0.5", "0", "0", true);
    assert!(p.compare_m(Threshold::MStar).is_equal());
    let g = Arc::new(RadialGrid::new(&p, 1e-3, 1e3, 200).unwrap());
    assert!(matches!(
        compare_to_formulas(&p, 1.0, &g, &[0], 1),
        Err(SpectrumError::Param(ParamError::DegenerateGap(_)))
    ));
}
