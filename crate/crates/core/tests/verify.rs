use pseudoheat::geometry::{normalize_pair, HoricyclicPoint};
use pseudoheat::kernels::{EvalParams, KernelContext};
use pseudoheat::verify::{
    abel_residual, abel_rhs, chapman_kolmogorov, gfunc_consistency, horicyclic_pde_residual,
    mass_multiplicativity, radial_pde_residual, sphere_area, tolerance, total_mass, unit_mass,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(dim: usize, tau: f64) -> EvalParams {
    EvalParams::with_default_units(dim, tau).unwrap()
}

fn l_grid() -> Vec<f64> {
    [0.0f64, 0.5, 1.0, 2.0, 3.0].iter().map(|s| s.cosh()).collect()
}

#[test]
fn sphere_areas() {
    let pi = std::f64::consts::PI;
    assert!((sphere_area(0) - 2.0).abs() < 1e-14);
    assert!((sphere_area(1) - 2.0 * pi).abs() < 1e-13);
    assert!((sphere_area(2) - 4.0 * pi).abs() < 1e-13);
    assert!((sphere_area(3) - 2.0 * pi * pi).abs() < 1e-13);
}

#[test]
fn abel_rhs_at_d4_is_plain_gaussian() {
    // Gamma(1) (2 pi)^{-1} (a/pi)^{1/2} e^{-a s^2 + E}
    let p = params(4, 1.0);
    let want = (0.25 / std::f64::consts::PI).sqrt() / (2.0 * std::f64::consts::PI) * (-0.25f64 - 0.75).exp();
    assert!((abel_rhs(&p, 1.0) - want).abs() < 1e-15 * want);
}

#[test]
fn abel_equation_holds() {
    let ctx = KernelContext::default();
    for dim in 3..=7 {
        for tau in [0.5, 1.0] {
            let r = abel_residual(&ctx, &params(dim, tau), &l_grid(), tolerance::abel(dim)).unwrap();
            assert!(r.passed, "D={dim} tau={tau}: {}", r.residual_norm);
            assert_eq!(r.details.len(), 5);
            assert!(!r.nonconverged);
        }
    }
}

#[test]
fn abel_rejects_bad_grid() {
    let ctx = KernelContext::default();
    assert!(abel_residual(&ctx, &params(4, 1.0), &[0.5], 1e-6).is_err());
}

#[test]
fn radial_heat_equation_with_fitted_constant() {
    let ctx = KernelContext::default();
    let s_grid: Vec<f64> = (0..=10).map(|i| 0.1 + 0.49 * i as f64).collect();
    let tau_grid = [0.1, 0.5, 1.0, 2.0];
    let mut constants = Vec::new();
    for dim in 3..=8 {
        let r = radial_pde_residual(&ctx, &params(dim, 1.0), &s_grid, &tau_grid, tolerance::pde_radial(dim)).unwrap();
        assert!(r.passed, "D={dim}: {}", r.residual_norm);
        assert!(r.metrics["c_spread"] <= tolerance::PDE_C_SPREAD);
        constants.push(r.metrics["fitted_c"]);
    }
    for c in &constants {
        assert!((c - constants[1]).abs() <= 1e-5);
        assert!((c - 0.25).abs() <= 1e-6, "fitted c = {c}");
    }
}

fn random_pairs(dim: usize, n: usize, seed: u64) -> Vec<(HoricyclicPoint, HoricyclicPoint)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| {
        let y = rng.gen_range(0.5..2.5);
        let x = (0..dim - 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        HoricyclicPoint::new(y, x).unwrap()
    };
    (0..n).map(|_| (point(&mut rng), point(&mut rng))).collect()
}

#[test]
fn horicyclic_operator_agrees_with_radial_reduction() {
    let ctx = KernelContext::default();
    let s_grid = [0.5, 1.0, 2.0];
    for dim in [3usize, 4] {
        let p = params(dim, 1.0);
        let mut pairs = vec![(
            HoricyclicPoint::new(1.0, vec![0.0; dim - 2]).unwrap(),
            HoricyclicPoint::new(2.0, vec![1.0; dim - 2]).unwrap(),
        )];
        pairs.extend(random_pairs(dim, 20, 7));
        let hori = horicyclic_pde_residual(&ctx, &p, &pairs, tolerance::PDE_HORICYCLIC).unwrap();
        assert!(hori.passed, "D={dim}: {}", hori.residual_norm);
        let radial = radial_pde_residual(&ctx, &p, &s_grid, &[1.0], 1e-5).unwrap();
        let dc = hori.metrics["fitted_c"] - radial.metrics["fitted_c"];
        assert!(dc.abs() <= 1e-5, "D={dim}: c differs by {dc}");
    }
}

#[test]
fn horicyclic_residual_invariant_under_normalization() {
    let ctx = KernelContext::default();
    let p = params(4, 1.0);
    let pairs = random_pairs(4, 5, 99);
    let moved: Vec<_> = pairs
        .iter()
        .map(|(a, b)| {
            let (a2, b2, _) = normalize_pair(a, b).unwrap();
            (a2, b2)
        })
        .collect();
    let r1 = horicyclic_pde_residual(&ctx, &p, &pairs, 1e-4).unwrap();
    let r2 = horicyclic_pde_residual(&ctx, &p, &moved, 1e-4).unwrap();
    for (d1, d2) in r1.details.iter().zip(&r2.details) {
        assert!((d1.values["s"] - d2.values["s"]).abs() < 1e-10);
    }
    assert!(r2.passed);
}

#[test]
fn horicyclic_rejects_higher_dimensions() {
    let ctx = KernelContext::default();
    let pairs = random_pairs(5, 1, 1);
    assert!(horicyclic_pde_residual(&ctx, &params(5, 1.0), &pairs, 1e-4).is_err());
}

#[test]
fn semigroup_property() {
    let ctx = KernelContext::default();
    for dim in 3..=5 {
        let p = params(dim, 0.5);
        for d in [0.0, 1.0, 2.0] {
            let r = chapman_kolmogorov(&ctx, &p, &p, d, tolerance::chapman_kolmogorov(dim)).unwrap();
            assert!(r.passed, "D={dim} d={d}: {}", r.residual_norm);
        }
    }
}

#[test]
fn semigroup_with_unequal_times() {
    let ctx = KernelContext::default();
    let r = chapman_kolmogorov(&ctx, &params(4, 0.3), &params(4, 0.9), 1.5, 1e-4).unwrap();
    assert!(r.passed, "{}", r.residual_norm);
    let conv = r.details[0].values["convolution"];
    let target = r.details[0].values["target"];
    assert!(conv > 0.0 && target > 0.0);
}

#[test]
fn mass_is_multiplicative_and_exponential() {
    let ctx = KernelContext::default();
    for dim in 3..=6 {
        let r = mass_multiplicativity(&ctx, &params(dim, 1.0), &[0.25, 0.5, 1.0], tolerance::MASS).unwrap();
        assert!(r.passed, "D={dim}: {}", r.residual_norm);
        assert_eq!(r.details.len(), 6);
        assert!((r.metrics["mass_rate"] - 0.25).abs() < 1e-6);
    }
}

#[test]
fn mass_tends_to_one_at_small_time() {
    let ctx = KernelContext::default();
    for dim in 3..=6 {
        let m = total_mass(&ctx, &params(dim, 1e-3)).unwrap();
        assert!((m - 1.0).abs() < 1e-3, "D={dim}: {m}");
    }
}

#[test]
fn unit_mass_reports_exponential_growth() {
    // These kernels carry a factor e^{tau/4}; the unit-mass check reports it.
    let ctx = KernelContext::default();
    let r = unit_mass(&ctx, &params(3, 1.0), &[0.25, 1.0], 1e-4).unwrap();
    assert!(!r.passed);
    let m = r.details[1].values["M"];
    assert!((m - 0.25f64.exp()).abs() < 1e-8, "{m}");
}

#[test]
fn gfunc_suite_passes() {
    for dim in [4usize, 6, 8, 12] {
        let p = params(dim, 1.0);
        let r = gfunc_consistency(&p, 5, tolerance::GFUNC_CONTINUITY).unwrap();
        assert!(r.passed, "D={dim}: {}", r.residual_norm);
    }
}

#[test]
fn reports_serialize_with_schema_field_names() {
    let ctx = KernelContext::default();
    let r = abel_residual(&ctx, &params(4, 1.0), &[1.0], 1e-6).unwrap();
    let json = serde_json::to_value(&r).unwrap();
    for key in ["check", "D", "residual", "tolerance", "passed", "details"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["check"], "abel");
}
