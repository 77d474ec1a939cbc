mod support;

use std::f64::consts::PI;

use pseudoheat::geometry::HoricyclicPoint;
use pseudoheat::gfunc::{apply_operator, g_derivative};
use pseudoheat::kernels::{
    flat_kernel, kernel, kernel_d3, kernel_d4, kernel_even, kernel_odd, EvalParams, KernelContext,
};
use support::abel_oracle::d3_by_inversion;
use support::fd_oracle::g_derivative_oracle;

fn params(dim: usize, tau: f64) -> EvalParams {
    EvalParams::with_default_units(dim, tau).unwrap()
}

fn rel(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

#[test]
fn d3_matches_abel_inversion_oracle() {
    let p = params(3, 0.5);
    assert_eq!(p.rate(), 0.5);
    for s in [0.0, 0.3, 1.0, 2.0, 3.0] {
        let got = kernel_d3(&p, s).unwrap();
        let want = d3_by_inversion(p.rate(), s);
        assert!(rel(got.value, want) <= 1e-5, "s={s}: {} vs {want}", got.value);
        assert!(got.err_est <= 1e-8 * got.value);
    }
}

#[test]
fn d3_tail_decays_monotonically() {
    let p = params(3, 1.0);
    let mut prev = kernel_d3(&p, 5.0).unwrap().value;
    for i in 1..=20 {
        let v = kernel_d3(&p, 5.0 + 0.25 * i as f64).unwrap().value;
        assert!(v > 0.0 && v < prev);
        prev = v;
    }
}

#[test]
fn d3_small_time_exponent() {
    let tau = 1e-3;
    let v = kernel_d3(&params(3, tau), 1.0).unwrap().value;
    let ratio = -v.ln() * 4.0 * tau;
    assert!((ratio - 1.0).abs() < 0.02, "ratio {ratio}");
}

#[test]
fn d4_reference_value() {
    let want = (1.0 / (4.0 * PI)).powf(1.5) / 1f64.sinh() * (-0.25f64 - 0.75).exp();
    let got = kernel_d4(&params(4, 1.0), 1.0).unwrap();
    assert!(rel(got.value, want) < 1e-15);
}

#[test]
fn even_formula_reproduces_d4() {
    for tau in [0.1, 0.5, 1.0, 2.0] {
        let p = params(4, tau);
        for i in 0..=49 {
            let s = 0.1 + 0.1 * i as f64;
            let even = kernel_even(&p, s).unwrap().value;
            let d4 = kernel_d4(&p, s).unwrap().value;
            assert!(rel(even, d4) <= 1e-12, "tau={tau} s={s}: {even} vs {d4}");
        }
        let at_origin = kernel_even(&p, 0.0).unwrap().value;
        assert!(rel(at_origin, kernel_d4(&p, 0.0).unwrap().value) <= 1e-12);
    }
}

#[test]
fn d6_matches_fd_oracle() {
    let p = params(6, 1.0);
    let got = kernel_even(&p, 1.0).unwrap().value;
    let want = g_derivative_oracle(p.rate(), p.shift(), 2, 1.0) / (4.0 * PI * PI);
    assert!(got > 0.0);
    assert!(rel(got, want) <= 1e-6, "{got} vs {want}");
}

#[test]
fn odd_formula_at_d3_is_mckean() {
    for tau in [0.25, 1.0] {
        let p = params(3, tau);
        for s in [0.0, 0.5, 1.0, 2.5] {
            let odd = kernel_odd(&p, s).unwrap().value;
            let d3 = kernel_d3(&p, s).unwrap().value;
            assert!(rel(odd, d3) <= 1e-12, "tau={tau} s={s}: {odd} vs {d3}");
        }
    }
}

#[test]
fn d5_is_positive() {
    let v = kernel_odd(&params(5, 1.0), 1.0).unwrap();
    assert!(v.value > 0.0);
    assert!(v.err_est < 1e-8 * v.value);
}

#[test]
fn positivity_and_monotone_decay() {
    let ctx = KernelContext::default();
    let grid: Vec<f64> = (0..=24).map(|i| 0.25 * i as f64).collect();
    for dim in 3..=8 {
        for tau in [0.1, 0.5, 1.0, 2.0] {
            let p = params(dim, tau);
            let mut prev = f64::INFINITY;
            for &s in &grid {
                let v = ctx.kernel(&p, s).unwrap().value;
                assert!(v > 0.0, "D={dim} tau={tau} s={s}: {v}");
                assert!(v < prev, "D={dim} tau={tau} s={s}: {v} >= {prev}");
                prev = v;
            }
        }
    }
}

#[test]
fn flat_space_limit() {
    for dim in 3..=8 {
        for tau in [1e-3, 5e-4] {
            let p = params(dim, tau);
            for s in [0.0, 0.02, 0.05] {
                let got = kernel(&p, s).unwrap().value;
                let want = flat_kernel(&p, s);
                assert!(rel(got, want) < 0.01, "D={dim} tau={tau} s={s}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn first_curvature_correction_at_origin() {
    // Diagonal expansion 1 + (R/6) tau with R = -n(n-1), times the e^{tau/4}
    // carried by these kernels.
    for dim in 3..=8 {
        let n = (dim - 1) as f64;
        let slope = 0.25 - n * (n - 1.0) / 6.0;
        for tau in [1e-3, 1e-2] {
            let p = params(dim, tau);
            let deviation = kernel(&p, 0.0).unwrap().value / flat_kernel(&p, 0.0) - 1.0;
            let second_order = 2.0 * (slope * tau).powi(2) + 1e-9;
            assert!(
                (deviation - slope * tau).abs() < second_order.max(0.05 * (slope * tau).abs()),
                "D={dim} tau={tau}: {deviation} vs {}",
                slope * tau
            );
        }
    }
}

#[test]
fn even_recursion_is_consistent() {
    for dim in [6usize, 8, 10] {
        let p = params(dim, 0.7);
        let n = ((dim - 2) / 2) as u32;
        let lower = g_derivative(p.rate(), p.shift(), n - 1).unwrap();
        let stepped = apply_operator(&lower);
        let direct = g_derivative(p.rate(), p.shift(), n).unwrap();
        for s in [0.2, 1.0, 3.0] {
            let a = stepped.evaluate(s).unwrap();
            let b = direct.evaluate(s).unwrap();
            assert!(rel(a, b) <= 1e-12);
        }
    }
}

#[test]
fn kernel_between_points_uses_distance() {
    let p = params(4, 0.5);
    let q1 = HoricyclicPoint::new(1.0, vec![0.0, 0.0]).unwrap();
    let q2 = HoricyclicPoint::new(2.0, vec![0.5, -0.3]).unwrap();
    let ctx = KernelContext::global();
    let v = ctx.kernel_between(&p, &q1, &q2).unwrap();
    let d = pseudoheat::geometry::geodesic_distance(&q1, &q2).unwrap();
    assert_eq!(v.value, kernel_d4(&p, d).unwrap().value);
    let wrong = HoricyclicPoint::new(1.0, vec![0.0]).unwrap();
    assert!(ctx.kernel_between(&p, &q1, &wrong).is_err());
}
