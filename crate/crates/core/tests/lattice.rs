use std::f64::consts::PI;

use pseudoheat::geometry::{geodesic_distance, HoricyclicPoint};
use pseudoheat::kernels::{flat_kernel, EvalParams, KernelContext};
use pseudoheat::lattice::{
    convergence_study, lattice_kernel, short_time_factor, slice_normalization, x_marginal_check, LatticeSpec,
};
use pseudoheat::verify::tolerance;

fn params(dim: usize, tau: f64) -> EvalParams {
    EvalParams::with_default_units(dim, tau).unwrap()
}

fn endpoints(dim: usize) -> (HoricyclicPoint, HoricyclicPoint) {
    (
        HoricyclicPoint::new(1.0, vec![0.0; dim - 2]).unwrap(),
        HoricyclicPoint::new(1.2, vec![0.3; dim - 2]).unwrap(),
    )
}

/// Plain trapezoid over a wide symmetric window; spectrally accurate for
/// this smooth, rapidly decaying integrand.
fn trapezoid_normalization(x: f64) -> f64 {
    let width = 40.0 / x.sqrt();
    let n = 20_000;
    let h = 2.0 * width / n as f64;
    (0..=n)
        .map(|i| {
            let u = -width + h * i as f64;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * (-2.0 * x * (u.cosh() - 1.0)).exp()
        })
        .sum::<f64>()
        * h
}

#[test]
fn slice_normalization_matches_trapezoid() {
    for x in [0.5, 2.0, 8.0, 64.0, 512.0] {
        let got = slice_normalization(x).unwrap();
        let want = trapezoid_normalization(x);
        assert!(((got - want) / want).abs() < 1e-11, "x={x}: {got} vs {want}");
        // Gaussian approximation with the first correction.
        let gauss = (PI / x).sqrt() * (1.0 - 1.0 / (16.0 * x));
        assert!(((got - gauss) / got).abs() < 2.0 / (x * x), "x={x}");
    }
    assert!(slice_normalization(0.0).is_err());
}

#[test]
fn one_slice_is_the_short_time_factor() {
    for dim in [3usize, 4] {
        let p = params(dim, 0.25);
        let (q1, q2) = endpoints(dim);
        let one = lattice_kernel(&p, &q1, &q2, &LatticeSpec::monte_carlo(1, 10_000, 3)).unwrap();
        assert_eq!(one.err_est, 0.0);
        assert_eq!(one.value, short_time_factor(&p, &q1, &q2).unwrap());
    }
    let p = params(3, 0.25);
    let (q1, q2) = endpoints(3);
    let quad = lattice_kernel(&p, &q1, &q2, &LatticeSpec::nested_quadrature(1)).unwrap();
    assert_eq!(quad.value, short_time_factor(&p, &q1, &q2).unwrap());
}

#[test]
fn one_slice_written_out_by_hand() {
    // kappa = 1/4, eps = tau: (kappa/(pi tau y1 y2))^{1/2} (y1 y2)^{1/2}
    // exp(-kappa R^2/(tau y1 y2)) exp(-(kappa/tau) 4 sinh^2(dz/2)) / Z
    let tau = 0.25;
    let (q1, q2) = endpoints(3);
    let (y1, y2, r) = (1.0f64, 1.2f64, 0.3f64);
    let k = 0.25 / tau;
    let dz = (y2 / y1).ln();
    let want = (k / PI).sqrt() * (-k * r * r / (y1 * y2)).exp() * (-k * 4.0 * (0.5 * dz).sinh().powi(2)).exp()
        / trapezoid_normalization(k);
    let got = short_time_factor(&params(3, tau), &q1, &q2).unwrap();
    assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn one_slice_reduces_to_flat_gaussian() {
    for dim in [3usize, 4] {
        let tau = 1e-4;
        let p = params(dim, tau);
        let q1 = HoricyclicPoint::new(1.0, vec![0.0; dim - 2]).unwrap();
        let q2 = HoricyclicPoint::new(1.005, vec![0.01; dim - 2]).unwrap();
        let s = geodesic_distance(&q1, &q2).unwrap();
        let got = short_time_factor(&p, &q1, &q2).unwrap();
        let want = flat_kernel(&p, s);
        assert!(((got - want) / want).abs() < 0.01, "D={dim}: {got} vs {want}");
    }
}

#[test]
fn monte_carlo_agrees_with_nested_quadrature() {
    let p = params(3, 0.25);
    let (q1, q2) = endpoints(3);
    for n in [2usize, 3] {
        let quad = lattice_kernel(&p, &q1, &q2, &LatticeSpec::nested_quadrature(n)).unwrap();
        let mc = lattice_kernel(&p, &q1, &q2, &LatticeSpec::monte_carlo(n, 400_000, 11)).unwrap();
        assert!(quad.err_est < 1e-8);
        assert!((mc.value - quad.value).abs() < 4.0 * mc.err_est, "N={n}: {mc:?} vs {quad:?}");
    }
}

#[test]
fn monte_carlo_is_deterministic_across_thread_counts() {
    let p = params(4, 0.25);
    let (q1, q2) = endpoints(4);
    let spec = LatticeSpec::monte_carlo(8, 100_000, 42);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| lattice_kernel(&p, &q1, &q2, &spec).unwrap())
    };
    let a = run(1);
    let b = run(4);
    let c = run(4);
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(b.value.to_bits(), c.value.to_bits());
    assert_eq!(a.err_est.to_bits(), b.err_est.to_bits());
    let other = lattice_kernel(&p, &q1, &q2, &LatticeSpec::monte_carlo(8, 100_000, 43)).unwrap();
    assert_ne!(other.value, a.value);
}

#[test]
fn converges_to_closed_form_at_first_order() {
    let ctx = KernelContext::default();
    for dim in [3usize, 4] {
        let p = params(dim, 0.25);
        let (q1, q2) = endpoints(dim);
        let study = convergence_study(&ctx, &p, &q1, &q2, &[4, 8, 16, 32], 300_000, 5).unwrap();
        assert!(study.order >= 0.8, "D={dim}: order {}", study.order);
        let devs: Vec<f64> = study.rows.iter().map(|r| r.rel_dev.abs()).collect();
        assert!(devs.windows(2).all(|w| w[1] < w[0]), "D={dim}: {devs:?}");
        assert!(devs[3] < 0.05);
        let ex = study.extrapolated.unwrap();
        let closed = study.rows[0].closed_value;
        assert!((ex.value - closed).abs() < 3.0 * ex.err_est, "D={dim}: {ex:?} vs {closed}");
        assert!((study.limit_ratio - 1.0).abs() < 3.0 * ex.err_est / closed);
    }
}

#[test]
fn x_marginal_matches_free_gaussian_in_log_height() {
    let ctx = KernelContext::default();
    for dim in 3..=6 {
        for tau in [0.25, 1.0] {
            for (y1, y2) in [(1.0, 1.0), (1.0, 1.2), (0.5, 3.0)] {
                let r = x_marginal_check(&ctx, &params(dim, tau), y1, y2, tolerance::X_MARGINAL).unwrap();
                assert!(r.passed, "D={dim} tau={tau} y=({y1},{y2}): {}", r.residual_norm);
            }
        }
    }
}

#[test]
fn x_marginal_scales_with_common_height() {
    let ctx = KernelContext::default();
    let p = params(5, 0.5);
    let base = x_marginal_check(&ctx, &p, 1.0, 1.5, 1e-5).unwrap();
    let scaled = x_marginal_check(&ctx, &p, 3.0, 4.5, 1e-5).unwrap();
    let ratio = scaled.details[0].values["lhs"] / base.details[0].values["lhs"];
    assert!((ratio - 9.0f64.powf(1.5)).abs() < 1e-6 * ratio, "{ratio}");
}

#[test]
fn rejects_unsupported_configurations() {
    let (q1, q2) = endpoints(3);
    let p3 = params(3, 0.25);
    assert!(lattice_kernel(&p3, &q1, &q2, &LatticeSpec::nested_quadrature(4)).is_err());
    assert!(lattice_kernel(&p3, &q1, &q2, &LatticeSpec::monte_carlo(4, 100, 1)).is_err());
    assert!(lattice_kernel(&p3, &q1, &q2, &LatticeSpec::monte_carlo(65, 10_000, 1)).is_err());
    assert!(lattice_kernel(&p3, &q1, &q2, &LatticeSpec::monte_carlo(0, 10_000, 1)).is_err());
    let (a, b) = endpoints(5);
    assert!(lattice_kernel(&params(5, 0.25), &a, &b, &LatticeSpec::monte_carlo(4, 10_000, 1)).is_err());
    assert!(lattice_kernel(&params(4, 0.25), &q1, &q2, &LatticeSpec::monte_carlo(4, 10_000, 1)).is_err());
    let ctx = KernelContext::default();
    assert!(x_marginal_check(&ctx, &params(7, 1.0), 1.0, 1.0, 1e-5).is_err());
}
