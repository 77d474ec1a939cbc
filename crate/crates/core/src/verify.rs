//! Numerical certification of the kernels: the integral equation they were
//! derived from, the heat equation (radially and in horicyclic coordinates),
//! the semigroup property, and multiplicativity of the total mass.
//!
//! Every check returns a [`VerificationReport`]; `passed` is true exactly when
//! the worst residual is within tolerance and no grid point failed.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::geometry::{geodesic_distance, laplace_beltrami_apply, HoricyclicPoint};
use crate::gfunc::{g_derivative, S_MIN};
use crate::kernels::{EvalParams, KernelContext};
use crate::quadrature::{
    integrate_endpoint_weighted, integrate_finite, integrate_semi_infinite, QuadratureSpec,
};

/// Tolerances of the standard suites.
pub mod tolerance {
    pub const ABEL_EVEN: f64 = 1e-6;
    pub const ABEL_ODD: f64 = 1e-5;
    pub const PDE_RADIAL_CLOSED: f64 = 1e-7;
    pub const PDE_RADIAL_QUADRATURE: f64 = 1e-5;
    pub const PDE_C_SPREAD: f64 = 1e-6;
    pub const PDE_HORICYCLIC: f64 = 1e-4;
    pub const CK_D3: f64 = 1e-3;
    pub const CK: f64 = 1e-4;
    pub const MASS: f64 = 1e-4;
    pub const GFUNC_CONTINUITY: f64 = 1e-9;
    pub const X_MARGINAL: f64 = 1e-5;

    pub fn abel(dim: usize) -> f64 {
        if dim.is_multiple_of(2) { ABEL_EVEN } else { ABEL_ODD }
    }

    pub fn pde_radial(dim: usize) -> f64 {
        if dim.is_multiple_of(2) { PDE_RADIAL_CLOSED } else { PDE_RADIAL_QUADRATURE }
    }

    pub fn chapman_kolmogorov(dim: usize) -> f64 {
        if dim == 3 { CK_D3 } else { CK }
    }
}

/// One grid point of a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    /// Coordinates and intermediate values, keyed by name.
    pub values: BTreeMap<String, f64>,
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl PointRecord {
    pub(crate) fn new<const N: usize>(values: [(&str, f64); N], residual: f64) -> Self {
        Self {
            values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            residual: Some(residual),
            error: None,
        }
    }

    pub(crate) fn failed<const N: usize>(values: [(&str, f64); N], err: &Error) -> Self {
        Self {
            values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            residual: None,
            error: Some(err.to_string()),
        }
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    #[serde(rename = "check")]
    pub check_name: String,
    #[serde(rename = "D")]
    pub dim: usize,
    pub tau: Vec<f64>,
    pub grid: String,
    /// Worst relative residual; infinite when a grid point failed.
    #[serde(rename = "residual")]
    pub residual_norm: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// A grid point failed because quadrature did not converge.
    pub nonconverged: bool,
    /// Scalar results of the check other than the residual (fitted constants).
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub metrics: BTreeMap<String, f64>,
    pub details: Vec<PointRecord>,
}

impl VerificationReport {
    pub(crate) fn finish(
        check: &str,
        dim: usize,
        tau: Vec<f64>,
        grid: String,
        tolerance: f64,
        details: Vec<PointRecord>,
        errors: &[Error],
    ) -> Self {
        let mut residual_norm = details
            .iter()
            .filter_map(|p| p.residual)
            .fold(0.0f64, |acc, r| if r.is_nan() { f64::INFINITY } else { acc.max(r) });
        if details.iter().any(|p| p.residual.is_none()) || !errors.is_empty() {
            residual_norm = f64::INFINITY;
        }
        let nonconverged = errors.iter().any(Error::is_nonconvergence);
        Self {
            check_name: check.to_string(),
            dim,
            tau,
            grid,
            residual_norm,
            tolerance,
            passed: residual_norm <= tolerance,
            nonconverged,
            metrics: BTreeMap::new(),
            details,
        }
    }

    pub(crate) fn with_metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_string(), value);
        self
    }
}

fn grid_text(name: &str, values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
    format!("{name} in {{{}}}", items.join(", "))
}

/// Surface area of the unit `n`-sphere, `2 pi^{(n+1)/2} / Gamma((n+1)/2)`.
pub fn sphere_area(n: usize) -> f64 {
    let h = (n as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Right side of the integral equation,
/// `Gamma((D-2)/2) (2 pi)^{-(D-2)/2} (a/pi)^{1/2} exp(-a s^2 + E)`.
pub fn abel_rhs(params: &EvalParams, s: f64) -> f64 {
    let h = (params.dim() as f64 - 2.0) / 2.0;
    let a = params.rate();
    gamma(h) * (2.0 * PI).powf(-h) * (a / PI).sqrt() * (-a * s * s + params.shift()).exp()
}

fn outer_spec(inner: &QuadratureSpec) -> QuadratureSpec {
    QuadratureSpec::default()
        .with_rel_tol((inner.rel_tol * 100.0).max(1e-9))
        .with_abs_tol(f64::MIN_POSITIVE)
        .with_max_subdivisions(200)
}

/// Residual of `int_l^inf K(arccosh k) (k - l)^{(D-4)/2} dk = RHS(l)` on an
/// `l` grid.
///
/// The left side is integrated in `sigma = arccosh k`, where the weight
/// becomes `(cosh sigma - cosh s)^{(D-4)/2} sinh sigma`.
pub fn abel_residual(
    ctx: &KernelContext,
    params: &EvalParams,
    l_grid: &[f64],
    tolerance: f64,
) -> Result<VerificationReport> {
    if let Some(bad) = l_grid.iter().find(|l| !(**l >= 1.0)) {
        return Err(Error::invalid(format!("l grid values must be >= 1, got {bad}")));
    }
    let nu = (params.dim() as f64 - 4.0) / 2.0;
    let spec = outer_spec(ctx.spec());
    let results: Vec<(PointRecord, Option<Error>)> = l_grid
        .par_iter()
        .map(|&l| {
            let s = l.acosh();
            let failure = std::sync::Mutex::new(None);
            let integrand = |sig: f64| match ctx.kernel(params, sig) {
                Ok(k) => k.value * sig.sinh(),
                Err(e) => {
                    failure.lock().expect("lock").get_or_insert(e);
                    0.0
                }
            };
            let lhs = integrate_endpoint_weighted(integrand, s, nu, params.rate(), &spec);
            let lhs = match (failure.into_inner().expect("lock"), lhs) {
                (Some(e), _) | (None, Err(e)) => {
                    return (PointRecord::failed([("l", l), ("s", s)], &e), Some(e));
                }
                (None, Ok(v)) => v,
            };
            let rhs = abel_rhs(params, s);
            let residual = (lhs.value - rhs).abs() / rhs.abs();
            let rec = PointRecord::new(
                [("l", l), ("s", s), ("lhs", lhs.value), ("rhs", rhs), ("lhs_err", lhs.err_est)],
                residual,
            );
            (rec, None)
        })
        .collect();
    let (details, errors) = split(results);
    Ok(VerificationReport::finish(
        "abel",
        params.dim(),
        vec![params.tau()],
        grid_text("l", l_grid),
        tolerance,
        details,
        &errors,
    ))
}

fn split(results: Vec<(PointRecord, Option<Error>)>) -> (Vec<PointRecord>, Vec<Error>) {
    let mut details = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (rec, err) in results {
        details.push(rec);
        errors.extend(err);
    }
    (details, errors)
}

/// Kernel evaluation used by the PDE checks: closed forms as they are, and
/// quadrature-backed kernels with a tight tolerance so that finite
/// differences are not swamped by quadrature noise.
fn pde_context(ctx: &KernelContext) -> Result<KernelContext> {
    let spec = ctx
        .spec()
        .with_rel_tol(ctx.spec().rel_tol.min(1e-13))
        .with_max_subdivisions(ctx.spec().max_subdivisions.max(400));
    KernelContext::new(spec)
}

const D1: [f64; 4] = [1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0];
const D2: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];

/// Terms of `dK/dtau = nu L K + c K` at one point, from 5-point stencils.
struct HeatTerms {
    k: f64,
    dtau: f64,
    generator: f64,
}

impl HeatTerms {
    fn fitted_c(&self) -> f64 {
        (self.dtau - self.generator) / self.k
    }

    fn residual(&self, c: f64) -> f64 {
        let r = self.dtau - self.generator - c * self.k;
        r.abs() / (self.dtau.abs() + self.generator.abs() + (c * self.k).abs())
    }
}

/// `d f / d tau` from a 5-point stencil in `w = 1/tau`. The Gaussian exponent
/// `-s^2 w / 4` is linear in `w`, so the stencil is exact for the part of
/// `ln K` that varies fastest at small `tau`.
fn inverse_time_derivative(tau: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let w = 1.0 / tau;
    let hw = 0.002 * w;
    let mut fw = [0.0; 4];
    for (slot, off) in fw.iter_mut().zip([-2.0, -1.0, 1.0, 2.0]) {
        *slot = f(1.0 / (w + off * hw))?;
    }
    let dw = D1.iter().zip(&fw).map(|(c, v)| c * v).sum::<f64>() / hw;
    Ok(-w * w * dw)
}

/// Radial terms divided by `K`, from differences of `u = ln K`: `u` is close
/// to `-a s^2 + E` and so is far better resolved by polynomial stencils than
/// `K` itself, whose Gaussian tail varies on the scale `tau / s`.
fn radial_terms(ctx: &KernelContext, params: &EvalParams, s: f64) -> Result<(f64, HeatTerms)> {
    let dim = params.dim() as f64;
    let tau = params.tau();
    let hs = 0.02 * tau.sqrt().min(1.0) * s.min(1.0);
    let u = |p: &EvalParams, s: f64| ctx.kernel(p, s).map(|v| v.value.ln());
    let us = [
        u(params, s - 2.0 * hs)?,
        u(params, s - hs)?,
        u(params, s)?,
        u(params, s + hs)?,
        u(params, s + 2.0 * hs)?,
    ];
    let d1 = (D1[0] * us[0] + D1[1] * us[1] + D1[2] * us[3] + D1[3] * us[4]) / hs;
    let d2 = D2.iter().zip(&us).map(|(w, v)| w * v).sum::<f64>() / (hs * hs);
    let dtau = inverse_time_derivative(tau, |p_tau| u(&params.at_tau(p_tau)?, s))?;
    let generator = params.diffusion() * (d2 + d1 * d1 + (dim - 2.0) * d1 / s.tanh());
    Ok((us[2].exp(), HeatTerms { k: 1.0, dtau, generator }))
}

/// Residual of `dK/dtau = (hbar/2m) [d_ss + (D-2) coth(s) d_s] K + c K` on an
/// `(s, tau)` grid, with `c` fitted at the first grid point.
///
/// Reports the fitted `c` (`fitted_c`) and the largest deviation of the
/// pointwise fit from it (`c_spread`).
pub fn radial_pde_residual(
    ctx: &KernelContext,
    params: &EvalParams,
    s_grid: &[f64],
    tau_grid: &[f64],
    tolerance: f64,
) -> Result<VerificationReport> {
    if s_grid.is_empty() || tau_grid.is_empty() {
        return Err(Error::invalid("PDE grids must not be empty"));
    }
    if let Some(bad) = s_grid.iter().find(|s| !(**s >= 0.05)) {
        return Err(Error::invalid(format!("radial PDE grid needs s >= 0.05, got {bad}")));
    }
    let pctx = pde_context(ctx)?;
    let points: Vec<(f64, f64)> = tau_grid
        .iter()
        .flat_map(|&t| s_grid.iter().map(move |&s| (t, s)))
        .collect();
    let terms: Vec<Result<(f64, HeatTerms)>> = points
        .par_iter()
        .map(|&(tau, s)| radial_terms(&pctx, &params.at_tau(tau)?, s))
        .collect();
    let c = match &terms[0] {
        Ok((_, t)) => t.fitted_c(),
        Err(_) => f64::NAN,
    };
    let mut spread = 0.0f64;
    let mut details = Vec::with_capacity(points.len());
    let mut errors = Vec::new();
    for (&(tau, s), t) in points.iter().zip(terms) {
        match t {
            Ok((k, t)) => {
                spread = spread.max((t.fitted_c() - c).abs());
                details.push(PointRecord::new(
                    [("tau", tau), ("s", s), ("c_local", t.fitted_c()), ("K", k)],
                    t.residual(c),
                ));
            }
            Err(e) => {
                details.push(PointRecord::failed([("tau", tau), ("s", s)], &e));
                errors.push(e);
            }
        }
    }
    let grid = format!("{} x {}", grid_text("s", s_grid), grid_text("tau", tau_grid));
    Ok(
        VerificationReport::finish("pde-radial", params.dim(), tau_grid.to_vec(), grid, tolerance, details, &errors)
            .with_metric("fitted_c", c)
            .with_metric("c_spread", spread),
    )
}

/// The heat equation checked with the explicit horicyclic operator
/// `y^2 (d_yy + sum d_xx) - (D - 3) y d_y` acting on the second endpoint.
///
/// `c` is fitted on the first pair and reported as `fitted_c`.
pub fn horicyclic_pde_residual(
    ctx: &KernelContext,
    params: &EvalParams,
    pairs: &[(HoricyclicPoint, HoricyclicPoint)],
    tolerance: f64,
) -> Result<VerificationReport> {
    if !(3..=4).contains(&params.dim()) {
        return Err(Error::invalid("horicyclic PDE check supports D = 3 and D = 4"));
    }
    if pairs.is_empty() {
        return Err(Error::invalid("need at least one point pair"));
    }
    for (q1, q2) in pairs {
        if q1.dim() != params.dim() || q2.dim() != params.dim() {
            return Err(Error::invalid("points and parameters disagree on D"));
        }
    }
    let pctx = pde_context(ctx)?;
    let terms: Vec<Result<(f64, HeatTerms)>> = pairs
        .par_iter()
        .map(|(q1, q2)| horicyclic_terms(&pctx, params, q1, q2))
        .collect();
    let c = match &terms[0] {
        Ok((_, t)) => t.fitted_c(),
        Err(_) => f64::NAN,
    };
    let mut details = Vec::with_capacity(pairs.len());
    let mut errors = Vec::new();
    for ((q1, q2), t) in pairs.iter().zip(terms) {
        let at = [("y1", q1.y()), ("y2", q2.y())];
        match t {
            Ok((s, t)) => details.push(PointRecord::new(
                [at[0], at[1], ("s", s), ("c_local", t.fitted_c())],
                t.residual(c),
            )),
            Err(e) => {
                details.push(PointRecord::failed(at, &e));
                errors.push(e);
            }
        }
    }
    let grid = format!("{} endpoint pairs", pairs.len());
    Ok(
        VerificationReport::finish("pde-horicyclic", params.dim(), vec![params.tau()], grid, tolerance, details, &errors)
            .with_metric("fitted_c", c),
    )
}

fn horicyclic_terms(
    ctx: &KernelContext,
    params: &EvalParams,
    q1: &HoricyclicPoint,
    q2: &HoricyclicPoint,
) -> Result<(f64, HeatTerms)> {
    let s = geodesic_distance(q1, q2)?;
    let h = 1e-3 * q2.y();
    let failure = std::sync::Mutex::new(None);
    let f = |y: f64, x: &[f64]| {
        let value = HoricyclicPoint::new(y, x.to_vec())
            .and_then(|q| geodesic_distance(q1, &q))
            .and_then(|d| ctx.kernel(params, d));
        match value {
            Ok(v) => v.value,
            Err(e) => {
                failure.lock().expect("lock").get_or_insert(e);
                f64::NAN
            }
        }
    };
    let lap = laplace_beltrami_apply(f, q2, h)?;
    if let Some(e) = failure.into_inner().expect("lock") {
        return Err(e);
    }
    let tau = params.tau();
    let ht = 0.01 * tau;
    let mut kt = [0.0; 4];
    for (slot, off) in kt.iter_mut().zip([-2.0, -1.0, 1.0, 2.0]) {
        *slot = ctx.kernel(&params.at_tau(tau + off * ht)?, s)?.value;
    }
    let dtau = D1.iter().zip(&kt).map(|(w, v)| w * v).sum::<f64>() / ht;
    let k = ctx.kernel(params, s)?.value;
    Ok((s, HeatTerms { k, dtau, generator: params.diffusion() * lap }))
}

/// `rho(r, theta)` from `cosh rho = cosh r cosh d - sinh r sinh d cos theta`,
/// via `cosh rho - 1 = 2 sinh^2((r-d)/2) + 2 sinh r sinh d sin^2(theta/2)`.
fn third_side(r: f64, d: f64, theta: f64) -> f64 {
    let a = ((r - d) / 2.0).sinh();
    let b = (theta / 2.0).sin();
    let excess = 2.0 * a * a + 2.0 * r.sinh() * d.sinh() * b * b;
    crate::geometry::arc_from_excess(excess)
}

/// Semigroup check `int K_{tau1}(d(x,z)) K_{tau2}(d(z,y)) dV(z) = K_{tau1+tau2}(d)`
/// in geodesic polar coordinates about `x`.
pub fn chapman_kolmogorov(
    ctx: &KernelContext,
    p1: &EvalParams,
    p2: &EvalParams,
    d: f64,
    tolerance: f64,
) -> Result<VerificationReport> {
    let dim = p1.dim();
    if p2.dim() != dim || p1.mass() != p2.mass() || p1.hbar() != p2.hbar() {
        return Err(Error::invalid("both legs must share D, mass and hbar"));
    }
    if !(3..=5).contains(&dim) {
        return Err(Error::invalid("Chapman-Kolmogorov check supports D in 3..=5"));
    }
    if !(d >= 0.0) {
        return Err(Error::invalid("distance must be non-negative"));
    }
    let total = p1.at_tau(p1.tau() + p2.tau())?;
    let at = [("d", d)];
    let taus = vec![p1.tau(), p2.tau()];
    let grid = format!("d = {d}");
    let result = ck_integral(ctx, p1, p2, d).and_then(|conv| {
        let target = ctx.kernel(&total, d)?;
        Ok((conv, target.value))
    });
    let (details, errors) = match result {
        Ok((conv, target)) => {
            let residual = (conv - target).abs() / target;
            (
                vec![PointRecord::new([("d", d), ("convolution", conv), ("target", target)], residual)],
                vec![],
            )
        }
        Err(e) => (vec![PointRecord::failed(at, &e)], vec![e]),
    };
    Ok(VerificationReport::finish("ck", dim, taus, grid, tolerance, details, &errors))
}

fn ck_integral(ctx: &KernelContext, p1: &EvalParams, p2: &EvalParams, d: f64) -> Result<f64> {
    let dim = p1.dim();
    let (angular_weight, full_circle) = if dim == 3 {
        (2.0, true)
    } else {
        (sphere_area(dim - 3), false)
    };
    let spec = QuadratureSpec::default()
        .with_rel_tol(1e-8)
        .with_abs_tol(f64::MIN_POSITIVE)
        .with_max_subdivisions(200);
    let failure = std::sync::Mutex::new(None::<Error>);
    let record = |e: Error| {
        failure.lock().expect("lock").get_or_insert(e);
        0.0
    };
    let radial = |r: f64| {
        let k1 = match ctx.kernel(p1, r) {
            Ok(v) => v.value,
            Err(e) => return record(e),
        };
        let angular = |theta: f64| {
            let rho = third_side(r, d, theta);
            let w = if full_circle { 1.0 } else { theta.sin().powi(dim as i32 - 3) };
            match ctx.kernel(p2, rho) {
                Ok(v) => w * v.value,
                Err(e) => record(e),
            }
        };
        if d == 0.0 || r == 0.0 {
            // The angular integrand is constant: the full sphere area.
            return match ctx.kernel(p2, (r - d).abs()) {
                Ok(v) => sphere_area(dim - 2) * k1 * v.value * r.sinh().powi(dim as i32 - 2),
                Err(e) => record(e),
            };
        }
        let inner = integrate_finite(angular, 0.0, PI, &spec).map(|e| e.value);
        match inner {
            Ok(v) => angular_weight * k1 * v * r.sinh().powi(dim as i32 - 2),
            Err(e) => record(e),
        }
    };
    let est = integrate_semi_infinite(radial, 0.0, p1.rate().min(p2.rate()) / 2.0, &spec)?;
    if let Some(e) = failure.into_inner().expect("lock") {
        return Err(e);
    }
    Ok(est.value)
}

/// `M(tau) = Omega_{D-2} int_0^inf K(s) sinh^{D-2}(s) ds`.
pub fn total_mass(ctx: &KernelContext, params: &EvalParams) -> Result<f64> {
    let dim = params.dim();
    let spec = QuadratureSpec::default()
        .with_rel_tol(1e-10)
        .with_abs_tol(f64::MIN_POSITIVE)
        .with_max_subdivisions(200);
    let failure = std::sync::Mutex::new(None::<Error>);
    let integrand = |s: f64| match ctx.kernel(params, s) {
        Ok(v) => v.value * s.sinh().powi(dim as i32 - 2),
        Err(e) => {
            failure.lock().expect("lock").get_or_insert(e);
            0.0
        }
    };
    let est = integrate_semi_infinite(integrand, 0.0, params.rate(), &spec)?;
    if let Some(e) = failure.into_inner().expect("lock") {
        return Err(e);
    }
    Ok(sphere_area(dim - 2) * est.value)
}

/// `M(tau_i + tau_j) = M(tau_i) M(tau_j)` for all pairs `i <= j`.
///
/// Also reports `mass_rate`, the fit of `ln M(tau) / tau` at the first time.
pub fn mass_multiplicativity(
    ctx: &KernelContext,
    params: &EvalParams,
    tau_list: &[f64],
    tolerance: f64,
) -> Result<VerificationReport> {
    if tau_list.is_empty() {
        return Err(Error::invalid("tau list must not be empty"));
    }
    let mut taus: Vec<f64> = tau_list.to_vec();
    for i in 0..tau_list.len() {
        for j in i..tau_list.len() {
            taus.push(tau_list[i] + tau_list[j]);
        }
    }
    let masses: Vec<Result<f64>> = taus
        .par_iter()
        .map(|&t| total_mass(ctx, &params.at_tau(t)?))
        .collect();
    let mut details = Vec::new();
    let mut errors = Vec::new();
    let mut k = tau_list.len();
    for i in 0..tau_list.len() {
        for j in i..tau_list.len() {
            let at = [("tau1", tau_list[i]), ("tau2", tau_list[j])];
            match (&masses[i], &masses[j], &masses[k]) {
                (Ok(a), Ok(b), Ok(ab)) => details.push(PointRecord::new(
                    [at[0], at[1], ("M1", *a), ("M2", *b), ("M12", *ab)],
                    (ab - a * b).abs() / ab.abs(),
                )),
                (a, b, ab) => {
                    let e = [a, b, ab].into_iter().find_map(|r| r.clone().err()).expect("one failed");
                    details.push(PointRecord::failed(at, &e));
                    errors.push(e);
                }
            }
            k += 1;
        }
    }
    let rate = masses[0].as_ref().map(|m| m.ln() / tau_list[0]).unwrap_or(f64::NAN);
    Ok(VerificationReport::finish(
        "mass",
        params.dim(),
        tau_list.to_vec(),
        grid_text("tau", tau_list),
        tolerance,
        details,
        &errors,
    )
    .with_metric("mass_rate", rate))
}

/// `M(tau) = 1` for each time in the list.
pub fn unit_mass(
    ctx: &KernelContext,
    params: &EvalParams,
    tau_list: &[f64],
    tolerance: f64,
) -> Result<VerificationReport> {
    let masses: Vec<Result<f64>> = tau_list
        .par_iter()
        .map(|&t| total_mass(ctx, &params.at_tau(t)?))
        .collect();
    let mut details = Vec::new();
    let mut errors = Vec::new();
    for (&t, m) in tau_list.iter().zip(masses) {
        match m {
            Ok(m) => details.push(PointRecord::new([("tau", t), ("M", m)], (m - 1.0).abs())),
            Err(e) => {
                details.push(PointRecord::failed([("tau", t)], &e));
                errors.push(e);
            }
        }
    }
    Ok(VerificationReport::finish(
        "mass-unit",
        params.dim(),
        tau_list.to_vec(),
        grid_text("tau", tau_list),
        tolerance,
        details,
        &errors,
    ))
}

/// Internal consistency of `G^(n)`: the term sum and the origin series agree
/// at `s_min`, `(-1)^n G^(n) > 0` on a probe grid, and the term count grows
/// monotonically and stays below `10 n^2`.
///
/// Uses the rate and shift of `params`.
pub fn gfunc_consistency(params: &EvalParams, max_order: u32, tolerance: f64) -> Result<VerificationReport> {
    let (rate, shift) = (params.rate(), params.shift());
    let probes = [0.0, 0.5 * S_MIN, S_MIN, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0];
    let mut details = Vec::new();
    let mut prev_terms = 0usize;
    let mut structural_ok = true;
    for n in 0..=max_order {
        let g = g_derivative(rate, shift, n)?;
        let sum = g.evaluate(S_MIN)?;
        let series = g.evaluate_near_origin(S_MIN)?;
        let residual = (sum - series).abs() / series.abs();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let mut sign_ok = true;
        for &s in &probes {
            sign_ok &= sign * g.value(s)? > 0.0;
        }
        let count = g.terms().len();
        let growth_ok = count >= prev_terms && (n == 0 || count < 10 * (n * n) as usize);
        prev_terms = count;
        structural_ok &= sign_ok && growth_ok;
        details.push(PointRecord::new(
            [
                ("order", n as f64),
                ("terms", count as f64),
                ("sign_ok", f64::from(u8::from(sign_ok))),
                ("growth_ok", f64::from(u8::from(growth_ok))),
            ],
            residual,
        ));
    }
    let mut report = VerificationReport::finish(
        "gfunc",
        params.dim(),
        vec![params.tau()],
        format!("orders 0..={max_order}, a = {rate}, E = {shift}"),
        tolerance,
        details,
        &[],
    );
    report.passed &= structural_ok;
    Ok(report)
}
