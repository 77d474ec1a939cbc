//! Closed-form heat kernels on the pseudosphere, evaluated on the diffusive
//! branch `T = -i tau`.
//!
//! Under that substitution the Gaussian rate is `a = m / (2 hbar tau)` and the
//! curvature exponent is `E = -hbar (D-1)(D-3) tau / (8 m)`. In the default
//! units `hbar = 1`, `m = 1/2` these read `a = 1/(4 tau)` and
//! `E = -(D-1)(D-3) tau / 4`.
//!
//! | D          | formula                                                                  |
//! |------------|--------------------------------------------------------------------------|
//! | 3          | `sqrt(2) (a/pi)^{3/2} int_s^inf sigma e^{-a sigma^2} / sqrt(cosh sigma - cosh s)` |
//! | 4          | `(a/pi)^{3/2} (s / sinh s) e^{-a s^2 + E}`                               |
//! | even >= 4  | `(-1/(2 pi))^{(D-2)/2} G^((D-2)/2)(s)`                                   |
//! | odd >= 5   | `sqrt(2) (-1/(2 pi))^{(D-1)/2} int_s^inf d_sigma G^((D-3)/2) / sqrt(cosh sigma - cosh s)` |

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geodesic_distance, HoricyclicPoint};
use crate::gfunc::{apply_operator, g_base, GExpression};
use crate::quadrature::{integrate_endpoint_singular, QuadratureSpec};

/// Physical parameters of one kernel evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    dim: usize,
    mass: f64,
    hbar: f64,
    tau: f64,
}

impl EvalParams {
    pub const DEFAULT_MASS: f64 = 0.5;
    pub const DEFAULT_HBAR: f64 = 1.0;

    pub fn new(dim: usize, mass: f64, hbar: f64, tau: f64) -> Result<Self> {
        if dim < 3 {
            return Err(Error::invalid(format!("dimension D must be at least 3, got {dim}")));
        }
        for (name, v) in [("mass", mass), ("hbar", hbar), ("tau", tau)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self { dim, mass, hbar, tau })
    }

    /// `hbar = 1`, `m = 1/2`.
    pub fn with_default_units(dim: usize, tau: f64) -> Result<Self> {
        Self::new(dim, Self::DEFAULT_MASS, Self::DEFAULT_HBAR, tau)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Same parameters at another time.
    pub fn at_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.dim, self.mass, self.hbar, tau)
    }

    /// Gaussian rate `a = m / (2 hbar tau)`.
    pub fn rate(&self) -> f64 {
        self.mass / (2.0 * self.hbar * self.tau)
    }

    /// Exponent shift `E = -hbar (D-1)(D-3) tau / (8 m)`; zero at `D = 3`.
    pub fn shift(&self) -> f64 {
        -self.hbar * self.curvature_factor() * self.tau / (8.0 * self.mass)
    }

    /// `beta = hbar^2 (D-1)(D-3) / (4 m^2)`; zero at `D = 3`.
    pub fn beta(&self) -> f64 {
        self.hbar * self.hbar * self.curvature_factor() / (4.0 * self.mass * self.mass)
    }

    /// Diffusion constant `hbar / (2 m)` multiplying the Laplace-Beltrami
    /// operator in the heat equation.
    pub fn diffusion(&self) -> f64 {
        self.hbar / (2.0 * self.mass)
    }

    fn curvature_factor(&self) -> f64 {
        let d = self.dim as f64;
        (d - 1.0) * (d - 3.0)
    }
}

/// A kernel value with provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    /// Quadrature error estimate; zero for the closed forms.
    pub err_est: f64,
    #[serde(rename = "D")]
    pub dim: usize,
    pub s: f64,
    pub tau: f64,
}

/// Evaluation context: quadrature settings and a cache of `G^(n)` term sets.
///
/// Term sets are built once per order at unit rate and rebound to the
/// requested `(a, E)`, so the context can be shared across threads.
#[derive(Debug)]
pub struct KernelContext {
    spec: QuadratureSpec,
    cache: RwLock<HashMap<u32, GExpression>>,
}

impl Default for KernelContext {
    fn default() -> Self {
        Self::new(Self::default_spec()).expect("default spec is valid")
    }
}

impl KernelContext {
    pub fn new(spec: QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Relative tolerance 1e-10 with no absolute floor: far-tail values are
    /// tiny but still wanted to full relative accuracy.
    pub fn default_spec() -> QuadratureSpec {
        QuadratureSpec::default()
            .with_rel_tol(1e-10)
            .with_abs_tol(f64::MIN_POSITIVE)
    }

    /// Shared context with default settings.
    pub fn global() -> &'static KernelContext {
        static GLOBAL: OnceLock<KernelContext> = OnceLock::new();
        GLOBAL.get_or_init(KernelContext::default)
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    /// `G^(order)` at the rate and shift of `params`.
    pub fn expression(&self, order: u32, params: &EvalParams) -> Result<GExpression> {
        if let Some(g) = self.cache.read().expect("cache lock").get(&order) {
            return g.rebind(params.rate(), params.shift());
        }
        let mut cache = self.cache.write().expect("cache lock");
        let highest = cache.keys().copied().filter(|&k| k < order).max();
        let mut g = match highest {
            Some(k) => cache[&k].clone(),
            None => g_base(1.0, 0.0)?,
        };
        while g.order() < order {
            g = apply_operator(&g);
            cache.entry(g.order()).or_insert_with(|| g.clone());
        }
        cache.entry(order).or_insert_with(|| g.clone());
        g.rebind(params.rate(), params.shift())
    }

    /// Dispatches on `D`.
    pub fn kernel(&self, params: &EvalParams, s: f64) -> Result<KernelValue> {
        match params.dim {
            3 => self.kernel_d3(params, s),
            4 => self.kernel_d4(params, s),
            d if d % 2 == 0 => self.kernel_even(params, s),
            _ => self.kernel_odd(params, s),
        }
    }

    /// Kernel between two points, through their geodesic distance.
    pub fn kernel_between(&self, params: &EvalParams, q1: &HoricyclicPoint, q2: &HoricyclicPoint) -> Result<KernelValue> {
        if q1.dim() != params.dim || q2.dim() != params.dim {
            return Err(Error::invalid("points and parameters disagree on D"));
        }
        self.kernel(params, geodesic_distance(q1, q2)?)
    }

    /// McKean's kernel. `E` is zero at `D = 3` and does not appear.
    pub fn kernel_d3(&self, params: &EvalParams, s: f64) -> Result<KernelValue> {
        expect_dim(params, |d| d == 3, "3")?;
        check_arc(s)?;
        let a = params.rate();
        let est = integrate_endpoint_singular(|sig| sig * (-a * sig * sig).exp(), s, a, &self.spec)?;
        let est = est.scale(SQRT_2 * (a / PI).powf(1.5));
        Ok(self.value(params, s, est.value, est.err_est))
    }

    pub fn kernel_d4(&self, params: &EvalParams, s: f64) -> Result<KernelValue> {
        expect_dim(params, |d| d == 4, "4")?;
        check_arc(s)?;
        let a = params.rate();
        let ratio = if s < 1e-4 { 1.0 - s * s / 6.0 } else { s / s.sinh() };
        let v = (a / PI).powf(1.5) * ratio * (-a * s * s + params.shift()).exp();
        Ok(self.value(params, s, v, 0.0))
    }

    pub fn kernel_even(&self, params: &EvalParams, s: f64) -> Result<KernelValue> {
        expect_dim(params, |d| d >= 4 && d % 2 == 0, "even and at least 4")?;
        check_arc(s)?;
        let n = ((params.dim - 2) / 2) as u32;
        let g = self.expression(n, params)?;
        let v = (-1.0 / (2.0 * PI)).powi(n as i32) * g.value(s)?;
        Ok(self.value(params, s, v, 0.0))
    }

    /// General odd-`D` formula. At `D = 3` it reduces to McKean's kernel, so
    /// `D = 3` is accepted here as well.
    pub fn kernel_odd(&self, params: &EvalParams, s: f64) -> Result<KernelValue> {
        expect_dim(params, |d| d % 2 == 1, "odd")?;
        check_arc(s)?;
        let m = ((params.dim - 3) / 2) as u32;
        // d/dsigma G^(m) = sinh(sigma) G^(m+1): the operator without its 1/sinh.
        let g = self.expression(m + 1, params)?;
        let failure = RefCell::new(None);
        let integrand = |sig: f64| match g.value(sig) {
            Ok(v) => sig.sinh() * v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        };
        let est = integrate_endpoint_singular(integrand, s, params.rate(), &self.spec);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let factor = SQRT_2 * (-1.0 / (2.0 * PI)).powi(m as i32 + 1);
        let est = est?.scale(factor);
        Ok(self.value(params, s, est.value, est.err_est))
    }

    fn value(&self, params: &EvalParams, s: f64, value: f64, err_est: f64) -> KernelValue {
        KernelValue {
            value,
            err_est,
            dim: params.dim,
            s,
            tau: params.tau,
        }
    }
}

fn expect_dim(params: &EvalParams, ok: impl Fn(usize) -> bool, what: &str) -> Result<()> {
    if ok(params.dim) {
        Ok(())
    } else {
        Err(Error::invalid(format!("this formula needs D {what}, got D = {}", params.dim)))
    }
}

fn check_arc(s: f64) -> Result<()> {
    if s >= 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("geodesic distance must be finite and non-negative, got {s}")))
    }
}

/// [`KernelContext::kernel`] on the shared default context.
pub fn kernel(params: &EvalParams, s: f64) -> Result<KernelValue> {
    KernelContext::global().kernel(params, s)
}

pub fn kernel_d3(params: &EvalParams, s: f64) -> Result<KernelValue> {
    KernelContext::global().kernel_d3(params, s)
}

pub fn kernel_d4(params: &EvalParams, s: f64) -> Result<KernelValue> {
    KernelContext::global().kernel_d4(params, s)
}

pub fn kernel_even(params: &EvalParams, s: f64) -> Result<KernelValue> {
    KernelContext::global().kernel_even(params, s)
}

pub fn kernel_odd(params: &EvalParams, s: f64) -> Result<KernelValue> {
    KernelContext::global().kernel_odd(params, s)
}

/// `(4 pi nu tau)^{-n/2} exp(-s^2 / (4 nu tau))`, the Euclidean heat kernel in
/// `n = D - 1` dimensions with diffusion constant `nu`.
pub fn flat_kernel(params: &EvalParams, s: f64) -> f64 {
    let n = (params.dim - 1) as f64;
    let t = params.diffusion() * params.tau;
    (4.0 * PI * t).powf(-0.5 * n) * (-s * s / (4.0 * t)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_parameters() {
        let p = EvalParams::with_default_units(4, 1.0).unwrap();
        assert_eq!(p.rate(), 0.25);
        assert_eq!(p.shift(), -0.75);
        assert_eq!(p.beta(), 3.0);
        assert_eq!(p.diffusion(), 1.0);
        let p3 = EvalParams::with_default_units(3, 0.7).unwrap();
        assert_eq!(p3.shift(), 0.0);
        assert_eq!(p3.beta(), 0.0);
        assert!(EvalParams::with_default_units(2, 1.0).is_err());
        assert!(EvalParams::new(4, 0.0, 1.0, 1.0).is_err());
        assert!(EvalParams::new(4, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn d4_closed_form() {
        let p = EvalParams::with_default_units(4, 1.0).unwrap();
        let want = (1.0 / (4.0 * PI)).powf(1.5) / 1f64.sinh() * (-1.0f64).exp();
        let got = kernel_d4(&p, 1.0).unwrap();
        assert!((got.value - want).abs() < 1e-15 * want);
        assert_eq!(got.err_est, 0.0);
        let origin = kernel_d4(&p, 0.0).unwrap().value;
        assert!((origin - (0.25 / PI).powf(1.5) * (-0.75f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn dispatch_rejects_wrong_dimension() {
        let p = EvalParams::with_default_units(5, 1.0).unwrap();
        assert!(kernel_d4(&p, 1.0).is_err());
        assert!(kernel_even(&p, 1.0).is_err());
        assert!(kernel_d3(&p, 1.0).is_err());
        assert!(kernel(&p, -1.0).is_err());
    }

    #[test]
    fn cache_rebinds() {
        let ctx = KernelContext::default();
        let p = EvalParams::with_default_units(8, 0.5).unwrap();
        let g3 = ctx.expression(3, &p).unwrap();
        let g1 = ctx.expression(1, &p).unwrap();
        assert_eq!(g3.order(), 3);
        assert_eq!(g1.order(), 1);
        assert_eq!(g3.rate(), 0.5);
        assert_eq!(g3.shift(), p.shift());
    }
}
