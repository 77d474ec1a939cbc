//! Adaptive quadrature for the integrands that appear in the kernel formulas:
//! smooth functions with Gaussian decay on `[lower, inf)`, optionally carrying
//! a `(cosh s - cosh d)^nu` endpoint weight.
//!
//! The core rule is a 7/15-point Gauss-Kronrod pair with bisection of the
//! worst panel. Everything is deterministic: the same inputs and spec give
//! bit-identical results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Number of bisections allowed before giving up.
    pub max_subdivisions: usize,
    /// Semi-infinite ranges are cut where the Gaussian envelope drops below
    /// `exp(-truncation_sigma^2 / 2)`.
    pub truncation_sigma: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-14,
            max_subdivisions: 60,
            truncation_sigma: 12.0,
        }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_subdivisions(mut self, n: usize) -> Self {
        self.max_subdivisions = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.truncation_sigma > 0.0) {
            return Err(Error::invalid("quadrature tolerances must be positive"));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::invalid("max_subdivisions must be at least 1"));
        }
        Ok(())
    }

    fn target(&self, value: f64) -> f64 {
        (self.rel_tol * value.abs()).max(self.abs_tol)
    }
}

/// An integral value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub err_est: f64,
}

impl Estimate {
    pub fn scale(self, factor: f64) -> Self {
        Self {
            value: self.value * factor,
            err_est: self.err_est * factor.abs(),
        }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, rhs: Estimate) -> Estimate {
        Estimate {
            value: self.value + rhs.value,
            err_est: self.err_est + rhs.err_est,
        }
    }
}

// Kronrod abscissae and weights (15 points) with the embedded 7-point Gauss
// weights, as tabulated in QUADPACK.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Panel { a, b, value, err }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

const INITIAL_PANELS: usize = 8;

/// Adaptive integral of `f` over the finite interval `[a, b]`.
pub fn integrate_finite<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    spec.validate()?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("finite integration limits required"));
    }
    if a == b {
        return Ok(Estimate { value: 0.0, err_est: 0.0 });
    }
    let width = (b - a) / INITIAL_PANELS as f64;
    let mut panels: Vec<Panel> = (0..INITIAL_PANELS)
        .map(|i| {
            let lo = a + width * i as f64;
            let hi = if i + 1 == INITIAL_PANELS { b } else { lo + width };
            gauss_kronrod(&f, lo, hi)
        })
        .collect();

    let mut subdivisions = 0;
    loop {
        let value = compensated_sum(panels.iter().map(|p| p.value));
        let err: f64 = panels.iter().map(|p| p.err).sum();
        if !value.is_finite() || !err.is_finite() {
            return Err(Error::NonConvergence { value, err_est: err, subdivisions });
        }
        if err <= spec.target(value) {
            return Ok(Estimate { value, err_est: err });
        }
        // Panels too narrow to split further are left alone.
        let worst = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                let mid = 0.5 * (p.a + p.b);
                (p.b - p.a).abs() > 200.0 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE)
            })
            .fold(None::<(usize, f64)>, |best, (i, p)| match best {
                Some((_, e)) if e >= p.err => best,
                _ => Some((i, p.err)),
            });
        let Some((idx, _)) = worst else {
            return Err(Error::NonConvergence { value, err_est: err, subdivisions });
        };
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::NonConvergence { value, err_est: err, subdivisions });
        }
        let p = panels[idx];
        let mid = 0.5 * (p.a + p.b);
        panels[idx] = gauss_kronrod(&f, p.a, mid);
        panels.push(gauss_kronrod(&f, mid, p.b));
        subdivisions += 1;
    }
}

/// Integrates `g` over `[lower, upper]`, then keeps extending `upper` until
/// the tail bound `|g(upper)| / tail_rate(upper)` is negligible. The final
/// tail bound is added to the error estimate.
fn integrate_with_tail<G, R>(g: G, lower: f64, mut upper: f64, tail_rate: R, spec: &QuadratureSpec) -> Result<Estimate>
where
    G: Fn(f64) -> f64,
    R: Fn(f64) -> f64,
{
    let mut total = integrate_finite(&g, lower, upper, spec)?;
    let mut tail = g(upper).abs() / tail_rate(upper);
    for _ in 0..12 {
        if !(tail > 0.1 * spec.target(total.value)) {
            break;
        }
        let next = upper + (upper - lower).max(1.0) * 0.5;
        total = total + integrate_finite(&g, upper, next, spec)?;
        upper = next;
        tail = g(upper).abs() / tail_rate(upper);
    }
    if !tail.is_finite() {
        tail = 0.0;
    }
    Ok(Estimate { value: total.value, err_est: total.err_est + tail })
}

/// Point beyond which `exp(-decay_rate (t^2 - lower^2))` has fallen below
/// `exp(-sigma^2 / 2)`.
fn envelope_cutoff(lower: f64, decay_rate: f64, sigma: f64) -> f64 {
    let reach = sigma * sigma / (2.0 * decay_rate);
    if lower >= 0.0 {
        (lower * lower + reach).sqrt()
    } else {
        reach.sqrt()
    }
}

/// `int_lower^inf f(t) dt` for `f` with asymptotic decay `exp(-decay_rate t^2)`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    lower: f64,
    decay_rate: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    if !(decay_rate > 0.0) {
        return Err(Error::invalid("decay rate must be positive"));
    }
    let upper = envelope_cutoff(lower, decay_rate, spec.truncation_sigma);
    integrate_with_tail(f, lower, upper, |t| 2.0 * decay_rate * t.abs().max(1.0), spec)
}

/// `int_d^inf f(s) (cosh s - cosh d)^{-1/2} ds`.
///
/// With `s = d + v^2` the weight becomes `2 v / sqrt(cosh(d + v^2) - cosh d)`,
/// which is bounded (tends to `2 / sqrt(sinh d)`); the difference of
/// hyperbolic cosines is formed as `2 sinh(d + v^2/2) sinh(v^2/2)`, so no
/// cancellation occurs however small `d` or `v` are. At `d = 0` the weight
/// behaves like `2 sqrt(2) / v`, so `f` must vanish at the origin there.
pub fn integrate_endpoint_singular<F: Fn(f64) -> f64>(
    f: F,
    d: f64,
    decay_rate: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    integrate_endpoint_weighted(f, d, -0.5, decay_rate, spec)
}

/// `int_d^inf f(s) (cosh s - cosh d)^nu ds` for `nu > -1`, by the same
/// `s = d + v^2` substitution as [`integrate_endpoint_singular`].
pub fn integrate_endpoint_weighted<F: Fn(f64) -> f64>(
    f: F,
    d: f64,
    nu: f64,
    decay_rate: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    if !(d >= 0.0) {
        return Err(Error::invalid(format!("lower endpoint must be non-negative, got {d}")));
    }
    if !(nu > -1.0) {
        return Err(Error::invalid("weight exponent must exceed -1"));
    }
    if !(decay_rate > 0.0) {
        return Err(Error::invalid("decay rate must be positive"));
    }
    let g = |v: f64| {
        if v == 0.0 {
            // Only the nu = -1/2 weight has a finite non-zero limit here.
            return if nu == -0.5 && d > 0.0 { 2.0 * f(d) / d.sinh().sqrt() } else { 0.0 };
        }
        let v2 = v * v;
        let gap = 2.0 * (d + 0.5 * v2).sinh() * (0.5 * v2).sinh();
        let weight = if nu == -0.5 {
            2.0 * v / gap.sqrt()
        } else {
            2.0 * v * gap.powf(nu)
        };
        f(d + v2) * weight
    };
    let s_max = envelope_cutoff(d, decay_rate, spec.truncation_sigma);
    let v_max = (s_max - d).sqrt();
    integrate_with_tail(
        g,
        0.0,
        v_max,
        |v| 4.0 * decay_rate * v.max(1.0) * (d + v * v).max(1.0),
        spec,
    )
}

/// Both sides of
/// `int_u^inf dl (l-u)^{-1/2} int_l^inf dk f(k) (k-l)^{-1/2} = pi int_u^inf f(k) dk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbelCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Evaluates the Abel transform identity for `f` with `|f(k)| <= C exp(-decay_rate k)`.
///
/// Both inverse-square-root weights are removed by `k = l + t^2` and
/// `l = u + r^2`, which turns the exponential decay in `k` into Gaussian
/// decay in `t` and `r`.
pub fn abel_identity_check<F: Fn(f64) -> f64>(
    f: F,
    u: f64,
    decay_rate: f64,
    spec: &QuadratureSpec,
) -> Result<AbelCheck> {
    if !(u >= 1.0) {
        return Err(Error::invalid("u must be at least 1"));
    }
    let inner_spec = spec.with_rel_tol(spec.rel_tol * 0.1);
    let inner = |l: f64| -> Result<f64> {
        integrate_semi_infinite(|t| 2.0 * f(l + t * t), 0.0, decay_rate, &inner_spec).map(|e| e.value)
    };
    // The outer integrand cannot propagate errors through the closure, so the
    // first failure is stashed and reported afterwards.
    let failure = std::cell::RefCell::new(None);
    let outer = integrate_semi_infinite(
        |r| match inner(u + r * r) {
            Ok(v) => 2.0 * v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        0.0,
        decay_rate,
        spec,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let tail = integrate_semi_infinite(|t| 2.0 * t * f(u + t * t), 0.0, decay_rate, spec)?;
    let rhs = std::f64::consts::PI * tail.value;
    let lhs = outer.value;
    Ok(AbelCheck { lhs, rhs, residual: (lhs - rhs).abs() / rhs.abs() })
}
