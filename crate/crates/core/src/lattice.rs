//! Time-sliced path integral for the kernel, evaluated from first principles
//! at desk scale and compared with the closed forms.
//!
//! With `kappa = m / (2 hbar)` and `eps = tau / N`, one slice carries
//!
//! ```text
//! (kappa / (pi eps))^{(D-2)/2} exp(-kappa |x' - x|^2 / (eps y y'))      x sector
//! exp(-(kappa / eps) 4 sinh^2((z' - z) / 2)) / Z_eps                    z = ln y sector
//! exp(E / N)
//! ```
//!
//! and intermediate points are integrated with `dz prod dx / y`, i.e. the
//! Riemannian volume. The `x` integrals are Gaussian and are done exactly:
//! for any `y` path they give
//! `(y'' y')^{(D-2)/2} (kappa / (pi Y))^{(D-2)/2} exp(-kappa R^2 / Y)` with
//! `Y = sum eps y_n y_{n+1}`. What remains is an `(N-1)`-dimensional integral
//! over `z`, done by nested quadrature for small `N` and otherwise by Monte
//! Carlo over Brownian bridges in `z`.
//!
//! The `z` weight is `(y_{n+1} - y_n)^2 / (eps y_n y_{n+1})`, the same
//! symmetric form as the `x` sector. `Z_eps = int exp(-(kappa/eps) 4 sinh^2(u/2)) du`
//! makes each slice a probability density in the increment; without it the
//! product of slice normalisations drifts by `exp(-tau / (16 kappa))`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geodesic_distance, log_height, HoricyclicPoint};
use crate::kernels::{EvalParams, KernelContext};
use crate::quadrature::{compensated_sum, integrate_finite, integrate_semi_infinite, QuadratureSpec};
use crate::verify::{sphere_area, PointRecord, VerificationReport};

/// Samples per independent random stream. Streams are tied to sample index
/// ranges, not to threads, so results do not depend on the thread count.
pub const CHUNK: u64 = 1 << 14;

pub const MIN_SAMPLES: u64 = 10_000;
pub const MAX_SLICES_MC: usize = 64;
pub const MAX_SLICES_QUADRATURE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeMethod {
    NestedQuadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub slices: usize,
    pub method: LatticeMethod,
    pub samples: u64,
    pub seed: u64,
}

impl LatticeSpec {
    pub fn monte_carlo(slices: usize, samples: u64, seed: u64) -> Self {
        Self {
            slices,
            method: LatticeMethod::MonteCarlo,
            samples,
            seed,
        }
    }

    pub fn nested_quadrature(slices: usize) -> Self {
        Self {
            slices,
            method: LatticeMethod::NestedQuadrature,
            samples: 0,
            seed: 0,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.slices < 1 {
            return Err(Error::invalid("need at least one slice"));
        }
        match self.method {
            LatticeMethod::NestedQuadrature => {
                if dim != 3 || self.slices > MAX_SLICES_QUADRATURE {
                    return Err(Error::invalid(format!(
                        "nested quadrature supports D = 3 and N <= {MAX_SLICES_QUADRATURE}"
                    )));
                }
            }
            LatticeMethod::MonteCarlo => {
                if !(3..=4).contains(&dim) {
                    return Err(Error::invalid("the lattice oracle supports D = 3 and D = 4"));
                }
                if self.slices > MAX_SLICES_MC {
                    return Err(Error::invalid(format!("Monte Carlo supports N <= {MAX_SLICES_MC}")));
                }
                if self.samples < MIN_SAMPLES {
                    return Err(Error::invalid(format!("need at least {MIN_SAMPLES} samples")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeEstimate {
    pub value: f64,
    /// Standard error (Monte Carlo) or quadrature error estimate.
    pub err_est: f64,
}

/// Quantities shared by every path of one lattice evaluation.
struct Slicing {
    dim: usize,
    n: usize,
    eps: f64,
    kappa: f64,
    log_z_eps: f64,
    shift: f64,
    z1: f64,
    z2: f64,
    y1: f64,
    y2: f64,
    r2: f64,
}

impl Slicing {
    fn new(params: &EvalParams, q1: &HoricyclicPoint, q2: &HoricyclicPoint, n: usize) -> Result<Self> {
        if q1.dim() != params.dim() || q2.dim() != params.dim() {
            return Err(Error::invalid("points and parameters disagree on D"));
        }
        let eps = params.tau() / n as f64;
        let kappa = params.rate() * params.tau();
        let r2 = q1.x().iter().zip(q2.x()).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(Self {
            dim: params.dim(),
            n,
            eps,
            kappa,
            log_z_eps: slice_normalization(kappa / eps)?.ln(),
            shift: params.shift(),
            z1: log_height(q1),
            z2: log_height(q2),
            y1: q1.y(),
            y2: q2.y(),
            r2,
        })
    }

    /// `ln` of the normalised symmetric `z` weight of one slice.
    fn log_slice(&self, dz: f64) -> f64 {
        let h = (0.5 * dz).sinh();
        -(self.kappa / self.eps) * 4.0 * h * h - self.log_z_eps
    }

    /// `ln` of the exactly integrated `x` sector for `Y = sum eps y_n y_{n+1}`.
    fn log_x_sector(&self, y_sum: f64) -> f64 {
        let h = (self.dim as f64 - 2.0) / 2.0;
        h * (self.y1 * self.y2).ln() + h * (self.kappa / (PI * y_sum)).ln() - self.kappa * self.r2 / y_sum
    }

    /// Integrand of the remaining `z` integral at intermediate heights `zs`.
    fn log_integrand(&self, zs: &[f64]) -> f64 {
        let mut prev = self.z1;
        let mut log_w = 0.0;
        let mut y_sum = 0.0;
        for &z in zs.iter().chain(std::iter::once(&self.z2)) {
            log_w += self.log_slice(z - prev);
            y_sum += self.eps * (prev + z).exp();
            prev = z;
        }
        log_w + self.log_x_sector(y_sum) + self.shift
    }
}

/// `Z = int exp(-x 4 sinh^2(u/2)) du` for `x = kappa / eps`; equals
/// `2 e^{2x} K_0(2x)`.
pub fn slice_normalization(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::invalid("slice rate must be positive"));
    }
    let spec = QuadratureSpec::default().with_rel_tol(1e-13).with_abs_tol(f64::MIN_POSITIVE);
    let half = integrate_semi_infinite(
        |u: f64| {
            let h = (0.5 * u).sinh();
            (-x * 4.0 * h * h).exp()
        },
        0.0,
        x,
        &spec,
    )?;
    Ok(2.0 * half.value)
}

/// The single-slice kernel, i.e. the lattice value at `N = 1`.
pub fn short_time_factor(params: &EvalParams, q1: &HoricyclicPoint, q2: &HoricyclicPoint) -> Result<f64> {
    let sl = Slicing::new(params, q1, q2, 1)?;
    Ok(sl.log_integrand(&[]).exp())
}

/// The `N`-slice kernel between `q1` and `q2`.
pub fn lattice_kernel(
    params: &EvalParams,
    q1: &HoricyclicPoint,
    q2: &HoricyclicPoint,
    spec: &LatticeSpec,
) -> Result<LatticeEstimate> {
    spec.validate(params.dim())?;
    let sl = Slicing::new(params, q1, q2, spec.slices)?;
    if spec.slices == 1 {
        return Ok(LatticeEstimate {
            value: sl.log_integrand(&[]).exp(),
            err_est: 0.0,
        });
    }
    match spec.method {
        LatticeMethod::NestedQuadrature => nested_quadrature(&sl),
        LatticeMethod::MonteCarlo => Ok(monte_carlo(&sl, spec.samples, spec.seed)),
    }
}

fn nested_quadrature(sl: &Slicing) -> Result<LatticeEstimate> {
    let spec = QuadratureSpec::default()
        .with_rel_tol(1e-9)
        .with_abs_tol(f64::MIN_POSITIVE)
        .with_max_subdivisions(200);
    // Each slice weight decays faster than a Gaussian of variance eps/(2 kappa).
    let width = 14.0 * (sl.eps / (2.0 * sl.kappa)).sqrt();
    let lo = sl.z1.min(sl.z2) - width;
    let hi = sl.z1.max(sl.z2) + width;
    let failure = std::sync::Mutex::new(None::<Error>);
    let est = match sl.n {
        2 => integrate_finite(|z: f64| sl.log_integrand(&[z]).exp(), lo, hi, &spec)?,
        3 => integrate_finite(
            |za: f64| match integrate_finite(|zb: f64| sl.log_integrand(&[za, zb]).exp(), lo, hi, &spec) {
                Ok(e) => e.value,
                Err(e) => {
                    failure.lock().expect("lock").get_or_insert(e);
                    0.0
                }
            },
            lo,
            hi,
            &spec,
        )?,
        _ => unreachable!("validated slice count"),
    };
    if let Some(e) = failure.into_inner().expect("lock") {
        return Err(e);
    }
    Ok(LatticeEstimate {
        value: est.value,
        err_est: est.err_est,
    })
}

/// Bridge proposal: increments `N(0, sigma^2)` with `sigma^2 = eps / (2 kappa)`,
/// conditioned on the endpoints. The weight is the integrand over the bridge
/// density `prod phi(dz_n) / phi_N(z2 - z1)`.
fn monte_carlo(sl: &Slicing, samples: u64, seed: u64) -> LatticeEstimate {
    let var = sl.eps / (2.0 * sl.kappa);
    let log_phi = |dz: f64, v: f64| -dz * dz / (2.0 * v) - 0.5 * (2.0 * PI * v).ln();
    let total = sl.z2 - sl.z1;
    let log_bridge_norm = log_phi(total, sl.n as f64 * var);
    let chunks = samples.div_ceil(CHUNK);
    let partials: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let count = CHUNK.min(samples - chunk * CHUNK);
            let mut zs = vec![0.0; sl.n - 1];
            let mut weights = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let mut prev = sl.z1;
                let mut log_prop = 0.0;
                for (i, slot) in zs.iter_mut().enumerate() {
                    let remaining = (sl.n - i) as f64;
                    let mean = prev + (sl.z2 - prev) / remaining;
                    let sd = (var * (remaining - 1.0) / remaining).sqrt();
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    *slot = mean + sd * xi;
                    log_prop += log_phi(*slot - prev, var);
                    prev = *slot;
                }
                log_prop += log_phi(sl.z2 - prev, var);
                weights.push((sl.log_integrand(&zs) - log_prop + log_bridge_norm).exp());
            }
            let sum = compensated_sum(weights.iter().copied());
            let sum_sq = compensated_sum(weights.iter().map(|w| w * w));
            (sum, sum_sq)
        })
        .collect();
    let sum = pairwise_sum(&partials.iter().map(|p| p.0).collect::<Vec<_>>());
    let sum_sq = pairwise_sum(&partials.iter().map(|p| p.1).collect::<Vec<_>>());
    let n = samples as f64;
    let mean = sum / n;
    let variance = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    LatticeEstimate {
        value: mean,
        err_est: (variance / n).sqrt(),
    }
}

fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// One row of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "N")]
    pub slices: usize,
    pub lattice_value: f64,
    pub err_est: f64,
    pub closed_value: f64,
    pub rel_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `-ln |K_N - K|` against `ln N`.
    pub order: f64,
    /// `2 K_N - K_{N/2}` from the two finest rows when they differ by a
    /// factor of two, which removes the leading `1/N` error.
    pub extrapolated: Option<LatticeEstimate>,
    /// Ratio of the extrapolated (or finest) lattice value to the closed form.
    pub limit_ratio: f64,
}

/// Lattice values for each `N` in `slices` (Monte Carlo, except nested
/// quadrature where it applies) against the closed-form kernel.
pub fn convergence_study(
    ctx: &KernelContext,
    params: &EvalParams,
    q1: &HoricyclicPoint,
    q2: &HoricyclicPoint,
    slices: &[usize],
    samples: u64,
    seed: u64,
) -> Result<ConvergenceStudy> {
    if slices.is_empty() {
        return Err(Error::invalid("need at least one slice count"));
    }
    let closed = ctx.kernel(params, geodesic_distance(q1, q2)?)?.value;
    let mut rows = Vec::with_capacity(slices.len());
    for &n in slices {
        let spec = LatticeSpec::monte_carlo(n, samples, seed);
        let est = lattice_kernel(params, q1, q2, &spec)?;
        rows.push(ConvergenceRow {
            slices: n,
            lattice_value: est.value,
            err_est: est.err_est,
            closed_value: closed,
            rel_dev: (est.value - closed) / closed,
        });
    }
    let order = fit_order(&rows);
    let extrapolated = match rows.as_slice() {
        [.., coarse, fine] if fine.slices == 2 * coarse.slices => Some(LatticeEstimate {
            value: 2.0 * fine.lattice_value - coarse.lattice_value,
            err_est: (4.0 * fine.err_est * fine.err_est + coarse.err_est * coarse.err_est).sqrt(),
        }),
        _ => None,
    };
    let best = extrapolated.map_or(rows[rows.len() - 1].lattice_value, |e| e.value);
    Ok(ConvergenceStudy {
        rows,
        order,
        extrapolated,
        limit_ratio: best / closed,
    })
}

/// Least-squares convergence order `p` in `|K_N - K| ~ C N^{-p}`; NaN with
/// fewer than two usable rows.
pub fn fit_order(rows: &[ConvergenceRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.rel_dev != 0.0)
        .map(|r| ((r.slices as f64).ln(), r.rel_dev.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    -sxy / sxx
}

/// Integral of the closed-form kernel over the horizontal offset `xi` between
/// endpoints at heights `y1`, `y2`, against the free Gaussian in `z = ln y`:
///
/// ```text
/// int d^{D-2} xi K = (y1 y2)^{(D-2)/2} (a/pi)^{1/2} exp(-a (z2 - z1)^2 + E)
/// ```
///
/// The left side is reduced to `Omega_{D-3} int R^{D-3} K dR` and integrated
/// in `u` with `R = sqrt(2 y1 y2) sinh u`, where `cosh s = cosh(z2 - z1) + sinh^2 u`
/// and the integrand decays like a Gaussian in `u`.
pub fn x_marginal_check(
    ctx: &KernelContext,
    params: &EvalParams,
    y1: f64,
    y2: f64,
    tolerance: f64,
) -> Result<VerificationReport> {
    let dim = params.dim();
    if !(3..=6).contains(&dim) {
        return Err(Error::invalid("x-marginal check supports D in 3..=6"));
    }
    if !(y1 > 0.0 && y2 > 0.0) {
        return Err(Error::invalid("heights must be positive"));
    }
    let dz = (y2 / y1).ln();
    let r0 = (2.0 * y1 * y2).sqrt();
    let spec = QuadratureSpec::default()
        .with_rel_tol(1e-10)
        .with_abs_tol(f64::MIN_POSITIVE)
        .with_max_subdivisions(200);
    let failure = std::sync::Mutex::new(None::<Error>);
    let integrand = |u: f64| {
        let sh = u.sinh();
        // cosh s - 1 = 2 sinh^2(dz/2) + sinh^2 u
        let half = (0.5 * dz).sinh();
        let s = crate::geometry::arc_from_excess(2.0 * half * half + sh * sh);
        match ctx.kernel(params, s) {
            Ok(k) => k.value * (r0 * sh).powi(dim as i32 - 3) * r0 * u.cosh(),
            Err(e) => {
                failure.lock().expect("lock").get_or_insert(e);
                0.0
            }
        }
    };
    let lhs = integrate_semi_infinite(integrand, 0.0, params.rate(), &spec);
    let at = [("y1", y1), ("y2", y2)];
    let (details, errors) = match (failure.into_inner().expect("lock"), lhs) {
        (Some(e), _) | (None, Err(e)) => (vec![PointRecord::failed(at, &e)], vec![e]),
        (None, Ok(lhs)) => {
            let lhs = sphere_area(dim - 3) * lhs.value;
            let a = params.rate();
            let h = (dim as f64 - 2.0) / 2.0;
            let rhs = (y1 * y2).powf(h) * (a / PI).sqrt() * (-a * dz * dz + params.shift()).exp();
            let residual = (lhs - rhs).abs() / rhs;
            (
                vec![PointRecord::new([("y1", y1), ("y2", y2), ("lhs", lhs), ("rhs", rhs)], residual)],
                vec![],
            )
        }
    };
    Ok(VerificationReport::finish(
        "x-marginal",
        dim,
        vec![params.tau()],
        format!("y1 = {y1}, y2 = {y2}"),
        tolerance,
        details,
        &errors,
    ))
}
