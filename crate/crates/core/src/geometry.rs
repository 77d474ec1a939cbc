//! Half-space (horicyclic) model of the pseudosphere.
//!
//! A point of the (D-1)-dimensional pseudosphere is stored as `(y, x)` with
//! `y > 0` and `x` of length `D - 2`; the metric is `(dy^2 + |dx|^2) / y^2`.
//! The ambient hyperboloid `(Z0)^2 - |Z|^2 = 1, Z0 > 0` is reachable through
//! [`to_hyperboloid`] / [`from_hyperboloid`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the hyperboloid constraint, scaled by `max(1, Z0^2)`.
pub const EMBEDDING_TOL: f64 = 1e-12;

/// A point `q = (y, x^1 .. x^{D-2})` in half-space coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoricyclicPoint {
    y: f64,
    x: Vec<f64>,
}

impl HoricyclicPoint {
    pub fn new(y: f64, x: Vec<f64>) -> Result<Self> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::invalid(format!("height y must be finite and > 0, got {y}")));
        }
        if x.is_empty() {
            return Err(Error::invalid("D must be ≥ 3 (x needs at least one component)"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("horospherical coordinates must be finite"));
        }
        Ok(Self { y, x })
    }

    /// The point `(y, 0, .., 0)` of a `dim`-dimensional ambient space.
    pub fn on_axis(dim: usize, y: f64) -> Result<Self> {
        if dim < 3 {
            return Err(Error::invalid("D must be ≥ 3"));
        }
        Self::new(y, vec![0.0; dim - 2])
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Ambient dimension D (the pseudosphere itself is (D-1)-dimensional).
    pub fn dim(&self) -> usize {
        self.x.len() + 2
    }
}

/// A point on the upper sheet of the unit hyperboloid in D-dimensional
/// Minkowski space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperboloidPoint {
    z: Vec<f64>,
}

impl HyperboloidPoint {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.len() < 3 {
            return Err(Error::invalid("D must be ≥ 3"));
        }
        if !(z[0] > 0.0) {
            return Err(Error::Domain("Z0 must be positive (upper sheet)".into()));
        }
        let defect = minkowski_norm(&z) - 1.0;
        if defect.abs() > EMBEDDING_TOL * z[0].powi(2).max(1.0) {
            return Err(Error::Domain(format!(
                "point is off the hyperboloid by {defect:e}"
            )));
        }
        Ok(Self { z })
    }

    pub fn coords(&self) -> &[f64] {
        &self.z
    }

    /// `(Z0)^2 - sum (Zi)^2`, which is 1 on the sheet.
    pub fn constraint(&self) -> f64 {
        minkowski_norm(&self.z)
    }
}

fn minkowski_norm(z: &[f64]) -> f64 {
    z[0] * z[0] - z[1..].iter().map(|v| v * v).sum::<f64>()
}

/// The radial variables that appear in the Abel-type equation for the kernel.
///
/// `s` is the running arc with `l = cosh s`, `k >= l` the integration
/// variable, and `d` the fixed geodesic distance with `u = cosh d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialArgs {
    pub s: f64,
    pub l: f64,
    pub k: f64,
    pub u: f64,
    pub d: f64,
}

impl RadialArgs {
    pub fn new(s: f64, k: f64, d: f64) -> Result<Self> {
        if !(s >= 0.0) || !(d >= 0.0) {
            return Err(Error::invalid("radial arcs must be non-negative"));
        }
        let l = s.cosh();
        if !(k >= l) {
            return Err(Error::invalid(format!("need k >= l, got k = {k}, l = {l}")));
        }
        Ok(Self { s, l, k, u: d.cosh(), d })
    }

    /// Radial variables of an endpoint pair: `l` from the heights only,
    /// `k = R^2 / (2 y'' y') + l` from the full separation, `d = arccosh k`.
    pub fn from_pair(q1: &HoricyclicPoint, q2: &HoricyclicPoint) -> Result<Self> {
        check_same_dim(q1, q2)?;
        let prod = 2.0 * q1.y * q2.y;
        let dy = q2.y - q1.y;
        let r2 = separation_sq(q1.x(), q2.x());
        let l_minus_1 = dy * dy / prod;
        let k_minus_1 = (r2 + dy * dy) / prod;
        Ok(Self {
            s: arc_from_excess(l_minus_1),
            l: 1.0 + l_minus_1,
            k: 1.0 + k_minus_1,
            u: 1.0 + k_minus_1,
            d: arc_from_excess(k_minus_1),
        })
    }
}

fn check_same_dim(q1: &HoricyclicPoint, q2: &HoricyclicPoint) -> Result<()> {
    if q1.dim() != q2.dim() {
        return Err(Error::invalid(format!(
            "points live in different dimensions ({} vs {})",
            q1.dim(),
            q2.dim()
        )));
    }
    Ok(())
}

fn separation_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// `arccosh(1 + e)` evaluated as `2 asinh(sqrt(e / 2))`, accurate for tiny `e`.
pub fn arc_from_excess(excess: f64) -> f64 {
    2.0 * (excess.max(0.0) / 2.0).sqrt().asinh()
}

/// `cosh(s) - 1` without cancellation.
pub fn excess_from_arc(s: f64) -> f64 {
    let h = (0.5 * s).sinh();
    2.0 * h * h
}

pub fn to_hyperboloid(q: &HoricyclicPoint) -> HyperboloidPoint {
    let y = q.y;
    let r2: f64 = q.x.iter().map(|v| v * v).sum();
    let plus = 1.0 / y;
    let minus = y + r2 / y;
    let mut z = Vec::with_capacity(q.dim());
    z.push(0.5 * (plus + minus));
    z.push(0.5 * (plus - minus));
    z.extend(q.x.iter().map(|v| v / y));
    HyperboloidPoint { z }
}

pub fn from_hyperboloid(p: &HyperboloidPoint) -> Result<HoricyclicPoint> {
    let sum = p.z[0] + p.z[1];
    if !(sum > 0.0) {
        return Err(Error::Domain(format!(
            "Z0 + Z1 = {sum:e} is not positive; no finite height"
        )));
    }
    let y = 1.0 / sum;
    let x = p.z[2..].iter().map(|v| y * v).collect();
    HoricyclicPoint::new(y, x)
}

/// Hyperbolic distance, computed from `k - 1 = (R^2 + (y'' - y')^2) / (2 y'' y')`
/// so that nearby points keep full relative accuracy.
pub fn geodesic_distance(q1: &HoricyclicPoint, q2: &HoricyclicPoint) -> Result<f64> {
    check_same_dim(q1, q2)?;
    let dy = q2.y - q1.y;
    let excess = (separation_sq(q1.x(), q2.x()) + dy * dy) / (2.0 * q1.y * q2.y);
    Ok(arc_from_excess(excess))
}

pub fn log_height(q: &HoricyclicPoint) -> f64 {
    q.y.ln()
}

/// One generator of the isometry group used by [`normalize_pair`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IsometryStep {
    /// `x -> x + shift`.
    Translate(Vec<f64>),
    /// `(y, x) -> (lambda y, lambda x)`.
    Dilate(f64),
    /// Inversion in the sphere of `radius` centred at the boundary point
    /// `(0, center)`.
    Invert { center: Vec<f64>, radius: f64 },
}

impl IsometryStep {
    pub fn apply(&self, q: &HoricyclicPoint) -> HoricyclicPoint {
        match self {
            IsometryStep::Translate(shift) => HoricyclicPoint {
                y: q.y,
                x: q.x.iter().zip(shift).map(|(a, b)| a + b).collect(),
            },
            IsometryStep::Dilate(lambda) => HoricyclicPoint {
                y: lambda * q.y,
                x: q.x.iter().map(|a| lambda * a).collect(),
            },
            IsometryStep::Invert { center, radius } => {
                let rel: Vec<f64> = q.x.iter().zip(center).map(|(a, c)| a - c).collect();
                let rho2 = q.y * q.y + rel.iter().map(|v| v * v).sum::<f64>();
                let scale = radius * radius / rho2;
                HoricyclicPoint {
                    y: scale * q.y,
                    x: center.iter().zip(&rel).map(|(c, v)| c + scale * v).collect(),
                }
            }
        }
    }
}

/// A composition of isometries, applied in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IsometryRecord {
    pub steps: Vec<IsometryStep>,
}

impl IsometryRecord {
    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn apply(&self, q: &HoricyclicPoint) -> HoricyclicPoint {
        self.steps.iter().fold(q.clone(), |acc, step| step.apply(&acc))
    }
}

/// Moves a pair of points onto the `y`-axis with an isometry of the
/// half-space, returning the images and the generators used.
///
/// The first point is translated to `x = 0`. If the second point is then
/// off-axis, the geodesic through both is a half-circle orthogonal to the
/// boundary; inverting in a sphere centred at one of its boundary endpoints
/// turns it into a vertical line, which a final translation moves onto the
/// axis.
pub fn normalize_pair(
    q1: &HoricyclicPoint,
    q2: &HoricyclicPoint,
) -> Result<(HoricyclicPoint, HoricyclicPoint, IsometryRecord)> {
    check_same_dim(q1, q2)?;
    let mut record = IsometryRecord::default();
    if q1.x.iter().any(|v| *v != 0.0) {
        record
            .steps
            .push(IsometryStep::Translate(q1.x.iter().map(|v| -v).collect()));
    }
    let p1 = record.apply(q1);
    let p2 = record.apply(q2);

    let rho = p2.x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rho <= f64::EPSILON * p1.y.min(p2.y) {
        return Ok((p1, p2, record));
    }
    let dir: Vec<f64> = p2.x.iter().map(|v| v / rho).collect();
    let (y1, y2) = (p1.y, p2.y);

    // Geodesic through (0, y1) and (rho, y2) in the plane spanned by `dir`
    // and the y-axis: centre c on the boundary, radius rg.
    let c = (rho * rho + (y2 - y1) * (y2 + y1)) / (2.0 * rho);
    let rg = c.hypot(y1);
    let mid = 0.5 * rho;
    // The endpoint farther from the two points keeps the inversion well scaled.
    // c - rg and c + rg are formed without cancellation via (c - rg)(c + rg) = -y1^2.
    let lower = if c >= 0.0 { -y1 * y1 / (c + rg) } else { c - rg };
    let upper = if c >= 0.0 { c + rg } else { y1 * y1 / (rg - c) };
    let (end, other) = if c >= mid { (upper, lower) } else { (lower, upper) };
    let radius = 2.0 * rg;
    let image_t = end + (other - end).signum() * radius * radius / (other - end).abs();

    record.steps.push(IsometryStep::Invert {
        center: dir.iter().map(|u| end * u).collect(),
        radius,
    });
    record
        .steps
        .push(IsometryStep::Translate(dir.iter().map(|u| -image_t * u).collect()));

    let p1 = record.apply(q1);
    let p2 = record.apply(q2);
    Ok((p1, p2, record))
}

/// Default finite-difference step for [`laplace_beltrami_apply`].
pub fn default_step(y: f64) -> f64 {
    1e-4 * y.max(1.0)
}

/// Second-order central-difference approximation of
/// `y^2 (d_yy + sum d_xx) f - (D - 3) y d_y f` at `q`.
///
/// `f` is called as `f(y, x)` on the `2 (D - 1) + 1` stencil points.
pub fn laplace_beltrami_apply<F>(f: F, q: &HoricyclicPoint, h: f64) -> Result<f64>
where
    F: Fn(f64, &[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {h}")));
    }
    if !(q.y - h > 0.0) {
        return Err(Error::Domain(format!(
            "stencil leaves the half-space: y - h = {}",
            q.y - h
        )));
    }
    let y = q.y;
    let center = f(y, &q.x);
    let up = f(y + h, &q.x);
    let down = f(y - h, &q.x);
    let d_y = (up - down) / (2.0 * h);
    let mut second = (up - 2.0 * center + down) / (h * h);

    let mut x = q.x.clone();
    for mu in 0..x.len() {
        let x0 = x[mu];
        x[mu] = x0 + h;
        let fp = f(y, &x);
        x[mu] = x0 - h;
        let fm = f(y, &x);
        x[mu] = x0;
        second += (fp - 2.0 * center + fm) / (h * h);
    }
    let dim = q.dim() as f64;
    Ok(y * y * second - (dim - 3.0) * y * d_y)
}
