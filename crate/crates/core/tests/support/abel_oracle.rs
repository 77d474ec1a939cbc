//! Test-only D = 3 oracle: inverts the half-order Abel equation
//!
//! ```text
//! int_l^inf K(k) (k - l)^{-1/2} dk = F(l),  F(l) = (a / (2 pi))^{1/2} exp(-a arccosh(l)^2)
//! ```
//!
//! directly in the `l` variable, `K(k) = -(1/pi) int_k^inf F'(l) (l - k)^{-1/2} dl`.
//! With `l = k + t^2` the integrand is smooth and even in `t`, so the plain
//! trapezoid rule on a fine `t` grid converges geometrically.

use std::f64::consts::PI;

fn rhs_derivative(a: f64, l: f64) -> f64 {
    let w = l - 1.0;
    // arccosh(l) / sqrt(l^2 - 1) -> 1 as l -> 1
    let ratio = if w < 1e-12 { 1.0 } else { l.acosh() / (w * (l + 1.0)).sqrt() };
    let f = (a / (2.0 * PI)).sqrt() * (-a * l.acosh().powi(2)).exp();
    -2.0 * a * ratio * f
}

/// D = 3 kernel at `l = cosh s` for Gaussian rate `a`.
pub fn d3_by_inversion(a: f64, s: f64) -> f64 {
    let k = s.cosh();
    let h = 2e-3 / a.sqrt().max(1.0);
    let mut sum = 0.5 * rhs_derivative(a, k);
    let mut t = h;
    loop {
        let term = rhs_derivative(a, k + t * t);
        sum += term;
        if term.abs() < 1e-22 * sum.abs() {
            break;
        }
        t += h;
    }
    -(2.0 / PI) * h * sum
}
