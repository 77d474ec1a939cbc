//! Exact term algebra for the Gaussian-type function
//!
//! ```text
//! G(s)     = (a/pi)^{1/2} exp(-a s^2 + E)
//! G^(n)(s) = [(1/sinh s) d/ds]^n G(s) = d^n G / dl^n,   l = cosh s
//! ```
//!
//! Every `G^(n)` is the common prefactor `G(s)` times a finite sum of terms
//! `c(a) * s^p * cosh^q(s) / sinh^r(s)` with `q` in `{0, 1}` (higher powers of
//! `cosh` are folded with `cosh^2 = 1 + sinh^2`) and `c` a polynomial in the
//! rate `a` with exact rational coefficients.
//!
//! There are two evaluation paths. [`GExpression::evaluate`] sums the terms;
//! for small `s` the terms cancel heavily (like `s^{-2(n-1)}`), so the sum is
//! redone in multiprecision when the binary64 condition number is too large.
//! [`GExpression::evaluate_near_origin`] instead differentiates the power
//! series of `exp(-a arccosh(l)^2)` about `l = 1`, which is analytic there.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use astro_float::BigFloat;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::geometry::excess_from_arc;
use crate::mp;
use crate::quadrature::compensated_sum;

/// Below this arc the term sum is not used; see [`GExpression::evaluate_near_origin`].
pub const S_MIN: f64 = 1e-3;

/// Maximum number of series terms kept beyond the derivative order.
pub const MAX_SERIES_TERMS: usize = 30;

/// Relative error accepted from the binary64 term sum before switching to
/// multiprecision.
const F64_TRUST: f64 = 1e-13;

const MP_COEFF_PREC: usize = 640;
const MP_MAX_PREC: usize = 576;

/// Polynomial in the Gaussian rate `a` with exact rational coefficients.
/// `coeffs[j]` multiplies `a^j`; trailing zeros are trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Poly {
    coeffs: Vec<BigRational>,
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: BigRational) -> Self {
        Self::from_coeffs(vec![c])
    }

    pub fn from_integers(coeffs: &[i64]) -> Self {
        Self::from_coeffs(
            coeffs
                .iter()
                .map(|&c| BigRational::from_integer(BigInt::from(c)))
                .collect(),
        )
    }

    pub fn from_coeffs(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn scale(&self, k: &BigRational) -> Poly {
        Poly::from_coeffs(self.coeffs.iter().map(|c| c * k).collect())
    }

    /// Multiplies by the rate `a`.
    pub fn times_rate(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(BigRational::zero());
        coeffs.extend(self.coeffs.iter().cloned());
        Poly { coeffs }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let zero = BigRational::zero();
        Poly::from_coeffs(
            (0..n)
                .map(|j| self.coeffs.get(j).unwrap_or(&zero) + other.coeffs.get(j).unwrap_or(&zero))
                .collect(),
        )
    }

    pub fn eval(&self, a: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * a + c.to_f64().unwrap_or(f64::NAN))
    }

    fn eval_mp(&self, a: &BigFloat, prec: usize) -> BigFloat {
        let mut acc = mp::from_f64(0.0, prec);
        for c in self.coeffs.iter().rev() {
            let num = mp::from_bigint(c.numer(), prec);
            let den = mp::from_bigint(c.denom(), prec);
            let c = num.div(&den, prec, mp::RM);
            acc = acc.mul(a, prec, mp::RM).add(&c, prec, mp::RM);
        }
        acc
    }
}

fn fmt_rational(c: &BigRational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (deg, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let mag = c.abs();
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            first = false;
            let unit = mag.is_one();
            match deg {
                0 => write!(f, "{}", fmt_rational(&mag))?,
                _ if unit => write!(f, "a")?,
                _ => write!(f, "{}*a", fmt_rational(&mag))?,
            }
            if deg >= 2 {
                write!(f, "^{deg}")?;
            }
        }
        Ok(())
    }
}

/// One term `coeff(a) * s^p * cosh^q(s) / sinh^r(s)` of a [`GExpression`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GTerm {
    pub coeff: Poly,
    pub p: u32,
    pub q: u8,
    pub r: u32,
}

impl GTerm {
    pub fn key(&self) -> (u32, u8, u32) {
        (self.p, self.q, self.r)
    }
}

impl fmt::Display for GTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}) * s^{} * cosh^{}(s) / sinh^{}(s)",
            self.coeff, self.p, self.q, self.r
        )
    }
}

type TermMap = BTreeMap<(u32, u8, u32), Poly>;

fn accumulate(map: &mut TermMap, key: (u32, u8, u32), poly: Poly) {
    if poly.is_zero() {
        return;
    }
    let slot = map.entry(key).or_default();
    *slot = slot.add(&poly);
    if slot.is_zero() {
        map.remove(&key);
    }
}

fn collect_terms(map: TermMap) -> Vec<GTerm> {
    map.into_iter()
        .map(|((p, q, r), coeff)| GTerm { coeff, p, q, r })
        .collect()
}

/// `G^(n)` for a fixed rate `a` and exponent shift `E`, in canonical term form.
#[derive(Debug, Clone)]
pub struct GExpression {
    order: u32,
    terms: Arc<Vec<GTerm>>,
    rate: f64,
    shift: f64,
    /// Coefficient values at `rate`.
    bound: Vec<f64>,
    mp_coeffs: Arc<OnceLock<Vec<BigFloat>>>,
}

impl PartialEq for GExpression {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self.rate == other.rate
            && self.shift == other.shift
            && self.terms == other.terms
    }
}

fn check_params(rate: f64, shift: f64) -> Result<()> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::invalid(format!("Gaussian rate must be positive, got {rate}")));
    }
    if !shift.is_finite() {
        return Err(Error::invalid("exponent shift must be finite"));
    }
    Ok(())
}

/// `G^(0)`: a single unit term.
pub fn g_base(rate: f64, shift: f64) -> Result<GExpression> {
    let unit = GTerm {
        coeff: Poly::from_integers(&[1]),
        p: 0,
        q: 0,
        r: 0,
    };
    GExpression::from_parts(0, Arc::new(vec![unit]), rate, shift)
}

/// `G^(n)` built by `n` applications of [`apply_operator`].
pub fn g_derivative(rate: f64, shift: f64, n: u32) -> Result<GExpression> {
    let mut g = g_base(rate, shift)?;
    for _ in 0..n {
        g = apply_operator(&g);
    }
    Ok(g)
}

/// One application of `(1/sinh s) d/ds`.
///
/// For `c s^p cosh^q sinh^{-r} exp(-a s^2)` the product rule gives
/// `p s^{p-1} cosh^q sinh^{-r-1}`, `q s^p cosh^{q-1} sinh^{-r}`,
/// `-r s^p cosh^{q+1} sinh^{-r-2}` and `-2a s^{p+1} cosh^q sinh^{-r-1}`.
pub fn apply_operator(g: &GExpression) -> GExpression {
    let mut out = TermMap::new();
    for t in g.terms.iter() {
        let (p, q, r) = t.key();
        if p > 0 {
            let k = BigRational::from_integer(BigInt::from(p));
            accumulate(&mut out, (p - 1, q, r + 1), t.coeff.scale(&k));
        }
        if q == 1 {
            accumulate(&mut out, (p, 0, r), t.coeff.clone());
        }
        if r > 0 {
            let c = t.coeff.scale(&BigRational::from_integer(-BigInt::from(r)));
            if q == 0 {
                accumulate(&mut out, (p, 1, r + 2), c);
            } else {
                // cosh^2 / sinh^{r+2} = 1 / sinh^{r+2} + 1 / sinh^r
                accumulate(&mut out, (p, 0, r + 2), c.clone());
                accumulate(&mut out, (p, 0, r), c);
            }
        }
        let c = t.coeff.times_rate().scale(&BigRational::from_integer(BigInt::from(-2)));
        accumulate(&mut out, (p + 1, q, r + 1), c);
    }
    GExpression::from_parts(g.order + 1, Arc::new(collect_terms(out)), g.rate, g.shift)
        .expect("parameters were validated when g was built")
}

impl GExpression {
    fn from_parts(order: u32, terms: Arc<Vec<GTerm>>, rate: f64, shift: f64) -> Result<Self> {
        check_params(rate, shift)?;
        let bound = terms.iter().map(|t| t.coeff.eval(rate)).collect();
        Ok(Self {
            order,
            terms,
            rate,
            shift,
            bound,
            mp_coeffs: Arc::new(OnceLock::new()),
        })
    }

    /// Builds an expression from arbitrary terms, merging duplicate keys.
    /// Terms must already be canonical (`q <= 1`).
    pub fn from_terms(order: u32, terms: Vec<GTerm>, rate: f64, shift: f64) -> Result<Self> {
        let mut map = TermMap::new();
        for t in terms {
            if t.q > 1 {
                return Err(Error::invalid("terms must have q in {0, 1}"));
            }
            accumulate(&mut map, t.key(), t.coeff);
        }
        Self::from_parts(order, Arc::new(collect_terms(map)), rate, shift)
    }

    /// Same term algebra at a different rate and shift.
    pub fn rebind(&self, rate: f64, shift: f64) -> Result<Self> {
        Self::from_parts(self.order, Arc::clone(&self.terms), rate, shift)
    }

    /// Term-wise sum of two expressions at the same parameters.
    pub fn try_add(&self, other: &GExpression) -> Result<GExpression> {
        if self.rate != other.rate || self.shift != other.shift || self.order != other.order {
            return Err(Error::invalid("can only add expressions of equal order and parameters"));
        }
        let terms = self.terms.iter().chain(other.terms.iter()).cloned().collect();
        Self::from_terms(self.order, terms, self.rate, self.shift)
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn terms(&self) -> &[GTerm] {
        &self.terms
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `(a/pi)^{1/2} exp(-a s^2 + E)`.
    pub fn prefactor(&self, s: f64) -> f64 {
        (self.rate / std::f64::consts::PI).sqrt() * (-self.rate * s * s + self.shift).exp()
    }

    /// Plain-text listing of the terms in key order.
    pub fn dump(&self) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        self.terms
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("\n+ ")
    }

    /// Value at `s >= S_MIN` by summing the terms.
    pub fn evaluate(&self, s: f64) -> Result<f64> {
        if !(s >= S_MIN) || !s.is_finite() {
            return Err(Error::Domain(format!(
                "term evaluation needs s >= {S_MIN}, got {s}; use evaluate_near_origin"
            )));
        }
        let pre = self.prefactor(s);
        if pre == 0.0 {
            return Ok(0.0);
        }
        let (sum, abs_sum) = self.sum_f64(s);
        let cond = abs_sum / sum.abs();
        if cond.is_finite() && cond * 64.0 * f64::EPSILON <= F64_TRUST {
            return Ok(pre * sum);
        }
        Ok(pre * self.sum_mp(s, cond))
    }

    fn sum_f64(&self, s: f64) -> (f64, f64) {
        let sh = s.sinh();
        let coth = 1.0 / s.tanh();
        let inv_sh = 1.0 / sh;
        let values: Vec<f64> = self
            .terms
            .iter()
            .zip(&self.bound)
            .map(|(t, c)| {
                let trig = if t.q == 1 {
                    if t.r >= 1 {
                        coth * inv_sh.powi(t.r as i32 - 1)
                    } else {
                        s.cosh()
                    }
                } else {
                    inv_sh.powi(t.r as i32)
                };
                c * s.powi(t.p as i32) * trig
            })
            .collect();
        let abs_sum = values.iter().map(|v| v.abs()).sum();
        (compensated_sum(values), abs_sum)
    }

    fn mp_coefficients(&self) -> &[BigFloat] {
        self.mp_coeffs.get_or_init(|| {
            let a = mp::from_f64(self.rate, MP_COEFF_PREC);
            self.terms
                .iter()
                .map(|t| t.coeff.eval_mp(&a, MP_COEFF_PREC))
                .collect()
        })
    }

    /// Multiprecision term sum; precision grows with the observed condition
    /// number until the result carries at least ~60 good bits.
    fn sum_mp(&self, s: f64, cond_hint: f64) -> f64 {
        let hint_bits = if cond_hint.is_finite() { cond_hint.log2().max(0.0) as usize } else { 200 };
        let mut prec = (128 + hint_bits).min(MP_MAX_PREC);
        loop {
            let (sum, abs_sum) = self.sum_mp_at(s, prec);
            let value = mp::to_f64(&sum);
            let cond = mp::to_f64(&abs_sum) / value.abs();
            let needed = if cond.is_finite() { cond.log2().max(0.0) as usize + 72 } else { usize::MAX };
            if needed <= prec || prec >= MP_MAX_PREC {
                return value;
            }
            prec = (needed + 32).min(MP_MAX_PREC);
        }
    }

    fn sum_mp_at(&self, s: f64, prec: usize) -> (BigFloat, BigFloat) {
        let rm = mp::RM;
        let work = prec + 32;
        let coeffs = self.mp_coefficients();
        let x = mp::from_f64(s, work);
        let e = mp::with_consts(|cc| x.exp(work, rm, cc));
        let ei = e.reciprocal(work, rm);
        let two = mp::from_f64(2.0, work);
        let sh = e.sub(&ei, work, rm).div(&two, work, rm);
        let ch = e.add(&ei, work, rm).div(&two, work, rm);
        let inv_sh = sh.reciprocal(work, rm);

        let max_p = self.terms.iter().map(|t| t.p).max().unwrap_or(0) as usize;
        let max_r = self.terms.iter().map(|t| t.r).max().unwrap_or(0) as usize;
        let powers = |base: &BigFloat, n: usize| {
            let mut out = Vec::with_capacity(n + 1);
            out.push(mp::from_f64(1.0, work));
            for k in 1..=n {
                out.push(out[k - 1].mul(base, work, rm));
            }
            out
        };
        let s_pow = powers(&x, max_p);
        let sh_pow = powers(&inv_sh, max_r);

        let mut sum = mp::from_f64(0.0, work);
        let mut abs_sum = mp::from_f64(0.0, work);
        for (t, c) in self.terms.iter().zip(coeffs) {
            let mut v = c.mul(&s_pow[t.p as usize], work, rm).mul(&sh_pow[t.r as usize], work, rm);
            if t.q == 1 {
                v = v.mul(&ch, work, rm);
            }
            abs_sum = abs_sum.add(&v.abs(), work, rm);
            sum = sum.add(&v, work, rm);
        }
        (sum, abs_sum)
    }

    /// Value at `0 <= s <= S_MIN` from the Taylor series in `w = l - 1`.
    ///
    /// With `v(l) = arccosh(l)^2 = sum c_k w^k`, the coefficients satisfy
    /// `c_1 = 2`, `c_{j+1} = -c_j j^2 / ((j+1)(2j+1))` (from the ODE
    /// `(l^2 - 1) v'' + l v' = 2`). The series of `exp(-a v)` is built by the
    /// usual exponential recurrence and then differentiated `n` times.
    pub fn evaluate_near_origin(&self, s: f64) -> Result<f64> {
        if !(0.0..=S_MIN).contains(&s) {
            return Err(Error::Domain(format!(
                "series evaluation needs 0 <= s <= {S_MIN}, got {s}"
            )));
        }
        let n = self.order as usize;
        let w = excess_from_arc(s);
        let total = n + MAX_SERIES_TERMS;

        let mut h = vec![0.0; total + 1];
        let mut c = 2.0;
        for (j, slot) in h.iter_mut().enumerate().skip(1) {
            *slot = -self.rate * c;
            let jf = j as f64;
            c = -c * jf * jf / ((jf + 1.0) * (2.0 * jf + 1.0));
        }
        let mut b = vec![0.0; total + 1];
        b[0] = 1.0;
        for m in 1..=total {
            let acc: f64 = (1..=m).map(|k| k as f64 * h[k] * b[m - k]).sum();
            b[m] = acc / m as f64;
        }

        // sum_j (n+j)!/j! b_{n+j} w^j
        let mut falling = (1..=n).map(|k| k as f64).product::<f64>();
        let mut wpow = 1.0;
        let mut terms = Vec::with_capacity(MAX_SERIES_TERMS + 1);
        for j in 0..=MAX_SERIES_TERMS {
            if j > 0 {
                falling *= (n + j) as f64 / j as f64;
                wpow *= w;
            }
            let term = falling * b[n + j] * wpow;
            terms.push(term);
            let partial: f64 = terms.iter().sum();
            if j > 0 && term.abs() <= 1e-17 * partial.abs() {
                break;
            }
            if wpow == 0.0 {
                break;
            }
        }
        let sum = compensated_sum(terms);
        Ok(self.prefactor(0.0) * sum)
    }

    /// Dispatches to the term sum or the origin series depending on `s`.
    pub fn value(&self, s: f64) -> Result<f64> {
        if s < S_MIN {
            self.evaluate_near_origin(s)
        } else {
            self.evaluate(s)
        }
    }
}

impl fmt::Display for GExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

/// Free-function form of [`GExpression::evaluate`].
pub fn evaluate(g: &GExpression, s: f64) -> Result<f64> {
    g.evaluate(s)
}

/// Free-function form of [`GExpression::evaluate_near_origin`].
pub fn evaluate_near_origin(g: &GExpression, s: f64) -> Result<f64> {
    g.evaluate_near_origin(s)
}
