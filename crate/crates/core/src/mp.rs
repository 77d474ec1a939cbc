//! Thin helpers over `astro-float` for the few places that need more than
//! binary64.

use std::cell::RefCell;

use astro_float::{BigFloat, Consts, Radix, RoundingMode, Sign};
use num_bigint::BigInt;

pub(crate) const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("astro-float constants cache"));
}

pub(crate) fn with_consts<T>(f: impl FnOnce(&mut Consts) -> T) -> T {
    CONSTS.with(|cc| f(&mut cc.borrow_mut()))
}

pub(crate) fn from_f64(v: f64, prec: usize) -> BigFloat {
    BigFloat::from_f64(v, prec)
}

pub(crate) fn from_bigint(v: &BigInt, prec: usize) -> BigFloat {
    match i64::try_from(v) {
        Ok(small) if small.unsigned_abs() < (1u64 << 53) => BigFloat::from_f64(small as f64, prec),
        _ => with_consts(|cc| BigFloat::parse(&v.to_string(), Radix::Dec, prec, RM, cc)),
    }
}

pub(crate) fn to_f64(x: &BigFloat) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_inf_pos() {
        return f64::INFINITY;
    }
    if x.is_inf_neg() {
        return f64::NEG_INFINITY;
    }
    let mut y = x.clone();
    if y.set_precision(64, RM).is_err() {
        return f64::NAN;
    }
    let Some((words, _, sign, exp, _)) = y.as_raw_parts() else {
        return f64::NAN;
    };
    let top = words.last().copied().unwrap_or(0);
    if top == 0 {
        return 0.0;
    }
    let mut v = top as f64;
    let mut shift = exp - 64;
    while shift < -1000 {
        v *= 2f64.powi(-1000);
        shift += 1000;
    }
    while shift > 1000 {
        v *= 2f64.powi(1000);
        shift -= 1000;
    }
    v *= 2f64.powi(shift);
    if sign == Sign::Neg {
        -v
    } else {
        v
    }
}
