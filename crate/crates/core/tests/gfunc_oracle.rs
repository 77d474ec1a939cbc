mod support;

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use pseudoheat::gfunc::{apply_operator, g_base, g_derivative, GExpression, GTerm, Poly, S_MIN};
use support::fd_oracle::{g_derivative_oracle, g_of_l};

const RATES: [f64; 3] = [0.125, 0.25, 1.0];
const ARCS: [f64; 9] = [0.1, 0.2, 0.35, 0.5, 0.8, 1.0, 2.0, 3.5, 5.0];

#[test]
fn term_algebra_matches_fd_oracle() {
    let mut worst = 0.0f64;
    for a in RATES {
        for n in 1..=5u32 {
            let g = g_derivative(a, 0.0, n).unwrap();
            for s in ARCS {
                let want = g_derivative_oracle(a, 0.0, n as usize, s);
                let got = g.evaluate(s).unwrap();
                let rel = ((got - want) / want).abs();
                assert!(rel <= 1e-6, "a={a} n={n} s={s}: {got} vs {want} (rel {rel:e})");
                worst = worst.max(rel);
            }
        }
    }
    println!("worst relative deviation from FD oracle: {worst:e}");
}

#[test]
fn nonzero_shift_scales_by_exp() {
    let shift = -0.7;
    for n in 0..=4u32 {
        let g = g_derivative(0.25, shift, n).unwrap();
        let want = g_derivative_oracle(0.25, shift, n as usize, 1.3);
        let got = g.evaluate(1.3).unwrap();
        assert!(((got - want) / want).abs() < 1e-6);
    }
}

#[test]
fn second_central_difference_example() {
    let a = 0.25;
    let g2 = apply_operator(&apply_operator(&g_base(a, 0.0).unwrap()));
    let l = 1f64.cosh();
    let h = 1e-3;
    let fd = (g_of_l(a, 0.0, l + h) - 2.0 * g_of_l(a, 0.0, l) + g_of_l(a, 0.0, l - h)) / (h * h);
    let got = g2.evaluate(1.0).unwrap();
    assert!(((got - fd) / fd).abs() < 1e-6, "{got} vs {fd}");
}

#[test]
fn first_order_closed_form() {
    let g1 = g_derivative(0.25, 0.0, 1).unwrap();
    let want = -2.0 * 0.25 / 1f64.sinh() * (1.0 / (4.0 * PI)).sqrt() * (-0.25f64).exp();
    let got = g1.evaluate(1.0).unwrap();
    assert!((got - want).abs() <= 1e-15 * want.abs());
}

#[test]
fn series_and_term_sum_agree_at_s_min() {
    for a in RATES {
        for shift in [0.0, -1.5] {
            for n in 0..=5u32 {
                let g = g_derivative(a, shift, n).unwrap();
                let sum = g.evaluate(S_MIN).unwrap();
                let series = g.evaluate_near_origin(S_MIN).unwrap();
                let rel = ((sum - series) / series).abs();
                assert!(rel <= 1e-9, "a={a} E={shift} n={n}: {sum} vs {series} (rel {rel:e})");
            }
        }
    }
}

#[test]
fn series_limits_at_origin() {
    let g1 = g_derivative(0.25, 0.3, 1).unwrap();
    let want = -0.5 * (1.0 / (4.0 * PI)).sqrt() * 0.3f64.exp();
    assert!((g1.evaluate_near_origin(0.0).unwrap() - want).abs() < 1e-15);
    assert!(g1.evaluate_near_origin(2.0 * S_MIN).is_err());
    assert!(g1.evaluate(0.5 * S_MIN).is_err());
}

#[test]
fn series_matches_oracle_just_below_s_min() {
    for n in 1..=5u32 {
        let g = g_derivative(0.25, 0.0, n).unwrap();
        let s = 0.5 * S_MIN;
        let want = g_derivative_oracle(0.25, 0.0, n as usize, s);
        let got = g.value(s).unwrap();
        assert!(((got - want) / want).abs() < 1e-6, "n={n}: {got} vs {want}");
    }
}

#[test]
fn term_count_growth() {
    let mut g = g_base(1.0, 0.0).unwrap();
    let mut prev = g.terms().len();
    for n in 1..=10u32 {
        g = apply_operator(&g);
        let count = g.terms().len();
        println!("order {n}: {count} terms");
        assert!(count >= prev, "term count shrank at order {n}");
        assert!(count < 10 * (n * n) as usize);
        prev = count;
    }
}

#[test]
fn alternating_sign() {
    let arcs = [0.0, 1e-4, S_MIN, 0.01, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0];
    for a in [0.05, 0.125, 0.25, 1.0, 4.0] {
        for shift in [-2.0, 0.0, 1.0] {
            for n in 0..=5u32 {
                let g = g_derivative(a, shift, n).unwrap();
                for s in arcs {
                    let v = g.value(s).unwrap();
                    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                    assert!(sign * v > 0.0, "a={a} E={shift} n={n} s={s}: {v}");
                }
            }
        }
    }
}

#[test]
fn dump_matches_golden_file() {
    for n in [2u32, 3, 4] {
        let g = g_derivative(1.0, 0.0, n).unwrap();
        let path = format!("{}/tests/golden/g{n}.txt", env!("CARGO_MANIFEST_DIR"));
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::write(&path, g.dump() + "\n").unwrap();
        }
        let golden = std::fs::read_to_string(&path).unwrap();
        assert_eq!(g.dump(), golden.trim_end(), "order {n} differs from {path}");
    }
}

#[test]
fn second_order_terms_by_hand() {
    // (1/sinh) d/ds of -2a s / sinh s.
    let g2 = g_derivative(1.0, 0.0, 2).unwrap();
    let expected = [
        ((0, 0, 2), Poly::from_integers(&[0, -2])),
        ((1, 1, 3), Poly::from_integers(&[0, 2])),
        ((2, 0, 2), Poly::from_integers(&[0, 0, 4])),
    ];
    assert_eq!(g2.terms().len(), expected.len());
    for (t, (key, coeff)) in g2.terms().iter().zip(expected) {
        assert_eq!(t.key(), key);
        assert_eq!(t.coeff, coeff);
    }
}

fn term_strategy() -> impl Strategy<Value = GTerm> {
    (
        prop::collection::vec((-20i64..=20, 1i64..=6), 1..=3),
        0u32..=4,
        0u8..=1,
        0u32..=5,
    )
        .prop_map(|(coeffs, p, q, r)| GTerm {
            coeff: Poly::from_coeffs(
                coeffs
                    .into_iter()
                    .map(|(num, den)| BigRational::new(BigInt::from(num), BigInt::from(den)))
                    .collect(),
            ),
            p,
            q,
            r,
        })
}

fn expression_strategy() -> impl Strategy<Value = Vec<GTerm>> {
    prop::collection::vec(term_strategy(), 1..=6)
}

proptest! {
    #[test]
    fn operator_is_linear(t1 in expression_strategy(), t2 in expression_strategy()) {
        let g1 = GExpression::from_terms(3, t1, 0.5, 0.0).unwrap();
        let g2 = GExpression::from_terms(3, t2, 0.5, 0.0).unwrap();
        let lhs = apply_operator(&g1.try_add(&g2).unwrap());
        let rhs = apply_operator(&g1).try_add(&apply_operator(&g2)).unwrap();
        prop_assert_eq!(lhs.terms(), rhs.terms());
        prop_assert_eq!(lhs.order(), 4);
    }
}
