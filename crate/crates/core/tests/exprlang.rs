use std::sync::Arc;

use proptest::prelude::*;

use soliton_core::exprlang::{differentiate, evaluate, parse_expr, BinaryOp, DerivativeTable, Expr, UnaryOp};

const DIM: usize = 4;

fn leaf() -> impl Strategy<Value = Arc<Expr>> {
    prop_oneof![
        (0..DIM).prop_map(|i| Arc::new(Expr::Var(i))),
        (-1000i32..1000).prop_map(|k| Arc::new(Expr::Const(f64::from(k) / 8.0))),
        prop_oneof![Just(1e-7), Just(2.5e20), Just(0.1), Just(std::f64::consts::PI)]
            .prop_map(|c| Arc::new(Expr::Const(c))),
    ]
}

fn unary_op() -> impl Strategy<Value = UnaryOp> {
    prop_oneof![
        Just(UnaryOp::Neg),
        Just(UnaryOp::Exp),
        Just(UnaryOp::Ln),
        Just(UnaryOp::Sin),
        Just(UnaryOp::Cos),
        Just(UnaryOp::Tan),
        Just(UnaryOp::Sinh),
        Just(UnaryOp::Cosh),
        Just(UnaryOp::Tanh),
        Just(UnaryOp::Sqrt),
    ]
}

fn binary_op() -> impl Strategy<Value = BinaryOp> {
    prop_oneof![Just(BinaryOp::Add), Just(BinaryOp::Sub), Just(BinaryOp::Mul), Just(BinaryOp::Div)]
}

/// Raw trees, built without the simplifying constructors so the printer sees
/// every shape the parser can produce.
fn raw_expr() -> impl Strategy<Value = Arc<Expr>> {
    leaf().prop_recursive(8, 64, 2, |inner| {
        prop_oneof![
            (unary_op(), inner.clone()).prop_map(|(op, a)| Arc::new(Expr::Unary(op, a))),
            (binary_op(), inner.clone(), inner.clone()).prop_map(|(op, a, b)| Arc::new(Expr::Binary(op, a, b))),
            (inner, -6i32..7, prop::bool::ANY).prop_map(|(a, k, half)| {
                let k = f64::from(k) + if half { 0.5 } else { 0.0 };
                Arc::new(Expr::Pow(a, k))
            }),
        ]
    })
}

/// Smooth trees on `[-1, 1]⁴` with bounded derivatives, for the
/// finite-difference comparison.
fn smooth_expr() -> impl Strategy<Value = Arc<Expr>> {
    let leaf = prop_oneof![
        (0..DIM).prop_map(Expr::var),
        (-16i32..16).prop_map(|k| Expr::constant(f64::from(k) / 8.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (prop_oneof![Just(UnaryOp::Sin), Just(UnaryOp::Cos), Just(UnaryOp::Tanh), Just(UnaryOp::Neg)], inner.clone())
                .prop_map(|(op, a)| Expr::unary(op, a)),
            inner.clone().prop_map(|a| Expr::unary(UnaryOp::Exp, Expr::unary(UnaryOp::Sin, a))),
            inner.clone().prop_map(|a| Expr::div(Expr::one(), Expr::add(Expr::constant(2.0), Expr::unary(UnaryOp::Cos, a)))),
            (prop_oneof![Just(BinaryOp::Add), Just(BinaryOp::Sub), Just(BinaryOp::Mul)], inner.clone(), inner.clone())
                .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (inner, 0u8..4).prop_map(|(a, k)| Expr::pow(a, f64::from(k))),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, DIM)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn print_parse_round_trip(e in raw_expr()) {
        let text = e.to_string();
        let parsed = parse_expr(&text, DIM).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(parsed.normalize(), e.normalize(), "printed as {}", text);
    }

    #[test]
    fn printing_is_a_fixed_point(e in raw_expr()) {
        let once = e.normalize().to_string();
        let twice = parse_expr(&once, DIM).unwrap().normalize().to_string();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn mixed_partials_commute(e in smooth_expr(), p in point(), i in 0..DIM, j in 0..DIM) {
        let dij = evaluate(&differentiate(&differentiate(&e, i), j), &p).unwrap();
        let dji = evaluate(&differentiate(&differentiate(&e, j), i), &p).unwrap();
        prop_assert!((dij - dji).abs() <= 1e-12 * (1.0 + dij.abs().max(dji.abs())), "{} vs {}", dij, dji);
    }

    #[test]
    fn derivative_matches_central_difference(e in smooth_expr(), p in point(), i in 0..DIM) {
        let h = 1e-5;
        let mut plus = p.clone();
        plus[i] += h;
        let mut minus = p.clone();
        minus[i] -= h;
        let fd = (evaluate(&e, &plus).unwrap() - evaluate(&e, &minus).unwrap()) / (2.0 * h);
        let exact = evaluate(&differentiate(&e, i), &p).unwrap();
        prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "{}: fd {} exact {}", e, fd, exact);
    }
}

#[test]
fn derivative_table_is_symmetric() {
    let e = parse_expr("sin(x1*x2)*exp(x3) + x1^3*x2/(1 + x3^2)", 3).unwrap();
    let table = DerivativeTable::new(&e, 3, 3);
    let p = [0.3, -0.7, 0.4];
    let direct = evaluate(&differentiate(&differentiate(&differentiate(&e, 0), 1), 2), &p).unwrap();
    let from_table = evaluate(table.get(&[0, 1, 2]).unwrap(), &p).unwrap();
    assert!((direct - from_table).abs() <= 1e-12 * (1.0 + direct.abs()));
}

#[test]
fn domain_errors_are_reported_not_silenced() {
    let e = parse_expr("ln(x1)", 1).unwrap();
    assert!(evaluate(&e, &[-1.0]).is_err());
    let e = parse_expr("1/x1", 1).unwrap();
    assert!(evaluate(&e, &[0.0]).is_err());
    let e = parse_expr("sqrt(x1 - 2)", 1).unwrap();
    assert!(evaluate(&e, &[1.0]).is_err());
}

#[test]
fn parse_errors_point_at_the_offending_column() {
    let text = "x1 + * x2";
    let err = parse_expr(text, 2).unwrap_err();
    assert!(err.render(text).contains("column 6"), "{}", err.render(text));
    let err = parse_expr("x1 + foo(x2)", 2).unwrap_err();
    assert!(err.to_string().contains("foo"), "{err}");
}
