mod common;

use naim_cli::expr::{parse, Expr, ParseError, Program, Scope};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scope() -> Scope {
    Scope::new(common::VARS)
}

#[test]
fn documented_examples() {
    let s = Scope::new(["x1", "y", "eps"]);
    let e = parse("-y + eps*x1", &s).unwrap();
    assert_eq!(e.eval_reference(&[3.0, 0.5, 0.1]), -0.5 + 0.1 * 3.0);
    assert_eq!(e.derivative(1), Expr::Num(-1.0));
    let s = Scope::new(["th", "al"]);
    let e = parse("-(sin(th)) + 0.5*cos(al)", &s).unwrap();
    assert_eq!(e.eval_reference(&[0.0, 0.0]), 0.5);
}

#[test]
fn error_positions_span_lines() {
    let s = scope();
    match parse("x1 +\n  sin(x2,\n y1)", &s) {
        Err(ParseError::Arity { line, column, expected, found, .. }) => assert_eq!((line, column, expected, found), (2, 3, 1, 2)),
        other => panic!("{other:?}"),
    }
    match parse("x1 * (y1 +\n\n   )", &s) {
        Err(ParseError::Unexpected { line, column, .. }) => assert_eq!((line, column), (3, 4)),
        other => panic!("{other:?}"),
    }
    assert_eq!(parse("x1 + z", &s).unwrap_err().to_string(), "1:6: unknown identifier 'z'");
}

#[test]
fn pi_is_a_constant_unless_shadowed() {
    assert_eq!(parse("pi", &scope()).unwrap(), Expr::Num(std::f64::consts::PI));
    let s = Scope::new(["pi"]);
    assert_eq!(parse("pi", &s).unwrap(), Expr::Var(0));
}

fn fd(e: &Program, x: &[f64], j: usize) -> f64 {
    let h = 1e-5;
    let mut p = x.to_vec();
    let mut m = x.to_vec();
    p[j] += h;
    m[j] -= h;
    let mut p2 = x.to_vec();
    let mut m2 = x.to_vec();
    p2[j] += 2.0 * h;
    m2[j] -= 2.0 * h;
    (8.0 * (e.eval(&p) - e.eval(&m)) - (e.eval(&p2) - e.eval(&m2))) / (12.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn print_parse_is_idempotent(seed in any::<u64>()) {
        let s = scope();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = common::random_expr(&mut rng, 4, &common::VARS);
        let e1 = parse(&text, &s).unwrap();
        let printed = e1.display(&s).to_string();
        let e2 = parse(&printed, &s).unwrap();
        prop_assert_eq!(&e1, &e2);
        prop_assert_eq!(e2.display(&s).to_string(), printed);
    }

    #[test]
    fn compiled_matches_reference(seed in any::<u64>()) {
        let s = scope();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = parse(&common::random_expr(&mut rng, 5, &common::VARS), &s).unwrap();
        let p = Program::compile(&e);
        for _ in 0..5 {
            let x = common::point(&mut rng, 4);
            let (a, b) = (p.eval(&x), e.eval_reference(&x));
            prop_assert!((a - b).abs() <= 1e-12 || (a.is_nan() && b.is_nan()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn derivative_trees_match_differences(seed in any::<u64>()) {
        let s = scope();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = parse(&common::random_expr(&mut rng, 4, &common::VARS), &s).unwrap();
        let p = Program::compile(&e);
        let x = common::point(&mut rng, 4);
        for j in 0..4 {
            let d = e.derivative(j);
            let exact = Program::compile(&d).eval(&x);
            let approx = fd(&p, &x, j);
            prop_assert!((exact - approx).abs() <= 1e-6 * exact.abs().max(1.0), "var {}: {} vs {}", j, exact, approx);
            if !e.depends_on(j) {
                prop_assert_eq!(d, Expr::Num(0.0));
            }
        }
    }

    #[test]
    fn number_literals_round_trip(v in 0.0..1e6f64) {
        let s = scope();
        let e = parse(&format!("{v:?}"), &s).unwrap();
        prop_assert_eq!(e, Expr::Num(v));
    }
}
