use genham::expr::{parse, Expression, Params, Symbols};
use proptest::prelude::*;

const N: usize = 3;

// Trees whose values stay finite and smooth on [−1, 1]³.
fn smooth() -> impl Strategy<Value = Expression> {
    let leaf = prop_oneof![
        (0..N).prop_map(Expression::coord),
        (-20i32..20).prop_map(|c| Expression::constant(c as f64 / 8.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a / (b.sin() + 2.0)),
            inner.clone().prop_map(|a| -a),
            inner.clone().prop_map(Expression::sin),
            inner.clone().prop_map(Expression::cos),
            inner.clone().prop_map(|a| a.sin().exp()),
            inner.clone().prop_map(|a| (a.clone() * a + 1.0).sqrt()),
            inner.clone().prop_map(|a| (a.cos() + 2.0).ln()),
            (inner, 2u8..4).prop_map(|(a, e)| a.pow(e as f64)),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, N)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn printed_form_parses_to_same_function(e in smooth(), p in point()) {
        let text = e.to_string();
        let back = parse(&text, &Symbols::new(N)).unwrap();
        let (a, b) = (e.eval(&p, &Params::new()).unwrap(), back.eval(&p, &Params::new()).unwrap());
        prop_assert!(close(a, b, 1e-12), "{text}: {a} vs {b}");
    }

    #[test]
    fn derivative_matches_central_difference(e in smooth(), p in point(), axis in 0..N) {
        let h = 1e-5;
        let params = Params::new();
        let exact = e.differentiate(axis).eval(&p, &params).unwrap();
        let mut q = p.clone();
        q[axis] += h;
        let plus = e.eval(&q, &params).unwrap();
        q[axis] -= 2.0 * h;
        let minus = e.eval(&q, &params).unwrap();
        let fd = (plus - minus) / (2.0 * h);
        prop_assert!(close(exact, fd, 1e-5), "d/dx{} {e}: {exact} vs {fd}", axis + 1);
    }

    #[test]
    fn independence_is_conservative(e in smooth(), p in point(), axis in 0..N, shift in -0.5f64..0.5) {
        if e.is_independent_of(axis) {
            let mut q = p.clone();
            q[axis] += shift;
            prop_assert_eq!(e.eval(&p, &Params::new()).unwrap(), e.eval(&q, &Params::new()).unwrap());
        }
    }
}

#[test]
fn parameters_bind_and_substitute() {
    let s = Symbols::new(2).with_params(["a"]);
    let e = parse("a*x1^2 + sin(x2)", &s).unwrap();
    let mut params = Params::new();
    params.insert("a".into(), 3.0);
    let bound = e.bind(&params);
    assert_eq!(bound.eval(&[2.0, 0.0], &Params::new()).unwrap(), 12.0);
    let swapped = bound.substitute(&|a| Expression::coord(1 - a));
    assert_eq!(swapped.eval(&[0.0, 2.0], &Params::new()).unwrap(), 12.0);
}

#[test]
fn unbound_parameter_is_an_error() {
    let e = parse("b + x1", &Symbols::new(1).with_params(["b"])).unwrap();
    assert!(e.eval(&[1.0], &Params::new()).is_err());
}
