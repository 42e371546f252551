use genham::expr::{Expression, Params};
use genham::exterior::{pullback_linear, FormField, FormValue, MultiIndex, PointMap, VectorField};
use proptest::prelude::*;

const N: usize = 4;

// Polynomial of degree ≤ 2 in x1..x4.
fn poly() -> impl Strategy<Value = Expression> {
    prop::collection::vec(-3i32..=3, 15).prop_map(|c| {
        let mut monomials = vec![Expression::one()];
        for a in 0..N {
            monomials.push(Expression::coord(a));
        }
        for a in 0..N {
            for b in a..N {
                monomials.push(Expression::coord(a) * Expression::coord(b));
            }
        }
        c.iter()
            .zip(monomials)
            .filter(|(c, _)| **c != 0)
            .fold(Expression::zero(), |acc, (c, m)| {
                acc + m * (*c as f64 / 2.0)
            })
    })
}

fn form(degree: usize) -> impl Strategy<Value = FormField> {
    let indices = MultiIndex::all(N, degree);
    prop::collection::vec(poly(), indices.len()).prop_map(move |cs| {
        FormField::from_terms(N, degree, indices.clone().into_iter().zip(cs)).unwrap()
    })
}

fn any_form() -> impl Strategy<Value = FormField> {
    (0..=N).prop_flat_map(form)
}

// Two forms with degrees in [lo, N] summing to at most `max`.
fn pair(lo: usize, max: usize) -> impl Strategy<Value = (FormField, FormField)> {
    (lo..=max - lo)
        .prop_flat_map(move |da| (Just(da), lo..=max - da))
        .prop_flat_map(|(da, db)| (form(da), form(db)))
}

fn field() -> impl Strategy<Value = VectorField> {
    prop::collection::vec(poly(), N).prop_map(VectorField::new)
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, N)
}

fn at(f: &FormField, p: &[f64]) -> FormValue {
    f.eval(p, &Params::new()).unwrap()
}

fn assert_close(a: &FormValue, b: &FormValue, tol: f64) -> Result<(), TestCaseError> {
    let diff = a.try_sub(b).unwrap().max_abs();
    prop_assert!(diff <= tol * (1.0 + a.max_abs()), "difference {diff}");
    Ok(())
}

proptest! {
    #[test]
    fn wedge_is_graded_commutative((a, b) in pair(0, N), p in point()) {
        let sign = if a.degree() * b.degree() % 2 == 0 { 1.0 } else { -1.0 };
        let ab = at(&a.wedge(&b).unwrap(), &p);
        let ba = at(&b.wedge(&a).unwrap(), &p).scale_f64(sign);
        assert_close(&ab, &ba, 1e-12)?;
    }

    #[test]
    fn d_squared_vanishes(w in any_form(), p in point()) {
        prop_assert!(at(&w.d().d(), &p).max_abs() <= 1e-12);
    }

    #[test]
    fn d_obeys_leibniz((a, b) in pair(0, N - 1), p in point()) {
        let sign = if a.degree() % 2 == 0 { 1.0 } else { -1.0 };
        let lhs = at(&a.wedge(&b).unwrap().d(), &p);
        let (da_b, a_db) = (at(&a.d().wedge(&b).unwrap(), &p), at(&a.wedge(&b.d()).unwrap(), &p));
        let rhs = da_b.try_add(&a_db.scale_f64(sign)).unwrap();
        // the two terms may cancel, so scale by their size rather than the sum's
        let diff = lhs.try_sub(&rhs).unwrap().max_abs();
        prop_assert!(diff <= 1e-12 * (1.0 + da_b.max_abs() + a_db.max_abs()), "difference {diff}");
    }

    #[test]
    fn interior_twice_vanishes(w in (2..=N).prop_flat_map(form), x in field(), p in point()) {
        let twice = w.interior_field(&x).unwrap().interior_field(&x).unwrap();
        prop_assert!(at(&twice, &p).max_abs() <= 1e-10);
    }

    #[test]
    fn interior_is_an_antiderivation((a, b) in pair(1, N), x in field(), p in point()) {
        let sign = if a.degree() % 2 == 0 { 1.0 } else { -1.0 };
        let lhs = at(&a.wedge(&b).unwrap().interior_field(&x).unwrap(), &p);
        let rhs = at(&a.interior_field(&x).unwrap().wedge(&b).unwrap(), &p)
            .try_add(&at(&a.wedge(&b.interior_field(&x).unwrap()).unwrap(), &p).scale_f64(sign))
            .unwrap();
        assert_close(&lhs, &rhs, 1e-10)?;
    }

    // L_X ω against d/ds (x + sX)*ω at s = 0.
    #[test]
    fn lie_derivative_matches_pullback_difference(w in any_form(), x in field(), p in point()) {
        let h = 1e-5;
        let shifted = |s: f64| {
            let comps = (0..N).map(|a| Expression::coord(a) + x.components()[a].clone() * s).collect();
            PointMap::new(N, comps).pullback_field(&w, &p, &Params::new()).unwrap()
        };
        let fd = shifted(h).try_sub(&shifted(-h)).unwrap().scale_f64(0.5 / h);
        let lie = at(&w.lie_derivative(&x).unwrap(), &p);
        assert_close(&lie, &fd, 1e-5)?;
    }

    #[test]
    fn pullback_is_functorial(w in any_form(), f in prop::collection::vec(poly(), N), g in prop::collection::vec(poly(), N), p in point()) {
        let (phi, psi) = (PointMap::new(N, f), PointMap::new(N, g));
        let params = Params::new();
        let composed = phi.compose(&psi).pullback_field(&w, &p, &params).unwrap();
        let q = psi.apply(&p, &params).unwrap();
        let staged = pullback_linear(&psi.jacobian_at(&p, &params).unwrap(), &phi.pullback_field(&w, &q, &params).unwrap());
        assert_close(&composed, &staged, 1e-9)?;
    }

    #[test]
    fn pullback_commutes_with_d(w in (0..N).prop_flat_map(form), f in prop::collection::vec(poly(), N), p in point()) {
        let phi = PointMap::new(N, f);
        let lhs = at(&phi.pullback_symbolic(&w).d(), &p);
        let rhs = phi.pullback_field(&w.d(), &p, &Params::new()).unwrap();
        assert_close(&lhs, &rhs, 1e-9)?;
    }
}

#[test]
fn interior_uses_left_convention() {
    let mut w = FormField::zero(3, 2);
    w.add_unordered(&[0, 1], Expression::one());
    let e2 = VectorField::coordinate(1, 3);
    let got = w
        .interior_field(&e2)
        .unwrap()
        .eval(&[0.0; 3], &Params::new())
        .unwrap();
    assert_eq!(got.coefficient(MultiIndex::single(0)), -1.0);
}

#[test]
fn top_form_pullback_is_determinant() {
    let mut w = FormField::zero(2, 2);
    w.add_unordered(&[0, 1], Expression::one());
    let phi = PointMap::new(
        2,
        vec![
            Expression::coord(0) * 2.0,
            Expression::coord(1) * 3.0 + Expression::coord(0),
        ],
    );
    let got = phi.pullback_field(&w, &[0.3, 0.4], &Params::new()).unwrap();
    assert_eq!(got.coefficient(MultiIndex::new(&[0, 1]).unwrap()), 6.0);
}
