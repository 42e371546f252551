use std::collections::BTreeMap;

use genham::dynamics::{
    conservation_report, divergence, integrate, moser_residual, numeric_flow, vector_field_of,
    Dynamics, FlowRoute, Method, Route, Structure, DOMAIN_SLACK, NUMERIC_STEPS,
};
use genham::expr::{Expression, Params, ScalarField, Symbols};
use genham::exterior::{FormField, VectorField};
use genham::hdw::{hamiltonian_form, obstruction_check};
use genham::systems::{
    build, catalog, flat_nambu, fourdim, moser_example_1, moser_example_2, oscillator, Builtin,
};
use genham::Error;

#[test]
fn uncoupled_oscillator_matches_sine() {
    let sys = oscillator(0.0).unwrap();
    let x0 = [1.0, 0.0, 1.0, 0.0, 0.0, 2.0];
    let t = std::f64::consts::FRAC_PI_2;
    let tr = integrate(&sys, &x0, t, t / 1000.0, Method::Rk4).unwrap();
    let last = tr.last_state().unwrap();
    assert!((tr.times.last().unwrap() - t).abs() < 1e-15);
    assert!((last[1] - 1.0).abs() < 1e-8, "q1 = {}", last[1]);
    assert!(last[0].abs() < 1e-8, "p1 = {}", last[0]);
}

#[test]
fn flat_system_has_zero_drift() {
    let sys = flat_nambu(3, 3).unwrap();
    let tr = integrate(&sys, &[0.2, -0.3, -0.5], 0.5, 0.01, Method::Rk4).unwrap();
    let report = conservation_report(&tr, &sys).unwrap();
    assert_eq!(report.max_drift(), 0.0);
    assert!(tr.truncation.is_none());
}

#[test]
fn perturbed_right_hand_side_is_flagged() {
    let mut sys = oscillator(0.1).unwrap();
    // A stray term in J keeps the Hamiltonians conserved but not G1.
    let Structure::Tensor(j) = &mut sys.primary.structure else {
        panic!("tensor primary")
    };
    j.add_unordered(&[0, 1, 5], Expression::constant(0.05));
    let x0 = genham::systems::OSCILLATOR_X0;
    let tr = integrate(&sys, &x0, 5.0, 1e-3, Method::Rk4).unwrap();
    let report = conservation_report(&tr, &sys).unwrap();
    assert!(!report.passes(1e-6), "max drift {}", report.max_drift());

    let honest = oscillator(0.1).unwrap();
    let tr = integrate(&honest, &x0, 5.0, 1e-3, Method::Rk4).unwrap();
    assert!(conservation_report(&tr, &honest).unwrap().passes(1e-6));
}

#[test]
fn start_outside_domain_is_rejected() {
    let sys = oscillator(0.1).unwrap();
    let failure = integrate(
        &sys,
        &[50.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        1.0,
        1e-2,
        Method::Rk4,
    )
    .unwrap_err();
    assert!(matches!(failure.error, Error::OutsideDomain { .. }));
    assert!(failure.partial.is_none());
    assert!(matches!(
        vector_field_of(&sys, &[50.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        Err(Error::OutsideDomain { .. })
    ));
}

#[test]
fn routes_agree_on_every_builtin() {
    for entry in catalog() {
        let Builtin::System(sys) = build(entry.name, &BTreeMap::new()).unwrap() else {
            continue;
        };
        let mut checked = 0;
        for p in sys.domain.sample_points(50, 1) {
            let r = vector_field_of(&sys, &p).unwrap();
            if let Some(a) = r.agreement_residual {
                assert!(a <= 1e-9, "{}: agreement {a} at {p:?}", entry.name);
                checked += 1;
            }
        }
        assert_eq!(checked, 50, "{} lacks a second route", entry.name);
    }
}

// Along solutions ι_X σ = 0 and L_X w = d ι_X w = −dσ = 0.
#[test]
fn form_is_preserved_along_trajectories() {
    for sys in [
        oscillator(0.1).unwrap(),
        fourdim(ScalarField::parse("x1^2 + x2*x4", &Symbols::new(4)).unwrap())
            .unwrap()
            .spec,
    ] {
        let dynamics = Dynamics::new(&sys).unwrap();
        let x = dynamics.symbolic_field().unwrap().clone();
        let x = VectorField::new(
            x.components()
                .iter()
                .map(|c| c.clone() * sys.route_sign)
                .collect(),
        );
        let route = sys.form_route().unwrap();
        let Structure::Form(w) = &route.structure else {
            unreachable!()
        };
        let sigma = hamiltonian_form(&route.hamiltonians, sys.n).unwrap();
        let lie = w.lie_derivative(&x).unwrap();
        let contracted = sigma.interior_field(&x).unwrap();
        let tr = integrate(&sys, &sys.base_point, 1.0, 1e-2, Method::Rk4).unwrap();
        for state in &tr.states {
            assert!(
                lie.eval(state, &sys.params).unwrap().max_abs() <= 1e-10,
                "{}",
                sys.name
            );
            assert!(
                contracted.eval(state, &sys.params).unwrap().max_abs() <= 1e-10,
                "{}",
                sys.name
            );
        }
    }
}

#[test]
fn oscillator_is_divergence_free() {
    let sys = oscillator(0.3).unwrap();
    for p in sys.domain.sample_points(20, 2) {
        assert!(divergence(&sys, &p).unwrap().abs() <= 1e-12);
    }
}

#[test]
fn fourdim_leaves_domain_and_truncates() {
    let fd = fourdim(ScalarField::coordinate(0, 4)).unwrap();
    let x0 = [0.0, 9.0, 0.0, 2.0];
    for method in [Method::Rk4, Method::Rkf45 { rtol: 1e-9 }] {
        let tr = integrate(&fd.spec, &x0, 10.0, 1e-2, method).unwrap();
        let cut = tr.truncation.as_ref().expect("x2 leaves the box");
        assert!(
            cut.t > 1.9 && cut.t < 2.1,
            "{} stopped at {}",
            method.name(),
            cut.t
        );
        assert!(tr
            .states
            .iter()
            .all(|s| fd.spec.domain.contains_within(s, DOMAIN_SLACK)));
    }
}

#[test]
fn adaptive_run_conserves_oscillator_invariants() {
    let sys = oscillator(0.1).unwrap();
    let tr = integrate(
        &sys,
        &genham::systems::OSCILLATOR_X0,
        10.0,
        1e-2,
        Method::Rkf45 { rtol: 1e-10 },
    )
    .unwrap();
    assert!((tr.times.last().unwrap() - 10.0).abs() < 1e-12);
    assert!(conservation_report(&tr, &sys).unwrap().passes(1e-8));
}

#[test]
fn moser2_target_matches_display() {
    let m = moser_example_2(1.0, 1.0).unwrap();
    let s = Symbols::new(6);
    let e = |t: &str| ScalarField::parse(t, &s).unwrap().expr().clone();
    let mut expected = m.w0.clone();
    expected.add_unordered(&[0, 1, 2, 3], -e("1/sqrt(x3 + x4)"));
    expected.add_unordered(&[0, 1, 4, 5], -e("1/sqrt(x5 + x6)"));
    let params = Params::new();
    for p in m.sample_points(30, 0, 0.1).unwrap() {
        assert!(
            m.w.try_sub(&expected)
                .unwrap()
                .eval(&p, &params)
                .unwrap()
                .max_abs()
                <= 1e-12
        );
    }
    assert!(moser_residual(&m, &m.sample_points(30, 1, 0.1).unwrap()).unwrap() <= 1e-12);
}

#[test]
fn numeric_flow_tracks_closed_form() {
    for m in [
        moser_example_1(2.0).unwrap(),
        moser_example_2(1.0, 0.5).unwrap(),
    ] {
        for p in m.sample_points(20, 4, 0.1).unwrap() {
            let (exact, _) = m.flow_at(&p, 1.0, FlowRoute::ClosedForm).unwrap();
            let approx = numeric_flow(&m.x, &m.params, &p, 1.0, NUMERIC_STEPS).unwrap();
            let gap = exact
                .iter()
                .zip(&approx)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(gap <= 1e-6, "{}: {gap}", m.name);
        }
    }
}

#[test]
fn obstructed_flat_system_is_still_consistent() {
    assert!(!obstruction_check(4, 3).unwrap());
    let sys = flat_nambu(4, 3).unwrap();
    for p in sys.domain.sample_points(10, 0) {
        let r = vector_field_of(&sys, &p).unwrap();
        let solve = r.solve.unwrap();
        assert!(solve.consistent && !solve.surjectivity_possible);
        assert!(r.agreement_residual.unwrap() <= 1e-12);
    }
}

#[test]
fn inconsistent_form_route_is_reported() {
    // dx24 is not in the image of X ↦ ι_X(dx123 + dx145)
    let mut w = FormField::zero(5, 3);
    w.add_unordered(&[0, 1, 2], Expression::one());
    w.add_unordered(&[0, 3, 4], Expression::one());
    let mut sys = flat_nambu(5, 3).unwrap();
    sys.primary = Route::form(
        w,
        vec![ScalarField::coordinate(1, 5), ScalarField::coordinate(3, 5)],
    );
    sys.companion = None;
    let err = vector_field_of(&sys, &[0.1; 5]).unwrap_err();
    assert!(matches!(err, Error::Inconsistent { .. }), "{err}");
}

// dF/dt along a trajectory equals the bracket {F, G, H} = −ι_dF ι_dG ι_dH J.
#[test]
fn time_derivative_is_the_bracket() {
    let sys = oscillator(0.1).unwrap();
    let Structure::Tensor(j) = &sys.primary.structure else {
        panic!("tensor primary")
    };
    let hams = &sys.primary.hamiltonians;
    let f = ScalarField::parse("p1*q2 + xi1^2 - sin(q1)", &sys.symbols()).unwrap();
    let dt = 1e-3;
    let tr = integrate(&sys, &sys.base_point, 0.2, dt, Method::Rk4).unwrap();
    let params = &sys.params;
    for i in 1..tr.len() - 1 {
        let x = &tr.states[i];
        let mut c = j.eval(x, params).unwrap();
        for g in hams.iter().rev().chain([&f]) {
            c = c.interior(&g.gradient_at(x, params).unwrap()).unwrap();
        }
        let bracket = -c.as_scalar().unwrap();
        let fd = (f.eval(&tr.states[i + 1], params).unwrap()
            - f.eval(&tr.states[i - 1], params).unwrap())
            / (2.0 * dt);
        assert!(
            (bracket - fd).abs() <= 1e-5 * (1.0 + bracket.abs()),
            "t={}: {bracket} vs {fd}",
            tr.times[i]
        );
    }
}
