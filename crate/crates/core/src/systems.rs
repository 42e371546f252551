//! Built-in systems: the two-oscillator model, the four-dimensional
//! non-Poisson example, the quasisymmetry field, flat canonical fixtures and
//! the two Moser flattening problems.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dynamics::{MoserProblem, Route, SystemSpec};
use crate::error::{Error, Result};
use crate::expr::{parse, Expression, Params, ScalarField, Symbols};
use crate::exterior::{FormField, MultiVectorField, PointMap, VectorField};
use crate::sample::DomainBox;

const OSCILLATOR_ALIASES: [&str; 6] = ["p1", "q1", "xi1", "p2", "q2", "xi2"];

fn monomial_form(n: usize, terms: &[(&[usize], Expression)]) -> FormField {
    let mut out = FormField::zero(n, terms[0].0.len());
    for (axes, c) in terms {
        out.add_unordered(axes, c.clone());
    }
    out
}

fn monomial_tensor(n: usize, terms: &[(&[usize], Expression)]) -> MultiVectorField {
    let mut out = MultiVectorField::zero(n, terms[0].0.len());
    for (axes, c) in terms {
        out.add_unordered(axes, c.clone());
    }
    out
}

fn dform(f: &ScalarField) -> FormField {
    FormField::from_components(f.gradient())
}

fn center(domain: &DomainBox) -> Vec<f64> {
    domain
        .bounds()
        .iter()
        .map(|(lo, hi)| 0.5 * (lo + hi))
        .collect()
}

fn oscillator_symbols() -> Symbols {
    Symbols::new(6)
        .with_aliases(&OSCILLATOR_ALIASES)
        .with_params(["lambda"])
}

/// Two coupled quantum-moment oscillators on (p1, q1, ξ1, p2, q2, ξ2).
///
/// Primary route: J = ∂_{p1q1ξ1} + ∂_{p2q2ξ2} with Hamiltonians [G, H],
/// G = G1 + G2. Companion: w = (dp1∧dq1 + dp2∧dq2)∧dG2 with
/// [H − (G1+G2)/2, G2]; the shifted energy has no dξ1 part, which w cannot
/// produce. The form has kernel ∂_{ξ1}.
pub fn oscillator(lambda: f64) -> Result<SystemSpec> {
    let s = oscillator_symbols();
    let field = |t: &str| ScalarField::parse(t, &s);
    let h = field("0.5*(p1^2 + p2^2 + xi1 + xi2) + lambda*q1*xi2")?;
    let g1 = field("xi1 - q1^2")?;
    let g2 = field("xi2 - q2^2")?;
    let g = field("xi1 - q1^2 + xi2 - q2^2")?;
    let reduced = field("0.5*(p1^2 + p2^2 + q1^2 + q2^2) + lambda*q1*xi2")?;
    let one = Expression::one;
    let j = monomial_tensor(6, &[(&[0, 1, 2], one()), (&[3, 4, 5], one())]);
    let omega = monomial_form(6, &[(&[0, 1], one()), (&[3, 4], one())]);
    let w = omega.wedge(&dform(&g2))?;
    let domain = DomainBox::uniform(6, -20.0, 20.0);
    let spec = SystemSpec {
        name: "oscillator".into(),
        n: 6,
        primary: Route::tensor(j, vec![g.clone(), h.clone()]),
        companion: Some(Route::form(w, vec![reduced, g2.clone()])),
        route_sign: 1.0,
        hamiltonian_names: vec!["G".into(), "H".into()],
        casimirs: vec![g],
        invariants: vec![("H".into(), h), ("G1".into(), g1), ("G2".into(), g2)],
        measure_density: Some(ScalarField::new(Expression::one(), 6)),
        params: Params::from([("lambda".to_string(), lambda)]),
        domain,
        aliases: OSCILLATOR_ALIASES.iter().map(|s| s.to_string()).collect(),
        base_point: vec![0.0, 1.0, 1.0, 0.0, 0.0, 2.0],
    };
    spec.validate()?;
    Ok(spec)
}

/// Default initial state for oscillator runs.
pub const OSCILLATOR_X0: [f64; 6] = [0.0, 1.0, 1.0, 0.0, 0.0, 2.0];

/// ι_{dG}J = ∂_{p1q1} + 2q1∂_{p1ξ1} + ∂_{p2q2} + 2q2∂_{p2ξ2}.
pub fn oscillator_poisson_bivector() -> MultiVectorField {
    let s = oscillator_symbols();
    let e = |t: &str| parse(t, &s).expect("fixed expression");
    monomial_tensor(
        6,
        &[
            (&[0, 1], e("1")),
            (&[0, 2], e("2*q1")),
            (&[3, 4], e("1")),
            (&[3, 5], e("2*q2")),
        ],
    )
}

/// The four-dimensional family built on 𝒥 = (1/x4)(∂2∧∂1 + ∂4∧∂3).
#[derive(Clone, Debug)]
pub struct FourDim {
    /// Form route w = ω∧dx4 with [H, x4], companion 𝒥 with [H].
    pub spec: SystemSpec,
    pub bivector: MultiVectorField,
    /// ω = x4(dx12 + dx34), not closed.
    pub omega: FormField,
    pub w: FormField,
    /// ω∧dx3∧dx4, when H is also independent of x4.
    pub w4: Option<FormField>,
    /// −(1/x4)∂_{1234}, inverse of w4 on ker dx3 ∩ ker dx4.
    pub delta_inverse: Option<MultiVectorField>,
}

pub fn fourdim(h: ScalarField) -> Result<FourDim> {
    if h.dimension() != 4 {
        return Err(Error::Invalid(
            "fourdim needs a Hamiltonian on 4 coordinates".into(),
        ));
    }
    if !h.expr().is_independent_of(2) {
        return Err(Error::Invalid(format!("H = {h} depends on x3")));
    }
    let x4 = Expression::coord(3);
    let inv = Expression::one() / x4.clone();
    let bivector = monomial_tensor(4, &[(&[1, 0], inv.clone()), (&[3, 2], inv.clone())]);
    let omega = monomial_form(4, &[(&[0, 1], x4.clone()), (&[2, 3], x4.clone())]);
    let c = ScalarField::coordinate(3, 4);
    let w = omega.wedge(&dform(&c))?;
    let (w4, delta_inverse) = if h.expr().is_independent_of(3) {
        let w4 = omega
            .wedge(&dform(&ScalarField::coordinate(2, 4)))?
            .wedge(&dform(&c))?;
        (Some(w4), Some(monomial_tensor(4, &[(&[0, 1, 2, 3], -inv)])))
    } else {
        (None, None)
    };
    let domain = DomainBox::uniform(4, -10.0, 10.0).with_axis(3, 0.1, 10.0);
    let spec = SystemSpec {
        name: "fourdim".into(),
        n: 4,
        primary: Route::form(w.clone(), vec![h.clone(), c.clone()]),
        companion: Some(Route::tensor(bivector.clone(), vec![h.clone()])),
        route_sign: 1.0,
        hamiltonian_names: vec!["H".into(), "x4".into()],
        casimirs: vec![c],
        invariants: vec![],
        measure_density: Some(ScalarField::coordinate(3, 4)),
        params: Params::new(),
        base_point: vec![0.5, 0.5, 0.5, 1.0],
        domain,
        aliases: vec![],
    };
    spec.validate()?;
    Ok(FourDim {
        spec,
        bivector,
        omega,
        w,
        w4,
        delta_inverse,
    })
}

/// Quasisymmetry data with its derived quantities.
#[derive(Clone, Debug)]
pub struct Quasisymmetry {
    /// Tensor route ε/(B·∇B) with [Ψ, B], companion w = −(B·∇B)dx123.
    pub spec: SystemSpec,
    pub u: VectorField,
    /// B = |Bvec|.
    pub b: ScalarField,
    /// B·∇B.
    pub g: ScalarField,
}

pub fn quasisymmetry_default_box() -> DomainBox {
    DomainBox::uniform(3, 0.5, 1.5).with_axis(2, 0.0, 1.0)
}

/// u = ∇Ψ×∇B/(B·∇B) for B = |Bvec|. The denominator and ∇Ψ×∇B are checked
/// nonzero at 50 sampled points of `domain`.
pub fn quasisymmetry(
    psi: ScalarField,
    bvec: [ScalarField; 3],
    domain: DomainBox,
) -> Result<Quasisymmetry> {
    if psi.dimension() != 3 || bvec.iter().any(|b| b.dimension() != 3) || domain.dimension() != 3 {
        return Err(Error::Invalid(
            "quasisymmetry inputs live on 3 coordinates".into(),
        ));
    }
    let sq = bvec.iter().fold(Expression::zero(), |acc, b| {
        acc + b.expr().clone() * b.expr().clone()
    });
    let b = ScalarField::new(sq.sqrt(), 3);
    let g_expr = (0..3).fold(Expression::zero(), |acc, i| {
        acc + bvec[i].expr().clone() * b.gradient()[i].clone()
    });
    let g = ScalarField::new(g_expr, 3);
    let (dp, db) = (psi.gradient(), b.gradient());
    let cross: Vec<Expression> = (0..3)
        .map(|i| {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            dp[j].clone() * db[k].clone() - dp[k].clone() * db[j].clone()
        })
        .collect();
    let u = VectorField::new(cross.iter().map(|c| c.clone() / g.expr().clone()).collect());
    let params = Params::new();
    for p in domain.sample_points(50, 0) {
        let gv = g.eval(&p, &params)?;
        if !(gv.abs() > 1e-12) {
            return Err(Error::Invalid(format!("B·∇B vanishes near {p:?}")));
        }
        let cv: f64 = cross
            .iter()
            .map(|c| c.eval(&p, &params).map(|v| v * v))
            .sum::<std::result::Result<f64, _>>()?;
        if !(cv.sqrt() > 1e-12) {
            return Err(Error::Invalid(format!("∇Ψ×∇B vanishes near {p:?}")));
        }
    }
    let j = monomial_tensor(3, &[(&[0, 1, 2], Expression::one() / g.expr().clone())]);
    let w = monomial_form(3, &[(&[0, 1, 2], -g.expr().clone())]);
    let hams = vec![psi, b.clone()];
    let spec = SystemSpec {
        name: "quasisymmetry".into(),
        n: 3,
        primary: Route::tensor(j, hams.clone()),
        companion: Some(Route::form(w, hams)),
        route_sign: 1.0,
        hamiltonian_names: vec!["Psi".into(), "B".into()],
        casimirs: vec![],
        invariants: vec![],
        measure_density: Some(g.clone()),
        params,
        base_point: center(&domain),
        domain,
        aliases: vec![],
    };
    spec.validate()?;
    Ok(Quasisymmetry { spec, u, b, g })
}

/// Ψ = x1² + x2², Bvec = (−x2, x1, 1 + x3) on the default box.
pub fn quasisymmetry_default() -> Result<Quasisymmetry> {
    let s = Symbols::new(3);
    let f = |t: &str| ScalarField::parse(t, &s);
    quasisymmetry(
        f("x1^2 + x2^2")?,
        [f("-x2")?, f("x1")?, f("1 + x3")?],
        quasisymmetry_default_box(),
    )
}

/// w = dx^{1..k}, J = ∂_{1..k}, Hamiltonians x1..x^{k−1}.
pub fn flat_nambu(n: usize, k: usize) -> Result<SystemSpec> {
    if k < 2 || k > n || n > crate::exterior::MAX_DIM {
        return Err(Error::InvalidDegree { n, k });
    }
    let axes: Vec<usize> = (0..k).collect();
    let w = monomial_form(n, &[(&axes, Expression::one())]);
    let j = monomial_tensor(n, &[(&axes, Expression::one())]);
    let hams: Vec<ScalarField> = (0..k - 1).map(|a| ScalarField::coordinate(a, n)).collect();
    // X_tensor = −(−1)^{(k−1)(k−2)/2}∂_k and X_form = −(−1)^{k−1}∂_k.
    let route_sign = if (k * (k - 1) / 2).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    };
    let spec = SystemSpec {
        name: format!("flat_nambu({n},{k})"),
        n,
        primary: Route::form(w, hams.clone()),
        companion: Some(Route::tensor(j, hams)),
        route_sign,
        hamiltonian_names: (1..k).map(|i| format!("x{i}")).collect(),
        casimirs: vec![],
        invariants: vec![],
        measure_density: Some(ScalarField::new(Expression::one(), n)),
        params: Params::new(),
        domain: DomainBox::uniform(n, -1.0, 1.0),
        aliases: vec![],
        base_point: vec![0.0; n],
    };
    spec.validate()?;
    Ok(spec)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} must be positive, got {v}")))
    }
}

/// w₀ = dx123 + dx124 on ℝ⁴ with X = √((x3+x4)f/2)(∂3 + ∂4).
pub fn moser_example_1(f: f64) -> Result<MoserProblem> {
    positive("f", f)?;
    let s = Symbols::new(4).with_params(["t"]);
    let e = |t: &str| parse(&t.replace('F', &format!("({f:?})")), &s);
    let one = Expression::one;
    let w0 = monomial_form(4, &[(&[0, 1, 2], one()), (&[0, 1, 3], one())]);
    let speed = e("sqrt((x3 + x4)*F/2)")?;
    let x = VectorField::new(vec![
        Expression::zero(),
        Expression::zero(),
        speed.clone(),
        speed,
    ]);
    let domain = DomainBox::uniform(4, -1.0, 1.0)
        .with_axis(2, 0.05, 2.0)
        .with_axis(3, 0.05, 2.0);
    let mut problem = MoserProblem::new("moser1", w0.clone(), x, domain)?;
    let phi = ScalarField::new(e("sqrt(2*(x3 + x4)*F)")?, 4);
    let dx12 = monomial_form(4, &[(&[0, 1], one())]);
    problem.w = w0.try_sub(&dx12.wedge(&dform(&phi))?)?;
    problem.flow = Some(PointMap::new(
        4,
        vec![
            e("x1")?,
            e("x2")?,
            e("(x3 - x4)/2 + 0.5*(sqrt(x3 + x4) + sqrt(F/2)*t)^2")?,
            e("(x4 - x3)/2 + 0.5*(sqrt(x3 + x4) + sqrt(F/2)*t)^2")?,
        ],
    ));
    problem.positivity = vec![e("x3 + x4")?];
    Ok(problem)
}

/// w₀ = dx1234 + dx1256 on ℝ⁶ with
/// X = f√(x3+x4)(∂3 + ∂4) + g√(x5+x6)(∂5 + ∂6).
pub fn moser_example_2(f: f64, g: f64) -> Result<MoserProblem> {
    positive("f", f)?;
    positive("g", g)?;
    let s = Symbols::new(6).with_params(["t"]);
    let e = |t: &str| {
        parse(
            &t.replace('F', &format!("({f:?})"))
                .replace('G', &format!("({g:?})")),
            &s,
        )
    };
    let one = Expression::one;
    let w0 = monomial_form(6, &[(&[0, 1, 2, 3], one()), (&[0, 1, 4, 5], one())]);
    let a = e("F*sqrt(x3 + x4)")?;
    let b = e("G*sqrt(x5 + x6)")?;
    let x = VectorField::new(vec![
        Expression::zero(),
        Expression::zero(),
        a.clone(),
        a,
        b.clone(),
        b,
    ]);
    let domain = DomainBox::uniform(6, -1.0, 1.0)
        .with_axis(2, 0.05, 2.0)
        .with_axis(3, 0.05, 2.0)
        .with_axis(4, 0.05, 2.0)
        .with_axis(5, 0.05, 2.0);
    let mut problem = MoserProblem::new("moser2", w0, x, domain)?;
    problem.flow = Some(PointMap::new(
        6,
        vec![
            e("x1")?,
            e("x2")?,
            e("(x3 - x4)/2 + 0.5*(sqrt(x3 + x4) + F*t)^2")?,
            e("(x4 - x3)/2 + 0.5*(sqrt(x3 + x4) + F*t)^2")?,
            e("(x5 - x6)/2 + 0.5*(sqrt(x5 + x6) + G*t)^2")?,
            e("(x6 - x5)/2 + 0.5*(sqrt(x5 + x6) + G*t)^2")?,
        ],
    ));
    problem.positivity = vec![e("x3 + x4")?, e("x5 + x6")?];
    Ok(problem)
}

#[derive(Clone, Debug, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub n: usize,
    pub k: usize,
    /// Parameter names with their defaults.
    pub parameters: Vec<(&'static str, &'static str)>,
    pub description: &'static str,
}

pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "oscillator",
            n: 6,
            k: 3,
            parameters: vec![("lambda", "0.1")],
            description: "two coupled quantum-moment oscillators, Nambu 3-vector with a non-FI bracket",
        },
        CatalogEntry {
            name: "fourdim",
            n: 4,
            k: 3,
            parameters: vec![("H", "x1")],
            description: "non-Poisson 2-tensor (1/x4)(d2^d1 + d4^d3) lifted to the closed 3-form x4(dx12+dx34)^dx4",
        },
        CatalogEntry {
            name: "quasisymmetry",
            n: 3,
            k: 3,
            parameters: vec![("Psi", "x1^2 + x2^2"), ("B1", "-x2"), ("B2", "x1"), ("B3", "1 + x3")],
            description: "u = grad Psi x grad B / (B.grad B) with Hamiltonians Psi and |B|",
        },
        CatalogEntry {
            name: "flat_nambu",
            n: 3,
            k: 3,
            parameters: vec![("n", "3"), ("k", "3")],
            description: "canonical w = dx^{1..k}, J = d_{1..k}, linear Hamiltonians",
        },
        CatalogEntry {
            name: "moser1",
            n: 4,
            k: 3,
            parameters: vec![("f", "2")],
            description: "Moser flattening of dx123 + dx124 along sqrt((x3+x4)f/2)(d3+d4)",
        },
        CatalogEntry {
            name: "moser2",
            n: 6,
            k: 4,
            parameters: vec![("f", "1"), ("g", "1")],
            description: "Moser flattening of dx1234 + dx1256 along f sqrt(x3+x4)(d3+d4) + g sqrt(x5+x6)(d5+d6)",
        },
    ]
}

/// A catalog entry instantiated with its arguments.
#[derive(Clone, Debug)]
pub enum Builtin {
    System(SystemSpec),
    Moser(MoserProblem),
}

/// Builds a catalog entry; `args` override the listed defaults.
pub fn build(name: &str, args: &BTreeMap<String, String>) -> Result<Builtin> {
    let entry = catalog()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::Invalid(format!("unknown built-in `{name}`")))?;
    if let Some(bad) = args
        .keys()
        .find(|k| !entry.parameters.iter().any(|(p, _)| p == k))
    {
        return Err(Error::Invalid(format!("`{name}` has no parameter `{bad}`")));
    }
    let text = |p: &str| -> String {
        args.get(p).cloned().unwrap_or_else(|| {
            entry
                .parameters
                .iter()
                .find(|(q, _)| *q == p)
                .expect("listed")
                .1
                .to_string()
        })
    };
    let number = |p: &str| -> Result<f64> {
        let t = text(p);
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::Invalid(format!("parameter `{p}` is not a number: `{t}`")))
    };
    let count = |p: &str| -> Result<usize> {
        let t = text(p);
        t.trim()
            .parse::<usize>()
            .map_err(|_| Error::Invalid(format!("parameter `{p}` is not a count: `{t}`")))
    };
    Ok(match name {
        "oscillator" => Builtin::System(oscillator(number("lambda")?)?),
        "fourdim" => {
            Builtin::System(fourdim(ScalarField::parse(&text("H"), &Symbols::new(4))?)?.spec)
        }
        "quasisymmetry" => {
            let s = Symbols::new(3);
            let f = |p: &str| ScalarField::parse(&text(p), &s);
            Builtin::System(
                quasisymmetry(
                    f("Psi")?,
                    [f("B1")?, f("B2")?, f("B3")?],
                    quasisymmetry_default_box(),
                )?
                .spec,
            )
        }
        "flat_nambu" => Builtin::System(flat_nambu(count("n")?, count("k")?)?),
        "moser1" => Builtin::Moser(moser_example_1(number("f")?)?),
        "moser2" => Builtin::Moser(moser_example_2(number("f")?, number("g")?)?),
        _ => unreachable!("catalog names are matched above"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::vector_field_of;

    #[test]
    fn every_builtin_loads() {
        for e in catalog() {
            match build(e.name, &BTreeMap::new()).unwrap() {
                Builtin::System(s) => assert_eq!((s.n, s.k()), (e.n, e.k), "{}", e.name),
                Builtin::Moser(m) => {
                    assert_eq!((m.dimension(), m.w0.degree()), (e.n, e.k), "{}", e.name)
                }
            }
        }
    }

    #[test]
    fn oscillator_field_at_default_state() {
        let sys = oscillator(0.1).unwrap();
        let r = vector_field_of(&sys, &OSCILLATOR_X0).unwrap();
        let expect = [-1.2, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(
            r.x.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-14),
            "{:?}",
            r.x
        );
        assert!(r.agreement_residual.unwrap() < 1e-12);
        let solve = r.solve.unwrap();
        assert!(solve.consistent);
        assert_eq!(solve.kernel_dim, 1);
    }

    #[test]
    fn fourdim_field_and_guard() {
        let fd = fourdim(ScalarField::coordinate(0, 4)).unwrap();
        let r = vector_field_of(&fd.spec, &[0.3, -0.2, 0.7, 2.0]).unwrap();
        assert!(r
            .x
            .iter()
            .zip([0.0, 0.5, 0.0, 0.0])
            .all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(r.agreement_residual.unwrap() < 1e-12);
        assert!(fd.w4.is_some());
        let bad = ScalarField::parse("x1 + x3^2", &Symbols::new(4)).unwrap();
        assert!(fourdim(bad).is_err());
        let no_w4 = fourdim(ScalarField::parse("x1*x4", &Symbols::new(4)).unwrap()).unwrap();
        assert!(no_w4.w4.is_none());
    }

    #[test]
    fn flat_routes_agree() {
        for (n, k) in [(2, 2), (3, 3), (4, 3), (4, 4), (5, 2)] {
            let sys = flat_nambu(n, k).unwrap();
            let r = vector_field_of(&sys, &vec![0.1; n]).unwrap();
            assert!(r.agreement_residual.unwrap() < 1e-14, "({n},{k})");
            let norm: f64 = r.x.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-15);
        }
        assert!(flat_nambu(2, 3).is_err());
    }

    #[test]
    fn quasisymmetry_default_denominator() {
        let q = quasisymmetry_default().unwrap();
        let p = [0.8, 1.1, 0.4];
        let b = (0.8f64 * 0.8 + 1.1 * 1.1 + 1.4 * 1.4).sqrt();
        assert!((q.g.eval(&p, &Params::new()).unwrap() - 1.4 * 1.4 / b).abs() < 1e-14);
        let r = vector_field_of(&q.spec, &p).unwrap();
        assert!(r.agreement_residual.unwrap() < 1e-12);
        let u = q.u.eval(&p, &Params::new()).unwrap();
        assert!(r.x.iter().zip(&u).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn moser_preconditions() {
        assert!(moser_example_1(-1.0).is_err());
        assert!(moser_example_2(1.0, 0.0).is_err());
        assert!(build(
            "moser1",
            &BTreeMap::from([("g".to_string(), "1".to_string())])
        )
        .is_err());
        assert!(build("nope", &BTreeMap::new()).is_err());
    }
}
