#![allow(dead_code)]

use genham::expr::{Params, ScalarField, Symbols};
use genham::systems::{quasisymmetry, quasisymmetry_default_box, Quasisymmetry};
use rand::Rng;

/// Polynomial of total degree ≤ `degree` in x1..xn with coefficients in
/// [−1, 1] rounded to 1e−3, as parser input.
pub fn random_polynomial<R: Rng>(rng: &mut R, n: usize, degree: u32) -> String {
    let mut terms = Vec::new();
    let mut exps = vec![0u32; n];
    loop {
        if exps.iter().sum::<u32>() <= degree && rng.gen_bool(0.7) {
            let c = (rng.gen_range(-1.0..1.0) * 1000.0f64).round() / 1000.0;
            let mut t = format!("({c})");
            for (a, &e) in exps.iter().enumerate() {
                if e > 0 {
                    t.push_str(&format!("*x{}^{e}", a + 1));
                }
            }
            terms.push(t);
        }
        let mut a = 0;
        loop {
            if a == n {
                return if terms.is_empty() {
                    "0".into()
                } else {
                    terms.join(" + ")
                };
            }
            exps[a] += 1;
            if exps[a] <= degree {
                break;
            }
            exps[a] = 0;
            a += 1;
        }
    }
}

/// Random polynomial Ψ and Bvec whose B·∇B stays at least 0.1 in magnitude at
/// 200 points of the default box; `None` when the draw is rejected.
pub fn random_quasisymmetry<R: Rng>(rng: &mut R) -> Option<Quasisymmetry> {
    let s = Symbols::new(3);
    let f = |t: &str| ScalarField::parse(t, &s).unwrap();
    let psi = f(&random_polynomial(rng, 3, 2));
    let b: Vec<ScalarField> = (0..3).map(|_| f(&random_polynomial(rng, 3, 2))).collect();
    let q = quasisymmetry(
        psi,
        [b[0].clone(), b[1].clone(), b[2].clone()],
        quasisymmetry_default_box(),
    )
    .ok()?;
    let p = Params::new();
    let ok = quasisymmetry_default_box()
        .sample_points(200, 99)
        .iter()
        .all(|x| q.g.eval(x, &p).map_or(false, |g| g.abs() >= 0.1));
    ok.then_some(q)
}
