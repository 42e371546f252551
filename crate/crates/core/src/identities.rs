//! Residual checkers for closure, Jacobi, fundamental identity and invariant
//! measure conditions, evaluated with exact symbolic derivatives over sample
//! points. Every report names the point and index tuple of its maximum.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Expression, Params, ScalarField};
use crate::exterior::{FormField, MultiVectorField, MultiVectorValue};
use crate::par;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub identity: String,
    pub max_residual: f64,
    /// Signed value of the residual expression at the argmax.
    pub signed_value: f64,
    pub argmax_point: Vec<f64>,
    /// One-based index tuple at the argmax, comma-joined.
    pub argmax_indices: String,
    /// Which sub-identity attains the maximum, when there are several.
    pub detail: Option<String>,
    pub samples: usize,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default)]
struct Candidate {
    abs: f64,
    signed: f64,
    indices: Vec<usize>,
    detail: Option<&'static str>,
}

impl Candidate {
    fn offer(&mut self, value: f64, indices: &[usize], detail: Option<&'static str>) {
        if value.abs() > self.abs {
            self.abs = value.abs();
            self.signed = value;
            self.indices = indices.to_vec();
            self.detail = detail;
        }
    }
}

fn label(indices: &[usize]) -> String {
    indices
        .iter()
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Runs `scan` at every point (in parallel) and keeps the first maximum in
/// point order, so the argmax does not depend on scheduling.
fn collect<F>(identity: &str, points: &[Vec<f64>], tol: f64, scan: F) -> Result<IdentityReport>
where
    F: Fn(&[f64]) -> Result<Candidate> + Sync + Send,
{
    let per_point = par::try_map(points, |p| scan(p))?;
    let mut best: Option<(usize, Candidate)> = None;
    for (i, c) in per_point.into_iter().enumerate() {
        if best.as_ref().is_none_or(|(_, b)| c.abs > b.abs) {
            best = Some((i, c));
        }
    }
    let (at, c) = best.unwrap_or_default();
    Ok(IdentityReport {
        identity: identity.to_string(),
        max_residual: c.abs,
        signed_value: c.signed,
        argmax_point: points.get(at).cloned().unwrap_or_default(),
        argmax_indices: label(&c.indices),
        detail: c.detail.map(str::to_string),
        samples: points.len(),
        tolerance: tol,
        pass: c.abs <= tol,
    })
}

/// Dense values and first derivatives of a multivector at one point.
struct Dense {
    n: usize,
    k: usize,
    value: Vec<f64>,
    /// ∂_m J at offset m·n^k.
    grad: Vec<f64>,
}

fn permutations(k: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(
        prefix: &mut Vec<usize>,
        left: &mut Vec<usize>,
        sign: f64,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) {
        if left.is_empty() {
            out.push((prefix.clone(), sign));
            return;
        }
        for i in 0..left.len() {
            let v = left.remove(i);
            prefix.push(v);
            rec(prefix, left, if i % 2 == 0 { sign } else { -sign }, out);
            prefix.pop();
            left.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..k).collect(), 1.0, &mut out);
    out
}

impl Dense {
    fn flat(&self, axes: &[usize]) -> usize {
        axes.iter().fold(0, |acc, &a| acc * self.n + a)
    }

    fn fill(target: &mut [f64], n: usize, v: &MultiVectorValue, perms: &[(Vec<usize>, f64)]) {
        for (idx, c) in v.terms() {
            let axes = idx.to_vec();
            for (perm, sign) in perms {
                let pos = perm.iter().fold(0, |acc, &p| acc * n + axes[p]);
                target[pos] = sign * c;
            }
        }
    }

    fn at(
        j: &MultiVectorField,
        dj: &[MultiVectorField],
        p: &[f64],
        params: &Params,
    ) -> Result<Dense> {
        let (n, k) = (j.dimension(), j.degree());
        let size = n.pow(k as u32);
        let perms = permutations(k);
        let mut value = vec![0.0; size];
        Self::fill(&mut value, n, &j.eval(p, params)?, &perms);
        let mut grad = vec![0.0; size * n];
        for (m, d) in dj.iter().enumerate() {
            Self::fill(
                &mut grad[m * size..(m + 1) * size],
                n,
                &d.eval(p, params)?,
                &perms,
            );
        }
        Ok(Dense { n, k, value, grad })
    }

    fn v(&self, axes: &[usize]) -> f64 {
        self.value[self.flat(axes)]
    }

    fn d(&self, m: usize, axes: &[usize]) -> f64 {
        self.grad[m * self.n.pow(self.k as u32) + self.flat(axes)]
    }
}

fn derivatives(j: &MultiVectorField) -> Vec<MultiVectorField> {
    (0..j.dimension())
        .map(|m| j.map(|c| c.differentiate(m)))
        .collect()
}

fn require_degree(j: &MultiVectorField, k: usize) -> Result<()> {
    if j.degree() != k {
        return Err(Error::Invalid(format!(
            "expected a {k}-vector, found degree {}",
            j.degree()
        )));
    }
    Ok(())
}

/// 𝒥^{im}∂_m𝒥^{jl} + 𝒥^{jm}∂_m𝒥^{li} + 𝒥^{lm}∂_m𝒥^{ij}, with an optional
/// fixed trailing tuple appended to every component.
fn cyclic_sum(d: &Dense, i: usize, j: usize, l: usize, tail: &[usize]) -> f64 {
    let idx = |a: usize, b: usize| -> Vec<usize> {
        let mut v = vec![a, b];
        v.extend_from_slice(tail);
        v
    };
    (0..d.n)
        .map(|m| {
            d.v(&idx(i, m)) * d.d(m, &idx(j, l))
                + d.v(&idx(j, m)) * d.d(m, &idx(l, i))
                + d.v(&idx(l, m)) * d.d(m, &idx(i, j))
        })
        .sum()
}

fn jacobi_scan(d: &Dense, tail: &[usize]) -> Candidate {
    let mut best = Candidate::default();
    for i in 0..d.n {
        for j in 0..d.n {
            for l in 0..d.n {
                best.offer(cyclic_sum(d, i, j, l, tail), &[i, j, l], None);
            }
        }
    }
    best
}

/// Max over points and (i, j, l) of the Jacobi cyclic sum of a 2-vector.
pub fn jacobi_residual(
    bivector: &MultiVectorField,
    points: &[Vec<f64>],
    params: &Params,
    tol: f64,
) -> Result<IdentityReport> {
    require_degree(bivector, 2)?;
    let dj = derivatives(bivector);
    collect("jacobi", points, tol, |p| {
        Ok(jacobi_scan(&Dense::at(bivector, &dj, p, params)?, &[]))
    })
}

/// The signed Jacobi cyclic sum for one zero-based triple at one point.
pub fn jacobi_cyclic_sum(
    bivector: &MultiVectorField,
    point: &[f64],
    params: &Params,
    triple: [usize; 3],
) -> Result<f64> {
    require_degree(bivector, 2)?;
    let d = Dense::at(bivector, &derivatives(bivector), point, params)?;
    Ok(cyclic_sum(&d, triple[0], triple[1], triple[2], &[]))
}

/// Local Jacobi condition of a k-vector written in adapted coordinates, whose
/// last k−2 axes carry the Casimirs: the cyclic sum with those axes appended
/// to every component.
pub fn jacobi_k_residual(
    j: &MultiVectorField,
    adapted_coordinates: bool,
    points: &[Vec<f64>],
    params: &Params,
    tol: f64,
) -> Result<IdentityReport> {
    if !adapted_coordinates {
        return Err(Error::Invalid(
            "the k-vector Jacobi check needs coordinates whose trailing k-2 axes are the Casimirs"
                .into(),
        ));
    }
    let (n, k) = (j.dimension(), j.degree());
    if k < 2 || k > n {
        return Err(Error::InvalidDegree { n, k });
    }
    let tail: Vec<usize> = (n + 2 - k..n).collect();
    let dj = derivatives(j);
    collect("jacobi_k", points, tol, |p| {
        Ok(jacobi_scan(&Dense::at(j, &dj, p, params)?, &tail))
    })
}

/// Derivative part of the fundamental identity for a 3-vector.
fn fi_a(d: &Dense, i: usize, j: usize, k: usize, v: usize, q: usize) -> f64 {
    (0..d.n)
        .map(|u| {
            d.v(&[u, v, q]) * d.d(u, &[i, j, k])
                - d.v(&[u, j, k]) * d.d(u, &[i, v, q])
                - d.v(&[u, k, i]) * d.d(u, &[j, v, q])
                - d.v(&[u, i, j]) * d.d(u, &[k, v, q])
        })
        .sum()
}

/// Quadratic part of the fundamental identity for a 3-vector, symmetrized
/// in the pair (i, u).
fn fi_b(d: &Dense, i: usize, j: usize, k: usize, u: usize, v: usize, q: usize) -> f64 {
    d.v(&[i, j, k]) * d.v(&[u, v, q])
        + d.v(&[i, j, v]) * d.v(&[k, u, q])
        + d.v(&[i, j, q]) * d.v(&[k, v, u])
        + d.v(&[u, j, k]) * d.v(&[i, v, q])
        + d.v(&[u, j, v]) * d.v(&[k, i, q])
        + d.v(&[u, j, q]) * d.v(&[k, v, i])
}

/// Exhaustive scan of both fundamental-identity conditions for a 3-vector.
pub fn fundamental_identity_residual(
    j: &MultiVectorField,
    points: &[Vec<f64>],
    params: &Params,
    tol: f64,
) -> Result<IdentityReport> {
    require_degree(j, 3)?;
    let dj = derivatives(j);
    let n = j.dimension();
    collect("fundamental", points, tol, |p| {
        let d = Dense::at(j, &dj, p, params)?;
        let mut best = Candidate::default();
        for i in 0..n {
            for jj in 0..n {
                for k in 0..n {
                    for v in 0..n {
                        for q in 0..n {
                            best.offer(fi_a(&d, i, jj, k, v, q), &[i, jj, k, v, q], Some("FIa"));
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for jj in 0..n {
                for k in 0..n {
                    for u in 0..n {
                        for v in 0..n {
                            for q in 0..n {
                                best.offer(
                                    fi_b(&d, i, jj, k, u, v, q),
                                    &[i, jj, k, u, v, q],
                                    Some("FIb"),
                                );
                            }
                        }
                    }
                }
            }
        }
        Ok(best)
    })
}

/// Value of the quadratic condition at one zero-based tuple (i,j,k;u,v,q).
pub fn fundamental_quadratic(j: &MultiVectorValue, tuple: [usize; 6]) -> f64 {
    let c = |a: usize, b: usize, e: usize| j.component(&[a, b, e]);
    let [i, jj, k, u, v, q] = tuple;
    c(i, jj, k) * c(u, v, q)
        + c(i, jj, v) * c(k, u, q)
        + c(i, jj, q) * c(k, v, u)
        + c(u, jj, k) * c(i, v, q)
        + c(u, jj, v) * c(k, i, q)
        + c(u, jj, q) * c(k, v, i)
}

/// Max |coefficient| of the exact dw over points.
pub fn closure_residual(
    w: &FormField,
    points: &[Vec<f64>],
    params: &Params,
    tol: f64,
) -> Result<IdentityReport> {
    let dw = w.d();
    collect("closure", points, tol, |p| {
        let mut best = Candidate::default();
        for (idx, c) in dw.eval(p, params)?.terms() {
            best.offer(*c, &idx.to_vec(), None);
        }
        Ok(best)
    })
}

/// Divergence Σᵢ ∂ᵢ(g J^{i j₁…}) as a symbolic (k−1)-vector.
pub fn divergence_field(j: &MultiVectorField, g: &Expression) -> Result<MultiVectorField> {
    if j.degree() == 0 {
        return Err(Error::Invalid(
            "divergence of a degree-0 multivector".into(),
        ));
    }
    let mut out = MultiVectorField::zero(j.dimension(), j.degree() - 1);
    for (idx, c) in j.terms() {
        let weighted = g * c;
        for a in idx.axes() {
            let (rest, sign) = idx.remove(a).expect("axis of the index");
            let d = weighted.differentiate(a);
            out.add_term(rest, if sign < 0.0 { -d } else { d });
        }
    }
    Ok(out)
}

/// Max over points and index tuples of |Σᵢ ∂ᵢ(g J^{i j₁…j_{k−1}})|.
pub fn measure_residual(
    j: &MultiVectorField,
    g: &ScalarField,
    points: &[Vec<f64>],
    params: &Params,
    tol: f64,
) -> Result<IdentityReport> {
    let div = divergence_field(j, g.expr())?;
    collect("measure", points, tol, |p| {
        let gv = g.eval(p, params)?;
        if gv == 0.0 {
            return Err(Error::Invalid(format!("density vanishes at {p:?}")));
        }
        let mut best = Candidate::default();
        for (idx, c) in div.eval(p, params)?.terms() {
            best.offer(*c, &idx.to_vec(), None);
        }
        Ok(best)
    })
}

/// 𝔍 on ℝⁿ⁺¹: J plus −x^{n+1} D^{ij} ∂_i∧∂_j∧∂_{n+1}, with D = div J.
pub fn extend_measure_preserving(j: &MultiVectorField) -> Result<MultiVectorField> {
    require_degree(j, 3)?;
    let n = j.dimension();
    let div = divergence_field(j, &Expression::one())?;
    let mut out = j.embed(n + 1);
    let s = Expression::coord(n);
    for (idx, d) in div.terms() {
        let mut axes = idx.to_vec();
        axes.push(n);
        out.add_unordered(&axes, -(&s * d));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Symbols};
    use crate::sample::DomainBox;

    fn mv(n: usize, terms: &[(&[usize], &str)]) -> MultiVectorField {
        let s = Symbols::new(n);
        let mut out = MultiVectorField::zero(n, terms[0].0.len());
        for (axes, e) in terms {
            out.add_unordered(axes, parse(e, &s).unwrap());
        }
        out
    }

    fn pts(n: usize) -> Vec<Vec<f64>> {
        DomainBox::uniform(n, 0.5, 2.0).sample_points(4, 11)
    }

    #[test]
    fn permutation_signs() {
        let perms = permutations(3);
        assert_eq!(perms.len(), 6);
        for (p, s) in &perms {
            let (_, sign) = crate::exterior::MultiIndex::sort_with_sign(p);
            assert_eq!(*s, sign as f64);
        }
    }

    #[test]
    fn constant_bivector_is_jacobi() {
        let r = jacobi_residual(
            &mv(3, &[(&[0, 1], "2"), (&[1, 2], "-1")]),
            &pts(3),
            &Params::new(),
            1e-12,
        )
        .unwrap();
        assert!(r.pass && r.max_residual == 0.0);
    }

    #[test]
    fn scaled_pair_fails_jacobi() {
        let j = mv(4, &[(&[1, 0], "1/x4"), (&[3, 2], "1/x4")]);
        for (x4, want) in [(0.5, -8.0), (1.0, -1.0), (2.0, -0.125)] {
            let v = jacobi_cyclic_sum(&j, &[0.3, 0.1, 0.7, x4], &Params::new(), [2, 0, 1]).unwrap();
            assert!((v - want).abs() < 1e-12, "{v}");
        }
        let r = jacobi_residual(&j, &[vec![0.0, 0.0, 0.0, 2.0]], &Params::new(), 1e-9).unwrap();
        assert!((r.max_residual - 0.125).abs() < 1e-14 && !r.pass);
    }

    #[test]
    fn fi_on_canonical_and_oscillator() {
        let p = Params::new();
        let eps = mv(3, &[(&[0, 1, 2], "1")]);
        assert_eq!(
            fundamental_identity_residual(&eps, &pts(3), &p, 1e-12)
                .unwrap()
                .max_residual,
            0.0
        );
        let eps4 = mv(4, &[(&[0, 1, 2], "1")]);
        assert_eq!(
            fundamental_identity_residual(&eps4, &pts(4), &p, 1e-12)
                .unwrap()
                .max_residual,
            0.0
        );
        let osc = mv(6, &[(&[0, 1, 2], "1"), (&[3, 4, 5], "1")]);
        let r = fundamental_identity_residual(&osc, &pts(6)[..1], &p, 1e-12).unwrap();
        assert_eq!(r.max_residual, 1.0);
        assert_eq!(r.detail.as_deref(), Some("FIb"));
        let value = osc.eval(&[0.0; 6], &p).unwrap();
        assert_eq!(fundamental_quadratic(&value, [0, 1, 2, 3, 4, 5]), 1.0);
    }

    #[test]
    fn measure_examples() {
        let p = Params::new();
        let one = ScalarField::new(Expression::one(), 3);
        let r = measure_residual(&mv(3, &[(&[0, 1, 2], "x1")]), &one, &pts(3), &p, 1e-12).unwrap();
        assert_eq!((r.max_residual, r.argmax_indices.as_str()), (1.0, "2,3"));
        let zero = ScalarField::new(Expression::zero(), 3);
        assert!(measure_residual(&mv(3, &[(&[0, 1, 2], "1")]), &zero, &pts(3), &p, 1e-12).is_err());
    }

    #[test]
    fn extension_of_constant_is_identity() {
        let j = mv(3, &[(&[0, 1, 2], "1")]);
        assert_eq!(extend_measure_preserving(&j).unwrap(), j.embed(4));
    }

    #[test]
    fn extension_is_divergence_free() {
        let j = mv(3, &[(&[0, 1, 2], "x1*x2"), (&[0, 1, 2], "x3^2")]);
        let ext = extend_measure_preserving(&j).unwrap();
        let one = ScalarField::new(Expression::one(), 4);
        let r = measure_residual(&ext, &one, &pts(4), &Params::new(), 1e-12).unwrap();
        assert!(r.max_residual <= 1e-12, "{r:?}");
    }
}
