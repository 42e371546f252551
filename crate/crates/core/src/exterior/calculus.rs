use super::alternating::{Coefficient, ExteriorError, FormField, FormValue, MultiVectorField};
use super::multi_index::MultiIndex;
use crate::expr::{EvalError, Expression, Params};

/// A vector field X = Xⁱ∂ᵢ with expression components.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    components: Vec<Expression>,
}

impl VectorField {
    pub fn new(components: Vec<Expression>) -> Self {
        VectorField { components }
    }

    pub fn coordinate(axis: usize, n: usize) -> Self {
        let mut c = vec![Expression::zero(); n];
        c[axis] = Expression::one();
        VectorField { components: c }
    }

    /// `factor · xⁱ∂ᵢ`.
    pub fn euler(n: usize, factor: f64) -> Self {
        VectorField {
            components: (0..n).map(|a| Expression::coord(a) * factor).collect(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expression] {
        &self.components
    }

    pub fn eval(&self, point: &[f64], params: &Params) -> Result<Vec<f64>, EvalError> {
        self.components
            .iter()
            .map(|c| c.eval(point, params))
            .collect()
    }

    /// X(f) = Xⁱ ∂ᵢf.
    pub fn apply(&self, f: &Expression) -> Expression {
        self.components
            .iter()
            .enumerate()
            .fold(Expression::zero(), |acc, (a, x)| {
                acc + x * &f.differentiate(a)
            })
    }

    pub fn divergence(&self) -> Expression {
        self.components
            .iter()
            .enumerate()
            .fold(Expression::zero(), |acc, (a, x)| acc + x.differentiate(a))
    }

    pub fn scale(&self, s: &Expression) -> Self {
        VectorField {
            components: self.components.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &VectorField) -> Self {
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a + b)
            .collect();
        VectorField { components }
    }

    pub fn to_multivector(&self) -> MultiVectorField {
        MultiVectorField::from_components(&self.components)
    }

    pub fn substitute(&self, f: &dyn Fn(usize) -> Expression) -> Self {
        VectorField {
            components: self.components.iter().map(|c| c.substitute(f)).collect(),
        }
    }
}

/// The exact differential df.
pub fn differential(f: &Expression, n: usize) -> FormField {
    let components: Vec<Expression> = (0..n).map(|a| f.differentiate(a)).collect();
    FormField::from_components(&components)
}

impl FormField {
    /// Exterior derivative: d(f dx^I) = Σᵢ ∂ᵢf dxⁱ∧dx^I.
    pub fn d(&self) -> FormField {
        let n = self.dimension();
        let mut out = FormField::zero(n, self.degree() + 1);
        for (idx, f) in self.terms() {
            for a in 0..n {
                if idx.contains(a) {
                    continue;
                }
                let df = f.differentiate(a);
                if df.is_zero() {
                    continue;
                }
                let (target, sign) = MultiIndex::single(a).wedge(idx).expect("axis not in index");
                out.add_term(target, df.scale(sign));
            }
        }
        out
    }

    pub fn interior_field(&self, x: &VectorField) -> Result<FormField, ExteriorError> {
        self.interior(x.components())
    }

    /// Cartan's formula L_X ω = d ι_X ω + ι_X dω.
    pub fn lie_derivative(&self, x: &VectorField) -> Result<FormField, ExteriorError> {
        if x.dimension() != self.dimension() {
            return Err(ExteriorError::DimensionMismatch {
                left: self.dimension(),
                right: x.dimension(),
            });
        }
        let inner = if self.degree() == 0 {
            FormField::zero(self.dimension(), 0)
        } else {
            self.interior_field(x)?.d()
        };
        let outer = self.d().interior_field(x)?;
        inner.try_add(&outer)
    }
}

pub fn exterior_derivative(
    omega: &FormField,
    point: &[f64],
    params: &Params,
) -> Result<FormValue, EvalError> {
    omega.d().eval(point, params)
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CalculusError {
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub fn lie_derivative(
    x: &VectorField,
    omega: &FormField,
    point: &[f64],
    params: &Params,
) -> Result<FormValue, CalculusError> {
    Ok(omega.lie_derivative(x)?.eval(point, params)?)
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(mut m: Vec<Vec<f64>>) -> f64 {
    let k = m.len();
    let mut det = 1.0;
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("non-empty range");
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        for r in col + 1..k {
            let factor = m[r][col] / m[col][col];
            if factor != 0.0 {
                for c in col..k {
                    m[r][c] -= factor * m[col][c];
                }
            }
        }
    }
    det
}

/// Pullback of a form value by a linear map with Jacobian `jac`
/// (rows: target axes, columns: source axes).
pub fn pullback_linear(jac: &[Vec<f64>], omega: &FormValue) -> FormValue {
    let source = jac.first().map_or(0, |r| r.len());
    let k = omega.degree();
    let mut out = FormValue::zero(source, k);
    for i in MultiIndex::all(source, k) {
        let cols = i.to_vec();
        let mut acc = 0.0;
        for (j, wj) in omega.terms() {
            let sub: Vec<Vec<f64>> = j
                .axes()
                .map(|r| cols.iter().map(|&c| jac[r][c]).collect())
                .collect();
            acc += wj * determinant(sub);
        }
        out.add_term(i, acc);
    }
    out
}

fn symbolic_determinant(m: &[Vec<Expression>]) -> Expression {
    match m.len() {
        0 => Expression::one(),
        1 => m[0][0].clone(),
        k => {
            let mut acc = Expression::zero();
            for c in 0..k {
                if m[0][c].is_zero() {
                    continue;
                }
                let minor: Vec<Vec<Expression>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(j, _)| *j != c)
                            .map(|(_, e)| e.clone())
                            .collect()
                    })
                    .collect();
                let term = &m[0][c] * &symbolic_determinant(&minor);
                acc = if c % 2 == 0 { acc + term } else { acc - term };
            }
            acc
        }
    }
}

/// A smooth map φ: ℝᵐ → ℝⁿ given by expression components over ℝᵐ.
#[derive(Clone, Debug)]
pub struct PointMap {
    source: usize,
    components: Vec<Expression>,
    jacobian: Vec<Vec<Expression>>,
}

impl PointMap {
    pub fn new(source: usize, components: Vec<Expression>) -> Self {
        let jacobian = components
            .iter()
            .map(|c| (0..source).map(|a| c.differentiate(a)).collect())
            .collect();
        PointMap {
            source,
            components,
            jacobian,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(n, (0..n).map(Expression::coord).collect())
    }

    pub fn source_dimension(&self) -> usize {
        self.source
    }

    pub fn target_dimension(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expression] {
        &self.components
    }

    pub fn jacobian_exprs(&self) -> &[Vec<Expression>] {
        &self.jacobian
    }

    pub fn apply(&self, p: &[f64], params: &Params) -> Result<Vec<f64>, EvalError> {
        self.components.iter().map(|c| c.eval(p, params)).collect()
    }

    pub fn jacobian_at(&self, p: &[f64], params: &Params) -> Result<Vec<Vec<f64>>, EvalError> {
        self.jacobian
            .iter()
            .map(|row| row.iter().map(|e| e.eval(p, params)).collect())
            .collect()
    }

    /// φ∘inner.
    pub fn compose(&self, inner: &PointMap) -> PointMap {
        let inner_components = inner.components.clone();
        let components = self
            .components
            .iter()
            .map(|c| c.substitute(&|a| inner_components[a].clone()))
            .collect();
        PointMap::new(inner.source, components)
    }

    /// φ*ω at p, with `omega` already evaluated at φ(p).
    pub fn pullback(
        &self,
        omega_at_image: &FormValue,
        p: &[f64],
        params: &Params,
    ) -> Result<FormValue, EvalError> {
        Ok(pullback_linear(
            &self.jacobian_at(p, params)?,
            omega_at_image,
        ))
    }

    /// φ*ω at p for a field ω on the target.
    pub fn pullback_field(
        &self,
        omega: &FormField,
        p: &[f64],
        params: &Params,
    ) -> Result<FormValue, EvalError> {
        let image = self.apply(p, params)?;
        self.pullback(&omega.eval(&image, params)?, p, params)
    }

    /// Symbolic φ*ω as a form field on the source.
    pub fn pullback_symbolic(&self, omega: &FormField) -> FormField {
        let k = omega.degree();
        let comps = self.components.clone();
        let moved = omega.substitute(&|a| comps[a].clone());
        let mut out = FormField::zero(self.source, k);
        for i in MultiIndex::all(self.source, k) {
            let cols = i.to_vec();
            for (j, wj) in moved.terms() {
                let sub: Vec<Vec<Expression>> = j
                    .axes()
                    .map(|r| cols.iter().map(|&c| self.jacobian[r][c].clone()).collect())
                    .collect();
                out.add_term(i, wj * &symbolic_determinant(&sub));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Symbols};

    fn field(n: usize, terms: &[(&[usize], &str)]) -> FormField {
        let s = Symbols::new(n);
        let k = terms.first().map_or(0, |t| t.0.len());
        let mut out = FormField::zero(n, k);
        for (axes, e) in terms {
            out.add_unordered(axes, parse(e, &s).unwrap());
        }
        out
    }

    fn params() -> Params {
        Params::new()
    }

    #[test]
    fn d_examples() {
        let w = field(2, &[(&[0], "x2")]);
        assert_eq!(
            exterior_derivative(&w, &[0.3, 0.7], &params())
                .unwrap()
                .labelled(),
            [("1,2".into(), -1.0)].into()
        );
        let omega = field(4, &[(&[0, 1], "x4"), (&[2, 3], "x4")]);
        let d_omega = exterior_derivative(&omega, &[0.1, 0.2, 0.3, 0.4], &params()).unwrap();
        // dx⁴∧dx¹∧dx² = +dx^{124}
        assert_eq!(d_omega.labelled(), [("1,2,4".into(), 1.0)].into());
        let w3 = omega.wedge(&field(4, &[(&[3], "1")])).unwrap();
        assert!(w3.d().is_zero());
    }

    #[test]
    fn lie_derivative_examples() {
        let z0 = VectorField::euler(3, 1.0 / 3.0);
        let w = field(3, &[(&[0, 1, 2], "1")]);
        let l = lie_derivative(&z0, &w, &[0.2, -0.4, 1.3], &params()).unwrap();
        assert!((l.coefficient(MultiIndex::new(&[0, 1, 2]).unwrap()) - 1.0).abs() < 1e-15);
        assert_eq!(l.len(), 1);
        let dx1 = field(2, &[(&[0], "1")]);
        assert!(dx1
            .lie_derivative(&VectorField::coordinate(1, 2))
            .unwrap()
            .is_zero());
    }

    #[test]
    fn pullback_examples() {
        let phi = PointMap::new(2, vec![Expression::coord(0) * 2.0, Expression::coord(1)]);
        let dx1 = FormValue::basis(2, MultiIndex::single(0));
        let got = phi.pullback(&dx1, &[0.5, 0.5], &params()).unwrap();
        assert_eq!(got.labelled(), [("1".into(), 2.0)].into());
        let id = PointMap::identity(3);
        let omega = field(3, &[(&[0, 2], "x2"), (&[1, 2], "3")]);
        let p = [0.1, 0.2, 0.3];
        assert_eq!(
            id.pullback_field(&omega, &p, &params()).unwrap(),
            omega.eval(&p, &params()).unwrap()
        );
    }

    #[test]
    fn symbolic_pullback_matches_numeric() {
        let s = Symbols::new(2);
        let phi = PointMap::new(
            2,
            vec![
                parse("x1*x2", &s).unwrap(),
                parse("x1 + x2^2", &s).unwrap(),
                parse("sin(x1)", &s).unwrap(),
            ],
        );
        let omega = field(3, &[(&[0, 1], "x3"), (&[1, 2], "x1^2"), (&[0, 2], "1")]);
        let p = [0.4, -0.7];
        let sym = phi.pullback_symbolic(&omega).eval(&p, &params()).unwrap();
        let num = phi.pullback_field(&omega, &p, &params()).unwrap();
        assert!(sym.try_sub(&num).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn determinant_cases() {
        assert_eq!(determinant(vec![]), 1.0);
        assert_eq!(determinant(vec![vec![0.0, 1.0], vec![1.0, 0.0]]), -1.0);
        let m = vec![
            vec![2.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 4.0],
        ];
        assert!((determinant(m) - 18.0).abs() < 1e-12);
    }
}
