use std::collections::BTreeMap;
use std::fmt;
use std::marker::PhantomData;

use super::multi_index::{IndexError, MultiIndex, MAX_DIM};
use crate::expr::{EvalError, Expression, Params};

/// Marker for the tensor type: forms are covariant, multivectors contravariant.
pub trait Variance: Clone + Copy + fmt::Debug + PartialEq + Send + Sync + 'static {
    type Dual: Variance<Dual = Self>;
    /// Basis symbol used when printing.
    const SYMBOL: &'static str;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Covariant;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Contravariant;

impl Variance for Covariant {
    type Dual = Contravariant;
    const SYMBOL: &'static str = "dx";
}

impl Variance for Contravariant {
    type Dual = Covariant;
    const SYMBOL: &'static str = "d";
}

/// Scalar ring for coefficients: plain reals or symbolic expressions.
pub trait Coefficient: Clone + fmt::Debug + Send + Sync {
    fn zero() -> Self;
    fn from_f64(x: f64) -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;

    fn scale(&self, s: f64) -> Self {
        if s == 1.0 {
            self.clone()
        } else if s == -1.0 {
            self.neg()
        } else {
            self.mul(&Self::from_f64(s))
        }
    }
}

impl Coefficient for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
}

impl Coefficient for Expression {
    fn zero() -> Self {
        Expression::zero()
    }
    fn from_f64(x: f64) -> Self {
        Expression::constant(x)
    }
    fn is_zero(&self) -> bool {
        Expression::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExteriorError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },
    #[error("cannot contract a degree-0 tensor")]
    DegreeZero,
    #[error("contraction degree {inner} exceeds tensor degree {outer}")]
    DegreeTooHigh { inner: usize, outer: usize },
    #[error("dimension {0} is outside the supported range 1..=12")]
    UnsupportedDimension(usize),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Sparse, degree-homogeneous alternating tensor on ℝⁿ.
///
/// Coefficients are keyed by increasing multi-indices and zero entries are
/// never stored. `V` picks forms or multivectors and `C` the scalar type.
#[derive(Clone, PartialEq)]
pub struct Alternating<V, C> {
    n: usize,
    degree: usize,
    coeffs: BTreeMap<MultiIndex, C>,
    variance: PhantomData<fn() -> V>,
}

pub type FormValue = Alternating<Covariant, f64>;
pub type MultiVectorValue = Alternating<Contravariant, f64>;
pub type FormField = Alternating<Covariant, Expression>;
pub type MultiVectorField = Alternating<Contravariant, Expression>;

fn check_dim(n: usize) -> Result<(), ExteriorError> {
    if n == 0 || n > MAX_DIM {
        Err(ExteriorError::UnsupportedDimension(n))
    } else {
        Ok(())
    }
}

impl<V: Variance, C: Coefficient> Alternating<V, C> {
    pub fn zero(n: usize, degree: usize) -> Self {
        assert!(n <= MAX_DIM, "dimension {n} exceeds the supported maximum");
        Alternating {
            n,
            degree,
            coeffs: BTreeMap::new(),
            variance: PhantomData,
        }
    }

    /// Degree-0 element with value `c`.
    pub fn scalar(n: usize, c: C) -> Self {
        let mut out = Self::zero(n, 0);
        out.add_term(MultiIndex::EMPTY, c);
        out
    }

    /// The basis element for `index` (dx^I or ∂_I).
    pub fn basis(n: usize, index: MultiIndex) -> Self {
        let mut out = Self::zero(n, index.degree());
        out.add_term(index, C::from_f64(1.0));
        out
    }

    /// `c` times the monomial on an arbitrary axis tuple, sign-normalized.
    pub fn monomial(n: usize, axes: &[usize], c: C) -> Result<Self, ExteriorError> {
        check_dim(n)?;
        if let Some(&a) = axes.iter().find(|&&a| a >= n) {
            return Err(IndexError::AxisOutOfRange { axis: a + 1, n }.into());
        }
        let mut out = Self::zero(n, axes.len());
        out.add_unordered(axes, c);
        Ok(out)
    }

    /// Degree-1 element from its components.
    pub fn from_components(components: &[C]) -> Self {
        let mut out = Self::zero(components.len(), 1);
        for (a, c) in components.iter().enumerate() {
            out.add_term(MultiIndex::single(a), c.clone());
        }
        out
    }

    pub fn from_terms<I>(n: usize, degree: usize, terms: I) -> Result<Self, ExteriorError>
    where
        I: IntoIterator<Item = (MultiIndex, C)>,
    {
        check_dim(n)?;
        let mut out = Self::zero(n, degree);
        for (idx, c) in terms {
            if idx.degree() != degree {
                return Err(ExteriorError::DegreeMismatch {
                    expected: degree,
                    found: idx.degree(),
                });
            }
            if idx.span() > n {
                return Err(IndexError::AxisOutOfRange {
                    axis: idx.span(),
                    n,
                }
                .into());
            }
            out.add_term(idx, c);
        }
        Ok(out)
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, &C)> + '_ {
        self.coeffs.iter().map(|(k, v)| (*k, v))
    }

    pub fn get(&self, index: MultiIndex) -> Option<&C> {
        self.coeffs.get(&index)
    }

    pub fn coefficient(&self, index: MultiIndex) -> C {
        self.coeffs.get(&index).cloned().unwrap_or_else(C::zero)
    }

    /// Component for an arbitrary axis tuple, e.g. J^{321} = −J^{123}.
    pub fn component(&self, axes: &[usize]) -> C {
        let (idx, sign) = MultiIndex::sort_with_sign(axes);
        if sign == 0 || axes.len() != self.degree {
            return C::zero();
        }
        match self.coeffs.get(&idx) {
            Some(c) => c.scale(sign as f64),
            None => C::zero(),
        }
    }

    /// Adds `c` to the coefficient of `index`, dropping the entry if it cancels.
    pub fn add_term(&mut self, index: MultiIndex, c: C) {
        debug_assert_eq!(index.degree(), self.degree);
        debug_assert!(index.span() <= self.n);
        if c.is_zero() {
            return;
        }
        let sum = match self.coeffs.get(&index) {
            Some(old) => old.add(&c),
            None => c,
        };
        if sum.is_zero() {
            self.coeffs.remove(&index);
        } else {
            self.coeffs.insert(index, sum);
        }
    }

    /// Adds `c` on an unordered axis tuple after sort-with-sign.
    pub fn add_unordered(&mut self, axes: &[usize], c: C) {
        let (idx, sign) = MultiIndex::sort_with_sign(axes);
        if sign != 0 {
            self.add_term(idx, c.scale(sign as f64));
        }
    }

    fn same_shape(&self, other: &Self) -> Result<(), ExteriorError> {
        if self.n != other.n {
            return Err(ExteriorError::DimensionMismatch {
                left: self.n,
                right: other.n,
            });
        }
        if self.degree != other.degree {
            return Err(ExteriorError::DegreeMismatch {
                expected: self.degree,
                found: other.degree,
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, ExteriorError> {
        self.same_shape(other)?;
        let mut out = self.clone();
        for (idx, c) in other.terms() {
            out.add_term(idx, c.clone());
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, ExteriorError> {
        self.try_add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.map(|c| c.neg())
    }

    pub fn scale(&self, s: &C) -> Self {
        self.map(|c| c.mul(s))
    }

    pub fn scale_f64(&self, s: f64) -> Self {
        self.map(|c| c.scale(s))
    }

    pub fn map<D: Coefficient>(&self, mut f: impl FnMut(&C) -> D) -> Alternating<V, D> {
        let mut out = Alternating::zero(self.n, self.degree);
        for (idx, c) in self.terms() {
            out.add_term(idx, f(c));
        }
        out
    }

    pub fn try_map<D: Coefficient, E>(
        &self,
        mut f: impl FnMut(&C) -> Result<D, E>,
    ) -> Result<Alternating<V, D>, E> {
        let mut out = Alternating::zero(self.n, self.degree);
        for (idx, c) in self.terms() {
            out.add_term(idx, f(c)?);
        }
        Ok(out)
    }

    /// Exterior product; the result is zero when the degrees overflow `n`.
    pub fn wedge(&self, other: &Self) -> Result<Self, ExteriorError> {
        if self.n != other.n {
            return Err(ExteriorError::DimensionMismatch {
                left: self.n,
                right: other.n,
            });
        }
        let mut out = Self::zero(self.n, self.degree + other.degree);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                if let Some((idx, sign)) = a.wedge(b) {
                    out.add_term(idx, ca.mul(cb).scale(sign));
                }
            }
        }
        Ok(out)
    }

    /// Left interior product with a degree-1 element of the dual type, given
    /// by its components: the slot at position `p` contributes sign (−1)^p.
    pub fn interior(&self, v: &[C]) -> Result<Self, ExteriorError> {
        if self.degree == 0 {
            return Err(ExteriorError::DegreeZero);
        }
        if v.len() != self.n {
            return Err(ExteriorError::DimensionMismatch {
                left: self.n,
                right: v.len(),
            });
        }
        let mut out = Self::zero(self.n, self.degree - 1);
        for (idx, c) in self.terms() {
            for a in idx.axes() {
                if v[a].is_zero() {
                    continue;
                }
                let (rest, sign) = idx.remove(a).expect("axis taken from the index");
                out.add_term(rest, v[a].mul(c).scale(sign));
            }
        }
        Ok(out)
    }

    /// Iterated contraction by a dual-type element of degree m ≤ k.
    ///
    /// On a basis monomial e^{j1}∧…∧e^{jm} this is ι_{e^{jm}}…ι_{e^{j1}}: the
    /// first factor is contracted first.
    pub fn interior_multi(&self, other: &Alternating<V::Dual, C>) -> Result<Self, ExteriorError> {
        if self.n != other.n {
            return Err(ExteriorError::DimensionMismatch {
                left: self.n,
                right: other.n,
            });
        }
        if other.degree > self.degree {
            return Err(ExteriorError::DegreeTooHigh {
                inner: other.degree,
                outer: self.degree,
            });
        }
        let mut out = Self::zero(self.n, self.degree - other.degree);
        for (j, cj) in other.terms() {
            for (i, ci) in self.terms() {
                if j.union(i) != i {
                    continue;
                }
                let mut rest = i;
                let mut sign = 1.0;
                for a in j.axes() {
                    let (r, s) = rest.remove(a).expect("subset checked");
                    rest = r;
                    sign *= s;
                }
                out.add_term(rest, cj.mul(ci).scale(sign));
            }
        }
        Ok(out)
    }

    /// Full contraction ⟨self, other⟩ for equal degrees.
    pub fn pairing(&self, other: &Alternating<V::Dual, C>) -> Result<C, ExteriorError> {
        if self.n != other.n {
            return Err(ExteriorError::DimensionMismatch {
                left: self.n,
                right: other.n,
            });
        }
        if self.degree != other.degree {
            return Err(ExteriorError::DegreeMismatch {
                expected: self.degree,
                found: other.degree,
            });
        }
        let mut acc = C::zero();
        for (idx, c) in self.terms() {
            if let Some(d) = other.get(idx) {
                acc = acc.add(&c.mul(d));
            }
        }
        Ok(acc)
    }

    /// The scalar of a degree-0 element.
    pub fn as_scalar(&self) -> Option<C> {
        (self.degree == 0).then(|| self.coefficient(MultiIndex::EMPTY))
    }

    /// Components of a degree-1 element.
    pub fn to_components(&self) -> Option<Vec<C>> {
        (self.degree == 1).then(|| {
            (0..self.n)
                .map(|a| self.coefficient(MultiIndex::single(a)))
                .collect()
        })
    }

    /// Embeds into a larger ambient dimension keeping the same axes.
    pub fn embed(&self, n: usize) -> Self {
        assert!(n >= self.n);
        let mut out = Self::zero(n, self.degree);
        for (idx, c) in self.terms() {
            out.add_term(idx, c.clone());
        }
        out
    }
}

impl<V: Variance> Alternating<V, f64> {
    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.values().fold(0.0, |acc, c| acc + c * c).sqrt()
    }

    /// Coefficients of every degree-k index in lexicographic order, zeros included.
    pub fn dense(&self) -> Vec<f64> {
        MultiIndex::all(self.n, self.degree)
            .into_iter()
            .map(|i| self.coefficient(i))
            .collect()
    }

    /// Comma-joined one-based labels to values.
    pub fn labelled(&self) -> BTreeMap<String, f64> {
        self.terms().map(|(i, c)| (i.to_string(), *c)).collect()
    }

    /// Lifts to constant expression coefficients.
    pub fn to_field(&self) -> Alternating<V, Expression> {
        self.map(|c| Expression::constant(*c))
    }
}

impl<V: Variance> Alternating<V, Expression> {
    pub fn eval(&self, point: &[f64], params: &Params) -> Result<Alternating<V, f64>, EvalError> {
        self.try_map(|c| c.eval(point, params))
    }

    pub fn substitute(&self, f: &dyn Fn(usize) -> Expression) -> Self {
        self.map(|c| c.substitute(f))
    }

    /// Replaces named parameters by constants.
    pub fn bind(&self, params: &Params) -> Self {
        self.map(|c| c.bind(params))
    }
}

impl<V: Variance, C: Coefficient + fmt::Display> fmt::Display for Alternating<V, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        for (i, (idx, c)) in self.terms().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if self.degree == 0 {
                write!(f, "({c})")?;
            } else {
                write!(f, "({c}) {}[{idx}]", V::SYMBOL)?;
            }
        }
        Ok(())
    }
}

impl<V: Variance, C: Coefficient> fmt::Debug for Alternating<V, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Alternating")
            .field("variance", &V::SYMBOL)
            .field("n", &self.n)
            .field("degree", &self.degree)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl<V: Variance> serde::Serialize for Alternating<V, f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.coeffs.len()))?;
        for (idx, c) in self.terms() {
            map.serialize_entry(&idx.to_string(), c)?;
        }
        map.end()
    }
}
