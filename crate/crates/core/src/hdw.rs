//! Pointwise Hamilton–de Donder–Weyl solves: ι_X w = −σ as a dense linear
//! system over the (k−1)-indices.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Params, ScalarField};
use crate::exterior::{FormField, FormValue, MultiIndex};

/// Default consistency tolerance (relative to 1 + ‖σ‖).
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Singular values below `σ_max · RANK_CUTOFF` count as zero.
pub const RANK_CUTOFF: f64 = 1e-10;

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Necessary condition n ≥ C(n, k−1) for the hat-map to be onto.
pub fn obstruction_check(n: usize, k: usize) -> Result<bool> {
    if k < 2 || n < k {
        return Err(Error::InvalidDegree { n, k });
    }
    Ok(n >= binomial(n, k - 1))
}

/// Matrix of X ↦ ι_X w at one point. Rows are the degree-(k−1) indices in
/// lexicographic order, columns the axes.
#[derive(Clone, Debug)]
pub struct HatMapMatrix {
    rows: Vec<MultiIndex>,
    matrix: DMatrix<f64>,
}

struct Decomposition {
    singular: DVector<f64>,
    u: DMatrix<f64>,
    v_t: DMatrix<f64>,
    cutoff: f64,
}

impl HatMapMatrix {
    pub fn from_value(w: &FormValue) -> Result<Self> {
        let (n, k) = (w.dimension(), w.degree());
        if k == 0 {
            return Err(Error::InvalidDegree { n, k });
        }
        let rows = MultiIndex::all(n, k - 1);
        let mut matrix = DMatrix::zeros(rows.len(), n);
        for (idx, c) in w.terms() {
            for j in idx.axes() {
                let (rest, sign) = idx.remove(j).expect("axis of the index");
                let r = rows
                    .binary_search(&rest)
                    .expect("every (k-1)-index is a row");
                matrix[(r, j)] += sign * c;
            }
        }
        Ok(HatMapMatrix { rows, matrix })
    }

    pub fn rows(&self) -> &[MultiIndex] {
        &self.rows
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dimension(&self) -> usize {
        self.matrix.ncols()
    }

    /// ι_X w as a form value.
    pub fn apply(&self, x: &[f64]) -> FormValue {
        let v = &self.matrix * DVector::from_column_slice(x);
        let n = self.dimension();
        let degree = self.rows.first().map_or(0, |r| r.degree());
        let mut out = FormValue::zero(n, degree);
        for (r, idx) in self.rows.iter().enumerate() {
            out.add_term(*idx, v[r]);
        }
        out
    }

    fn decompose(&self) -> Decomposition {
        let n = self.dimension();
        let m = if self.matrix.nrows() < n {
            self.matrix.clone().resize_vertically(n, 0.0)
        } else {
            self.matrix.clone()
        };
        let svd = m.svd(true, true);
        let singular = svd.singular_values;
        let smax = singular.iter().fold(0.0f64, |a, &s| a.max(s));
        Decomposition {
            singular,
            u: svd.u.expect("requested"),
            v_t: svd.v_t.expect("requested"),
            cutoff: smax * RANK_CUTOFF,
        }
    }

    pub fn rank(&self) -> usize {
        let d = self.decompose();
        d.singular
            .iter()
            .filter(|&&s| s > d.cutoff && s > 0.0)
            .count()
    }

    /// Orthonormal null-space basis, each vector signed so its largest entry is positive.
    pub fn kernel(&self) -> Vec<Vec<f64>> {
        let d = self.decompose();
        let mut out = Vec::new();
        for (i, &s) in d.singular.iter().enumerate() {
            if s > d.cutoff && s > 0.0 {
                continue;
            }
            let mut v: Vec<f64> = d.v_t.row(i).iter().copied().collect();
            let lead = v
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            for x in v.iter_mut() {
                if x.abs() < 1e-15 {
                    *x = 0.0;
                }
            }
            out.push(v);
        }
        out
    }

    /// Minimum-norm least-squares solution of A x = b and the numerical rank.
    pub fn solve_min_norm(&self, b: &[f64]) -> (Vec<f64>, usize) {
        let d = self.decompose();
        let pinv = |r: &DVector<f64>| {
            let mut rhs = r.clone();
            if rhs.len() < d.u.nrows() {
                rhs = rhs.resize_vertically(d.u.nrows(), 0.0);
            }
            let mut x = DVector::zeros(self.dimension());
            for (i, &s) in d.singular.iter().enumerate() {
                if s > d.cutoff && s > 0.0 {
                    x += d.v_t.row(i).transpose() * (d.u.column(i).dot(&rhs) / s);
                }
            }
            x
        };
        let rank = d
            .singular
            .iter()
            .filter(|&&s| s > d.cutoff && s > 0.0)
            .count();
        let b = DVector::from_column_slice(b);
        let mut x = pinv(&b);
        // nalgebra's SVD can be off by ~1e-8 when singular values repeat;
        // a couple of refinement sweeps recover full precision.
        for _ in 0..2 {
            let r = &b - &self.matrix * &x;
            x += pinv(&r);
        }
        (x.iter().copied().collect(), rank)
    }
}

pub fn assemble_hatmap(w: &FormField, point: &[f64], params: &Params) -> Result<HatMapMatrix> {
    HatMapMatrix::from_value(&w.eval(point, params)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    #[serde(rename = "X")]
    pub x: Option<Vec<f64>>,
    pub residual: f64,
    pub kernel_dim: usize,
    pub rank: usize,
    pub unique: bool,
    pub surjectivity_possible: bool,
    pub consistent: bool,
}

/// Solves ι_X w = −σ for values at one point. The solution is kept only when
/// the system is consistent.
pub fn solve_hdw_value(w: &FormValue, sigma: &FormValue, tol: f64) -> Result<SolveReport> {
    let (n, k) = (w.dimension(), w.degree());
    if sigma.dimension() != n {
        return Err(Error::Invalid(format!(
            "σ has dimension {}, w has {n}",
            sigma.dimension()
        )));
    }
    if k < 2 || sigma.degree() + 1 != k {
        return Err(Error::Invalid(format!(
            "σ has degree {}, w has degree {k}",
            sigma.degree()
        )));
    }
    let surjectivity_possible = obstruction_check(n, k)?;
    let hat = HatMapMatrix::from_value(w)?;
    let b: Vec<f64> = hat.rows().iter().map(|r| -sigma.coefficient(*r)).collect();
    let (x, rank) = hat.solve_min_norm(&b);
    let image = &hat.matrix * DVector::from_column_slice(&x);
    let residual = image
        .iter()
        .zip(&b)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let consistent = residual <= tol * (1.0 + sigma.norm());
    let kernel_dim = n - rank;
    Ok(SolveReport {
        x: consistent.then_some(x),
        residual,
        kernel_dim,
        rank,
        unique: consistent && kernel_dim == 0,
        surjectivity_possible,
        consistent,
    })
}

pub fn solve_hdw(
    w: &FormField,
    sigma: &FormField,
    point: &[f64],
    params: &Params,
    tol: f64,
) -> Result<SolveReport> {
    solve_hdw_value(&w.eval(point, params)?, &sigma.eval(point, params)?, tol)
}

pub fn kernel_basis(w: &FormField, point: &[f64], params: &Params) -> Result<Vec<Vec<f64>>> {
    Ok(assemble_hatmap(w, point, params)?.kernel())
}

/// Symbolic σ = dH¹∧…∧dH^m (the scalar 1 when `hamiltonians` is empty).
pub fn hamiltonian_form(hamiltonians: &[ScalarField], n: usize) -> Result<FormField> {
    let mut out = FormField::scalar(n, crate::expr::Expression::one());
    for h in hamiltonians {
        out = out.wedge(&FormField::from_components(h.gradient()))?;
    }
    Ok(out)
}

/// σ = dH¹∧…∧dH^m evaluated at a point.
pub fn hamiltonian_form_at(
    hamiltonians: &[ScalarField],
    n: usize,
    point: &[f64],
    params: &Params,
) -> Result<FormValue> {
    let mut out = FormValue::scalar(n, 1.0);
    for h in hamiltonians {
        out = out.wedge(&FormValue::from_components(&h.gradient_at(point, params)?))?;
    }
    Ok(out)
}
