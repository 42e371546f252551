//! Inverses of k-forms, Poisson k-tensor construction and reduction,
//! w = ω∧dC decompositions, level-set restriction and the constant-rank test.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Expression, Params, ScalarField};
use crate::exterior::{
    pullback_linear, FormField, FormValue, MultiVectorField, PointMap, VectorField,
};
use crate::hdw::RANK_CUTOFF;
use crate::par;

const DUALITY_TOLERANCE: f64 = 1e-9;
const NEWTON_TOLERANCE: f64 = 1e-12;
const NEWTON_ITERATIONS: usize = 50;

fn unit(n: usize, axis: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[axis] = 1.0;
    e
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn max_over<F>(points: &[Vec<f64>], f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + Send,
{
    let values = par::try_map(points, |p| f(p))?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// ‖ι_{ι_Y w} J − Y‖ for a vector value Y.
fn inverse_defect(w: &FormValue, j: &crate::exterior::MultiVectorValue, y: &[f64]) -> Result<f64> {
    let alpha = w.interior(y)?;
    let back = j
        .interior_multi(&alpha)?
        .to_components()
        .expect("degree one");
    Ok(distance(&back, y))
}

/// Largest ‖ι_{ι_X w} J − X‖ over sample points and basis vectors X = ∂ⱼ.
pub fn strong_inverse_residual(
    w: &FormField,
    j: &MultiVectorField,
    points: &[Vec<f64>],
    params: &Params,
) -> Result<f64> {
    check_pair(w, j)?;
    let n = w.dimension();
    max_over(points, |p| {
        let (wv, jv) = (w.eval(p, params)?, j.eval(p, params)?);
        (0..n).try_fold(0.0f64, |m, a| {
            Ok(m.max(inverse_defect(&wv, &jv, &unit(n, a))?))
        })
    })
}

fn check_pair(w: &FormField, j: &MultiVectorField) -> Result<()> {
    if w.dimension() != j.dimension() || w.degree() != j.degree() {
        return Err(Error::Invalid(format!(
            "form (n={}, k={}) and multivector (n={}, k={}) do not match",
            w.dimension(),
            w.degree(),
            j.dimension(),
            j.degree()
        )));
    }
    Ok(())
}

/// A distribution Δ given by spanning fields or as the common kernel of dCⁱ.
#[derive(Clone, Debug)]
pub enum Distribution {
    Spanning(Vec<VectorField>),
    Annihilator(Vec<ScalarField>),
}

impl Distribution {
    /// A basis of Δ at the point.
    pub fn basis_at(&self, n: usize, p: &[f64], params: &Params) -> Result<Vec<Vec<f64>>> {
        match self {
            Distribution::Spanning(fields) => {
                fields.iter().map(|f| Ok(f.eval(p, params)?)).collect()
            }
            Distribution::Annihilator(cs) => {
                if cs.is_empty() {
                    return Ok((0..n).map(|a| unit(n, a)).collect());
                }
                let rows: Vec<f64> = cs
                    .iter()
                    .map(|c| c.gradient_at(p, params))
                    .collect::<std::result::Result<Vec<_>, _>>()?
                    .concat();
                let mut m = DMatrix::from_row_slice(cs.len(), n, &rows);
                if m.nrows() < n {
                    m = m.resize_vertically(n, 0.0);
                }
                let svd = m.svd(false, true);
                let v_t = svd.v_t.expect("requested");
                let smax = svd.singular_values.iter().fold(0.0f64, |a, &s| a.max(s));
                Ok(svd
                    .singular_values
                    .iter()
                    .enumerate()
                    .filter(|(_, &s)| s <= smax * RANK_CUTOFF)
                    .map(|(i, _)| v_t.row(i).iter().copied().collect())
                    .collect())
            }
        }
    }
}

/// Largest ‖ι_{ι_Y w} J − Y‖ over points and a basis Y of Δ.
pub fn delta_inverse_residual(
    w: &FormField,
    j: &MultiVectorField,
    delta: &Distribution,
    points: &[Vec<f64>],
    params: &Params,
) -> Result<f64> {
    check_pair(w, j)?;
    let n = w.dimension();
    max_over(points, |p| {
        let (wv, jv) = (w.eval(p, params)?, j.eval(p, params)?);
        delta
            .basis_at(n, p, params)?
            .iter()
            .try_fold(0.0f64, |m, y| Ok(m.max(inverse_defect(&wv, &jv, y)?)))
    })
}

/// Checks ι_{nᵢ}dCʲ = δᵢʲ at every point.
pub fn check_duality(
    casimirs: &[ScalarField],
    frames: &[VectorField],
    points: &[Vec<f64>],
    params: &Params,
) -> Result<()> {
    if casimirs.len() != frames.len() {
        return Err(Error::Invalid(format!(
            "{} constraint functions but {} frame fields",
            casimirs.len(),
            frames.len()
        )));
    }
    for p in points {
        for (i, n_i) in frames.iter().enumerate() {
            let v = n_i.eval(p, params)?;
            for (jx, c) in casimirs.iter().enumerate() {
                let g = c.gradient_at(p, params)?;
                let value: f64 = v.iter().zip(&g).map(|(a, b)| a * b).sum();
                let expected = if i == jx { 1.0 } else { 0.0 };
                if (value - expected).abs() > DUALITY_TOLERANCE {
                    return Err(Error::Duality {
                        i,
                        j: jx,
                        value,
                        expected,
                        point: p.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// J = N∧𝒥 with N = n_{k−2}∧…∧n₁, after checking duality and that each dCⁱ
/// lies in the kernel of 𝒥 at the sample points.
pub fn build_poisson_k(
    bivector: &MultiVectorField,
    casimirs: &[ScalarField],
    frames: &[VectorField],
    points: &[Vec<f64>],
    params: &Params,
) -> Result<MultiVectorField> {
    if bivector.degree() != 2 {
        return Err(Error::Invalid(format!(
            "expected a 2-vector, found degree {}",
            bivector.degree()
        )));
    }
    check_duality(casimirs, frames, points, params)?;
    for p in points {
        let jv = bivector.eval(p, params)?;
        for (i, c) in casimirs.iter().enumerate() {
            let leak = jv.interior(&c.gradient_at(p, params)?)?.max_abs();
            if leak > DUALITY_TOLERANCE {
                return Err(Error::Invalid(format!(
                    "dC{} is not in the kernel of the 2-vector at {p:?} (|ι_dC 𝒥| = {leak:e})",
                    i + 1
                )));
            }
        }
    }
    let n = bivector.dimension();
    let mut out = MultiVectorField::scalar(n, Expression::one());
    for f in frames.iter().rev() {
        out = out.wedge(&f.to_multivector())?;
    }
    Ok(out.wedge(bivector)?)
}

/// 𝒥 = ι_{dC¹}…ι_{dC^{k−2}} J, contracting dC^{k−2} first.
pub fn reduce_k_to_2(j: &MultiVectorField, casimirs: &[ScalarField]) -> Result<MultiVectorField> {
    let mut out = j.clone();
    for c in casimirs.iter().rev() {
        out = out.interior(c.gradient())?;
    }
    Ok(out)
}

/// w = ω∧dC¹∧…∧dC^{k−2}.
pub fn build_w_from_omega(omega: &FormField, casimirs: &[ScalarField]) -> Result<FormField> {
    let mut out = omega.clone();
    for c in casimirs {
        out = out.wedge(&FormField::from_components(c.gradient()))?;
    }
    Ok(out)
}

/// ω = ι_{n_{k−2}}…ι_{n₁} w, contracting n₁ first.
pub fn extract_omega(
    w: &FormField,
    frames: &[VectorField],
    casimirs: &[ScalarField],
    points: &[Vec<f64>],
    params: &Params,
) -> Result<FormField> {
    check_duality(casimirs, frames, points, params)?;
    let mut out = w.clone();
    for f in frames {
        out = out.interior_field(f)?;
    }
    Ok(out)
}

/// Coordinate frames nᵢ = (1/∂ₐCⁱ)∂ₐ where axis `a` is one along which Cⁱ
/// varies at `point` and every other Cʲ is symbolically constant.
pub fn propose_dual_frames(
    casimirs: &[ScalarField],
    point: &[f64],
    params: &Params,
) -> Result<Option<Vec<VectorField>>> {
    let Some(first) = casimirs.first() else {
        return Ok(Some(Vec::new()));
    };
    let n = first.dimension();
    let mut frames = Vec::new();
    let mut used = Vec::new();
    for (i, c) in casimirs.iter().enumerate() {
        let mut chosen = None;
        for a in (0..n).filter(|a| !used.contains(a)) {
            let others_flat = casimirs
                .iter()
                .enumerate()
                .all(|(jx, o)| jx == i || o.gradient()[a].is_zero());
            if others_flat && c.gradient()[a].eval(point, params)?.abs() > DUALITY_TOLERANCE {
                chosen = Some(a);
                break;
            }
        }
        let Some(a) = chosen else { return Ok(None) };
        used.push(a);
        let mut comps = vec![Expression::zero(); n];
        comps[a] = Expression::one() / c.gradient()[a].clone();
        frames.push(VectorField::new(comps));
    }
    Ok(Some(frames))
}

/// Local chart of Σ_c = {C = c} by the complementary (free) axes.
#[derive(Clone, Debug)]
pub struct LevelSetChart {
    constraints: Vec<ScalarField>,
    levels: Vec<f64>,
    free: Vec<usize>,
    dependent: Vec<usize>,
    base_point: Vec<f64>,
    params: Params,
}

impl LevelSetChart {
    /// Chart through `base_point`, with levels c = C(base_point).
    pub fn new(
        constraints: Vec<ScalarField>,
        base_point: Vec<f64>,
        params: Params,
    ) -> Result<Self> {
        let n = base_point.len();
        let m = constraints.len();
        if m == 0 || m >= n {
            return Err(Error::Invalid(format!(
                "need 1..{n} constraints, found {m}"
            )));
        }
        if constraints.iter().any(|c| c.dimension() != n) {
            return Err(Error::Invalid(
                "constraint dimension differs from the base point".into(),
            ));
        }
        let levels = constraints
            .iter()
            .map(|c| c.eval(&base_point, &params))
            .collect::<std::result::Result<_, _>>()?;
        let jac = Self::jacobian(&constraints, &base_point, &params)?;
        let dependent = greedy_pivots(jac).ok_or_else(|| {
            Error::SingularChart("constraint differentials are dependent at the base point".into())
        })?;
        let free = (0..n).filter(|a| !dependent.contains(a)).collect();
        Ok(LevelSetChart {
            constraints,
            levels,
            free,
            dependent,
            base_point,
            params,
        })
    }

    fn jacobian(cs: &[ScalarField], p: &[f64], params: &Params) -> Result<Vec<Vec<f64>>> {
        cs.iter().map(|c| Ok(c.gradient_at(p, params)?)).collect()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn free_axes(&self) -> &[usize] {
        &self.free
    }

    pub fn dependent_axes(&self) -> &[usize] {
        &self.dependent
    }

    pub fn dimension(&self) -> usize {
        self.base_point.len()
    }

    pub fn reduced_dimension(&self) -> usize {
        self.free.len()
    }

    /// Chart coordinates of the base point.
    pub fn base_coordinates(&self) -> Vec<f64> {
        self.free.iter().map(|&a| self.base_point[a]).collect()
    }

    /// Exact parameterization when every constraint is a bare coordinate.
    pub fn coordinate_parameterization(&self) -> Option<PointMap> {
        let mut fixed = vec![None; self.dimension()];
        for (c, level) in self.constraints.iter().zip(&self.levels) {
            fixed[c.expr().as_coordinate()?] = Some(*level);
        }
        let components = (0..self.dimension())
            .map(|a| match fixed[a] {
                Some(v) => Expression::constant(v),
                None => {
                    Expression::coord(self.free.iter().position(|&f| f == a).expect("free axis"))
                }
            })
            .collect();
        Some(PointMap::new(self.reduced_dimension(), components))
    }

    /// Ambient point for chart coordinates `y` (damped Newton on the dependent axes).
    pub fn embed(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.base_point.clone();
        for (i, &a) in self.free.iter().enumerate() {
            x[a] = y[i];
        }
        let residual = |x: &[f64]| -> Result<Vec<f64>> {
            self.constraints
                .iter()
                .zip(&self.levels)
                .map(|(c, l)| Ok(c.eval(x, &self.params)? - l))
                .collect()
        };
        let norm = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut r = residual(&x)?;
        for _ in 0..NEWTON_ITERATIONS {
            if norm(&r) <= NEWTON_TOLERANCE {
                return Ok(x);
            }
            let jac = Self::jacobian(&self.constraints, &x, &self.params)?;
            let m = self.dependent.len();
            let block = DMatrix::from_fn(m, m, |i, j| jac[i][self.dependent[j]]);
            let rhs = nalgebra::DVector::from_column_slice(&r);
            let step = block.lu().solve(&rhs).ok_or_else(|| {
                Error::SingularChart(format!("dependent block singular at {x:?}"))
            })?;
            let mut damping = 1.0;
            loop {
                let mut trial = x.clone();
                for (i, &a) in self.dependent.iter().enumerate() {
                    trial[a] -= damping * step[i];
                }
                let tr = residual(&trial);
                if let Ok(tr) = tr {
                    if norm(&tr) < norm(&r) || damping < 1e-4 {
                        x = trial;
                        r = tr;
                        break;
                    }
                }
                damping *= 0.5;
                if damping < 1e-4 {
                    return Err(Error::NewtonDivergence {
                        iterations: NEWTON_ITERATIONS,
                        residual: norm(&r),
                    });
                }
            }
        }
        if norm(&r) <= NEWTON_TOLERANCE {
            Ok(x)
        } else {
            Err(Error::NewtonDivergence {
                iterations: NEWTON_ITERATIONS,
                residual: norm(&r),
            })
        }
    }

    /// ∂x/∂y of the embedding (n × (n−m)), by the implicit function theorem.
    pub fn embedding_jacobian_at(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let jac = Self::jacobian(&self.constraints, x, &self.params)?;
        let m = self.dependent.len();
        let block = DMatrix::from_fn(m, m, |i, j| jac[i][self.dependent[j]]);
        let free_block = DMatrix::from_fn(m, self.free.len(), |i, j| jac[i][self.free[j]]);
        let solved = block
            .lu()
            .solve(&free_block)
            .ok_or_else(|| Error::SingularChart(format!("dependent block singular at {x:?}")))?;
        let mut out = vec![vec![0.0; self.free.len()]; self.dimension()];
        for (j, &a) in self.free.iter().enumerate() {
            out[a][j] = 1.0;
        }
        for (i, &a) in self.dependent.iter().enumerate() {
            for j in 0..self.free.len() {
                out[a][j] = -solved[(i, j)];
            }
        }
        Ok(out)
    }

    /// i_c^*ω at chart coordinates `y`.
    pub fn restrict_form_at(&self, omega: &FormField, y: &[f64]) -> Result<FormValue> {
        let x = self.embed(y)?;
        Ok(pullback_linear(
            &self.embedding_jacobian_at(&x)?,
            &omega.eval(&x, &self.params)?,
        ))
    }
}

/// Gaussian elimination choosing, for each row in turn, the column with the
/// largest remaining pivot. Returns the pivot columns or `None` if singular.
fn greedy_pivots(mut rows: Vec<Vec<f64>>) -> Option<Vec<usize>> {
    let scale = rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut pivots = Vec::new();
    for r in 0..rows.len() {
        let (col, val) = rows[r]
            .iter()
            .enumerate()
            .filter(|(c, _)| !pivots.contains(c))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(c, v)| (c, *v))?;
        if val.abs() <= scale * RANK_CUTOFF || val == 0.0 {
            return None;
        }
        pivots.push(col);
        let pivot_row = rows[r].clone();
        for row in rows.iter_mut().skip(r + 1) {
            let f = row[col] / val;
            for (x, p) in row.iter_mut().zip(&pivot_row) {
                *x -= f * p;
            }
        }
    }
    Some(pivots)
}

/// A restricted form: exact when the constraints are coordinates, otherwise
/// evaluated pointwise through the chart.
#[derive(Clone, Debug)]
pub enum Restriction {
    Exact(FormField),
    Pointwise(Box<LevelSetChart>, FormField),
}

impl Restriction {
    pub fn eval(&self, y: &[f64], params: &Params) -> Result<FormValue> {
        match self {
            Restriction::Exact(f) => Ok(f.eval(y, params)?),
            Restriction::Pointwise(chart, omega) => chart.restrict_form_at(omega, y),
        }
    }

    pub fn exact(&self) -> Option<&FormField> {
        match self {
            Restriction::Exact(f) => Some(f),
            Restriction::Pointwise(..) => None,
        }
    }
}

pub fn restrict_to_level_set(chart: &LevelSetChart, omega: &FormField) -> Restriction {
    match chart.coordinate_parameterization() {
        Some(map) => Restriction::Exact(map.pullback_symbolic(omega)),
        None => Restriction::Pointwise(Box::new(chart.clone()), omega.clone()),
    }
}

/// H restricted to the level set, exact for coordinate constraints.
pub fn restrict_scalar(chart: &LevelSetChart, h: &ScalarField) -> Option<ScalarField> {
    let map = chart.coordinate_parameterization()?;
    let comps = map.components().to_vec();
    Some(ScalarField::new(
        h.expr().substitute(&|a| comps[a].clone()),
        chart.reduced_dimension(),
    ))
}

/// ‖ι_{X̃}ω̃ + dH̃‖ at chart points `ys`, where X̃ is the free-axis part of the
/// ambient field X returned by `field`.
pub fn reduced_flow_residual(
    chart: &LevelSetChart,
    omega: &FormField,
    h: &ScalarField,
    field: &(dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync),
    ys: &[Vec<f64>],
    params: &Params,
) -> Result<f64> {
    max_over(ys, |y| {
        let x = chart.embed(y)?;
        let e = chart.embedding_jacobian_at(&x)?;
        let reduced = pullback_linear(&e, &omega.eval(&x, params)?);
        let dh = pullback_linear(&e, &FormValue::from_components(&h.gradient_at(&x, params)?));
        let xv = field(&x)?;
        let xt: Vec<f64> = chart.free_axes().iter().map(|&a| xv[a]).collect();
        Ok(reduced.interior(&xt)?.try_add(&dh)?.norm())
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankReport {
    /// Rank 2ℓ at the first sample point.
    pub rank: usize,
    /// τ = (n − m) − 2ℓ.
    pub corank: usize,
    pub ranks: Vec<usize>,
    pub constant_over_samples: bool,
    pub points: Vec<Vec<f64>>,
}

fn antisymmetric_matrix(omega: &FormValue) -> DMatrix<f64> {
    let n = omega.dimension();
    let mut m = DMatrix::zeros(n, n);
    for (idx, c) in omega.terms() {
        let ax = idx.to_vec();
        m[(ax[0], ax[1])] = *c;
        m[(ax[1], ax[0])] = -*c;
    }
    m
}

/// Rank of i_{C(x)}^*ω at each point, rounded down to even.
pub fn rank_wrt(
    omega: &FormField,
    casimirs: &[ScalarField],
    points: &[Vec<f64>],
    params: &Params,
) -> Result<RankReport> {
    if omega.degree() != 2 {
        return Err(Error::Invalid(format!(
            "rank test needs a 2-form, found degree {}",
            omega.degree()
        )));
    }
    let n = omega.dimension();
    let ranks = par::try_map(points, |p| -> Result<usize> {
        let restricted = if casimirs.is_empty() {
            omega.eval(p, params)?
        } else {
            let chart = LevelSetChart::new(casimirs.to_vec(), p.clone(), params.clone())?;
            chart.restrict_form_at(omega, &chart.base_coordinates())?
        };
        let m = antisymmetric_matrix(&restricted);
        let sv = m.singular_values();
        let smax = sv.iter().fold(0.0f64, |a, &s| a.max(s));
        let r = sv
            .iter()
            .filter(|&&s| s > smax * RANK_CUTOFF && s > 0.0)
            .count();
        Ok(r - r % 2)
    })?;
    let rank = ranks.first().copied().unwrap_or(0);
    Ok(RankReport {
        rank,
        corank: n - casimirs.len() - rank,
        constant_over_samples: ranks.iter().all(|&r| r == rank),
        ranks,
        points: points.to_vec(),
    })
}

/// Largest ‖w − (Σ dpⁱ∧dqⁱ)∧dC¹∧…‖ over points, for candidate functions
/// (pⁱ, qⁱ, Cʲ) written in the original coordinates.
pub fn verify_darboux(
    w: &FormField,
    p: &[Expression],
    q: &[Expression],
    c: &[Expression],
    points: &[Vec<f64>],
    params: &Params,
) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Invalid("p and q lists differ in length".into()));
    }
    let n = w.dimension();
    let d = |e: &Expression| {
        FormField::from_components(&(0..n).map(|a| e.differentiate(a)).collect::<Vec<_>>())
    };
    let mut model = FormField::zero(n, 2);
    for (pi, qi) in p.iter().zip(q) {
        model = model.try_add(&d(pi).wedge(&d(qi))?)?;
    }
    for ci in c {
        model = model.wedge(&d(ci))?;
    }
    let diff = w.try_sub(&model)?;
    max_over(points, |x| Ok(diff.eval(x, params)?.max_abs()))
}
