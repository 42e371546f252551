use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Expression, Params};
use crate::exterior::{pullback_linear, FormField, FormValue, PointMap, VectorField};
use crate::par;
use crate::sample::DomainBox;

use super::integrate::{integrate_rhs, Method};
use super::FD_STEP;

/// Flattening data for a locally flat k-form w₀ and a time-independent
/// generator X, with w_t = w₀ + t(w − w₀) and w = w₀ − L_X w₀.
#[derive(Clone, Debug)]
pub struct MoserProblem {
    pub name: String,
    pub w0: FormField,
    pub x: VectorField,
    /// Target form at t = 1.
    pub w: FormField,
    /// Euler field (1/k)xⁱ∂ᵢ, with L_{Z₀}w₀ = w₀ for constant w₀.
    pub z0: VectorField,
    pub z: Option<VectorField>,
    pub y: Option<VectorField>,
    /// Closed-form flow Φ_t of X; components may use the parameter `t`.
    pub flow: Option<PointMap>,
    pub params: Params,
    pub domain: DomainBox,
    /// Expressions required to be at least `margin` at sample points.
    pub positivity: Vec<Expression>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowRoute {
    ClosedForm,
    Numeric,
}

impl MoserProblem {
    pub fn new(name: &str, w0: FormField, x: VectorField, domain: DomainBox) -> Result<Self> {
        let n = w0.dimension();
        if x.dimension() != n || domain.dimension() != n {
            return Err(Error::Invalid(
                "w0, X and domain must share a dimension".into(),
            ));
        }
        if w0.terms().any(|(_, c)| c.as_constant().is_none()) {
            return Err(Error::Invalid("w0 must have constant coefficients".into()));
        }
        let lie = w0.lie_derivative(&x)?;
        let w = w0.try_sub(&lie)?;
        let k = w0.degree();
        Ok(MoserProblem {
            name: name.into(),
            z0: VectorField::euler(n, 1.0 / k as f64),
            w0,
            x,
            w,
            z: None,
            y: None,
            flow: None,
            params: Params::new(),
            domain,
            positivity: Vec::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.w0.dimension()
    }

    /// w_t = t·w + (1−t)·w₀.
    pub fn interpolate(&self, t: f64) -> Result<FormField> {
        Ok(self.w.scale_f64(t).try_add(&self.w0.scale_f64(1.0 - t))?)
    }

    pub fn admissible(&self, p: &[f64], margin: f64) -> bool {
        self.domain.contains(p)
            && self
                .positivity
                .iter()
                .all(|e| e.eval(p, &self.params).is_ok_and(|v| v >= margin))
    }

    pub fn sample_points(&self, count: usize, seed: u64, margin: f64) -> Result<Vec<Vec<f64>>> {
        self.domain
            .sample_points_where(count, seed, |p| self.admissible(p, margin))
    }

    fn params_at(&self, t: f64) -> Params {
        let mut p = self.params.clone();
        p.insert("t".into(), t);
        p
    }

    /// Φ_t(p) and its Jacobian.
    pub fn flow_at(
        &self,
        p: &[f64],
        t: f64,
        route: FlowRoute,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if t == 0.0 {
            let n = p.len();
            let id = (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect();
            return Ok((p.to_vec(), id));
        }
        match route {
            FlowRoute::ClosedForm => {
                let flow = self.flow.as_ref().ok_or_else(|| {
                    Error::Invalid(format!("{} has no closed-form flow", self.name))
                })?;
                let params = self.params_at(t);
                Ok((flow.apply(p, &params)?, flow.jacobian_at(p, &params)?))
            }
            FlowRoute::Numeric => {
                let x = numeric_flow(&self.x, &self.params, p, t, NUMERIC_STEPS)?;
                let n = p.len();
                let mut cols = Vec::with_capacity(n);
                let mut probe = p.to_vec();
                for a in 0..n {
                    probe[a] = p[a] + FD_STEP;
                    let plus = numeric_flow(&self.x, &self.params, &probe, t, NUMERIC_STEPS)?;
                    probe[a] = p[a] - FD_STEP;
                    let minus = numeric_flow(&self.x, &self.params, &probe, t, NUMERIC_STEPS)?;
                    probe[a] = p[a];
                    cols.push(
                        plus.iter()
                            .zip(&minus)
                            .map(|(u, v)| (u - v) / (2.0 * FD_STEP))
                            .collect::<Vec<_>>(),
                    );
                }
                let jac = (0..n)
                    .map(|i| (0..n).map(|j| cols[j][i]).collect())
                    .collect();
                Ok((x, jac))
            }
        }
    }
}

/// RK4 steps per unit time for numeric flows.
pub const NUMERIC_STEPS: usize = 200;

/// Φ_t(p) for the flow of X by fixed-step RK4 (negative t flows backward).
pub fn numeric_flow(
    x: &VectorField,
    params: &Params,
    p: &[f64],
    t: f64,
    steps_per_unit: usize,
) -> Result<Vec<f64>> {
    if t == 0.0 {
        return Ok(p.to_vec());
    }
    let steps = ((t.abs() * steps_per_unit as f64).ceil() as usize).max(1);
    let dt = t.abs() / steps as f64;
    let sign = t.signum();
    let rhs = |s: &[f64]| -> Result<Vec<f64>> {
        Ok(x.eval(s, params)?.into_iter().map(|v| sign * v).collect())
    };
    let (_, states, _) =
        integrate_rhs(rhs, p, t.abs(), dt, Method::Rk4, |_| true).map_err(|(e, _)| e)?;
    Ok(states.last().cloned().expect("at least the initial state"))
}

/// max over points of the largest coefficient of L_X(L_X w₀).
pub fn moser_residual(problem: &MoserProblem, points: &[Vec<f64>]) -> Result<f64> {
    let second = problem
        .w0
        .lie_derivative(&problem.x)?
        .lie_derivative(&problem.x)?;
    let values = par::try_map(points, |p| -> Result<f64> {
        Ok(second.eval(p, &problem.params)?.max_abs())
    })?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// max over points of ‖Φ_t*(w_t(Φ_t p)) − w₀(p)‖.
pub fn verify_flattening(
    problem: &MoserProblem,
    w: &FormField,
    t: f64,
    points: &[Vec<f64>],
    route: FlowRoute,
) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::Invalid(format!("flow time must be finite, got {t}")));
    }
    let wt = w.scale_f64(t).try_add(&problem.w0.scale_f64(1.0 - t))?;
    let values = par::try_map(points, |p| -> Result<f64> {
        let (image, jac) = problem.flow_at(p, t, route)?;
        let pulled: FormValue = pullback_linear(&jac, &wt.eval(&image, &problem.params)?);
        Ok(pulled
            .try_sub(&problem.w0.eval(p, &problem.params)?)?
            .norm())
    })?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// Pointwise (L_{tX_t}L_Z − L_{Z₀−Z−(1−t)X_t})w₀ for caller-supplied X_t and Z.
pub fn flatc_residual(
    problem: &MoserProblem,
    xt: &VectorField,
    z: &VectorField,
    t: f64,
    point: &[f64],
) -> Result<f64> {
    let w0 = &problem.w0;
    let tc = Expression::constant(t);
    let first = w0.lie_derivative(z)?.lie_derivative(&xt.scale(&tc))?;
    let generator = problem
        .z0
        .add(&z.scale(&Expression::constant(-1.0)))
        .add(&xt.scale(&Expression::constant(t - 1.0)));
    let second = w0.lie_derivative(&generator)?;
    Ok(first
        .try_sub(&second)?
        .eval(point, &problem.params)?
        .max_abs())
}
