//! Equations of motion for generalized Hamiltonian systems, trajectory
//! integration with conservation diagnostics, and Moser flattening checks.
//!
//! Two routes produce the vector field:
//! * tensor route, X = −ι_{dH¹}…ι_{dH^{k−1}}J, contracting dH^{k−1} first;
//! * form route, the minimum-norm solution of ι_X w = −dH¹∧…∧dH^{k−1}.
//!
//! When both exist a system records `route_sign` with X_form ≡ route_sign·X_tensor
//! modulo the kernel of w. For J the strong inverse of w the sign is
//! (−1)^{(k−1)(k−2)/2}; it is stored per system rather than folded into J.

mod integrate;
mod moser;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Expression, Params, ScalarField, Symbols};
use crate::exterior::{FormField, MultiVectorField, VectorField};
use crate::hdw::{self, SolveReport, DEFAULT_TOLERANCE};
use crate::sample::DomainBox;

pub use integrate::{
    conservation_report, integrate, integrate_rhs, ConservationReport, Drift, IntegrationFailure,
    Method, Trajectory, Truncation, DOMAIN_SLACK,
};
pub use moser::{
    flatc_residual, moser_residual, numeric_flow, verify_flattening, FlowRoute, MoserProblem,
    NUMERIC_STEPS,
};

/// Step for central finite differences of form-route fields.
pub const FD_STEP: f64 = 1e-5;
/// Agreement tolerance between tensor and form routes.
pub const ROUTE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub enum Structure {
    Form(FormField),
    Tensor(MultiVectorField),
}

impl Structure {
    pub fn degree(&self) -> usize {
        match self {
            Structure::Form(w) => w.degree(),
            Structure::Tensor(j) => j.degree(),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Structure::Form(w) => w.dimension(),
            Structure::Tensor(j) => j.dimension(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Structure::Form(_) => "form",
            Structure::Tensor(_) => "tensor",
        }
    }
}

/// A structure with its k−1 Hamiltonians, in contraction order.
#[derive(Clone, Debug)]
pub struct Route {
    pub structure: Structure,
    pub hamiltonians: Vec<ScalarField>,
}

impl Route {
    pub fn form(w: FormField, hamiltonians: Vec<ScalarField>) -> Self {
        Route {
            structure: Structure::Form(w),
            hamiltonians,
        }
    }

    pub fn tensor(j: MultiVectorField, hamiltonians: Vec<ScalarField>) -> Self {
        Route {
            structure: Structure::Tensor(j),
            hamiltonians,
        }
    }

    pub fn degree(&self) -> usize {
        self.structure.degree()
    }
}

/// X = −ι_{dH¹}…ι_{dH^{k−1}}J as a symbolic vector field.
pub fn tensor_vector_field(
    j: &MultiVectorField,
    hamiltonians: &[ScalarField],
) -> Result<VectorField> {
    if hamiltonians.len() + 1 != j.degree() {
        return Err(Error::Invalid(format!(
            "a {}-vector needs {} Hamiltonians, found {}",
            j.degree(),
            j.degree().saturating_sub(1),
            hamiltonians.len()
        )));
    }
    let mut acc = j.clone();
    for h in hamiltonians.iter().rev() {
        acc = acc.interior(h.gradient())?;
    }
    let comps = acc
        .to_components()
        .expect("degree one after k-1 contractions");
    Ok(VectorField::new(comps.into_iter().map(|c| -c).collect()))
}

/// A complete system. Fields are public; call [`SystemSpec::validate`] after
/// building one by hand.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub name: String,
    pub n: usize,
    pub primary: Route,
    pub companion: Option<Route>,
    /// X_form = route_sign · X_tensor when both routes are present.
    pub route_sign: f64,
    /// Display names of the primary route's Hamiltonians.
    pub hamiltonian_names: Vec<String>,
    /// Functions whose differentials reduce a tensor route to a 2-vector.
    pub casimirs: Vec<ScalarField>,
    /// Further conserved quantities to monitor.
    pub invariants: Vec<(String, ScalarField)>,
    /// Density of an invariant measure for the tensor route, if known.
    pub measure_density: Option<ScalarField>,
    pub params: Params,
    pub domain: DomainBox,
    pub aliases: Vec<String>,
    pub base_point: Vec<f64>,
}

impl SystemSpec {
    pub fn k(&self) -> usize {
        self.primary.degree()
    }

    pub fn symbols(&self) -> Symbols {
        Symbols::new(self.n)
            .with_aliases(&self.aliases)
            .with_params(self.params.keys())
    }

    pub fn routes(&self) -> impl Iterator<Item = &Route> {
        std::iter::once(&self.primary).chain(self.companion.as_ref())
    }

    pub fn form_route(&self) -> Option<&Route> {
        self.routes()
            .find(|r| matches!(r.structure, Structure::Form(_)))
    }

    pub fn tensor_route(&self) -> Option<&Route> {
        self.routes()
            .find(|r| matches!(r.structure, Structure::Tensor(_)))
    }

    pub fn form(&self) -> Option<&FormField> {
        self.form_route().map(|r| match &r.structure {
            Structure::Form(w) => w,
            Structure::Tensor(_) => unreachable!(),
        })
    }

    pub fn tensor(&self) -> Option<&MultiVectorField> {
        self.tensor_route().map(|r| match &r.structure {
            Structure::Tensor(j) => j,
            Structure::Form(_) => unreachable!(),
        })
    }

    /// Display name of axis `a`.
    pub fn axis_name(&self, a: usize) -> String {
        self.aliases
            .get(a)
            .cloned()
            .unwrap_or_else(|| format!("x{}", a + 1))
    }

    /// Checks dimensions, closure of the form route, the base point and
    /// independence of the Hamiltonian differentials there.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > crate::exterior::MAX_DIM {
            return Err(Error::Invalid(format!(
                "dimension {} outside 1..=12",
                self.n
            )));
        }
        if self.domain.dimension() != self.n || self.base_point.len() != self.n {
            return Err(Error::Invalid(
                "domain box and base point must have n entries".into(),
            ));
        }
        if !self.aliases.is_empty() && self.aliases.len() != self.n {
            return Err(Error::Invalid(format!(
                "{} aliases for {} coordinates",
                self.aliases.len(),
                self.n
            )));
        }
        for route in self.routes() {
            let (n, k) = (route.structure.dimension(), route.degree());
            if n != self.n {
                return Err(Error::Invalid(format!(
                    "{} route has dimension {n}, system has {}",
                    route.structure.kind(),
                    self.n
                )));
            }
            if k < 2 || k > n {
                return Err(Error::InvalidDegree { n, k });
            }
            if route.hamiltonians.len() + 1 != k {
                return Err(Error::Invalid(format!(
                    "{} route of degree {k} needs {} Hamiltonians, found {}",
                    route.structure.kind(),
                    k - 1,
                    route.hamiltonians.len()
                )));
            }
            if route.hamiltonians.iter().any(|h| h.dimension() != n) {
                return Err(Error::Invalid(
                    "Hamiltonian dimension differs from the system".into(),
                ));
            }
        }
        if !self.domain.contains(&self.base_point) {
            return Err(Error::OutsideDomain {
                point: self.base_point.clone(),
            });
        }
        if let Some(w) = self.form() {
            let points = self.domain.sample_points(20, 0);
            let r = crate::identities::closure_residual(w, &points, &self.params, 1e-10)?;
            if !r.pass {
                return Err(Error::Invalid(format!(
                    "form is not closed: |dw| = {:e} at {:?}",
                    r.max_residual, r.argmax_point
                )));
            }
        }
        let sigma = hdw::hamiltonian_form_at(
            &self.primary.hamiltonians,
            self.n,
            &self.base_point,
            &self.params,
        )?;
        if sigma.norm() <= 1e-12 {
            return Err(Error::Invalid(
                "Hamiltonian differentials are dependent at the base point".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldReport {
    #[serde(rename = "X")]
    pub x: Vec<f64>,
    pub route: &'static str,
    /// Form-route solve, when the system has a form.
    pub solve: Option<SolveReport>,
    /// ‖ι_{sX}w + σ‖ with X from the tensor route, when both routes exist.
    pub agreement_residual: Option<f64>,
}

/// Compiled right-hand side for repeated evaluation.
#[derive(Clone, Debug)]
pub struct Dynamics {
    kind: DynamicsKind,
    params: Params,
    n: usize,
}

#[derive(Clone, Debug)]
enum DynamicsKind {
    Tensor {
        field: VectorField,
        divergence: Expression,
    },
    Form {
        w: FormField,
        hamiltonians: Vec<ScalarField>,
    },
}

impl Dynamics {
    /// Prefers the tensor route (exact and unique) when the system has one.
    pub fn new(system: &SystemSpec) -> Result<Self> {
        let kind = match system.tensor_route() {
            Some(route) => {
                let Structure::Tensor(j) = &route.structure else {
                    unreachable!()
                };
                let field = tensor_vector_field(j, &route.hamiltonians)?;
                let field = VectorField::new(
                    field
                        .components()
                        .iter()
                        .map(|c| c.bind(&system.params))
                        .collect(),
                );
                let divergence = field.divergence();
                DynamicsKind::Tensor { field, divergence }
            }
            None => {
                let Structure::Form(w) = &system.primary.structure else {
                    unreachable!()
                };
                DynamicsKind::Form {
                    w: w.bind(&system.params),
                    hamiltonians: system.primary.hamiltonians.clone(),
                }
            }
        };
        Ok(Dynamics {
            kind,
            params: system.params.clone(),
            n: system.n,
        })
    }

    /// Builds from an explicit tensor route, ignoring any form.
    pub fn from_tensor(
        j: &MultiVectorField,
        hamiltonians: &[ScalarField],
        params: &Params,
    ) -> Result<Self> {
        let field = tensor_vector_field(j, hamiltonians)?;
        let field = VectorField::new(field.components().iter().map(|c| c.bind(params)).collect());
        let divergence = field.divergence();
        Ok(Dynamics {
            kind: DynamicsKind::Tensor { field, divergence },
            params: params.clone(),
            n: j.dimension(),
        })
    }

    pub fn route(&self) -> &'static str {
        match self.kind {
            DynamicsKind::Tensor { .. } => "tensor",
            DynamicsKind::Form { .. } => "form",
        }
    }

    /// The symbolic field, for the tensor route.
    pub fn symbolic_field(&self) -> Option<&VectorField> {
        match &self.kind {
            DynamicsKind::Tensor { field, .. } => Some(field),
            DynamicsKind::Form { .. } => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            DynamicsKind::Tensor { field, .. } => Ok(field.eval(x, &self.params)?),
            DynamicsKind::Form { w, hamiltonians } => {
                let sigma = hdw::hamiltonian_form_at(hamiltonians, self.n, x, &self.params)?;
                let report =
                    hdw::solve_hdw_value(&w.eval(x, &self.params)?, &sigma, DEFAULT_TOLERANCE)?;
                report.x.ok_or_else(|| Error::Inconsistent {
                    point: x.to_vec(),
                    residual: report.residual,
                })
            }
        }
    }

    /// Σᵢ ∂Xⁱ/∂xⁱ: exact for the tensor route, central differences otherwise.
    pub fn divergence(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            DynamicsKind::Tensor { divergence, .. } => Ok(divergence.eval(x, &self.params)?),
            DynamicsKind::Form { .. } => {
                let mut acc = 0.0;
                let mut probe = x.to_vec();
                for a in 0..self.n {
                    probe[a] = x[a] + FD_STEP;
                    let plus = self.eval(&probe)?[a];
                    probe[a] = x[a] - FD_STEP;
                    let minus = self.eval(&probe)?[a];
                    probe[a] = x[a];
                    acc += (plus - minus) / (2.0 * FD_STEP);
                }
                Ok(acc)
            }
        }
    }
}

/// Pointwise vector field with diagnostics from every available route.
pub fn vector_field_of(system: &SystemSpec, point: &[f64]) -> Result<FieldReport> {
    if point.len() != system.n {
        return Err(Error::Invalid(format!(
            "point has {} entries, system has n = {}",
            point.len(),
            system.n
        )));
    }
    if !system.domain.contains(point) {
        return Err(Error::OutsideDomain {
            point: point.to_vec(),
        });
    }
    let params = &system.params;
    let tensor_x = match system.tensor_route() {
        Some(route) => {
            let Structure::Tensor(j) = &route.structure else {
                unreachable!()
            };
            Some(tensor_vector_field(j, &route.hamiltonians)?.eval(point, params)?)
        }
        None => None,
    };
    let mut solve = None;
    let mut agreement = None;
    if let Some(route) = system.form_route() {
        let Structure::Form(w) = &route.structure else {
            unreachable!()
        };
        let wv = w.eval(point, params)?;
        let sigma = hdw::hamiltonian_form_at(&route.hamiltonians, system.n, point, params)?;
        let report = hdw::solve_hdw_value(&wv, &sigma, DEFAULT_TOLERANCE)?;
        if let Some(tx) = &tensor_x {
            let scaled: Vec<f64> = tx.iter().map(|v| system.route_sign * v).collect();
            agreement = Some(wv.interior(&scaled)?.try_add(&sigma)?.norm());
        } else if !report.consistent {
            return Err(Error::Inconsistent {
                point: point.to_vec(),
                residual: report.residual,
            });
        }
        solve = Some(report);
    }
    let (x, route) = match tensor_x {
        Some(x) => (x, "tensor"),
        None => (
            solve
                .as_ref()
                .and_then(|s| s.x.clone())
                .expect("consistent form solve"),
            "form",
        ),
    };
    Ok(FieldReport {
        x,
        route,
        solve,
        agreement_residual: agreement,
    })
}

pub fn divergence(system: &SystemSpec, point: &[f64]) -> Result<f64> {
    Dynamics::new(system)?.divergence(point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn flat3() -> SystemSpec {
        let s = Symbols::new(3);
        let mut w = FormField::zero(3, 3);
        w.add_unordered(&[0, 1, 2], Expression::one());
        let mut j = MultiVectorField::zero(3, 3);
        j.add_unordered(&[0, 1, 2], Expression::one());
        let h = vec![
            ScalarField::parse("x1", &s).unwrap(),
            ScalarField::parse("x2", &s).unwrap(),
        ];
        SystemSpec {
            name: "flat".into(),
            n: 3,
            primary: Route::form(w, h.clone()),
            companion: Some(Route::tensor(j, h)),
            route_sign: -1.0,
            hamiltonian_names: vec!["H1".into(), "H2".into()],
            casimirs: vec![],
            invariants: vec![],
            measure_density: None,
            params: Params::new(),
            domain: DomainBox::uniform(3, -1.0, 1.0),
            aliases: vec![],
            base_point: vec![0.0; 3],
        }
    }

    #[test]
    fn flat_routes_agree_with_sign() {
        let sys = flat3();
        sys.validate().unwrap();
        let r = vector_field_of(&sys, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(r.x, vec![0.0, 0.0, 1.0]);
        let solved = r.solve.unwrap().x.unwrap();
        assert!((solved[2] + 1.0).abs() < 1e-14);
        assert!(r.agreement_residual.unwrap() < 1e-14);
    }

    #[test]
    fn outside_domain_rejected() {
        assert!(matches!(
            vector_field_of(&flat3(), &[2.0, 0.0, 0.0]),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn linear_field_divergence() {
        let j = {
            let mut j = MultiVectorField::zero(2, 2);
            j.add_unordered(&[0, 1], parse("x1", &Symbols::new(2)).unwrap());
            j
        };
        // X = −ι_{dH}J with H = x2 gives X = x1 ∂1
        let h = vec![ScalarField::parse("x2", &Symbols::new(2)).unwrap()];
        let d = Dynamics::from_tensor(&j, &h, &Params::new()).unwrap();
        assert_eq!(d.eval(&[3.0, 1.0]).unwrap(), vec![3.0, 0.0]);
        assert_eq!(d.divergence(&[3.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn validation_catches_open_forms() {
        let mut sys = flat3();
        let mut w = FormField::zero(3, 3);
        w.add_unordered(&[0, 1, 2], Expression::one());
        let mut open = FormField::zero(3, 2);
        open.add_unordered(&[0, 1], Expression::coord(2));
        sys.primary = Route::form(open, vec![sys.primary.hamiltonians[0].clone()]);
        sys.companion = None;
        assert!(sys.validate().is_err());
        let _ = w;
    }
}
