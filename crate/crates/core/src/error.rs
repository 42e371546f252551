use crate::expr::{EvalError, ParseError};
use crate::exterior::{CalculusError, ExteriorError, IndexError};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("invalid dimension/degree pair n={n}, k={k} (need n ≥ k ≥ 2)")]
    InvalidDegree { n: usize, k: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("duality fails: ι_n{i} dC{j} = {value} at {point:?} (expected {expected})", i = .i + 1, j = .j + 1)]
    Duality {
        i: usize,
        j: usize,
        value: f64,
        expected: f64,
        point: Vec<f64>,
    },
    #[error("Newton iteration on the level set did not converge in {iterations} steps (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("level-set chart is singular at the base point: {0}")]
    SingularChart(String),
    #[error("point {point:?} lies outside the domain box")]
    OutsideDomain { point: Vec<f64> },
    #[error("HDW system is inconsistent at {point:?} (residual {residual:e})")]
    Inconsistent { point: Vec<f64>, residual: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("config {pointer}: {message}", pointer = if .pointer.is_empty() { "(root)" } else { .pointer.as_str() })]
    Config { pointer: String, message: String },
}

impl From<CalculusError> for Error {
    fn from(e: CalculusError) -> Self {
        match e {
            CalculusError::Exterior(e) => Error::Exterior(e),
            CalculusError::Eval(e) => Error::Eval(e),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
