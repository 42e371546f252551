//! Sparse alternating tensors on a chart of ℝⁿ.
//!
//! Conventions: the interior product is the left one, where removing the axis
//! in slot `p` (zero-based) of an increasing index carries sign (−1)^p.
//! Contracting by a higher-degree element α¹∧…∧α^m applies ι_{α¹} first.

mod alternating;
mod calculus;
mod multi_index;

pub use alternating::{
    Alternating, Coefficient, Contravariant, Covariant, ExteriorError, FormField, FormValue,
    MultiVectorField, MultiVectorValue, Variance,
};
pub use calculus::{
    determinant, differential, exterior_derivative, lie_derivative, pullback_linear, CalculusError,
    PointMap, VectorField,
};
pub use multi_index::{IndexError, MultiIndex, MAX_DIM};
