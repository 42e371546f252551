//! Generalized Hamiltonian mechanics of degree k on ℝⁿ.
//!
//! A system is given either by a closed k-form `w` or by a k-vector `J`
//! together with k−1 Hamiltonians. The library solves ι_X w = −dH¹∧…∧dH^{k−1}
//! pointwise, checks the structural identities these objects should satisfy,
//! integrates trajectories with conservation diagnostics and verifies Moser
//! flattening data.

pub mod config;
pub mod dynamics;
pub mod expr;
pub mod exterior;
pub mod hdw;
pub mod identities;
mod par;
pub mod sample;
pub mod structure;
pub mod systems;

mod error;

pub use error::{Error, Result};
