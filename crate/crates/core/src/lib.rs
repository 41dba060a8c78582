//! Exact and stochastic representations of canonical and grand-canonical
//! partition functions for bosons on a discrete torus.
//!
//! Every representation (Fock-space traces, Trotter products, auxiliary-field
//! covariances and permanents, interacting random walks) is evaluated at desk
//! scale so that the representations can be checked against each other.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod condensate;
pub mod covariance;
pub mod error;
pub mod fock;
pub mod hs;
pub mod lattice;
pub mod linalg;
pub mod permanent;
pub mod quadrature;
pub mod walks;

pub use error::{Error, Result};
pub use lattice::{InteractionKind, InteractionOperator, KineticKind, OneBodyOperator, TorusLattice};
