//! Numerical toolkit for separable quasiconcave programming.
//!
//! The crate decides quasiconcavity of multiplicative product functions
//! through the multiplicative concavity index, verifies first-order
//! optimality certificates in differentiable (KKT) and nonsmooth (m-KKT)
//! form, and solves unconstrained/constrained instances at desk scale
//! with local-implies-global certification.

pub mod cvindex;
pub mod domain;
pub mod expr;
pub mod gencv;
pub mod kkt;
pub(crate) mod linalg;
pub mod problem;
pub mod separable;
pub mod solve;
pub mod superdiff;

pub use domain::BoxDomain;
pub use expr::{parse, Expression, RealFn};
