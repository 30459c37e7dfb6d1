//! Numerical analysis of smooth equality/inequality constraint systems at a
//! base point: constant-rank qualifications, linearized and tangent cones,
//! functional dependence and Lagrange multipliers.

pub mod cones;
pub mod config;
pub mod dependence;
pub mod expr;
pub mod kkt;
pub mod linalg;
pub mod model;
pub mod nnls;
pub mod rank;
pub mod tangent;
