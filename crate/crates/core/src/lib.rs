//! Curvature, model and isometry-dimension computations for the
//! neutral-signature metrics g_{6+4p,F} on R^{6+4p}.
//!
//! Symbolic paths are exact (arbitrary-precision rationals); floats appear
//! only through `exp` at non-zero arguments and irrational roots, and are
//! flagged via [`scalar::Scalar::Approx`].

pub mod exec;
pub mod exprs;
pub mod geometry;
pub mod invariants;
pub mod linalg;
pub mod models;
pub mod scalar;
pub mod scenario;
pub mod stabilizer;
pub mod tensor;

pub use exec::Exec;
pub use exprs::{Coordinate, Expr, Point};
pub use scalar::{Rational, Scalar};
