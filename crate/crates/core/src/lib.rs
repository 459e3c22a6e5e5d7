//! Numerical laboratory for the reverse Faber–Krahn problem of the trace embedding
//! H¹(Ω) ↪ L²(∂Ω): modified Bessel weights, nearly spherical domains, weighted volume and
//! perimeter, a Trefftz eigenvalue solver and the penalized shape functional.

pub mod eigen;
pub mod error;
pub mod functionals;
pub mod lab;
pub mod linalg;
pub mod quadrature;
pub mod shape;
pub mod special;
pub mod sphere;

pub use error::{Error, Result};
