//! Numerical building blocks: quadrature, root finding, isotonic projection, banded solves.

pub mod isotonic;
pub mod quadrature;
pub mod roots;
pub mod tridiag;
