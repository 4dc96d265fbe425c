//! Inversion of the resistivity in `u_t = div(r grad u)` from boundary time
//! data, using reduced-order models parametrized by Stieltjes continued
//! fractions as a nonlinear preconditioner for Gauss-Newton.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forward;
pub mod grid;
pub mod inversion;
pub mod krylov;
pub mod laplace;
pub mod optgrid;
pub mod rational;
pub mod resolvent;
pub mod sensitivity;
pub mod stieltjes;

pub use error::{Error, Result};
