//! Periodic Green's functions for weighted Sturm-Liouville operators, the
//! concentration points they select, and single-bubble solutions of the
//! power and exponential problems that concentrate there.
//!
//! The central object is the periodic operator
//! `L v = -v'' - n (f'/f) v' + kappa v` on `[0, 1]`, discretized in its
//! self-adjoint form `-(a v')' + a kappa v` with weight `a = f^n`.

pub mod bubble;
pub mod error;
pub mod greens;
pub mod linalg;
pub mod locator;
pub mod nonlinear;
pub mod operator;
pub mod periodic;
pub mod quadrature;

pub use error::{Error, Result};
pub use operator::OperatorModel;
pub use periodic::{diff_periodic, quad_periodic, quad_segment, Derivative, Grid, GridFn, PeriodicFn};
