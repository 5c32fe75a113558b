//! Bistable traveling wavefronts of delayed reaction-diffusion equations
//!
//! `u_t = u_xx + g(u(t, x), u(t - tau, x))`.
//!
//! A front `u = phi(x + c t)` solves the profile equation
//! `phi'' - c phi' + g(phi(t), phi(t - c tau)) = 0` with `phi(-inf) = e1`,
//! `phi(+inf) = e3`. The crate provides:
//!
//! * [`quasipoly`]: roots of the characteristic functions
//!   `z^2 - c z + a + b exp(-z h)`;
//! * [`domain`]: the monotonicity domain `{(tau, c): c <= clin(tau)}`;
//! * [`toy`]: exact speeds and profiles for the piecewise-linear birth function;
//! * [`model`]: concrete reaction terms and hypothesis checks;
//! * [`profile`]: collocation + continuation in the delay;
//! * [`pde`]: direct method-of-lines simulation;
//! * [`verify`]: a posteriori checks of computed fronts.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod domain;
pub mod error;
pub mod model;
pub mod formats;
pub mod numeric;
pub mod par;
pub mod pde;
pub mod profile;
pub mod quasipoly;
pub mod toy;
pub mod verify;

pub use error::{Error, Result};
pub use par::Exec;
