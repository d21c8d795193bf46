//! Numerical engine for inhomogeneous polymer models.
//!
//! Random copolymers at a selective interface are handled by the exact
//! transfer recursion in [`transfer`], tested for localization in [`stats`]
//! and probed near the critical line in [`deloc`]. Periodic copolymer,
//! pinning and wetting models reduce to finite Perron–Frobenius problems in
//! [`periodic`]. [`cocycle`] and [`fluct`] cover constrained annealing and
//! the conditioned local limit theorem.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops mirror the recursions they implement
#![allow(clippy::needless_range_loop)]

pub mod cocycle;
pub mod deloc;
pub mod env;
pub mod error;
pub mod fluct;
pub mod linalg;
pub mod mc;
pub mod periodic;
pub mod stats;
pub mod transfer;
pub mod walk;

pub use env::{ChargeLaw, Direction, Environment, PeriodicCharges};
pub use error::{Error, Result};
pub use periodic::{Kernel, PFData, PeriodicModel, Regime, RegimeReport};
pub use stats::{Decision, TestReport};
pub use transfer::{Params, Profile, Window};
pub use walk::{ReturnLaw, WalkKind, WalkSpec};
