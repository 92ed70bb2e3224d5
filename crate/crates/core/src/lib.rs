//! Quasi-steady-state grid voltage simulation with a hierarchical
//! multi-plant reactive power and voltage controller (MPVC).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control;
pub mod error;
pub mod io;
pub mod network;
pub mod plant;
pub mod powerflow;
pub mod scenarios;
pub mod simulation;

pub use cli::main_cli;
pub use error::{Error, Result};
