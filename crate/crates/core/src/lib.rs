//! Task and charging-power allocation plus strategyproof base-station
//! placement for wireless-powered spatial crowdsourcing.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod deployment;
pub mod error;
pub mod experiments;
pub mod game;
pub mod model;
pub mod output;
pub mod verify;

pub use error::{Error, Result};
