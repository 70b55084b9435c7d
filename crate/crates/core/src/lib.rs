//! Achievability bounds for unsourced multiple access over the Gaussian
//! multiple-access channel when the number of active users is random and
//! unknown to the receiver.
//!
//! The crate evaluates the misdetection and false-alarm bounds of a
//! random-coding scheme that first estimates the number of active users and
//! then decodes a list whose size lies in a window around the estimate. It also
//! provides the error floors of that bound, a slotted-ALOHA baseline with
//! multi-packet reception, a treat-interference-as-noise baseline, and searches
//! for the minimum energy per bit meeting a pair of targets.

// Range checks are written as `!(x > 0.0)` so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activity;
pub mod bound_core;
pub mod cli;
pub mod config;
pub mod dt_mc;
pub mod error;
pub mod estimator;
pub mod exponent;
pub mod sa_mpr;
pub mod search;
pub mod specfun;
pub mod tin;

pub use error::{Error, Result};
