//! Trapped-ion chain quenches through the linear-zigzag transition.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod defects;
pub mod dynamics;
pub mod equilibrium;
pub mod field;
pub mod harness;
pub mod io;
pub mod model;
pub mod predict;
pub mod rng;
