//! Phase-estimation precision of entangled multi-component cat states.
//!
//! Closed forms live in [`cat`], [`probe`], [`loss`] and [`qfi`]; every one of
//! them is cross-checked against the truncated Fock-space simulation in
//! [`fock`]. [`sweep`] turns the evaluators into energy-constrained curves and
//! [`genscheme`] simulates the cross-Kerr preparation protocol.

pub mod baselines;
pub mod cat;
pub mod error;
pub mod fock;
pub mod genscheme;
pub mod loss;
pub mod probe;
pub mod qfi;
mod special;
pub mod sweep;

pub use error::{Error, Result};
