//! Measurement-based feedback preparation of a qutrit basis state.
//!
//! A three-level system evolves under noise, a one-parameter control unitary
//! and an imprecise measurement. Controllers pick the control from what they
//! observe: an analytic outcome-keyed table, feed-forward PPO agents on a
//! model or filtered state, or a recurrent agent that sees only outcomes and
//! may stop with a projective readout. The harness sweeps noise strength and
//! measurement precision and writes CSV and SVG summaries.

pub mod channels;
pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod qcore;
pub mod rl;
pub mod seed;

pub use error::{Error, Result};
