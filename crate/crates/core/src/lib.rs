//! Polar-coded modulation over the AWGN channel.
//!
//! The crate is organized bottom-up:
//!
//! * [`polar`]: polar transform, encoder, SC decoder and genie probe.
//! * [`construction`]: bit-channel reliabilities and frozen-set selection.
//! * [`modulation`]: ASK/QAM constellations, labelings and soft demappers.
//! * [`channel`]: AWGN and SNR conversions.
//! * [`schemes`]: MLC and BICM transceivers and the 4-QAM equivalence check.
//! * [`harness`]: Monte-Carlo BER/FER simulation, configs and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod channel;
pub mod construction;
pub mod error;
pub mod harness;
pub mod modulation;
pub mod polar;
pub mod rng;
pub mod schemes;

pub use error::{Error, Result};

/// Toolkit version recorded in simulation outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
