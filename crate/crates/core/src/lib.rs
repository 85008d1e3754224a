//! Block iterative support detection (block-ISD) for downlink channel
//! estimation in large-scale MIMO-OFDM.
//!
//! The crate covers the whole simulation chain:
//!
//! * [`channel_model`]: common-support tapped-delay-line channels.
//! * [`pilot_system`]: pilot plans, the sensing matrix and the block rearrangement.
//! * [`l1_solver`]: complex truncated basis pursuit denoising.
//! * [`isd_core`]: the block-ISD and plain ISD support-detection loops.
//! * [`baselines`]: single-shot BP and the genie-aided least-squares bound.
//! * [`harness`]: Monte-Carlo NMSE sweeps, config files and CSV output.
//!
//! Indexes are 0-based everywhere.

pub mod baselines;
pub mod channel_model;
pub mod error;
pub mod harness;
pub mod isd_core;
pub mod l1_solver;
pub mod pilot_system;

pub use error::{Error, Result};
