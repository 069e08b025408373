// SPDX-License-Identifier: Apache-2.0

//! Probe/query disagreement analysis over language-model representation dumps.
//!
//! The pipeline reads a [`dump`] of hidden states and query log-probabilities,
//! fits a linear [`probe`], pairs normalized probe and query answer
//! distributions ([`eval`]), sorts every pair into the nine-cell
//! [`taxonomy`], and mixes the two sources into an [`ensemble`]. [`synth`]
//! generates dumps with known ground truth and [`report`] drives full runs.

pub mod dump;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod probe;
pub mod report;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, Result};
