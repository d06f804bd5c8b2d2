//! Fuzzy H∞ filter synthesis for Takagi-Sugeno systems with time-varying
//! delay and mismatched premise memberships.
//!
//! The pipeline is: [`model`] (plant, memberships, bounds) → [`lmi`]
//! (rule-indexed LMIs over matrix decision variables) → [`sdp`]
//! (interior-point solve minimizing `γ²`) → [`synthesis`] (filter
//! extraction and report) → [`sim`] / [`verify`] (independent checks).
//! [`report`] runs grids of designs and re-checks saved ones; [`cli`] is
//! the `tsfilt` front end.

pub mod cli;
pub mod error;
pub mod matrix_rows;
pub mod lmi;
pub mod model;
pub mod report;
pub mod sdp;
pub mod sim;
pub mod synthesis;
pub mod verify;

pub use error::{Error, Result};
