//! Analytical model and slot-level simulator of saturated CSMA/CA inside the sectored,
//! time-bounded contention periods (CBAPs) of the IEEE 802.11ad hybrid MAC.

pub mod config;
pub mod error;
pub mod harness;
pub mod markov;
pub mod metrics;
pub mod oracle;
pub mod params;
pub mod sector;
pub mod sim;
pub mod timing;

pub use error::{Error, Result};
