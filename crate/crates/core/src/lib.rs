//! LED-to-camera optical link simulator with ranging and grid navigation.

pub mod channel;
pub mod decoder;
pub mod error;
pub mod frameio;
pub mod model;
pub mod navigator;
pub mod ranging;
pub mod report;
pub mod scenario;
pub mod shutter;
pub mod txcodec;

pub use error::{Error, Result};
