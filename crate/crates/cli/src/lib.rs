//! Command-line front end for the box-supervised level-set engine.

pub mod annotations;
pub mod batch;
pub mod bench;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod imageio;
pub mod rle;
pub mod selftest;
pub mod synthetic;

pub use error::{CliError, Result};
