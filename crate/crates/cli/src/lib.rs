//! Library surface of the command-line front end; the binary in `main.rs`
//! is a thin dispatcher over these modules. Exposing them as a library lets
//! the acceptance suite drive the experiment protocols directly.

pub mod config;
pub mod model;
pub mod predict_cmd;
pub mod report;
pub mod reproduce;
pub mod sweep;
pub mod synth;
pub mod train;
pub mod util;
pub mod xval;
