//! File formats, run configuration, CSV reports, the perturbation
//! benchmark and the command-line front end.

pub mod benchmark;
pub mod cli;
pub mod config;
pub mod pgm;
pub mod report;

pub use pgm::{load_image, save_image};
