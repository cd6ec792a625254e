//! Text formats, CSV output and the command-line front end for
//! [`irqc_core`].

pub mod artifact;
pub mod bench;
pub mod cli;
pub mod config;
pub mod output;
pub mod scenario;
pub mod text;
