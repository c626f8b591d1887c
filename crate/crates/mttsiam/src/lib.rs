//! File formats, the ablation runner and the command-line tool built on
//! `mttsiam-core`.

pub mod ablation;
pub mod annotations;
pub mod cli;
pub mod config;
pub mod model_io;
pub mod report;
pub mod results;
