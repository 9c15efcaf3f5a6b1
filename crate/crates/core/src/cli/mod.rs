//! Command-line surface: file formats, the synthetic benchmark and the
//! command verbs.

pub mod commands;
pub mod formats;
pub mod synth;
