//! Command-line front end of the toolkit: INI study files in, result tables out.

pub mod actions;
pub mod config;
