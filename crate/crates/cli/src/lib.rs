//! Command-line front end for the lattice optimization library.

pub mod config;
pub mod problems;
pub mod run;
