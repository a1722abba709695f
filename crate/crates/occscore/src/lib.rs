//! Simulation studies, dataset input and the command-line front end for the
//! two-sample occupancy score tests of [`occscore_core`].

pub mod cli;
pub mod dataset;
pub mod harness;
pub mod output;
pub mod report;
