//! Two-sample occupancy model under imperfect detection.
//!
//! Occupancy `ψ` and per-visit detection `p` for two regions are estimated
//! from the sufficient statistics of repeated-visit surveys (number of sites
//! with at least one detection, total detections). The crate provides the
//! zero-inflated binomial model, its likelihood, score and information
//! matrices, maximum-likelihood fits with and without the constraint
//! `ψ₁ = ψ₂`, the likelihood-ratio, Wald and score tests (observed and
//! expected information), the modified rejection rule for negative observed
//! score statistics, and the large-sample machinery explaining why the
//! observed score statistic goes negative under the alternative.
//!
//! The crate is `no_std` and needs only `alloc`.
#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod asymptotics;
mod error;
pub mod estimation;
pub mod hypothesis;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod special;

pub use error::{Error, Result};
