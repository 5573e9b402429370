//! Core numerics for turning pairwise preferences and pointwise ratings into
//! calibrated per-dimension quality scores.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. Everything
//! here is a pure function of its inputs; randomness is always keyed by an
//! explicit seed.
//!
//! - [`model`]: domain records, dataset validation, rating-induced pairs
//! - [`graph`]: comparison graphs, diameter/ASPL, budgeted pair sampling
//! - [`elo`]: iterative and anchored Elo
//! - [`davidson`]: anchored Davidson Bradley–Terry MAP fit
//! - [`calibration`]: anchor-fitted global sigmoid and min–max bridge sigmoid
//! - [`fusion`]: per-group latents mapped through one pooled anchor sigmoid
//! - [`stats`]: correlation, agreement, KS and protocol diagnostics
//! - [`judge`]: the judge abstraction and a synthetic Thurstone judge
//! - [`bridge`]: reference-pool pseudo-labelling
//! - [`reward`]: fidelity reward and GRPO advantage/surrogate values
//! - [`sim`]: synthetic campaign generator used for verification
#![no_std]

extern crate alloc;

pub mod bridge;
pub mod calibration;
pub mod davidson;
pub mod elo;
mod error;
pub mod fusion;
pub mod graph;
pub mod judge;
pub mod model;
pub mod optim;
pub mod reward;
mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    Anchor, AnchorSet, Dimension, DimensionSet, GroupKey, ImageId, Outcome, PairJudgment,
    RatingRecord,
};
pub use rng::{keyed_rng, mix_key};

/// Logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}
