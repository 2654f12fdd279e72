//! Neural codes of ReLU networks as hash codes.
//!
//! A trained ReLU MLP maps each input to the on/off pattern of its hidden
//! units. This crate trains such networks, extracts those binary codes,
//! measures how often distinct inputs collide ([`probes::redundancy`]), how
//! well simple classifiers recover labels from the codes, and how large the
//! linear regions around inputs are ([`geometry`]). The [`harness`] module
//! runs these measurements over sweeps of width, training time, sample size,
//! regularization, label noise and layer subsets.

pub mod codes;
pub mod data;
pub mod geometry;
pub mod harness;
pub mod nn;
pub mod probes;

pub use codes::{encode, encode_batch, hamming, LayerMask, NeuralCode};
pub use data::Dataset;
pub use nn::{train, MlpModel, TrainConfig};
