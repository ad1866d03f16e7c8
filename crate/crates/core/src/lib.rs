//! Desk-scale benchmark for daily bottom-water hypoxia classification.
//!
//! The pipeline: generate or load gridded environmental time series
//! ([`dataio`]), turn them into normalized sliding-window sequences
//! ([`preprocess`]), balance the classes ([`resample`]), train four
//! sequence classifiers ([`models`], [`training`]) on a hand-rolled
//! reverse-mode engine ([`autodiff`]), score them ([`metrics`]), and
//! compare them pairwise with McNemar's test ([`stats`]).

pub mod autodiff;
pub mod dataio;
pub mod preprocess;
pub mod resample;
pub mod container;
pub mod emit;
pub mod error;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod stats;
pub mod training;

pub use container::Container;
pub use error::{Error, Result};
