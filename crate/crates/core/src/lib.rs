//! Language identification for short, noisy text.
//!
//! Two classifiers share one preprocessing pipeline ([`text`]):
//!
//! * [`ngram`]: per-language character n-gram models with Witten-Bell
//!   smoothing, a uniform-prior Bayes decision and a log-likelihood-ratio
//!   test for the undetermined class.
//! * [`model`]: a hierarchical neural model. A character CNN builds a vector
//!   for every word, a bidirectional LSTM contextualizes the words, and the
//!   per-word language distributions are averaged into a tweet prediction.
//!   The same network can tag code-switching word by word.
//!
//! [`nn`] holds the hand-written tensor operations, their backward passes,
//! the Adam optimizer and a finite-difference gradient checker.

pub mod analysis;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod ngram;
pub mod nn;
pub mod text;
pub mod train;

pub use error::{Error, Result};
