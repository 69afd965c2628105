//! Twin-bottleneck hashing: an unsupervised auto-encoder that learns binary
//! codes whose batch-wise Hamming graph drives a graph-convolution mixing
//! layer, plus bit-packed Hamming retrieval and evaluation metrics.

pub mod codec;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod model;
pub mod retrieval;
pub mod training;

pub use error::{Error, Result};
