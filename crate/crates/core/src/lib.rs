//! Alignment of a network-generated knowledge graph with a human-provided one
//! through bipolar vector symbolic encodings, bipartite matching of triplet
//! vectors, and joint gradient training.

pub mod alignment;
pub mod assignment;
pub mod demo;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod kg;
pub mod mnist;
pub mod neural;
pub mod optim;
pub mod synth;
pub mod training;
pub mod vsa;

pub use error::{Error, Result};
