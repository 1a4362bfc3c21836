//! Nonnegative dimensions of model similarity structure and how universally
//! they recur across models.
//!
//! The pipeline runs, per model: RBF similarity over a shared image set
//! ([`kernel`]), symmetric NMF with bandwidth and seed selection ([`snmf`]);
//! then across models: Hungarian-matched squared-cosine agreement with
//! permutation-null calibration ([`universality`]), content analyses of each
//! dimension ([`content`]), alignment with neural and behavioral reference
//! data ([`alignment`]) and the model-comparison statistics ([`stats`]).

pub mod alignment;
pub mod assignment;
pub mod content;
pub mod error;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod rng;
pub mod snmf;
pub mod stats;
pub mod synth;
pub mod universality;

pub use error::{Error, Result};
