//! Adversarial adaptation of fixed-dimensional speaker embeddings across
//! domains, with an LDA/PLDA verification back-end and evaluation tools.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`] dense matrices, Cholesky/Jacobi, seeded RNG
//! * [`nn`] small MLPs with hand-written backprop, losses, Adam
//! * [`adapt`] source pretraining, ADDA and domain-adversarial training
//! * [`backend`] normalization, LDA, two-covariance PLDA
//! * [`evalkit`] trial scoring, DET/EER/minDCF, k-means and NMI
//! * [`dataio`] text formats and the synthetic domain-shift generator
//! * [`pipeline`] end-to-end experiment used by the `reproduce` command

pub mod adapt;
pub mod backend;
pub mod cli;
pub mod dataio;
mod error;
pub mod evalkit;
pub mod linalg;
pub mod modelfile;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};
