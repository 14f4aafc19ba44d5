//! lexmap learns a single shared embedding space for N languages from
//! monolingual word embeddings alone. Per-language orthogonal linear maps
//! into a chosen target space are trained adversarially against per-language
//! discriminators, then refined on pseudo-dictionaries induced from mutual
//! CSLS nearest neighbors. The crate also ships the supervised Procrustes
//! baseline, an unsupervised model-selection criterion, word-translation and
//! cross-lingual word-similarity evaluation, and a synthetic-language
//! generator with known ground truth for end-to-end verification.

pub mod checkpoint;
pub mod csls;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod mapping;
pub mod mat;
pub mod mpsr;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod validation;

pub use error::{Error, Result};
