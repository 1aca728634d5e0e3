//! Memory-efficient hybrid retrieval.
//!
//! The crate pairs a BM25 inverted index with low-dimensional dense retrievers
//! (boosted weak learners and a distilled two-head student), fuses their
//! rankings, perturbs query sets for robustness testing, and evaluates runs by
//! Recall@K together with index memory.
//!
//! Module map:
//!
//! - [`model`]: documents, queries, qrels, ranked lists and their file formats
//! - [`bm25`]: sparse retrieval
//! - [`encoder`]: deterministic feature-hashing base encoder and the `EMBV1` format
//! - [`train`]: projection heads, losses, analytic gradients, optimizers, negative mining
//! - [`boost`]: sequential ensembles of weak learners
//! - [`dense`]: exact inner-product index and memory accounting
//! - [`fusion`]: score normalization and hybrid ranking
//! - [`attack`]: seeded query perturbations
//! - [`eval`]: Recall@K, retention and average drop
//! - [`synth`]: synthetic fixtures used by tests and the CLI
//! - [`cli`]: command-line front end

mod binio;

pub mod attack;
pub mod bm25;
pub mod boost;
pub mod cli;
pub mod dense;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod model;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
