//! Review sentiment toolkit.
//!
//! The crate covers the whole path from raw app-review exports to a
//! comparative evaluation of two neural text classifiers:
//!
//! - [`corpus`]: ingestion, deduplication and text normalization
//! - [`lexicon`]: polarity scoring and threshold labeling
//! - [`dataprep`]: random oversampling and stratified train/val/test splits
//! - [`textenc`]: vocabulary, integer encoding and padding
//! - [`nn`]: a small float64 tensor engine with hand-written backward passes
//! - [`models`]: the CNN and Bi-LSTM classifiers, training and prediction
//! - [`eval`]: confusion matrices and per-class reports
//! - [`eda`]: descriptive statistics per app
//! - [`pipeline`]: stage orchestration with a reproducibility manifest
//! - [`synthetic`]: seeded keyword corpora for benchmarks and tests

pub mod corpus;
pub mod dataprep;
pub mod eda;
pub mod error;
pub mod eval;
pub mod lexicon;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod synthetic;
pub mod textenc;

pub use error::{Error, Result};
pub use lexicon::SentimentLabel;
