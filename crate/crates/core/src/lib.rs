//! Graph foundation-model toolkit.

pub mod error;
pub mod eval;
pub mod generator;
pub mod graph;
pub mod linalg;
pub mod pretrainer;
pub mod provider;
pub mod tokenizer;
pub mod transformer;

pub use error::{Error, Result};
