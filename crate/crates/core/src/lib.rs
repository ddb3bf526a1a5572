//! Fairness audit toolkit for image embedding models.
//!
//! Indicators computed from exported model outputs:
//!
//! - [`association`]: harmful label association rates per demographic group.
//! - [`geo`]: label hit rates across Dollar Street regions and income buckets.
//! - [`retrieval`]: same-attribute precision of exact cosine nearest neighbors.

pub mod association;
pub mod bootstrap;
pub mod cli;
pub mod error;
pub mod fixture;
pub mod geo;
pub mod geometry;
pub mod ingest;
pub mod knn;
pub mod model;
pub mod report;
pub mod retrieval;
pub mod taxonomy;

pub use error::{Error, Result, Violation};
pub use model::Validate;
