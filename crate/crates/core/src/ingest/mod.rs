//! Readers and writers for the interchange formats.

pub mod distribution;
pub mod embeddings;
pub mod manifest;
pub mod predictions;

pub use distribution::{validate_distribution, DistributionMismatch, ExpectedDistribution};
pub use embeddings::{read_embeddings, write_embeddings, EmbeddingFileHeader};
pub use manifest::{read_manifest, Dataset, LabelMap, Manifest};
pub use predictions::{load_predictions, read_predictions, PredictionReader};
