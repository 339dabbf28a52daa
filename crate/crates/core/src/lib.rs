//! Core domain types shared by the whole benchmark harness: embedding bags,
//! dataset manifests, the binary bag store, and per-run result records.
//!
//! Everything here is immutable after construction; reads are safe from any
//! number of threads.

mod bag;
mod error;
mod manifest;
mod results;
mod store;

pub use bag::{BagRepresentation, EmbeddingBag};
pub use error::CoreError;
pub use manifest::{load_manifest, save_manifest, DatasetManifest, SlideRecord};
pub use results::RunResult;
pub use store::{read_bag, write_bag, BAG_MAGIC, BAG_VERSION};

pub type Result<T> = std::result::Result<T, CoreError>;
