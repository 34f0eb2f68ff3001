//! Images: PNG I/O, preprocessing, per-domain averages, ingestion with the
//! file-size filter, and the procedural streetscape generator.

mod average;
mod image;
mod ingest;
mod synth;

use std::path::Path;

pub use average::{average_image, AverageImage};
pub use image::{resize_bilinear, round_to_u8, ImageBuffer};
pub use ingest::{ingest, IngestError, Manifest, ManifestEntry, INDEX_FILE};
pub use synth::{
    derived_seed, domain_params, synth_domain, synth_scene, synth_scene_with_regions, Ground,
    Region, SceneDistribution, SceneParams,
};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("png: {0}")]
    Png(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid scene parameters: {0}")]
    InvalidParams(String),
    #[error("image index: {0}")]
    Index(String),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
