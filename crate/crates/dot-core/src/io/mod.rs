//! Persistence: the binary array container, dataset directories with JSON
//! manifests, TOML run configuration, model checkpoints and PGM image
//! emission. Every writer is deterministic so reruns produce byte-identical
//! files.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod dotb;
pub mod pgm;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest};
pub use config::RunConfig;
pub use dataset::{load_dataset, write_dataset, DatasetManifest, LoadedDataset, NormalizationStats};
pub use dotb::{read_array, write_array_f32, write_array_f64, DotbArray, DotbData};
pub use pgm::{write_pgm_with_csv, PgmScaling};
