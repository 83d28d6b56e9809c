//! Dataset directories: a JSON manifest plus one binary array file per image
//! and sinogram.

use super::dotb::{read_array, write_array_f64};
use crate::geometry::VoxelGrid;
use crate::phantom::{image_divisor, DatasetSample, GenerationConfig, Phantom};
use crate::{DotError, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Normalization statistics shared between generation, training and
/// inference. Sinograms are normalized by elementwise log followed by a
/// global min-max using these bounds; images divide by `image_divisor`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub image_divisor: f64,
    pub sino_log_min: f64,
    pub sino_log_max: f64,
}

impl NormalizationStats {
    pub fn normalize_sinogram(&self, raw: &[f64]) -> Vec<f64> {
        let span = (self.sino_log_max - self.sino_log_min).max(1e-300);
        raw.iter()
            .map(|&y| (y.max(1e-300).ln() - self.sino_log_min) / span)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoisyFile {
    pub level: f64,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEntry {
    pub index: usize,
    pub seed: u64,
    pub phantom: Phantom,
    pub image_file: String,
    pub sinogram_file: String,
    pub noisy_files: Vec<NoisyFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sample_count: usize,
    /// `[ny, nx]` of the stored (normalized) images.
    pub image_shape: [usize; 2],
    /// `[n_s, n_d]` of the stored (raw) sinograms.
    pub sinogram_shape: [usize; 2],
    pub normalization: NormalizationStats,
    pub master_seed: u64,
    pub generation: GenerationConfig,
    pub samples: Vec<SampleEntry>,
}

impl DatasetManifest {
    pub fn image_len(&self) -> usize {
        self.image_shape[0] * self.image_shape[1]
    }

    pub fn sinogram_len(&self) -> usize {
        self.sinogram_shape[0] * self.sinogram_shape[1]
    }
}

/// Writes a generated dataset: `manifest.json` plus `.dotb` arrays. Images
/// are stored normalized, sinograms raw (clean and the pre-drawn noisy
/// copies). The sinogram log-range statistics come from this dataset's clean
/// sinograms.
pub fn write_dataset(
    dir: &Path,
    cfg: &GenerationConfig,
    grid: &VoxelGrid,
    samples: &[DatasetSample],
    master_seed: u64,
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).map_err(|e| DotError::io(dir.display().to_string(), e))?;
    let mut log_min = f64::INFINITY;
    let mut log_max = f64::NEG_INFINITY;
    for s in samples {
        for &y in &s.sinogram_clean {
            let l = y.max(1e-300).ln();
            log_min = log_min.min(l);
            log_max = log_max.max(l);
        }
    }
    let normalization = NormalizationStats {
        image_divisor: image_divisor(cfg.optics.mu_a_background),
        sino_log_min: log_min,
        sino_log_max: log_max,
    };
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let image_file = format!("sample_{:05}_image.dotb", s.index);
        let sinogram_file = format!("sample_{:05}_sino.dotb", s.index);
        write_array_f64(&dir.join(&image_file), &[grid.ny, grid.nx], &s.image)?;
        write_array_f64(
            &dir.join(&sinogram_file),
            &[cfg.n_sources, cfg.n_detectors],
            &s.sinogram_clean,
        )?;
        let mut noisy_files = Vec::new();
        for (level, values) in &s.sinogram_noisy {
            let file = format!("sample_{:05}_sino_n{:.3}.dotb", s.index, level);
            write_array_f64(&dir.join(&file), &[cfg.n_sources, cfg.n_detectors], values)?;
            noisy_files.push(NoisyFile {
                level: *level,
                file,
            });
        }
        entries.push(SampleEntry {
            index: s.index,
            seed: s.seed,
            phantom: s.phantom.clone(),
            image_file,
            sinogram_file,
            noisy_files,
        });
    }
    let manifest = DatasetManifest {
        sample_count: samples.len(),
        image_shape: [grid.ny, grid.nx],
        sinogram_shape: [cfg.n_sources, cfg.n_detectors],
        normalization,
        master_seed,
        generation: cfg.clone(),
        samples: entries,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| DotError::Config(format!("manifest serialization: {e}")))?;
    std::fs::write(dir.join("manifest.json"), json)
        .map_err(|e| DotError::io(dir.display().to_string(), e))?;
    Ok(manifest)
}

/// A dataset held in memory.
pub struct LoadedDataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    /// Normalized images, one row-major full-grid vector per sample.
    pub images: Vec<Vec<f64>>,
    /// Raw clean sinograms.
    pub sinograms: Vec<Vec<f64>>,
}

impl LoadedDataset {
    pub fn len(&self) -> usize {
        self.manifest.sample_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reads the stored noisy copy of a sample at the given level.
    pub fn stored_noisy(&self, index: usize, level: f64) -> Result<Vec<f64>> {
        let entry = &self.manifest.samples[index];
        if level == 0.0 {
            return Ok(self.sinograms[index].clone());
        }
        let file = entry
            .noisy_files
            .iter()
            .find(|n| (n.level - level).abs() < 1e-12)
            .ok_or_else(|| {
                DotError::Config(format!("no stored noisy copy at level {level} for sample {index}"))
            })?;
        Ok(read_array(&self.dir.join(&file.file))?.to_f64())
    }
}

pub fn load_dataset(dir: &Path) -> Result<LoadedDataset> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| DotError::io(manifest_path.display().to_string(), e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| DotError::format(manifest_path.display().to_string(), e.to_string()))?;
    let mut images = Vec::with_capacity(manifest.sample_count);
    let mut sinograms = Vec::with_capacity(manifest.sample_count);
    for entry in &manifest.samples {
        let img = read_array(&dir.join(&entry.image_file))?;
        if img.len() != manifest.image_len() {
            return Err(DotError::format(
                entry.image_file.clone(),
                format!("image length {} does not match manifest", img.len()),
            ));
        }
        let sino = read_array(&dir.join(&entry.sinogram_file))?;
        if sino.len() != manifest.sinogram_len() {
            return Err(DotError::format(
                entry.sinogram_file.clone(),
                format!("sinogram length {} does not match manifest", sino.len()),
            ));
        }
        images.push(img.to_f64());
        sinograms.push(sino.to_f64());
    }
    Ok(LoadedDataset {
        dir: dir.to_path_buf(),
        manifest,
        images,
        sinograms,
    })
}
