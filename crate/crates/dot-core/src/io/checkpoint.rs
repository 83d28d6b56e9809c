//! Model checkpoints: a JSON manifest (layer kinds, shapes, optimizer and
//! RNG state, epoch, normalization) plus one binary array per parameter and
//! moment tensor.

use super::dataset::NormalizationStats;
use super::dotb::{read_array, write_array_f32};
use crate::nn::{Adam, AdamConfig, LayerSpec, Sequential};
use crate::{DotError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng, seed: u64) -> RngState {
        RngState {
            seed,
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub timestep: u64,
    pub m_files: Vec<String>,
    pub v_files: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub name: String,
    pub epoch: usize,
    pub layer_specs: Vec<LayerSpec>,
    pub param_files: Vec<String>,
    pub adam: Option<AdamState>,
    pub rng: RngState,
    pub normalization: NormalizationStats,
    /// Free-form metadata (architecture id, loss variant, noise level, ...).
    pub extra: BTreeMap<String, String>,
}

/// A loaded checkpoint: rebuilt model plus training state.
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub model: Sequential<f32>,
    pub adam: Option<Adam<f32>>,
    pub rng: ChaCha8Rng,
}

/// Saves model parameters (f32), optimizer moments, RNG position and
/// metadata into `dir`.
#[allow(clippy::too_many_arguments)]
pub fn save_checkpoint(
    dir: &Path,
    name: &str,
    epoch: usize,
    model: &mut Sequential<f32>,
    adam: Option<&Adam<f32>>,
    rng: &RngState,
    normalization: NormalizationStats,
    extra: BTreeMap<String, String>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| DotError::io(dir.display().to_string(), e))?;
    let mut param_files = Vec::new();
    for (i, p) in model.params().into_iter().enumerate() {
        let file = format!("param_{i:04}.dotb");
        write_array_f32(&dir.join(&file), &p.value.shape, &p.value.data)?;
        param_files.push(file);
    }
    let adam_state = match adam {
        Some(opt) => {
            let mut m_files = Vec::new();
            let mut v_files = Vec::new();
            for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
                let mf = format!("adam_m_{i:04}.dotb");
                let vf = format!("adam_v_{i:04}.dotb");
                write_array_f32(&dir.join(&mf), &m.shape, &m.data)?;
                write_array_f32(&dir.join(&vf), &v.shape, &v.data)?;
                m_files.push(mf);
                v_files.push(vf);
            }
            Some(AdamState {
                cfg: opt.cfg,
                timestep: opt.timestep,
                m_files,
                v_files,
            })
        }
        None => None,
    };
    let manifest = CheckpointManifest {
        name: name.to_string(),
        epoch,
        layer_specs: model.specs(),
        param_files,
        adam: adam_state,
        rng: rng.clone(),
        normalization,
        extra,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| DotError::Config(format!("checkpoint manifest: {e}")))?;
    std::fs::write(dir.join("checkpoint.json"), json)
        .map_err(|e| DotError::io(dir.display().to_string(), e))?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join("checkpoint.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| DotError::io(path.display().to_string(), e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| DotError::format(path.display().to_string(), e.to_string()))?;
    // rebuild with a throwaway rng, then overwrite every parameter
    let mut model: Sequential<f32> =
        Sequential::from_specs(&manifest.layer_specs, &mut ChaCha8Rng::seed_from_u64(0))?;
    {
        let mut params = model.params();
        if params.len() != manifest.param_files.len() {
            return Err(DotError::format(
                path.display().to_string(),
                "parameter count does not match architecture",
            ));
        }
        for (p, file) in params.iter_mut().zip(&manifest.param_files) {
            let arr = read_array(&dir.join(file))?;
            if arr.dims != p.value.shape {
                return Err(DotError::format(
                    file.clone(),
                    format!("shape {:?} does not match {:?}", arr.dims, p.value.shape),
                ));
            }
            p.value.data = arr.to_f32();
        }
    }
    let adam = match &manifest.adam {
        Some(state) => {
            let shapes: Vec<Vec<usize>> = {
                let mut params = model.params();
                params.iter_mut().map(|p| p.value.shape.clone()).collect()
            };
            let mut opt = Adam::new(state.cfg, &shapes);
            opt.timestep = state.timestep;
            for (slot, file) in opt.m.iter_mut().zip(&state.m_files) {
                slot.data = read_array(&dir.join(file))?.to_f32();
            }
            for (slot, file) in opt.v.iter_mut().zip(&state.v_files) {
                slot.data = read_array(&dir.join(file))?.to_f32();
            }
            Some(opt)
        }
        None => None,
    };
    let rng = manifest.rng.restore();
    Ok(Checkpoint {
        manifest,
        model,
        adam,
        rng,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn rng_state_roundtrip_preserves_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..37 {
            rng.next_u64();
        }
        let state = RngState::capture(&rng, 99);
        let mut restored = state.restore();
        for _ in 0..10 {
            assert_eq!(rng.next_u64(), restored.next_u64());
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let specs = vec![
            LayerSpec::Fc { in_dim: 6, out_dim: 4 },
            LayerSpec::Tanh,
            LayerSpec::Fc { in_dim: 4, out_dim: 2 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model: Sequential<f32> = Sequential::from_specs(&specs, &mut rng).unwrap();
        let shapes: Vec<Vec<usize>> = model.params().iter().map(|p| p.value.shape.clone()).collect();
        let mut adam = Adam::new(AdamConfig::default(), &shapes);
        adam.timestep = 12;
        adam.m[0].data[0] = 0.5;
        let norm = NormalizationStats {
            image_divisor: 0.05,
            sino_log_min: -3.0,
            sino_log_max: 1.0,
        };
        let state = RngState::capture(&rng, 5);
        save_checkpoint(
            dir.path(),
            "test-net",
            17,
            &mut model,
            Some(&adam),
            &state,
            norm,
            BTreeMap::new(),
        )
        .unwrap();

        let mut loaded = load_checkpoint(dir.path()).unwrap();
        assert_eq!(loaded.manifest.epoch, 17);
        assert_eq!(loaded.manifest.layer_specs, specs);
        let mut orig = model.params();
        let mut back = loaded.model.params();
        for (a, b) in orig.iter_mut().zip(back.iter_mut()) {
            assert_eq!(a.value.data, b.value.data);
        }
        let opt = loaded.adam.unwrap();
        assert_eq!(opt.timestep, 12);
        assert_eq!(opt.m[0].data[0], 0.5);
    }
}
