//! Run configuration: a TOML file mirroring every pipeline default. Unknown
//! keys are rejected so typos fail fast.

use crate::forward::{DiffusionCoupling, OpticalConfig};
use crate::geometry::DomainShape;
use crate::phantom::{GenerationConfig, PhantomRules};
use crate::rytov::{JacobianConfig, JacobianKernel};
use crate::training::{LossVariant, TrainConfig};
use crate::variational::{BregmanConfig, ElasticNetConfig};
use crate::{DotError, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    /// "rectangle" or "semi-disk".
    pub shape: String,
    pub width: f64,
    pub height: f64,
    pub radius: f64,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection {
            shape: "rectangle".into(),
            width: 10.0,
            height: 5.0,
            radius: 5.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub h: f64,
    pub order: u8,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { h: 0.25, order: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub n_sources: usize,
    pub n_detectors: usize,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            n_sources: 19,
            n_detectors: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsSection {
    pub mu_a_background: f64,
    pub mu_s: f64,
    pub g: f64,
    pub zeta: f64,
    pub source_sigma: f64,
    /// "background" or "local".
    pub diffusion_coupling: String,
}

impl Default for OpticsSection {
    fn default() -> Self {
        OpticsSection {
            mu_a_background: 0.01,
            mu_s: 1.0,
            g: 0.8,
            zeta: 1.0,
            source_sigma: 0.05,
            diffusion_coupling: "background".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSection {
    pub radius_min: f64,
    pub radius_max: f64,
    pub multipliers: Vec<u8>,
    pub regions_min: usize,
    pub regions_max: usize,
    pub elliptical: bool,
}

impl Default for PhantomSection {
    fn default() -> Self {
        PhantomSection {
            radius_min: 0.5,
            radius_max: 1.0,
            multipliers: vec![3, 4, 5],
            regions_min: 1,
            regions_max: 2,
            elliptical: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Noise levels for which pre-drawn noisy test copies are stored.
    pub stored_levels: Vec<f64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            stored_levels: vec![0.01, 0.03, 0.05],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs_data_ae: usize,
    pub epochs_signal_ae: usize,
    pub epochs_coupled: usize,
    /// "mse", "mse-l1" or "mse-ae".
    pub loss: String,
    pub l1_weight: f64,
    /// Use the literal signed sum instead of |.| in the l1 term.
    pub l1_signed: bool,
    pub noise: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch_size: 64,
            lr: 5e-5,
            epochs_data_ae: 500,
            epochs_signal_ae: 10_000,
            epochs_coupled: 10_000,
            loss: "mse".into(),
            l1_weight: 1e-3,
            l1_signed: false,
            noise: 0.0,
            seed: 0,
            shuffle: true,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticNetSection {
    pub theta: f64,
    pub alpha_grid: Vec<f64>,
    pub grid_points: usize,
    pub grid_span: f64,
    pub cv_folds: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub standardize: bool,
    pub nonnegative: bool,
    pub cv_seed: u64,
}

impl Default for ElasticNetSection {
    fn default() -> Self {
        let d = ElasticNetConfig::default();
        ElasticNetSection {
            theta: d.theta,
            alpha_grid: d.alpha_grid,
            grid_points: d.grid_points,
            grid_span: d.grid_span,
            cv_folds: d.cv_folds,
            max_iter: d.max_iter,
            tol: d.tol,
            standardize: d.standardize,
            nonnegative: d.nonnegative,
            cv_seed: d.cv_seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BregmanSection {
    pub alpha: f64,
    pub outer_iters: usize,
    pub inner_max_iter: usize,
    pub inner_tol: f64,
    pub discrepancy_tau: f64,
    /// Noise norm for the discrepancy stop; 0 disables it.
    pub noise_norm: f64,
}

impl Default for BregmanSection {
    fn default() -> Self {
        let d = BregmanConfig::default();
        BregmanSection {
            alpha: d.alpha,
            outer_iters: d.outer_iters,
            inner_max_iter: d.inner_max_iter,
            inner_tol: d.inner_tol,
            discrepancy_tau: d.discrepancy_tau,
            noise_norm: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianSection {
    /// "galerkin" or "midpoint".
    pub kernel: String,
    pub include_diffusion_sensitivity: bool,
    /// Voxel grid override for reconstruction (0 = shape default).
    pub grid_nx: usize,
    pub grid_ny: usize,
}

impl Default for JacobianSection {
    fn default() -> Self {
        JacobianSection {
            kernel: "galerkin".into(),
            include_diffusion_sensitivity: true,
            grid_nx: 0,
            grid_ny: 0,
        }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub mesh: MeshSection,
    pub probes: ProbeSection,
    pub optics: OpticsSection,
    pub phantom: PhantomSection,
    pub noise: NoiseSection,
    pub train: TrainSection,
    pub elastic_net: ElasticNetSection,
    pub bregman: BregmanSection,
    pub jacobian: JacobianSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DotError::io(path.display().to_string(), e))?;
        toml::from_str(&text).map_err(|e| DotError::Config(format!("{}: {e}", path.display())))
    }

    pub fn shape(&self) -> Result<DomainShape> {
        match self.domain.shape.as_str() {
            "rectangle" => Ok(DomainShape::Rectangle {
                width: self.domain.width,
                height: self.domain.height,
            }),
            "semi-disk" => Ok(DomainShape::SemiDisk {
                radius: self.domain.radius,
            }),
            other => Err(DotError::Config(format!("unknown domain shape '{other}'"))),
        }
    }

    pub fn optics(&self) -> Result<OpticalConfig> {
        let coupling = match self.optics.diffusion_coupling.as_str() {
            "background" => DiffusionCoupling::Background,
            "local" => DiffusionCoupling::Local,
            other => {
                return Err(DotError::Config(format!("unknown diffusion_coupling '{other}'")))
            }
        };
        Ok(OpticalConfig {
            mu_a_background: self.optics.mu_a_background,
            mu_s: self.optics.mu_s,
            g: self.optics.g,
            zeta: self.optics.zeta,
            source_sigma: self.optics.source_sigma,
            diffusion_coupling: coupling,
        })
    }

    pub fn rules(&self) -> PhantomRules {
        PhantomRules {
            radius_range: [self.phantom.radius_min, self.phantom.radius_max],
            multipliers: self.phantom.multipliers.clone(),
            region_count: [self.phantom.regions_min, self.phantom.regions_max],
            elliptical: self.phantom.elliptical,
        }
    }

    pub fn generation(&self) -> Result<GenerationConfig> {
        Ok(GenerationConfig {
            shape: self.shape()?,
            mesh_h: self.mesh.h,
            mesh_order: self.mesh.order,
            n_sources: self.probes.n_sources,
            n_detectors: self.probes.n_detectors,
            optics: self.optics()?,
            rules: self.rules(),
            stored_noise_levels: self.noise.stored_levels.clone(),
        })
    }

    pub fn grid(&self) -> Result<crate::geometry::VoxelGrid> {
        let shape = self.shape()?;
        if self.jacobian.grid_nx > 0 && self.jacobian.grid_ny > 0 {
            Ok(crate::geometry::VoxelGrid::with_dims(
                shape,
                self.jacobian.grid_nx,
                self.jacobian.grid_ny,
            ))
        } else {
            Ok(crate::geometry::build_voxel_grid(shape))
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let loss = match self.train.loss.as_str() {
            "mse" => LossVariant::Mse,
            "mse-l1" => LossVariant::MseL1,
            "mse-ae" => LossVariant::MseAe,
            other => return Err(DotError::Config(format!("unknown loss '{other}'"))),
        };
        Ok(TrainConfig {
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            epochs_data_ae: self.train.epochs_data_ae,
            epochs_signal_ae: self.train.epochs_signal_ae,
            epochs_coupled: self.train.epochs_coupled,
            loss,
            l1_weight: self.train.l1_weight,
            l1_signed: self.train.l1_signed,
            noise_level: self.train.noise,
            seed: self.train.seed,
            shuffle: self.train.shuffle,
            checkpoint_every: self.train.checkpoint_every,
        })
    }

    pub fn elastic_net_config(&self) -> ElasticNetConfig {
        ElasticNetConfig {
            theta: self.elastic_net.theta,
            alpha_grid: self.elastic_net.alpha_grid.clone(),
            grid_points: self.elastic_net.grid_points,
            grid_span: self.elastic_net.grid_span,
            cv_folds: self.elastic_net.cv_folds,
            max_iter: self.elastic_net.max_iter,
            tol: self.elastic_net.tol,
            standardize: self.elastic_net.standardize,
            nonnegative: self.elastic_net.nonnegative,
            cv_seed: self.elastic_net.cv_seed,
        }
    }

    pub fn bregman_config(&self) -> BregmanConfig {
        BregmanConfig {
            alpha: self.bregman.alpha,
            outer_iters: self.bregman.outer_iters,
            inner_max_iter: self.bregman.inner_max_iter,
            inner_tol: self.bregman.inner_tol,
            discrepancy_tau: self.bregman.discrepancy_tau,
            noise_norm: if self.bregman.noise_norm > 0.0 {
                Some(self.bregman.noise_norm)
            } else {
                None
            },
        }
    }

    pub fn jacobian_config(&self) -> Result<JacobianConfig> {
        let kernel = match self.jacobian.kernel.as_str() {
            "galerkin" => JacobianKernel::GalerkinExact,
            "midpoint" => JacobianKernel::MidpointBorn,
            other => return Err(DotError::Config(format!("unknown jacobian kernel '{other}'"))),
        };
        Ok(JacobianConfig {
            kernel,
            include_diffusion_sensitivity: self.jacobian.include_diffusion_sensitivity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_convert() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.shape().unwrap(), DomainShape::default_rectangle());
        assert_eq!(cfg.probes.n_sources, 19);
        assert_eq!(cfg.probes.n_detectors, 200);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.train.lr, 5e-5);
        assert_eq!(cfg.train.epochs_data_ae, 500);
        assert_eq!(cfg.train.epochs_signal_ae, 10_000);
        let optics = cfg.optics().unwrap();
        assert_eq!(optics.mu_a_background, 0.01);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let text = "[optics]\nmu_s = 0.5\n[train]\nnoise = 0.03\n";
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.optics.mu_s, 0.5);
        assert_eq!(cfg.optics.g, 0.8);
        assert_eq!(cfg.train.noise, 0.03);
    }

    #[test]
    fn unknown_keys_are_rejected_with_name() {
        let text = "[train]\nbatch_sise = 32\n";
        let err = toml::from_str::<RunConfig>(text).unwrap_err();
        assert!(err.to_string().contains("batch_sise"), "{err}");
        let err = toml::from_str::<RunConfig>("[nonsense]\nx = 1\n").unwrap_err();
        assert!(err.to_string().contains("nonsense"), "{err}");
    }
}
