//! A self-contained workbench for 2D diffuse optical tomography on synthetic
//! phantoms.
//!
//! The pipeline covers the whole path from phantom to reconstruction:
//!
//! * [`geometry`] — computational domains (rectangle, semi-disk), their
//!   triangulations, source/detector layouts and the voxel grid used for
//!   reconstruction images;
//! * [`forward`] — steady-state diffusion-approximation solver with Robin
//!   boundary conditions producing boundary fluence sinograms;
//! * [`phantom`] — random absorption phantoms and dataset generation;
//! * [`rytov`] — background/adjoint solves and the sensitivity matrix mapping
//!   voxel absorption perturbations to log-amplitude data;
//! * [`variational`] — Elastic Net (coordinate descent + cross validation) and
//!   Bregman iteration reconstruction baselines;
//! * [`nn`] — a minimal reverse-mode autodiff engine (dense, convolutional and
//!   pooling layers, Adam);
//! * [`arch`] — the modular reconstruction networks (data-AE, bridge,
//!   signal-AE, denoiser) with hard-asserted parameter counts;
//! * [`training`] — pretraining, coupled training and denoiser training loops;
//! * [`metrics`] — TPR / ABE / MSE / SSIM / ACR evaluation suite;
//! * [`io`] — binary array files, dataset manifests, run configs, checkpoints
//!   and PGM emission.
//!
//! Everything is deterministic under a fixed seed: parallel sections only ever
//! write disjoint outputs or reduce in a fixed order, so results are
//! independent of scheduling. Set the `DOT_DETERMINISTIC=1` environment
//! variable (or call [`par::set_sequential`]) to force sequential execution as
//! well.

pub mod arch;
pub mod dense;
pub mod error;
pub mod fem;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod phantom;
pub mod rytov;
pub mod training;
pub mod variational;

pub use error::{DotError, Result};
