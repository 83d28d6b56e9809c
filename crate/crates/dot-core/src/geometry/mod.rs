//! Computational domains, triangulations, probe layouts and voxel grids.

mod mesh;
mod probe;
mod voxel;

pub use mesh::{build_mesh, BoundaryEdge, BoundaryTag, Element, Mesh, PointLocator};
pub use probe::{build_probe_layout, ProbeLayout, Source};
pub use voxel::{build_voxel_grid, rasterize_fn, rasterize_nodal, VoxelGrid};

use crate::{DotError, Result};
use serde::{Deserialize, Serialize};

/// Planar domain on which the diffusion model is posed.
///
/// The bottom boundary (`y = 0`) carries the source plate; for the semi-disk
/// that is the diameter and the curved part is the measuring boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DomainShape {
    /// Axis-aligned rectangle `[0, width] x [0, height]` (cm).
    Rectangle { width: f64, height: f64 },
    /// Upper half-disk `x^2 + y^2 <= r^2`, `y >= 0` (cm).
    SemiDisk { radius: f64 },
}

impl DomainShape {
    /// 10 x 5 cm rectangle.
    pub fn default_rectangle() -> Self {
        DomainShape::Rectangle {
            width: 10.0,
            height: 5.0,
        }
    }

    /// Semi-disk of radius 5 cm.
    pub fn default_semi_disk() -> Self {
        DomainShape::SemiDisk { radius: 5.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DomainShape::Rectangle { width, height } => width > 0.0 && height > 0.0,
            DomainShape::SemiDisk { radius } => radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(DotError::Geometry(format!(
                "domain dimensions must be strictly positive: {self:?}"
            )))
        }
    }

    /// Bounding box as `([x0, y0], [x1, y1])`.
    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            DomainShape::Rectangle { width, height } => ([0.0, 0.0], [width, height]),
            DomainShape::SemiDisk { radius } => ([-radius, 0.0], [radius, radius]),
        }
    }

    /// Smallest side length, used to reject oversized mesh parameters.
    pub fn min_extent(&self) -> f64 {
        match *self {
            DomainShape::Rectangle { width, height } => width.min(height),
            DomainShape::SemiDisk { radius } => radius,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            DomainShape::Rectangle { width, height } => width * height,
            DomainShape::SemiDisk { radius } => std::f64::consts::PI * radius * radius / 2.0,
        }
    }

    /// Containment test with absolute tolerance `tol`.
    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        match *self {
            DomainShape::Rectangle { width, height } => {
                p[0] >= -tol && p[0] <= width + tol && p[1] >= -tol && p[1] <= height + tol
            }
            DomainShape::SemiDisk { radius } => {
                p[1] >= -tol && p[0] * p[0] + p[1] * p[1] <= (radius + tol) * (radius + tol)
            }
        }
    }

    /// Span of the bottom (source) boundary: `[x_min, x_max]` at `y = 0`.
    pub fn bottom_span(&self) -> [f64; 2] {
        match *self {
            DomainShape::Rectangle { width, .. } => [0.0, width],
            DomainShape::SemiDisk { radius } => [-radius, radius],
        }
    }
}
