//! Reconstruction voxel grids and rasterization of fields onto them.

use super::mesh::{Mesh, PointLocator};
use super::DomainShape;
use crate::fem::basis::shape_values;
use crate::{DotError, Result};

/// Pixel grid on which absorption images live.
///
/// Images are stored row-major with row 0 at the top of the domain (largest
/// `y`), matching the usual image orientation; `mask` flags voxels whose
/// center lies inside the domain. `values` vectors over the grid always have
/// full length `nx * ny`; the `V = active()` masked voxels are the
/// reconstruction unknowns.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    pub shape: DomainShape,
    /// Columns (x direction).
    pub nx: usize,
    /// Rows (y direction).
    pub ny: usize,
    pub voxel_size: f64,
    pub mask: Vec<bool>,
    origin: [f64; 2],
}

/// Default grids: 80 x 40 voxels of 0.125 cm on the 10 x 5 rectangle
/// (V = 3200), 40 x 20 voxels of 0.25 cm on the semi-disk.
pub fn build_voxel_grid(shape: DomainShape) -> VoxelGrid {
    match shape {
        DomainShape::Rectangle { width, height } => {
            let nx = (width / 0.125).round() as usize;
            let ny = (height / 0.125).round() as usize;
            VoxelGrid::with_dims(shape, nx, ny)
        }
        DomainShape::SemiDisk { radius } => {
            let nx = (2.0 * radius / 0.25).round() as usize;
            let ny = (radius / 0.25).round() as usize;
            VoxelGrid::with_dims(shape, nx, ny)
        }
    }
}

impl VoxelGrid {
    /// Grid with explicit resolution covering the domain bounding box.
    pub fn with_dims(shape: DomainShape, nx: usize, ny: usize) -> VoxelGrid {
        let (lo, hi) = shape.bbox();
        let voxel_size = (hi[0] - lo[0]) / nx as f64;
        let mut grid = VoxelGrid {
            shape,
            nx,
            ny,
            voxel_size,
            mask: vec![false; nx * ny],
            origin: lo,
        };
        for idx in 0..nx * ny {
            let c = grid.center(idx);
            grid.mask[idx] = shape.contains(c, 0.0);
        }
        grid
    }

    /// Number of active voxels `V`.
    pub fn active(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_area(&self) -> f64 {
        self.voxel_size * self.voxel_size
    }

    /// Center of voxel `idx` (row-major, row 0 on top).
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let r = idx / self.nx;
        let c = idx % self.nx;
        let (_, hi) = self.shape.bbox();
        [
            self.origin[0] + (c as f64 + 0.5) * self.voxel_size,
            hi[1] - (r as f64 + 0.5) * self.voxel_size,
        ]
    }

    /// Flat grid index of the voxel containing `p` (half-open bins), if any.
    pub fn voxel_of(&self, p: [f64; 2]) -> Option<usize> {
        let (_, hi) = self.shape.bbox();
        let c = ((p[0] - self.origin[0]) / self.voxel_size).floor();
        let r = ((hi[1] - p[1]) / self.voxel_size).floor();
        if c < 0.0 || r < 0.0 {
            return None;
        }
        let (r, c) = (r as usize, c as usize);
        if r < self.ny && c < self.nx {
            Some(r * self.nx + c)
        } else {
            None
        }
    }

    /// Indices of active voxels in row-major order.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mask[i]).collect()
    }

    /// Extracts the active entries of a full-grid vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        assert_eq!(full.len(), self.len());
        (0..self.len()).filter(|&i| self.mask[i]).map(|i| full[i]).collect()
    }

    /// Expands an active-voxel vector to the full grid, filling masked-out
    /// voxels with `background`.
    pub fn expand(&self, active: &[f64], background: f64) -> Vec<f64> {
        assert_eq!(active.len(), self.active());
        let mut out = vec![background; self.len()];
        let mut k = 0;
        for i in 0..self.len() {
            if self.mask[i] {
                out[i] = active[k];
                k += 1;
            }
        }
        out
    }
}

/// Samples an analytic field at voxel centers; masked voxels get `background`.
pub fn rasterize_fn(grid: &VoxelGrid, background: f64, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    (0..grid.len())
        .map(|i| if grid.mask[i] { f(grid.center(i)) } else { background })
        .collect()
}

/// Interpolates a nodal FEM field at voxel centers.
pub fn rasterize_nodal(
    mesh: &Mesh,
    nodal: &[f64],
    grid: &VoxelGrid,
    background: f64,
) -> Result<Vec<f64>> {
    if nodal.len() != mesh.n_nodes() {
        return Err(DotError::ShapeMismatch(format!(
            "nodal field has {} entries, mesh has {} nodes",
            nodal.len(),
            mesh.n_nodes()
        )));
    }
    if mesh.shape != grid.shape {
        return Err(DotError::ShapeMismatch("mesh and grid domains differ".into()));
    }
    let locator = PointLocator::new(mesh);
    let mut out = vec![background; grid.len()];
    for i in 0..grid.len() {
        if !grid.mask[i] {
            continue;
        }
        let c = grid.center(i);
        let (e, bary) = locator
            .locate(c)
            .ok_or_else(|| DotError::Geometry(format!("voxel center {c:?} not found in mesh")))?;
        let phi = shape_values(mesh.element_order, bary);
        let nodes = mesh.elements[e].nodes();
        out[i] = nodes.iter().zip(phi.iter()).map(|(&n, &p)| nodal[n] * p).sum();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_mesh;
    use approx::assert_relative_eq;

    #[test]
    fn default_rectangle_grid_is_full() {
        let g = build_voxel_grid(DomainShape::default_rectangle());
        assert_eq!((g.nx, g.ny), (80, 40));
        assert_eq!(g.active(), 3200);
        assert!(g.mask.iter().all(|&m| m));
    }

    #[test]
    fn semi_disk_grid_masked() {
        let g = build_voxel_grid(DomainShape::default_semi_disk());
        assert_eq!((g.nx, g.ny), (40, 20));
        let v = g.active();
        assert!(v < 800, "V = {v}");
        // close to the disk area / voxel area
        let expected = DomainShape::default_semi_disk().area() / g.voxel_area();
        assert!((v as f64 - expected).abs() < 40.0, "V = {v}, expected about {expected}");
    }

    #[test]
    fn rasterize_constant_and_linear() {
        let shape = DomainShape::default_rectangle();
        let mesh = build_mesh(shape, 0.5, 1).unwrap();
        let grid = build_voxel_grid(shape);
        let ones = vec![3.25; mesh.n_nodes()];
        let img = rasterize_nodal(&mesh, &ones, &grid, 0.0).unwrap();
        for &v in &img {
            assert_relative_eq!(v, 3.25, max_relative = 1e-12);
        }
        // linearity: raster(a + 2b) = raster(a) + 2 raster(b)
        let a: Vec<f64> = (0..mesh.n_nodes()).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..mesh.n_nodes()).map(|i| (i as f64 * 0.11).cos()).collect();
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + 2.0 * y).collect();
        let ra = rasterize_nodal(&mesh, &a, &grid, 0.0).unwrap();
        let rb = rasterize_nodal(&mesh, &b, &grid, 0.0).unwrap();
        let rc = rasterize_nodal(&mesh, &combo, &grid, 0.0).unwrap();
        for i in 0..rc.len() {
            assert_relative_eq!(rc[i], ra[i] + 2.0 * rb[i], max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn voxel_of_and_center_are_inverse() {
        let g = build_voxel_grid(DomainShape::default_semi_disk());
        for idx in [0, 5, 317, g.len() - 1] {
            assert_eq!(g.voxel_of(g.center(idx)), Some(idx));
        }
        assert_eq!(g.voxel_of([100.0, 0.0]), None);
    }

    #[test]
    fn restrict_expand_roundtrip() {
        let g = build_voxel_grid(DomainShape::default_semi_disk());
        let full: Vec<f64> = (0..g.len()).map(|i| i as f64).collect();
        let act = g.restrict(&full);
        assert_eq!(act.len(), g.active());
        let back = g.expand(&act, -1.0);
        for i in 0..g.len() {
            if g.mask[i] {
                assert_eq!(back[i], full[i]);
            } else {
                assert_eq!(back[i], -1.0);
            }
        }
    }
}
