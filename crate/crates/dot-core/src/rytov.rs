//! Linearized sensitivity of the log-amplitude data with respect to voxel
//! absorption: background and adjoint solves, the Jacobian matrix and the
//! log-ratio right-hand side.
//!
//! With `u_s` the background fluence of source `s`, `g_d` the adjoint field
//! of detector `d` (same self-adjoint operator, point load at the detector)
//! and `y0 = u_s(r_d)`, a voxel perturbation `dmu` changes the reading at
//! first order by
//!
//! ```text
//! d log y(s,d) = -[ g_d u_s  -  3 D^2 (grad g_d . grad u_s) ] dmu dA / y0
//! ```
//!
//! where the second term accounts for the absorption dependence of the
//! diffusion coefficient and is optional. Two quadratures are provided: the
//! default integrates the kernel against the basis functions of the nodes
//! inside each voxel (the exact derivative of the discrete forward map along
//! the node-sampling pathway, which is what finite differences of the solver
//! see), while `MidpointBorn` keeps the classical midpoint rule
//! `-g_d(c_v) u_s(c_v) A_v / y0`.

use crate::dense::DenseMatrix;
use crate::fem::basis::{barycentric_gradients, shape_gradients, shape_values};
use crate::fem::quad::triangle_rule;
use crate::fem::{assemble_gaussian_load, assemble_point_load};
use crate::forward::{assemble_system, measure, FluenceField, OpticalConfig, Sinogram};
use crate::geometry::{Mesh, PointLocator, ProbeLayout, VoxelGrid};
use crate::par;
use crate::{DotError, Result};

/// Background fluence per source plus adjoint fields per detector.
pub struct BackgroundFields {
    pub source_fields: Vec<FluenceField>,
    /// One nodal field per detector; the operator is self-adjoint so these
    /// are plain solves with point loads.
    pub adjoint_fields: Vec<Vec<f64>>,
    pub background_sinogram: Sinogram,
}

/// Solves the homogeneous-background problem: `n_s` source solves and `n_d`
/// adjoint solves sharing one factorization.
pub fn background_solve(
    mesh: &Mesh,
    optics: &OpticalConfig,
    layout: &ProbeLayout,
) -> Result<BackgroundFields> {
    let mu = vec![optics.mu_a_background; mesh.n_nodes()];
    let system = assemble_system(mesh, &mu, optics)?;
    let chol = system.factor()?;
    let locator = PointLocator::new(mesh);

    let source_fields = par::map_indexed(layout.n_s(), |s| {
        let src = layout.sources[s];
        let mut rhs = assemble_gaussian_load(mesh, src.position, optics.source_sigma, src.amplitude);
        system.apply_dirichlet(&mut rhs);
        chol.solve_in_place(&mut rhs);
        FluenceField {
            source: s,
            nodal_values: rhs,
        }
    });

    let point_loads: Result<Vec<Vec<f64>>> = layout
        .detectors
        .iter()
        .map(|&d| assemble_point_load(mesh, &locator, d))
        .collect();
    let point_loads = point_loads?;
    let adjoint_fields = par::map_indexed(layout.n_d(), |d| {
        let mut rhs = point_loads[d].clone();
        system.apply_dirichlet(&mut rhs);
        chol.solve_in_place(&mut rhs);
        rhs
    });

    let background_sinogram = measure(mesh, &source_fields, layout)?;
    if !background_sinogram.strictly_positive() {
        return Err(DotError::Solver("background sinogram has non-positive entries".into()));
    }
    Ok(BackgroundFields {
        source_fields,
        adjoint_fields,
        background_sinogram,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum JacobianKernel {
    /// Kernel integrated against the nodal basis, aggregated per voxel.
    GalerkinExact,
    /// Midpoint rule: kernel at the voxel center times the voxel area.
    MidpointBorn,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct JacobianConfig {
    pub kernel: JacobianKernel,
    /// Include the diffusion-coefficient sensitivity term.
    pub include_diffusion_sensitivity: bool,
}

impl Default for JacobianConfig {
    fn default() -> Self {
        JacobianConfig {
            kernel: JacobianKernel::GalerkinExact,
            include_diffusion_sensitivity: true,
        }
    }
}

/// Sensitivity system: `J` (M x V over active voxels) and the background
/// sinogram it was linearized around.
pub struct JacobianSystem {
    pub j: DenseMatrix,
    pub background_sinogram: Sinogram,
    /// Full-grid indices of the active voxels (the columns of `J`).
    pub active_voxels: Vec<usize>,
}

impl JacobianSystem {
    pub fn validate(&self) -> Result<()> {
        if self.j.data.iter().any(|v| !v.is_finite()) {
            return Err(DotError::Solver("Jacobian contains non-finite entries".into()));
        }
        for i in 0..self.j.rows {
            if self.j.row(i).iter().all(|&v| v == 0.0) {
                return Err(DotError::Solver(format!("Jacobian row {i} is identically zero")));
            }
        }
        Ok(())
    }
}

/// Assembles the sensitivity matrix from precomputed background fields.
pub fn assemble_jacobian(
    mesh: &Mesh,
    fields: &BackgroundFields,
    grid: &VoxelGrid,
    optics: &OpticalConfig,
    cfg: &JacobianConfig,
) -> Result<JacobianSystem> {
    if mesh.shape != grid.shape {
        return Err(DotError::ShapeMismatch("mesh and voxel grid domains differ".into()));
    }
    let active_voxels = grid.active_indices();
    let j = match cfg.kernel {
        JacobianKernel::GalerkinExact => galerkin_jacobian(mesh, fields, grid, optics, cfg),
        JacobianKernel::MidpointBorn => midpoint_jacobian(mesh, fields, grid, optics, cfg)?,
    };
    let system = JacobianSystem {
        j,
        background_sinogram: fields.background_sinogram.clone(),
        active_voxels,
    };
    system.validate()?;
    Ok(system)
}

/// `dD/dmu_a = -3 D^2` enters the kernel only when the forward model couples
/// the diffusion coefficient to the local absorption.
fn diffusion_sensitivity(optics: &OpticalConfig, cfg: &JacobianConfig) -> f64 {
    if cfg.include_diffusion_sensitivity
        && optics.diffusion_coupling == crate::forward::DiffusionCoupling::Local
    {
        let d0 = optics.diffusion_background();
        3.0 * d0 * d0
    } else {
        0.0
    }
}

fn galerkin_jacobian(
    mesh: &Mesh,
    fields: &BackgroundFields,
    grid: &VoxelGrid,
    optics: &OpticalConfig,
    cfg: &JacobianConfig,
) -> DenseMatrix {
    let n_s = fields.source_fields.len();
    let n_d = fields.adjoint_fields.len();
    let m = n_s * n_d;
    // active-voxel index per node (usize::MAX = outside / masked)
    let mut voxel_rank = vec![usize::MAX; grid.len()];
    for (rank, idx) in grid.active_indices().into_iter().enumerate() {
        voxel_rank[idx] = rank;
    }
    let node_voxel: Vec<usize> = mesh
        .nodes
        .iter()
        .map(|&p| match grid.voxel_of(p) {
            Some(idx) if grid.mask[idx] => voxel_rank[idx],
            _ => usize::MAX,
        })
        .collect();

    let v_active = grid.active();
    let order = mesh.element_order;
    let npe = mesh.nodes_per_element();
    let d_sens = diffusion_sensitivity(optics, cfg);

    // accumulate J^T (voxel-major) so the inner axpy is contiguous
    let mut jt = DenseMatrix::zeros(v_active, m);
    let mut kernel = vec![0.0f64; m];
    let mut us = vec![0.0f64; n_s];
    let mut gus = vec![[0.0f64; 2]; n_s];
    let mut gd = vec![0.0f64; n_d];
    let mut ggd = vec![[0.0f64; 2]; n_d];

    for (e, elem) in mesh.elements.iter().enumerate() {
        let nodes = elem.nodes();
        if nodes.iter().all(|&n| node_voxel[n] == usize::MAX) {
            continue;
        }
        let verts = elem.vertices;
        let (pa, pb, pc) = (mesh.nodes[verts[0]], mesh.nodes[verts[1]], mesh.nodes[verts[2]]);
        let det = mesh.double_area(e);
        let area = 0.5 * det;
        let grad_l = barycentric_gradients(pa, pb, pc, det);
        for &(l, w) in triangle_rule() {
            let phi = shape_values(order, l);
            let grads = shape_gradients(order, l, grad_l);
            for (s, f) in fields.source_fields.iter().enumerate() {
                let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
                for i in 0..npe {
                    let u = f.nodal_values[nodes[i]];
                    v += u * phi[i];
                    gx += u * grads[i][0];
                    gy += u * grads[i][1];
                }
                us[s] = v;
                gus[s] = [gx, gy];
            }
            for (d, g) in fields.adjoint_fields.iter().enumerate() {
                let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
                for i in 0..npe {
                    let u = g[nodes[i]];
                    v += u * phi[i];
                    gx += u * grads[i][0];
                    gy += u * grads[i][1];
                }
                gd[d] = v;
                ggd[d] = [gx, gy];
            }
            for s in 0..n_s {
                let base = s * n_d;
                let (u, gu) = (us[s], gus[s]);
                for d in 0..n_d {
                    kernel[base + d] =
                        gd[d] * u - d_sens * (ggd[d][0] * gu[0] + ggd[d][1] * gu[1]);
                }
            }
            let wa = w * area;
            for i in 0..npe {
                let v = node_voxel[nodes[i]];
                if v == usize::MAX {
                    continue;
                }
                let coeff = wa * phi[i];
                let row = jt.row_mut(v);
                for (r, k) in row.iter_mut().zip(&kernel) {
                    *r += coeff * k;
                }
            }
        }
    }

    // transpose into measurement-major order with the -1/y0 row scaling
    let mut j = DenseMatrix::zeros(m, v_active);
    let y0 = &fields.background_sinogram.values;
    par::for_each_chunk(&mut j.data, v_active, |start, row| {
        let mi = start / v_active;
        let scale = -1.0 / y0[mi];
        for (v, out) in row.iter_mut().enumerate() {
            *out = scale * jt.data[v * m + mi];
        }
    });
    j
}

fn midpoint_jacobian(
    mesh: &Mesh,
    fields: &BackgroundFields,
    grid: &VoxelGrid,
    optics: &OpticalConfig,
    cfg: &JacobianConfig,
) -> Result<DenseMatrix> {
    let n_s = fields.source_fields.len();
    let n_d = fields.adjoint_fields.len();
    let active = grid.active_indices();
    let v_active = active.len();
    let locator = PointLocator::new(mesh);
    let order = mesh.element_order;
    let d_sens = diffusion_sensitivity(optics, cfg);

    // (element, shape values, shape gradients) per active voxel center
    struct Tap {
        nodes: Vec<usize>,
        phi: Vec<f64>,
        grad: Vec<[f64; 2]>,
    }
    let taps: Result<Vec<Tap>> = active
        .iter()
        .map(|&idx| {
            let c = grid.center(idx);
            let (e, bary) = locator
                .locate(c)
                .ok_or_else(|| DotError::Geometry(format!("voxel center {c:?} outside mesh")))?;
            let verts = mesh.elements[e].vertices;
            let det = mesh.double_area(e);
            let grad_l = barycentric_gradients(
                mesh.nodes[verts[0]],
                mesh.nodes[verts[1]],
                mesh.nodes[verts[2]],
                det,
            );
            Ok(Tap {
                nodes: mesh.elements[e].nodes(),
                phi: shape_values(order, bary),
                grad: shape_gradients(order, bary, grad_l),
            })
        })
        .collect();
    let taps = taps?;

    let eval = |nodal: &[f64], tap: &Tap| -> (f64, [f64; 2]) {
        let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for (i, &n) in tap.nodes.iter().enumerate() {
            v += nodal[n] * tap.phi[i];
            gx += nodal[n] * tap.grad[i][0];
            gy += nodal[n] * tap.grad[i][1];
        }
        (v, [gx, gy])
    };

    let u_vals: Vec<Vec<(f64, [f64; 2])>> = fields
        .source_fields
        .iter()
        .map(|f| taps.iter().map(|t| eval(&f.nodal_values, t)).collect())
        .collect();
    let g_vals: Vec<Vec<(f64, [f64; 2])>> = fields
        .adjoint_fields
        .iter()
        .map(|g| taps.iter().map(|t| eval(g, t)).collect())
        .collect();

    let area = grid.voxel_area();
    let y0 = &fields.background_sinogram.values;
    let mut j = DenseMatrix::zeros(n_s * n_d, v_active);
    par::for_each_chunk(&mut j.data, v_active, |start, row| {
        let mi = start / v_active;
        let (s, d) = (mi / n_d, mi % n_d);
        let scale = -area / y0[mi];
        for v in 0..v_active {
            let (u, gu) = u_vals[s][v];
            let (g, gg) = g_vals[d][v];
            row[v] = scale * (g * u - d_sens * (gg[0] * gu[0] + gg[1] * gu[1]));
        }
    });
    Ok(j)
}

/// Log-ratio data `b_i = log(y_i / y0_i)`.
pub fn build_rhs(measured: &[f64], background: &[f64]) -> Result<Vec<f64>> {
    if measured.len() != background.len() {
        return Err(DotError::ShapeMismatch(format!(
            "measured ({}) and background ({}) lengths differ",
            measured.len(),
            background.len()
        )));
    }
    measured
        .iter()
        .zip(background)
        .map(|(&y, &y0)| {
            if y <= 0.0 || y0 <= 0.0 {
                Err(DotError::Config("log-ratio data requires strictly positive sinograms".into()))
            } else {
                Ok((y / y0).ln())
            }
        })
        .collect()
}
