//! Steady-state diffusion-approximation forward model.
//!
//! Solves `-div(D grad U) + mu_a U = f` per source with
//! `D(r) = 1/(3 (mu_a(r) + (1 - g) mu_s))`, a Robin condition
//! `U + zeta D / (2 c_d) dU/dn = 0` on the measuring boundary and `U = 0` on
//! the bottom plate, then samples the fluence at the detector locations.

use crate::fem::{assemble_gaussian_load, assemble_operator, AssembledSystem};
use crate::geometry::{Mesh, PointLocator, ProbeLayout};
use crate::par;
use crate::{DotError, Result};

/// How the diffusion coefficient follows the absorption field.
///
/// Scattering dominates absorption in this regime, so `D` is evaluated at the
/// background absorption by default; that keeps light monotonically dimming
/// under absorption increases and the sensitivity kernel single-signed.
/// `Local` couples `D` to the pointwise `mu_a(r)`, which measurably brightens
/// near-plate detectors when absorption rises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DiffusionCoupling {
    Background,
    Local,
}

/// Optical parameters of the medium and the boundary/source models.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct OpticalConfig {
    /// Background absorption `mu_a0` (cm^-1).
    pub mu_a_background: f64,
    /// Scattering coefficient `mu_s` (cm^-1).
    pub mu_s: f64,
    /// Scattering anisotropy `g`.
    pub g: f64,
    /// Refraction mismatch factor `zeta = (1 + R) / (1 - R)`; 1 for matched
    /// boundaries.
    pub zeta: f64,
    /// Width of the Gaussian volume sources (cm).
    pub source_sigma: f64,
    pub diffusion_coupling: DiffusionCoupling,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        OpticalConfig {
            mu_a_background: 0.01,
            mu_s: 1.0,
            g: 0.8,
            zeta: 1.0,
            source_sigma: 0.05,
            diffusion_coupling: DiffusionCoupling::Background,
        }
    }
}

impl OpticalConfig {
    /// Dimension constant of the Robin condition (`1/pi` in 2D).
    pub fn c_d(&self) -> f64 {
        1.0 / std::f64::consts::PI
    }

    /// Boundary mass factor `2 c_d / zeta` of the weak form.
    pub fn robin_coeff(&self) -> f64 {
        2.0 * self.c_d() / self.zeta
    }

    /// Diffusion coefficient at local absorption `mu_a`.
    pub fn diffusion(&self, mu_a: f64) -> f64 {
        1.0 / (3.0 * (mu_a + (1.0 - self.g) * self.mu_s))
    }

    /// Background diffusion coefficient.
    pub fn diffusion_background(&self) -> f64 {
        self.diffusion(self.mu_a_background)
    }

    /// The constant-coefficient simplification `1/(3 mu_s)` used when
    /// presenting reconstructions in `mu_a / D` scale.
    pub fn rytov_diffusion(&self) -> f64 {
        1.0 / (3.0 * self.mu_s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_a_background <= 0.0 {
            return Err(DotError::Config("mu_a_background must be positive".into()));
        }
        if self.mu_s <= 0.0 {
            return Err(DotError::Config("mu_s must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.g) {
            return Err(DotError::Config("anisotropy g must lie in [-1, 1]".into()));
        }
        if self.zeta <= 0.0 || self.source_sigma <= 0.0 {
            return Err(DotError::Config("zeta and source_sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Nodal fluence of one source.
#[derive(Debug, Clone)]
pub struct FluenceField {
    pub source: usize,
    pub nodal_values: Vec<f64>,
}

impl FluenceField {
    /// Discrete maximum-principle check: no value may dip below
    /// `-tol * max(U)` for a non-negative source.
    pub fn min_relative(&self) -> f64 {
        let max = self.nodal_values.iter().cloned().fold(0.0f64, f64::max);
        let min = self.nodal_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if max > 0.0 {
            min / max
        } else {
            min
        }
    }
}

/// Detector readings for every source; flattened row-major by source, so
/// entry `(s, d)` sits at `s * n_d + d` and `M = n_s * n_d`.
#[derive(Debug, Clone)]
pub struct Sinogram {
    pub n_s: usize,
    pub n_d: usize,
    pub values: Vec<f64>,
}

impl Sinogram {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, s: usize, d: usize) -> f64 {
        self.values[s * self.n_d + d]
    }

    pub fn strictly_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }
}

/// Assembles the production operator for a nodal absorption field.
pub fn assemble_system(
    mesh: &Mesh,
    mu_a_nodal: &[f64],
    optics: &OpticalConfig,
) -> Result<AssembledSystem> {
    optics.validate()?;
    if mu_a_nodal.len() != mesh.n_nodes() {
        return Err(DotError::ShapeMismatch(format!(
            "mu_a field has {} entries for {} nodes",
            mu_a_nodal.len(),
            mesh.n_nodes()
        )));
    }
    if mu_a_nodal.iter().any(|&m| m <= 0.0) {
        return Err(DotError::Config("mu_a must be strictly positive".into()));
    }
    let order = mesh.element_order;
    let interp = |e: usize, l: [f64; 3]| -> f64 {
        let phi = crate::fem::basis::shape_values(order, l);
        mesh.elements[e]
            .nodes()
            .iter()
            .zip(phi.iter())
            .map(|(&n, &p)| mu_a_nodal[n] * p)
            .sum()
    };
    let d0 = optics.diffusion_background();
    let system = match optics.diffusion_coupling {
        DiffusionCoupling::Background => assemble_operator(
            mesh,
            |_, _, _| d0,
            |e, l, _| interp(e, l),
            optics.robin_coeff(),
        ),
        DiffusionCoupling::Local => assemble_operator(
            mesh,
            |e, l, _| optics.diffusion(interp(e, l)),
            |e, l, _| interp(e, l),
            optics.robin_coeff(),
        ),
    };
    Ok(system)
}

/// Solves the forward problem for every source (one factorization, per-source
/// back-substitutions, optionally in parallel).
pub fn solve_forward(
    mesh: &Mesh,
    mu_a_nodal: &[f64],
    optics: &OpticalConfig,
    layout: &ProbeLayout,
) -> Result<Vec<FluenceField>> {
    let system = assemble_system(mesh, mu_a_nodal, optics)?;
    let chol = system.factor()?;
    let fields = par::map_indexed(layout.n_s(), |s| {
        let src = layout.sources[s];
        let mut rhs = if src.amplitude == 0.0 {
            vec![0.0; mesh.n_nodes()]
        } else {
            assemble_gaussian_load(mesh, src.position, optics.source_sigma, src.amplitude)
        };
        system.apply_dirichlet(&mut rhs);
        let mut x = rhs;
        chol.solve_in_place(&mut x);
        FluenceField {
            source: s,
            nodal_values: x,
        }
    });
    Ok(fields)
}

/// Interpolates each fluence field at the detector points.
pub fn measure(mesh: &Mesh, fields: &[FluenceField], layout: &ProbeLayout) -> Result<Sinogram> {
    let locator = PointLocator::new(mesh);
    let order = mesh.element_order;
    let mut taps = Vec::with_capacity(layout.n_d());
    for &d in &layout.detectors {
        let (e, bary) = locator
            .locate(d)
            .ok_or_else(|| DotError::Geometry(format!("detector {d:?} outside the mesh")))?;
        let phi = crate::fem::basis::shape_values(order, bary);
        taps.push((mesh.elements[e].nodes(), phi));
    }
    let n_d = layout.n_d();
    let mut values = vec![0.0; fields.len() * n_d];
    par::for_each_chunk(&mut values, n_d, |start, row| {
        let s = start / n_d;
        let u = &fields[s].nodal_values;
        for (d, out) in row.iter_mut().enumerate() {
            let (nodes, phi) = &taps[d];
            *out = nodes.iter().zip(phi.iter()).map(|(&n, &p)| u[n] * p).sum();
        }
    });
    Ok(Sinogram {
        n_s: fields.len(),
        n_d,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, build_probe_layout, DomainShape};
    use approx::assert_relative_eq;

    fn small_setup() -> (Mesh, ProbeLayout, OpticalConfig) {
        let shape = DomainShape::default_rectangle();
        let mesh = build_mesh(shape, 0.5, 2).unwrap();
        let layout = build_probe_layout(shape, 3, 20).unwrap();
        (mesh, layout, OpticalConfig::default())
    }

    #[test]
    fn zero_amplitude_gives_zero_field() {
        let (mesh, mut layout, optics) = small_setup();
        layout.sources[1].amplitude = 0.0;
        let mu = vec![optics.mu_a_background; mesh.n_nodes()];
        let fields = solve_forward(&mesh, &mu, &optics, &layout).unwrap();
        assert!(fields[1].nodal_values.iter().all(|&v| v == 0.0));
        assert!(fields[0].nodal_values.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn amplitude_linearity() {
        let (mesh, mut layout, optics) = small_setup();
        let mu = vec![optics.mu_a_background; mesh.n_nodes()];
        let base = solve_forward(&mesh, &mu, &optics, &layout).unwrap();
        layout.sources[0].amplitude = 2.0;
        let doubled = solve_forward(&mesh, &mu, &optics, &layout).unwrap();
        for (a, b) in base[0].nodal_values.iter().zip(&doubled[0].nodal_values) {
            assert_relative_eq!(2.0 * a, b, max_relative = 1e-12, epsilon = 1e-300);
        }
    }

    #[test]
    fn centered_source_is_mirror_symmetric() {
        let shape = DomainShape::default_rectangle();
        let mesh = build_mesh(shape, 0.25, 2).unwrap();
        let layout = build_probe_layout(shape, 1, 10).unwrap();
        let optics = OpticalConfig::default();
        let mu = vec![optics.mu_a_background; mesh.n_nodes()];
        let fields = solve_forward(&mesh, &mu, &optics, &layout).unwrap();
        // map each node to its mirror image about x = 5
        let mut index = std::collections::HashMap::new();
        for (i, p) in mesh.nodes.iter().enumerate() {
            let key = ((p[0] * 1e7).round() as i64, (p[1] * 1e7).round() as i64);
            index.insert(key, i);
        }
        let u = &fields[0].nodal_values;
        let max = u.iter().cloned().fold(0.0f64, f64::max);
        for (i, p) in mesh.nodes.iter().enumerate() {
            let key = (((10.0 - p[0]) * 1e7).round() as i64, (p[1] * 1e7).round() as i64);
            let j = index[&key];
            assert!(
                (u[i] - u[j]).abs() <= 1e-8 * max,
                "asymmetry at node {i}: {} vs {}",
                u[i],
                u[j]
            );
        }
    }

    #[test]
    fn measurement_shape_and_determinism() {
        let (mesh, layout, optics) = small_setup();
        let mu = vec![optics.mu_a_background; mesh.n_nodes()];
        let fields = solve_forward(&mesh, &mu, &optics, &layout).unwrap();
        let a = measure(&mesh, &fields, &layout).unwrap();
        let b = measure(&mesh, &fields, &layout).unwrap();
        assert_eq!(a.len(), 60);
        assert_eq!(a.values, b.values);
        assert!(a.strictly_positive());
    }

    #[test]
    fn increasing_absorption_dims_every_reading() {
        let (mesh, layout, optics) = small_setup();
        let mu = vec![optics.mu_a_background; mesh.n_nodes()];
        let brighter = measure(&mesh, &solve_forward(&mesh, &mu, &optics, &layout).unwrap(), &layout).unwrap();
        let mu_hi: Vec<f64> = mu.iter().map(|&m| m * 2.0).collect();
        let dimmer = measure(&mesh, &solve_forward(&mesh, &mu_hi, &optics, &layout).unwrap(), &layout).unwrap();
        for (lo, hi) in dimmer.values.iter().zip(&brighter.values) {
            assert!(lo < hi);
        }
    }

    #[test]
    fn rejects_nonpositive_absorption() {
        let (mesh, _, optics) = small_setup();
        let mut mu = vec![optics.mu_a_background; mesh.n_nodes()];
        mu[3] = 0.0;
        assert!(assemble_system(&mesh, &mu, &optics).is_err());
    }
}
