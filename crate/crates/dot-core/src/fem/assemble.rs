//! Galerkin assembly of `-div(D grad U) + mu_a U = f` with a Robin boundary
//! term on the measuring boundary and homogeneous Dirichlet on the plate
//! (bottom) boundary.

use super::basis::{barycentric_gradients, edge_values, shape_gradients, shape_values};
use super::quad::{edge_rule, triangle_rule};
use super::sparse::{solve_cg, BandCholesky, Csr};
use crate::geometry::{BoundaryTag, Mesh, PointLocator};
use crate::Result;

/// Assembled SPD operator with Dirichlet rows/columns eliminated
/// (unit diagonal, zero couplings; the boundary data is homogeneous).
pub struct AssembledSystem {
    pub matrix: Csr,
    pub dirichlet_nodes: Vec<usize>,
}

impl AssembledSystem {
    pub fn n(&self) -> usize {
        self.matrix.n
    }

    /// Zeroes the Dirichlet entries of a right-hand side.
    pub fn apply_dirichlet(&self, rhs: &mut [f64]) {
        for &i in &self.dirichlet_nodes {
            rhs[i] = 0.0;
        }
    }

    pub fn factor(&self) -> Result<BandCholesky> {
        BandCholesky::new(&self.matrix)
    }

    /// Iterative fallback solver (IC(0)-preconditioned CG).
    pub fn solve_iterative(&self, rhs: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let mut b = rhs.to_vec();
        self.apply_dirichlet(&mut b);
        Ok(solve_cg(&self.matrix, &b, tol, max_iter)?.0)
    }
}

/// Assembles the stiffness + mass + Robin operator.
///
/// `diffusion` and `absorption` are evaluated per quadrature point as
/// `(element, barycentric, xy)`; `robin_coeff` is the boundary factor
/// `2 c_d / zeta` multiplying the boundary mass term.
pub fn assemble_operator(
    mesh: &Mesh,
    diffusion: impl Fn(usize, [f64; 3], [f64; 2]) -> f64,
    absorption: impl Fn(usize, [f64; 3], [f64; 2]) -> f64,
    robin_coeff: f64,
) -> AssembledSystem {
    let order = mesh.element_order;
    let npe = mesh.nodes_per_element();
    let mut triplets: Vec<(usize, usize, f64)> =
        Vec::with_capacity(mesh.n_elements() * npe * npe + mesh.n_nodes());

    for (e, elem) in mesh.elements.iter().enumerate() {
        let verts = elem.vertices;
        let (pa, pb, pc) = (mesh.nodes[verts[0]], mesh.nodes[verts[1]], mesh.nodes[verts[2]]);
        let det = mesh.double_area(e);
        let area = 0.5 * det;
        let grad_l = barycentric_gradients(pa, pb, pc, det);
        let nodes = elem.nodes();
        let mut ke = vec![0.0; npe * npe];
        for &(l, w) in triangle_rule() {
            let xy = [
                l[0] * pa[0] + l[1] * pb[0] + l[2] * pc[0],
                l[0] * pa[1] + l[1] * pb[1] + l[2] * pc[1],
            ];
            let d = diffusion(e, l, xy);
            let mu = absorption(e, l, xy);
            let phi = shape_values(order, l);
            let grad = shape_gradients(order, l, grad_l);
            let wa = w * area;
            // keep every product commutative so A = A^T holds bitwise
            for i in 0..npe {
                for j in 0..npe {
                    ke[i * npe + j] += wa
                        * (d * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1])
                            + mu * (phi[i] * phi[j]));
                }
            }
        }
        for i in 0..npe {
            for j in 0..npe {
                triplets.push((nodes[i], nodes[j], ke[i * npe + j]));
            }
        }
    }

    // Robin boundary mass on the measuring boundary
    if robin_coeff != 0.0 {
        for be in &mesh.boundary_edges {
            if be.tag != BoundaryTag::LateralTop {
                continue;
            }
            let (a, b) = (be.nodes[0], be.nodes[1]);
            let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
            let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            let mut dofs = vec![a, b];
            if let Some(m) = be.midpoint {
                dofs.push(m);
            }
            let nd = dofs.len();
            let mut me = vec![0.0; nd * nd];
            for (t, w) in edge_rule() {
                let phi = edge_values(order, t);
                let scale = robin_coeff * w * len;
                for i in 0..nd {
                    for j in 0..nd {
                        me[i * nd + j] += scale * (phi[i] * phi[j]);
                    }
                }
            }
            for i in 0..nd {
                for j in 0..nd {
                    triplets.push((dofs[i], dofs[j], me[i * nd + j]));
                }
            }
        }
    }

    // homogeneous Dirichlet on the plate: drop couplings, unit diagonal
    let dirichlet_nodes = mesh.bottom_nodes();
    let mut is_dirichlet = vec![false; mesh.n_nodes()];
    for &i in &dirichlet_nodes {
        is_dirichlet[i] = true;
    }
    triplets.retain(|&(i, j, _)| !is_dirichlet[i] && !is_dirichlet[j]);
    for &i in &dirichlet_nodes {
        triplets.push((i, i, 1.0));
    }

    AssembledSystem {
        matrix: Csr::from_triplets(mesh.n_nodes(), &triplets),
        dirichlet_nodes,
    }
}

/// Load vector for a smooth volume source `f`.
pub fn assemble_volume_load(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let order = mesh.element_order;
    let npe = mesh.nodes_per_element();
    let mut rhs = vec![0.0; mesh.n_nodes()];
    for (e, elem) in mesh.elements.iter().enumerate() {
        let verts = elem.vertices;
        let (pa, pb, pc) = (mesh.nodes[verts[0]], mesh.nodes[verts[1]], mesh.nodes[verts[2]]);
        let area = 0.5 * mesh.double_area(e);
        let nodes = elem.nodes();
        for &(l, w) in triangle_rule() {
            let xy = [
                l[0] * pa[0] + l[1] * pb[0] + l[2] * pc[0],
                l[0] * pa[1] + l[1] * pb[1] + l[2] * pc[1],
            ];
            let fv = f(xy);
            if fv == 0.0 {
                continue;
            }
            let phi = shape_values(order, l);
            for i in 0..npe {
                rhs[nodes[i]] += w * area * fv * phi[i];
            }
        }
    }
    rhs
}

/// Load vector for an isotropic Gaussian volume source of integrated power
/// `power`, width `sigma`, centered at `center`.
///
/// The Gaussian is far narrower than the mesh pitch, so affected elements are
/// integrated on a recursively subdivided sub-triangulation whose leaves are
/// no larger than `sigma`; elements farther than `6 sigma` carry negligible
/// mass and are skipped.
pub fn assemble_gaussian_load(mesh: &Mesh, center: [f64; 2], sigma: f64, power: f64) -> Vec<f64> {
    let order = mesh.element_order;
    let npe = mesh.nodes_per_element();
    let norm = power / (2.0 * std::f64::consts::PI * sigma * sigma);
    let cutoff = 6.0 * sigma;
    let gauss = |xy: [f64; 2]| {
        let dx = xy[0] - center[0];
        let dy = xy[1] - center[1];
        norm * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
    };
    let mut rhs = vec![0.0; mesh.n_nodes()];
    for (e, elem) in mesh.elements.iter().enumerate() {
        let verts = elem.vertices;
        let vs = [mesh.nodes[verts[0]], mesh.nodes[verts[1]], mesh.nodes[verts[2]]];
        // quick reject on vertex distances vs element size
        let diam = mesh.element_diameter(e);
        let dmin = vs
            .iter()
            .map(|p| ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        if dmin > cutoff + diam {
            continue;
        }
        let area = 0.5 * mesh.double_area(e);
        let depth = ((diam / sigma).log2().ceil() as i32).clamp(0, 6) as u32;
        let nodes = elem.nodes();
        let corners = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        integrate_subdivided(order, npe, &vs, area, corners, depth, &gauss, |i, v| {
            rhs[nodes[i]] += v;
        });
    }
    rhs
}

/// Recursive mid-edge subdivision in barycentric coordinates; at the leaves a
/// degree-5 rule integrates `f * phi_i` against the parent element basis.
#[allow(clippy::too_many_arguments)]
fn integrate_subdivided(
    order: u8,
    npe: usize,
    vs: &[[f64; 2]; 3],
    parent_area: f64,
    corners: [[f64; 3]; 3],
    depth: u32,
    f: &impl Fn([f64; 2]) -> f64,
    mut add: impl FnMut(usize, f64),
) {
    fn recurse(
        order: u8,
        npe: usize,
        vs: &[[f64; 2]; 3],
        area: f64,
        corners: [[f64; 3]; 3],
        depth: u32,
        f: &impl Fn([f64; 2]) -> f64,
        add: &mut impl FnMut(usize, f64),
    ) {
        if depth == 0 {
            for &(l, w) in triangle_rule() {
                // barycentric of the quadrature point w.r.t. the parent element
                let mut lp = [0.0; 3];
                for k in 0..3 {
                    lp[k] = l[0] * corners[0][k] + l[1] * corners[1][k] + l[2] * corners[2][k];
                }
                let xy = [
                    lp[0] * vs[0][0] + lp[1] * vs[1][0] + lp[2] * vs[2][0],
                    lp[0] * vs[0][1] + lp[1] * vs[1][1] + lp[2] * vs[2][1],
                ];
                let fv = f(xy);
                if fv == 0.0 {
                    continue;
                }
                let phi = shape_values(order, lp);
                for i in 0..npe {
                    add(i, w * area * fv * phi[i]);
                }
            }
            return;
        }
        let mid = |a: [f64; 3], b: [f64; 3]| {
            [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0]
        };
        let (c0, c1, c2) = (corners[0], corners[1], corners[2]);
        let (m01, m12, m20) = (mid(c0, c1), mid(c1, c2), mid(c2, c0));
        let quarter = area / 4.0;
        for sub in [
            [c0, m01, m20],
            [m01, c1, m12],
            [m20, m12, c2],
            [m01, m12, m20],
        ] {
            recurse(order, npe, vs, quarter, sub, depth - 1, f, add);
        }
    }
    recurse(order, npe, vs, parent_area, corners, depth, f, &mut add);
}

/// Interpolation (point-evaluation) vector at `p`: the discrete functional
/// `l^T u = u_h(p)`. Doubles as a unit point load.
pub fn assemble_point_load(mesh: &Mesh, locator: &PointLocator, p: [f64; 2]) -> Result<Vec<f64>> {
    let (e, bary) = locator.locate(p).ok_or_else(|| {
        crate::DotError::Geometry(format!("point {p:?} lies outside the mesh"))
    })?;
    let phi = shape_values(mesh.element_order, bary);
    let nodes = mesh.elements[e].nodes();
    let mut rhs = vec![0.0; mesh.n_nodes()];
    for (i, &n) in nodes.iter().enumerate() {
        rhs[n] += phi[i];
    }
    Ok(rhs)
}

/// Boundary load `robin_coeff * g` integrated against the trace basis on the
/// measuring boundary (inhomogeneous Robin data, used by verification
/// problems).
pub fn assemble_robin_load(
    mesh: &Mesh,
    robin_coeff: f64,
    g: impl Fn([f64; 2]) -> f64,
) -> Vec<f64> {
    let order = mesh.element_order;
    let mut rhs = vec![0.0; mesh.n_nodes()];
    for be in &mesh.boundary_edges {
        if be.tag != BoundaryTag::LateralTop {
            continue;
        }
        let (a, b) = (be.nodes[0], be.nodes[1]);
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        let mut dofs = vec![a, b];
        if let Some(m) = be.midpoint {
            dofs.push(m);
        }
        for (t, w) in edge_rule() {
            let xy = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
            let phi = edge_values(order, t);
            let gv = g(xy);
            for (i, &dof) in dofs.iter().enumerate() {
                rhs[dof] += robin_coeff * w * len * gv * phi[i];
            }
        }
    }
    rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, DomainShape};
    use approx::assert_relative_eq;

    #[test]
    fn operator_is_symmetric() {
        let mesh = build_mesh(DomainShape::default_rectangle(), 0.5, 2).unwrap();
        let sys = assemble_operator(&mesh, |_, _, _| 1.3, |_, _, _| 0.2, 0.7);
        assert_eq!(sys.matrix.asymmetry(), 0.0);
    }

    #[test]
    fn gaussian_load_has_unit_mass() {
        // sum of the load vector = integral of f against the partition of unity
        let mesh = build_mesh(DomainShape::default_rectangle(), 0.25, 2).unwrap();
        let rhs = assemble_gaussian_load(&mesh, [5.0, 2.5], 0.05, 1.0);
        let total: f64 = rhs.iter().sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn homogeneous_problem_solves_to_zero() {
        let mesh = build_mesh(DomainShape::default_rectangle(), 0.5, 1).unwrap();
        let sys = assemble_operator(&mesh, |_, _, _| 1.0, |_, _, _| 0.01, 2.0 / std::f64::consts::PI);
        let rhs = vec![0.0; sys.n()];
        let x = sys.factor().unwrap().solve(&rhs);
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
