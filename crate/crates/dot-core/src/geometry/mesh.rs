//! Structured triangulations of the two domains.
//!
//! The rectangle gets a criss-cross grid (cell diagonals alternate with
//! `(i + j)` parity so the mesh is mirror symmetric about the vertical
//! midline). The semi-disk gets a mapped polar grid: a fan around the center
//! node plus quad rings split into triangles, with the outermost ring exactly
//! on the arc. Order-2 meshes add edge midpoint nodes (straight, affine
//! elements).

use super::DomainShape;
use crate::{DotError, Result};
use std::collections::HashMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Source plate side (`y = 0`), homogeneous Dirichlet in the forward model.
    Bottom,
    /// Everything else: lateral/top sides or the curved arc; Robin boundary.
    LateralTop,
}

#[derive(Debug, Clone)]
pub struct Element {
    /// Vertex node indices, counter-clockwise.
    pub vertices: [usize; 3],
    /// Edge midpoint nodes for order-2 elements: mid(0,1), mid(1,2), mid(2,0).
    pub midpoints: Option<[usize; 3]>,
}

impl Element {
    /// Global node indices in local order (3 or 6 entries).
    pub fn nodes(&self) -> Vec<usize> {
        match self.midpoints {
            None => self.vertices.to_vec(),
            Some(m) => vec![
                self.vertices[0],
                self.vertices[1],
                self.vertices[2],
                m[0],
                m[1],
                m[2],
            ],
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryEdge {
    /// Endpoint vertex nodes.
    pub nodes: [usize; 2],
    /// Midpoint node for order-2 meshes.
    pub midpoint: Option<usize>,
    pub tag: BoundaryTag,
    /// The unique element owning this edge.
    pub element: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub shape: DomainShape,
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<Element>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub element_order: u8,
    /// Structured resolution used to build the mesh (cells / sectors).
    pub resolution: (usize, usize),
}

/// Builds a triangulation with structured pitch at most `h` (cm).
///
/// `order` selects linear (1) or quadratic (2) elements. Cell diagonals make
/// the largest element diameter `sqrt(2) * h` in the rectangle and slightly
/// above the pitch in the polar rings.
pub fn build_mesh(shape: DomainShape, h: f64, order: u8) -> Result<Mesh> {
    shape.validate()?;
    if !(order == 1 || order == 2) {
        return Err(DotError::Geometry(format!("element order must be 1 or 2, got {order}")));
    }
    if h <= 0.0 {
        return Err(DotError::Geometry(format!("mesh size must be positive, got {h}")));
    }
    if h > shape.min_extent() {
        return Err(DotError::Geometry(format!(
            "mesh size {h} exceeds the smallest domain extent {}",
            shape.min_extent()
        )));
    }
    let mut mesh = match shape {
        DomainShape::Rectangle { width, height } => {
            let nx = (width / h).ceil() as usize;
            let ny = (height / h).ceil() as usize;
            rectangle_mesh(width, height, nx, ny)
        }
        DomainShape::SemiDisk { radius } => {
            let n_r = (radius / h).ceil() as usize;
            let mut n_t = ((std::f64::consts::PI * radius) / h).ceil() as usize;
            if n_t % 2 == 1 {
                n_t += 1; // even sector count keeps the mesh mirror symmetric
            }
            semi_disk_mesh(radius, n_r, n_t)
        }
    };
    if order == 2 {
        add_midpoint_nodes(&mut mesh);
        mesh.element_order = 2;
    }
    mesh.validate()?;
    Ok(mesh)
}

fn rectangle_mesh(width: f64, height: f64, nx: usize, ny: usize) -> Mesh {
    let dx = width / nx as f64;
    let dy = height / ny as f64;
    let node_id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([i as f64 * dx, j as f64 * dy]);
        }
    }
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (
                node_id(i, j),
                node_id(i + 1, j),
                node_id(i + 1, j + 1),
                node_id(i, j + 1),
            );
            if (i + j) % 2 == 0 {
                // diagonal a-c
                elements.push(tri(a, b, c));
                elements.push(tri(a, c, d));
            } else {
                // diagonal b-d
                elements.push(tri(a, b, d));
                elements.push(tri(b, c, d));
            }
        }
    }
    let mut mesh = Mesh {
        shape: DomainShape::Rectangle { width, height },
        nodes,
        elements,
        boundary_edges: Vec::new(),
        element_order: 1,
        resolution: (nx, ny),
    };
    mesh.rebuild_boundary();
    mesh
}

fn semi_disk_mesh(radius: f64, n_r: usize, n_t: usize) -> Mesh {
    let dr = radius / n_r as f64;
    let dt = std::f64::consts::PI / n_t as f64;
    // node 0 is the center; ring i (1..=n_r) holds n_t + 1 nodes
    let node_id = |i: usize, j: usize| 1 + (i - 1) * (n_t + 1) + j;
    let mut nodes = vec![[0.0, 0.0]];
    for i in 1..=n_r {
        let r = i as f64 * dr;
        for j in 0..=n_t {
            let t = j as f64 * dt;
            // exact zero ordinate on the diameter endpoints
            let y = if j == 0 || j == n_t { 0.0 } else { r * t.sin() };
            nodes.push([r * t.cos(), y]);
        }
    }
    let mut elements = Vec::new();
    for j in 0..n_t {
        elements.push(tri(0, node_id(1, j), node_id(1, j + 1)));
    }
    for i in 1..n_r {
        for j in 0..n_t {
            let (a, b, c, d) = (
                node_id(i, j),
                node_id(i + 1, j),
                node_id(i + 1, j + 1),
                node_id(i, j + 1),
            );
            if (i + j) % 2 == 0 {
                elements.push(tri(a, b, c));
                elements.push(tri(a, c, d));
            } else {
                elements.push(tri(a, b, d));
                elements.push(tri(b, c, d));
            }
        }
    }
    let mut mesh = Mesh {
        shape: DomainShape::SemiDisk { radius },
        nodes,
        elements,
        boundary_edges: Vec::new(),
        element_order: 1,
        resolution: (n_r, n_t),
    };
    mesh.rebuild_boundary();
    mesh
}

fn tri(a: usize, b: usize, c: usize) -> Element {
    Element {
        vertices: [a, b, c],
        midpoints: None,
    }
}

fn add_midpoint_nodes(mesh: &mut Mesh) {
    let mut edge_mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut nodes = std::mem::take(&mut mesh.nodes);
    for elem in &mut mesh.elements {
        let v = elem.vertices;
        let mut mids = [0usize; 3];
        for (k, (a, b)) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])].into_iter().enumerate() {
            let key = (a.min(b), a.max(b));
            let id = *edge_mid.entry(key).or_insert_with(|| {
                let pa = nodes[a];
                let pb = nodes[b];
                nodes.push([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]);
                nodes.len() - 1
            });
            mids[k] = id;
        }
        elem.midpoints = Some(mids);
    }
    mesh.nodes = nodes;
    for be in &mut mesh.boundary_edges {
        let key = (be.nodes[0].min(be.nodes[1]), be.nodes[0].max(be.nodes[1]));
        be.midpoint = Some(edge_mid[&key]);
    }
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn nodes_per_element(&self) -> usize {
        if self.element_order == 2 {
            6
        } else {
            3
        }
    }

    /// Twice the signed area of element `e` (positive for CCW orientation).
    pub fn double_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e].vertices;
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_elements()).map(|e| 0.5 * self.double_area(e)).sum()
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e].vertices;
        let d = |p: [f64; 2], q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        d(pa, pb).max(d(pb, pc)).max(d(pc, pa))
    }

    /// Node indices lying on the bottom (Dirichlet) boundary, sorted.
    pub fn bottom_nodes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for be in &self.boundary_edges {
            if be.tag == BoundaryTag::Bottom {
                out.extend_from_slice(&be.nodes);
                if let Some(m) = be.midpoint {
                    out.push(m);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn rebuild_boundary(&mut self) {
        let mut counts: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (e, elem) in self.elements.iter().enumerate() {
            let v = elem.vertices;
            for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                let key = (a.min(b), a.max(b));
                counts.entry(key).and_modify(|c| c.0 += 1).or_insert((1, e));
            }
        }
        let tol = 1e-9 * self.shape.min_extent().max(1.0);
        let mut edges: Vec<BoundaryEdge> = counts
            .into_iter()
            .filter(|(_, (count, _))| *count == 1)
            .map(|((a, b), (_, e))| {
                let tag = if self.nodes[a][1].abs() <= tol && self.nodes[b][1].abs() <= tol {
                    BoundaryTag::Bottom
                } else {
                    BoundaryTag::LateralTop
                };
                BoundaryEdge {
                    nodes: [a, b],
                    midpoint: None,
                    tag,
                    element: e,
                }
            })
            .collect();
        edges.sort_by_key(|be| (be.nodes[0], be.nodes[1]));
        self.boundary_edges = edges;
    }

    pub fn validate(&self) -> Result<()> {
        for e in 0..self.n_elements() {
            if self.double_area(e) <= 0.0 {
                return Err(DotError::Geometry(format!(
                    "element {e} has non-positive area {}",
                    0.5 * self.double_area(e)
                )));
            }
        }
        let tol = 1e-9 * self.shape.min_extent().max(1.0);
        for (i, &p) in self.nodes.iter().enumerate() {
            if !self.shape.contains(p, tol) {
                return Err(DotError::Geometry(format!("node {i} at {p:?} lies outside the domain")));
            }
        }
        Ok(())
    }

    /// Plain-text node/element dump for debugging (one record per line).
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {}", self.n_nodes());
        for p in &self.nodes {
            let _ = writeln!(s, "{} {}", p[0], p[1]);
        }
        let _ = writeln!(s, "elements {} order {}", self.n_elements(), self.element_order);
        for e in &self.elements {
            let ids: Vec<String> = e.nodes().iter().map(|n| n.to_string()).collect();
            let _ = writeln!(s, "{}", ids.join(" "));
        }
        s
    }

    /// Barycentric coordinates of `p` in element `e` (vertex order).
    pub fn barycentric(&self, e: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.elements[e].vertices;
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let det = self.double_area(e);
        let l0 = ((pb[0] - p[0]) * (pc[1] - p[1]) - (pc[0] - p[0]) * (pb[1] - p[1])) / det;
        let l1 = ((pc[0] - p[0]) * (pa[1] - p[1]) - (pa[0] - p[0]) * (pc[1] - p[1])) / det;
        [l0, l1, 1.0 - l0 - l1]
    }
}

/// Uniform-bin spatial index for point-in-element queries.
pub struct PointLocator<'m> {
    mesh: &'m Mesh,
    bins: Vec<Vec<u32>>,
    nx: usize,
    ny: usize,
    origin: [f64; 2],
    inv_step: [f64; 2],
}

impl<'m> PointLocator<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        let (lo, hi) = mesh.shape.bbox();
        let n = (mesh.n_elements() as f64).sqrt().ceil() as usize;
        let (nx, ny) = (n.max(1), n.max(1));
        let step = [(hi[0] - lo[0]) / nx as f64, (hi[1] - lo[1]) / ny as f64];
        let mut bins = vec![Vec::new(); nx * ny];
        for (e, elem) in mesh.elements.iter().enumerate() {
            let pts: Vec<[f64; 2]> = elem.vertices.iter().map(|&v| mesh.nodes[v]).collect();
            let (exmin, exmax) = minmax(pts.iter().map(|p| p[0]));
            let (eymin, eymax) = minmax(pts.iter().map(|p| p[1]));
            let i0 = bin_index(exmin, lo[0], step[0], nx);
            let i1 = bin_index(exmax, lo[0], step[0], nx);
            let j0 = bin_index(eymin, lo[1], step[1], ny);
            let j1 = bin_index(eymax, lo[1], step[1], ny);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j * nx + i].push(e as u32);
                }
            }
        }
        PointLocator {
            mesh,
            bins,
            nx,
            ny,
            origin: lo,
            inv_step: [1.0 / step[0], 1.0 / step[1]],
        }
    }

    /// Finds the element containing `p`, clamping points that fall slightly
    /// outside the mesh polygon (e.g. detectors on the true arc) onto the
    /// nearest element. Returns the element and clamped barycentrics.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        // search the point's bin, then grow the neighborhood once if needed
        for radius in 0..=1 {
            let i = bin_index(p[0], self.origin[0], 1.0 / self.inv_step[0], self.nx);
            let j = bin_index(p[1], self.origin[1], 1.0 / self.inv_step[1], self.ny);
            let (i0, i1) = (i.saturating_sub(radius), (i + radius).min(self.nx - 1));
            let (j0, j1) = (j.saturating_sub(radius), (j + radius).min(self.ny - 1));
            for jj in j0..=j1 {
                for ii in i0..=i1 {
                    for &e in &self.bins[jj * self.nx + ii] {
                        let l = self.mesh.barycentric(e as usize, p);
                        let worst = l[0].min(l[1]).min(l[2]);
                        if best.map_or(true, |(_, _, bw)| worst > bw) {
                            best = Some((e as usize, l, worst));
                        }
                        if worst >= -1e-12 {
                            return Some((e as usize, clamp_bary(l)));
                        }
                    }
                }
            }
            if radius == 1 {
                break;
            }
        }
        // accept near-misses (chord sagitta of the polygonal arc)
        match best {
            Some((e, l, worst)) if worst >= -0.1 => Some((e, clamp_bary(l))),
            _ => None,
        }
    }
}

fn clamp_bary(l: [f64; 3]) -> [f64; 3] {
    let c = [l[0].max(0.0), l[1].max(0.0), l[2].max(0.0)];
    let s = c[0] + c[1] + c[2];
    [c[0] / s, c[1] / s, c[2] / s]
}

fn minmax(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn bin_index(x: f64, origin: f64, step: f64, n: usize) -> usize {
    (((x - origin) / step).floor() as isize).clamp(0, n as isize - 1) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rectangle_counts_match_structured_formula() {
        let mesh = build_mesh(DomainShape::default_rectangle(), 0.5, 1).unwrap();
        assert_eq!(mesh.n_elements(), 400);
        assert_eq!(mesh.n_nodes(), 231);
    }

    #[test]
    fn rejects_oversized_h() {
        assert!(build_mesh(DomainShape::default_rectangle(), 10.0, 1).is_err());
        assert!(build_mesh(DomainShape::default_rectangle(), -1.0, 1).is_err());
    }

    #[test]
    fn rectangle_area_is_exact() {
        for order in [1, 2] {
            let mesh = build_mesh(DomainShape::default_rectangle(), 0.5, order).unwrap();
            assert_relative_eq!(mesh.total_area(), 50.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn semi_disk_nodes_inside_and_area_converges() {
        let mesh = build_mesh(DomainShape::default_semi_disk(), 0.25, 1).unwrap();
        for &p in &mesh.nodes {
            assert!(p[0] * p[0] + p[1] * p[1] <= 25.0 + 1e-9);
            assert!(p[1] >= -1e-12);
        }
        // inscribed polygon area: pi r^2 / 2 within O(h^2)
        let exact = DomainShape::default_semi_disk().area();
        let err = (mesh.total_area() - exact).abs() / exact;
        assert!(err < 0.25 * 0.25 * 0.2, "area error {err}");
        // coarser mesh has to be worse by roughly the rate factor
        let coarse = build_mesh(DomainShape::default_semi_disk(), 0.5, 1).unwrap();
        let err_c = (coarse.total_area() - exact).abs() / exact;
        assert!(err_c > err);
    }

    #[test]
    fn boundary_edges_unique_and_tagged() {
        for shape in [DomainShape::default_rectangle(), DomainShape::default_semi_disk()] {
            let mesh = build_mesh(shape, 0.5, 2).unwrap();
            assert!(mesh.boundary_edges.iter().any(|b| b.tag == BoundaryTag::Bottom));
            assert!(mesh.boundary_edges.iter().any(|b| b.tag == BoundaryTag::LateralTop));
            for be in &mesh.boundary_edges {
                if be.tag == BoundaryTag::Bottom {
                    assert!(mesh.nodes[be.nodes[0]][1].abs() < 1e-9);
                    assert!(mesh.nodes[be.nodes[1]][1].abs() < 1e-9);
                }
                assert!(be.midpoint.is_some());
            }
        }
    }

    #[test]
    fn locator_finds_interior_and_clamps_arc_points() {
        let mesh = build_mesh(DomainShape::default_semi_disk(), 0.25, 2).unwrap();
        let loc = PointLocator::new(&mesh);
        let (e, l) = loc.locate([1.0, 2.0]).unwrap();
        assert!(e < mesh.n_elements());
        assert_relative_eq!(l[0] + l[1] + l[2], 1.0, max_relative = 1e-12);
        // a point exactly on the true arc, slightly outside the chord polygon
        let t = 1.1_f64;
        assert!(loc.locate([5.0 * t.cos(), 5.0 * t.sin()]).is_some());
        assert!(loc.locate([20.0, 20.0]).is_none());
    }

    #[test]
    fn p2_mesh_shares_midpoints() {
        let mesh = build_mesh(DomainShape::default_rectangle(), 0.5, 2).unwrap();
        // vertices (21*11) + edges (3 per pair of triangles in each cell + grid edges)
        // Euler: E = V + F - 1 for planar triangulation with one outer face
        let v = 231;
        let f = 400;
        let e = v + f - 1;
        assert_eq!(mesh.n_nodes(), v + e);
    }
}
