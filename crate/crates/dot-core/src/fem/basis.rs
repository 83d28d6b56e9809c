//! Lagrange bases on the reference triangle in barycentric coordinates.
//!
//! Local node order: vertices 0, 1, 2, then (order 2 only) edge midpoints
//! mid(0,1), mid(1,2), mid(2,0) — matching `Element::nodes()`.

/// Shape function values at barycentric point `l`.
pub fn shape_values(order: u8, l: [f64; 3]) -> Vec<f64> {
    match order {
        1 => vec![l[0], l[1], l[2]],
        2 => vec![
            l[0] * (2.0 * l[0] - 1.0),
            l[1] * (2.0 * l[1] - 1.0),
            l[2] * (2.0 * l[2] - 1.0),
            4.0 * l[0] * l[1],
            4.0 * l[1] * l[2],
            4.0 * l[2] * l[0],
        ],
        _ => panic!("unsupported element order {order}"),
    }
}

/// Cartesian shape-function gradients given the barycentric gradients
/// `grad_l[i] = grad lambda_i` of the element's affine map.
pub fn shape_gradients(order: u8, l: [f64; 3], grad_l: [[f64; 2]; 3]) -> Vec<[f64; 2]> {
    match order {
        1 => grad_l.to_vec(),
        2 => {
            let g = |i: usize, j: usize| {
                [
                    4.0 * (l[i] * grad_l[j][0] + l[j] * grad_l[i][0]),
                    4.0 * (l[i] * grad_l[j][1] + l[j] * grad_l[i][1]),
                ]
            };
            let mut out = Vec::with_capacity(6);
            for i in 0..3 {
                let f = 4.0 * l[i] - 1.0;
                out.push([f * grad_l[i][0], f * grad_l[i][1]]);
            }
            out.push(g(0, 1));
            out.push(g(1, 2));
            out.push(g(2, 0));
            out
        }
        _ => panic!("unsupported element order {order}"),
    }
}

/// Gradients of the barycentric coordinates of a triangle with vertices
/// `a, b, c` (CCW) and doubled area `det`.
pub fn barycentric_gradients(a: [f64; 2], b: [f64; 2], c: [f64; 2], det: f64) -> [[f64; 2]; 3] {
    [
        [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
        [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
    ]
}

/// 1D edge basis on parameter `t` in [0, 1]: endpoints then (order 2) the
/// midpoint.
pub fn edge_values(order: u8, t: f64) -> Vec<f64> {
    match order {
        1 => vec![1.0 - t, t],
        2 => {
            let l0 = 1.0 - t;
            vec![l0 * (2.0 * l0 - 1.0), t * (2.0 * t - 1.0), 4.0 * t * l0]
        }
        _ => panic!("unsupported element order {order}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn partition_of_unity() {
        for order in [1u8, 2] {
            for l in [[0.2, 0.3, 0.5], [1.0, 0.0, 0.0], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]] {
                let s: f64 = shape_values(order, l).iter().sum();
                assert_relative_eq!(s, 1.0, max_relative = 1e-14);
            }
            let s: f64 = edge_values(order, 0.37).iter().sum();
            assert_relative_eq!(s, 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn kronecker_at_nodes() {
        // P2 nodes in barycentric coords
        let nodes = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.5, 0.5, 0.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
        ];
        for (i, &l) in nodes.iter().enumerate() {
            let phi = shape_values(2, l);
            for (j, &v) in phi.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(v, expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn gradients_sum_to_zero() {
        let g = barycentric_gradients([0.0, 0.0], [2.0, 0.0], [0.0, 1.0], 2.0);
        for d in 0..2 {
            let s: f64 = (0..3).map(|i| g[i][d]).sum();
            assert_relative_eq!(s, 0.0, epsilon = 1e-14);
        }
        let grads = shape_gradients(2, [0.3, 0.3, 0.4], g);
        for d in 0..2 {
            let s: f64 = grads.iter().map(|gr| gr[d]).sum();
            assert_relative_eq!(s, 0.0, epsilon = 1e-13);
        }
    }
}
