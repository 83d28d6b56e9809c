//! Quadrature rules: a degree-5 seven-point rule on the triangle and
//! Gauss-Legendre rules on edges.

/// Seven-point triangle rule, exact to polynomial degree 5.
/// Returns (barycentric point, weight); weights sum to 1 and are applied
/// against the element area.
pub fn triangle_rule() -> &'static [([f64; 3], f64)] {
    const A1: f64 = 0.059_715_871_789_77;
    const B1: f64 = 0.470_142_064_105_115;
    const W1: f64 = 0.132_394_152_788_506;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W2: f64 = 0.125_939_180_544_827;
    const THIRD: f64 = 1.0 / 3.0;
    &[
        ([THIRD, THIRD, THIRD], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
}

/// Three-point Gauss-Legendre rule on [0, 1], exact to degree 5.
pub fn edge_rule() -> [(f64, f64); 3] {
    let s = (3.0f64 / 5.0).sqrt();
    [
        (0.5 * (1.0 - s), 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 * (1.0 + s), 5.0 / 18.0),
    ]
}
