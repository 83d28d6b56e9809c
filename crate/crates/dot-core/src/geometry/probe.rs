//! Source and detector placement.

use super::DomainShape;
use crate::{DotError, Result};

pub const SOURCE_DEPTH_CM: f64 = 0.1;

#[derive(Debug, Clone, Copy)]
pub struct Source {
    pub position: [f64; 2],
    /// Integrated source power; the linear model makes the absolute scale
    /// immaterial after normalization.
    pub amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct ProbeLayout {
    pub sources: Vec<Source>,
    pub detectors: Vec<[f64; 2]>,
}

impl ProbeLayout {
    pub fn n_s(&self) -> usize {
        self.sources.len()
    }

    pub fn n_d(&self) -> usize {
        self.detectors.len()
    }

    /// Measurement vector length `M = n_s * n_d`.
    pub fn n_measurements(&self) -> usize {
        self.n_s() * self.n_d()
    }
}

/// Places `n_s` sources 1 mm inside the bottom boundary at uniform spacing
/// `span / (n_s + 1)` and `n_d` detectors uniformly by arc length on the
/// measuring boundary (left/top/right sides of the rectangle, the curved arc
/// of the semi-disk) with half-spacing end margins.
pub fn build_probe_layout(shape: DomainShape, n_s: usize, n_d: usize) -> Result<ProbeLayout> {
    shape.validate()?;
    if n_s == 0 || n_d == 0 {
        return Err(DotError::Geometry("need at least one source and one detector".into()));
    }
    let [x0, x1] = shape.bottom_span();
    let spacing = (x1 - x0) / (n_s + 1) as f64;
    let sources = (1..=n_s)
        .map(|i| Source {
            position: [x0 + i as f64 * spacing, SOURCE_DEPTH_CM],
            amplitude: 1.0,
        })
        .collect();

    let detectors = match shape {
        DomainShape::Rectangle { width, height } => {
            // path: up the left side, across the top, down the right side
            let total = 2.0 * height + width;
            (0..n_d)
                .map(|k| {
                    let t = (k as f64 + 0.5) * total / n_d as f64;
                    if t <= height {
                        [0.0, t]
                    } else if t <= height + width {
                        [t - height, height]
                    } else {
                        [width, height - (t - height - width)]
                    }
                })
                .collect()
        }
        DomainShape::SemiDisk { radius } => (0..n_d)
            .map(|k| {
                let t = (k as f64 + 0.5) * std::f64::consts::PI / n_d as f64;
                [radius * t.cos(), radius * t.sin()]
            })
            .collect(),
    };
    Ok(ProbeLayout { sources, detectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rectangle_sources_at_stated_offsets() {
        let layout = build_probe_layout(DomainShape::default_rectangle(), 19, 200).unwrap();
        assert_eq!(layout.n_s(), 19);
        assert_eq!(layout.n_measurements(), 3800);
        for (i, s) in layout.sources.iter().enumerate() {
            assert_relative_eq!(s.position[1], 0.1);
            assert_relative_eq!(s.position[0], 0.5 * (i + 1) as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn single_source_sits_at_bottom_midpoint() {
        let r = build_probe_layout(DomainShape::default_rectangle(), 1, 4).unwrap();
        assert_relative_eq!(r.sources[0].position[0], 5.0);
        let s = build_probe_layout(DomainShape::default_semi_disk(), 1, 4).unwrap();
        assert_relative_eq!(s.sources[0].position[0], 0.0);
        assert_relative_eq!(s.sources[0].position[1], 0.1);
    }

    #[test]
    fn semi_disk_detector_arcs_uniform() {
        let layout = build_probe_layout(DomainShape::default_semi_disk(), 19, 200).unwrap();
        let arc = |p: [f64; 2]| p[1].atan2(p[0]);
        let mut gaps: Vec<f64> = layout
            .detectors
            .windows(2)
            .map(|w| (arc(w[1]) - arc(w[0])).abs() * 5.0)
            .collect();
        let first = gaps.remove(0);
        for g in gaps {
            assert_relative_eq!(g, first, max_relative = 1e-9);
        }
    }

    #[test]
    fn rectangle_detectors_avoid_bottom() {
        let layout = build_probe_layout(DomainShape::default_rectangle(), 19, 200).unwrap();
        for d in &layout.detectors {
            let on_bottom = d[1].abs() < 1e-9 && d[0] > 1e-9 && d[0] < 10.0 - 1e-9;
            assert!(!on_bottom, "detector {d:?} on the source plate");
        }
    }

    #[test]
    fn deterministic_rebuild() {
        let a = build_probe_layout(DomainShape::default_semi_disk(), 7, 33).unwrap();
        let b = build_probe_layout(DomainShape::default_semi_disk(), 7, 33).unwrap();
        for (x, y) in a.detectors.iter().zip(&b.detectors) {
            assert_eq!(x, y);
        }
    }
}
