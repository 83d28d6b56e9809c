//! Evaluation suite: TPR via binarization + connected components, ABE, MSE,
//! SSIM and ACR (mean reconstructed coefficient binned by true contrast).

use crate::geometry::VoxelGrid;
use crate::phantom::Phantom;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Binarization: foreground where the image exceeds
/// `mu_a0 + 0.5 (max - mu_a0)`; when the image never reaches `1.5 mu_a0`
/// there is no foreground. Operates in physical units on the full grid;
/// masked voxels never become foreground.
pub fn binarize(image: &[f64], grid: &VoxelGrid, mu_a0: f64) -> Vec<bool> {
    assert_eq!(image.len(), grid.len());
    let max = image
        .iter()
        .zip(&grid.mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max < 1.5 * mu_a0 {
        return vec![false; image.len()];
    }
    let threshold = mu_a0 + 0.5 * (max - mu_a0);
    image
        .iter()
        .zip(&grid.mask)
        .map(|(&v, &m)| m && v > threshold)
        .collect()
}

/// 4-connected component labels (0 = background, 1..=count foreground).
pub fn label_components(mask: &[bool], nx: usize, ny: usize) -> (Vec<u32>, usize) {
    assert_eq!(mask.len(), nx * ny);
    let mut labels = vec![0u32; mask.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = (i / nx, i % nx);
            let mut visit = |j: usize| {
                if mask[j] && labels[j] == 0 {
                    labels[j] = next;
                    stack.push(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < nx {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - nx);
            }
            if r + 1 < ny {
                visit(i + nx);
            }
        }
    }
    (labels, next as usize)
}

/// Voxelwise true-positive ratio `TP / (TP + FN)`; `None` when the ground
/// truth has no foreground (excluded from aggregates).
pub fn tpr(recon_fg: &[bool], truth_fg: &[bool]) -> Option<f64> {
    assert_eq!(recon_fg.len(), truth_fg.len());
    let truth_count = truth_fg.iter().filter(|&&t| t).count();
    if truth_count == 0 {
        return None;
    }
    let tp = recon_fg
        .iter()
        .zip(truth_fg)
        .filter(|(&r, &t)| r && t)
        .count();
    Some(tp as f64 / truth_count as f64)
}

/// Mean absolute voxel error over active voxels (physical units).
pub fn abe(recon: &[f64], truth: &[f64], grid: &VoxelGrid) -> f64 {
    assert_eq!(recon.len(), truth.len());
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..recon.len() {
        if grid.mask[i] {
            sum += (recon[i] - truth[i]).abs();
            n += 1;
        }
    }
    sum / n as f64
}

/// Mean squared voxel error over active voxels.
pub fn mse(recon: &[f64], truth: &[f64], grid: &VoxelGrid) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..recon.len() {
        if grid.mask[i] {
            sum += (recon[i] - truth[i]).powi(2);
            n += 1;
        }
    }
    sum / n as f64
}

/// Structural similarity with an 11 x 11 Gaussian window (sigma 1.5),
/// `K1 = 0.01`, `K2 = 0.03`, averaged over all fully interior windows.
/// Images smaller than the window fall back to global statistics.
pub fn ssim(a: &[f64], b: &[f64], nx: usize, ny: usize, dynamic_range: f64) -> f64 {
    assert_eq!(a.len(), nx * ny);
    assert_eq!(b.len(), nx * ny);
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    const WIN: usize = 11;
    if nx < WIN || ny < WIN {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
        let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n;
        let cov = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / n;
        return (2.0 * ma * mb + c1) * (2.0 * cov + c2)
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    // normalized Gaussian weights
    let sigma = 1.5f64;
    let mut w = [0.0f64; WIN * WIN];
    let mut wsum = 0.0;
    for y in 0..WIN {
        for x in 0..WIN {
            let (dx, dy) = (x as f64 - 5.0, y as f64 - 5.0);
            let v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            w[y * WIN + x] = v;
            wsum += v;
        }
    }
    for v in w.iter_mut() {
        *v /= wsum;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for oy in 0..=(ny - WIN) {
        for ox in 0..=(nx - WIN) {
            let (mut ma, mut mb) = (0.0, 0.0);
            let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
            for y in 0..WIN {
                for x in 0..WIN {
                    let wi = w[y * WIN + x];
                    let av = a[(oy + y) * nx + ox + x];
                    let bv = b[(oy + y) * nx + ox + x];
                    ma += wi * av;
                    mb += wi * bv;
                    saa += wi * av * av;
                    sbb += wi * bv * bv;
                    sab += wi * av * bv;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2)
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Mean reconstructed coefficient over the true contrast regions, binned by
/// the true multiplier. Empty bins are omitted.
pub fn acr(recon: &[f64], phantom: &Phantom, grid: &VoxelGrid) -> BTreeMap<u8, (f64, f64)> {
    let mut out = BTreeMap::new();
    for (m, voxels) in phantom.bins(grid) {
        if voxels.is_empty() {
            continue;
        }
        let vals: Vec<f64> = voxels.iter().map(|&i| recon[i]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        out.insert(m, (mean, var.sqrt()));
    }
    out
}

/// Per-sample metric record.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SampleMetrics {
    pub index: usize,
    /// `None` when the ground truth has no contrast region.
    pub tpr: Option<f64>,
    pub abe: f64,
    pub mse_normalized: f64,
    pub mse_physical: f64,
    pub ssim: f64,
    pub acr: BTreeMap<u8, (f64, f64)>,
}

/// Evaluates one reconstruction (physical units, full grid) against its
/// phantom.
pub fn evaluate_sample(
    index: usize,
    recon_physical: &[f64],
    phantom: &Phantom,
    grid: &VoxelGrid,
    image_divisor: f64,
) -> SampleMetrics {
    let truth = phantom.rasterize(grid);
    let recon_fg = binarize(recon_physical, grid, phantom.background);
    let truth_fg = phantom.region_mask(grid);
    let recon_norm: Vec<f64> = recon_physical.iter().map(|v| v / image_divisor).collect();
    let truth_norm: Vec<f64> = truth.iter().map(|v| v / image_divisor).collect();
    SampleMetrics {
        index,
        tpr: tpr(&recon_fg, &truth_fg),
        abe: abe(recon_physical, &truth, grid),
        mse_normalized: mse(&recon_norm, &truth_norm, grid),
        mse_physical: mse(recon_physical, &truth, grid),
        ssim: ssim(&recon_norm, &truth_norm, grid.nx, grid.ny, 1.0),
        acr: acr(recon_physical, phantom, grid),
    }
}

/// Aggregate report over a test set.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricReport {
    pub samples: Vec<SampleMetrics>,
    pub mean_tpr: f64,
    pub mean_abe: f64,
    pub mean_mse_normalized: f64,
    pub mean_mse_physical: f64,
    pub mean_ssim: f64,
    /// Per-bin (mean, std) of per-sample ACR means.
    pub acr_bins: BTreeMap<u8, (f64, f64)>,
}

impl MetricReport {
    pub fn new(samples: Vec<SampleMetrics>) -> MetricReport {
        let mean = |it: &mut dyn Iterator<Item = f64>| -> f64 {
            let v: Vec<f64> = it.collect();
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let mean_tpr = mean(&mut samples.iter().filter_map(|s| s.tpr));
        let mean_abe = mean(&mut samples.iter().map(|s| s.abe));
        let mean_mse_n = mean(&mut samples.iter().map(|s| s.mse_normalized));
        let mean_mse_p = mean(&mut samples.iter().map(|s| s.mse_physical));
        let mean_ssim = mean(&mut samples.iter().map(|s| s.ssim));
        let mut acr_bins = BTreeMap::new();
        for bin in [3u8, 4, 5] {
            let vals: Vec<f64> = samples
                .iter()
                .filter_map(|s| s.acr.get(&bin).map(|&(m, _)| m))
                .collect();
            if vals.is_empty() {
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let sd =
                (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
            acr_bins.insert(bin, (m, sd));
        }
        MetricReport {
            samples,
            mean_tpr,
            mean_abe,
            mean_mse_normalized: mean_mse_n,
            mean_mse_physical: mean_mse_p,
            mean_ssim,
            acr_bins,
        }
    }

    /// One CSV row per sample.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,tpr,abe,mse_normalized,mse_physical,ssim,acr3,acr4,acr5\n");
        for m in &self.samples {
            let bin = |b: u8| {
                m.acr
                    .get(&b)
                    .map(|&(v, _)| format!("{v:.6e}"))
                    .unwrap_or_default()
            };
            let _ = writeln!(
                s,
                "{},{},{:.6e},{:.6e},{:.6e},{:.6},{},{},{}",
                m.index,
                m.tpr.map(|t| format!("{t:.6}")).unwrap_or_default(),
                m.abe,
                m.mse_normalized,
                m.mse_physical,
                m.ssim,
                bin(3),
                bin(4),
                bin(5),
            );
        }
        s
    }

    /// Aggregate summary: ACR binned by true contrast plus mean TPR/ABE/MSE/
    /// SSIM.
    pub fn summary_text(&self, title: &str, mu_a0: f64) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "== {title} ({} samples)", self.samples.len());
        let _ = writeln!(s, "bin    GT         ACR mean    ACR std");
        for (bin, (m, sd)) in &self.acr_bins {
            let _ = writeln!(
                s,
                "{}x     {:.2e}   {:.5e}  {:.5e}",
                bin,
                *bin as f64 * mu_a0,
                m,
                sd
            );
        }
        let _ = writeln!(s, "TPR  {:.5}", self.mean_tpr);
        let _ = writeln!(s, "ABE  {:.5e}", self.mean_abe);
        let _ = writeln!(
            s,
            "MSE  {:.5e} (normalized)   {:.5e} (physical)",
            self.mean_mse_normalized, self.mean_mse_physical
        );
        let _ = writeln!(s, "SSIM {:.5}", self.mean_ssim);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_voxel_grid, DomainShape};
    use crate::phantom::Region;
    use approx::assert_relative_eq;

    fn grid() -> VoxelGrid {
        build_voxel_grid(DomainShape::default_rectangle())
    }

    fn disc_phantom(center: [f64; 2], r: f64, mult: u8) -> Phantom {
        Phantom {
            background: 0.01,
            regions: vec![Region {
                center,
                radii: [r, r],
                angle: 0.0,
                multiplier: mult,
            }],
        }
    }

    #[test]
    fn uniform_background_has_no_foreground() {
        let g = grid();
        let img = vec![0.01; g.len()];
        let fg = binarize(&img, &g, 0.01);
        assert!(fg.iter().all(|&f| !f));
    }

    #[test]
    fn two_discs_give_two_components() {
        let g = grid();
        let p = Phantom {
            background: 0.01,
            regions: vec![
                Region {
                    center: [2.5, 2.5],
                    radii: [0.8, 0.8],
                    angle: 0.0,
                    multiplier: 4,
                },
                Region {
                    center: [7.5, 2.5],
                    radii: [0.6, 0.6],
                    angle: 0.0,
                    multiplier: 3,
                },
            ],
        };
        let img = p.rasterize(&g);
        let fg = binarize(&img, &g, 0.01);
        let (_, count) = label_components(&fg, g.nx, g.ny);
        assert_eq!(count, 2);
    }

    #[test]
    fn diagonal_touch_splits_under_4_connectivity() {
        // 5x5 pattern where two blobs meet only at one diagonal voxel pair
        let nx = 5;
        let ny = 5;
        let mut mask = vec![false; nx * ny];
        for &(r, c) in &[(0usize, 0usize), (0, 1), (1, 0), (1, 1), (2, 2), (3, 2), (2, 3), (3, 3)] {
            mask[r * nx + c] = true;
        }
        let (_, count) = label_components(&mask, nx, ny);
        assert_eq!(count, 2);
    }

    #[test]
    fn tpr_perfect_empty_and_half() {
        let g = grid();
        let p = disc_phantom([5.0, 2.5], 1.0, 4);
        let truth = p.region_mask(&g);
        assert_eq!(tpr(&truth, &truth), Some(1.0));
        let nothing = vec![false; g.len()];
        assert_eq!(tpr(&nothing, &truth), Some(0.0));
        // half-disc mask: left half of the true disc
        let half: Vec<bool> = (0..g.len())
            .map(|i| truth[i] && g.center(i)[0] < 5.0)
            .collect();
        let t = tpr(&half, &truth).unwrap();
        let frac = half.iter().filter(|&&x| x).count() as f64
            / truth.iter().filter(|&&x| x).count() as f64;
        assert_relative_eq!(t, frac, max_relative = 1e-12);
        assert!((t - 0.5).abs() < 0.05);
        assert_eq!(tpr(&nothing, &nothing), None);
    }

    #[test]
    fn abe_offset_and_triangle_inequality() {
        let g = grid();
        let a = vec![0.01; g.len()];
        let b: Vec<f64> = a.iter().map(|v| v + 0.005).collect();
        assert_relative_eq!(abe(&b, &a, &g), 0.005, max_relative = 1e-12);
        let c: Vec<f64> = (0..g.len()).map(|i| 0.01 + (i % 7) as f64 * 1e-3).collect();
        let ab = abe(&a, &b, &g);
        let bc = abe(&b, &c, &g);
        let ac = abe(&a, &c, &g);
        assert!(ac <= ab + bc + 1e-15);
    }

    #[test]
    fn ssim_identity_symmetry_and_luminance_form() {
        let g = grid();
        let p = disc_phantom([4.0, 3.0], 1.0, 5);
        let a: Vec<f64> = p.rasterize(&g).iter().map(|v| v / 0.05).collect();
        assert_relative_eq!(ssim(&a, &a, g.nx, g.ny, 1.0), 1.0, epsilon = 1e-9);
        let b: Vec<f64> = a.iter().map(|v| (v * 0.8) + 0.05).collect();
        assert_relative_eq!(
            ssim(&a, &b, g.nx, g.ny, 1.0),
            ssim(&b, &a, g.nx, g.ny, 1.0),
            max_relative = 1e-12
        );
        // constant images: closed-form luminance term
        let ca = vec![0.25; g.len()];
        let cb = vec![0.75; g.len()];
        let c1 = 0.01f64.powi(2);
        let expect = (2.0 * 0.25 * 0.75 + c1) / (0.25f64.powi(2) + 0.75f64.powi(2) + c1);
        assert_relative_eq!(ssim(&ca, &cb, g.nx, g.ny, 1.0), expect, max_relative = 1e-12);
    }

    #[test]
    fn ssim_upper_bound_property() {
        let g = grid();
        let p = disc_phantom([6.0, 2.0], 0.8, 3);
        let a = p.rasterize(&g);
        for k in 0..5 {
            let b: Vec<f64> = a
                .iter()
                .enumerate()
                .map(|(i, v)| v + ((i * 31 + k * 7) % 13) as f64 * 1e-4)
                .collect();
            assert!(ssim(&a, &b, g.nx, g.ny, 1.0) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn acr_exact_on_ground_truth() {
        let g = grid();
        let p = disc_phantom([5.0, 2.5], 1.0, 3);
        let truth = p.rasterize(&g);
        let bins = acr(&truth, &p, &g);
        let (mean, std) = bins[&3];
        assert_relative_eq!(mean, 0.03, max_relative = 1e-12);
        assert!(std.abs() < 1e-15);
        // all-background reconstruction: every bin reads the background
        let flat = vec![0.01; g.len()];
        let bins = acr(&flat, &p, &g);
        assert_relative_eq!(bins[&3].0, 0.01, max_relative = 1e-12);
    }

    #[test]
    fn tpr_is_monotone_under_mask_growth() {
        let g = grid();
        let p = disc_phantom([5.0, 2.5], 1.0, 4);
        let truth = p.region_mask(&g);
        let mut mask = vec![false; g.len()];
        let mut last = 0.0;
        for i in 0..g.len() {
            if i % 3 == 0 {
                mask[i] = true;
            }
            if i % 640 == 0 {
                let t = tpr(&mask, &truth).unwrap();
                assert!(t >= last - 1e-15);
                last = t;
            }
        }
    }

    #[test]
    fn report_aggregates_and_csv() {
        let g = grid();
        let p = disc_phantom([5.0, 2.5], 1.0, 4);
        let truth = p.rasterize(&g);
        let s = evaluate_sample(0, &truth, &p, &g, 0.05);
        assert_eq!(s.tpr, Some(1.0));
        assert_eq!(s.abe, 0.0);
        let report = MetricReport::new(vec![s]);
        assert_eq!(report.mean_tpr, 1.0);
        let csv = report.to_csv();
        assert!(csv.lines().count() == 2);
        assert!(report.summary_text("test", 0.01).contains("TPR"));
    }
}
