//! Binary PGM (P5) emission with a CSV twin and a sidecar recording the
//! scaling, so previews are reproducible and machine-readable without any
//! image library.

use crate::{DotError, Result};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy)]
pub enum PgmScaling {
    /// Map [min, max] of the data to the gray range.
    MinMax,
    /// Fixed range; values clamp.
    Fixed { min: f64, max: f64 },
}

/// Writes `path.pgm` (width = nx, height = ny, row 0 on top), `path.csv`
/// (one image row per line) and `path.txt` (the scaling actually used).
pub fn write_pgm_with_csv(
    path_stem: &Path,
    values: &[f64],
    nx: usize,
    ny: usize,
    scaling: PgmScaling,
    sixteen_bit: bool,
) -> Result<()> {
    assert_eq!(values.len(), nx * ny);
    let (lo, hi) = match scaling {
        PgmScaling::Fixed { min, max } => (min, max),
        PgmScaling::MinMax => values.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), &v| (lo.min(v), hi.max(v)),
        ),
    };
    let span = (hi - lo).max(1e-300);
    let maxval: u32 = if sixteen_bit { 65_535 } else { 255 };
    let mut pgm = format!("P5\n{nx} {ny}\n{maxval}\n").into_bytes();
    for &v in values {
        let t = ((v - lo) / span).clamp(0.0, 1.0);
        let g = (t * maxval as f64).round() as u32;
        if sixteen_bit {
            pgm.extend_from_slice(&(g as u16).to_be_bytes());
        } else {
            pgm.push(g as u8);
        }
    }
    let pgm_path = path_stem.with_extension("pgm");
    std::fs::write(&pgm_path, pgm).map_err(|e| DotError::io(pgm_path.display().to_string(), e))?;

    let mut csv = String::new();
    for row in 0..ny {
        let cells: Vec<String> = (0..nx)
            .map(|c| format!("{:e}", values[row * nx + c]))
            .collect();
        let _ = writeln!(csv, "{}", cells.join(","));
    }
    let csv_path = path_stem.with_extension("csv");
    std::fs::write(&csv_path, csv).map_err(|e| DotError::io(csv_path.display().to_string(), e))?;

    let sidecar = format!(
        "scaling min {lo:e}\nscaling max {hi:e}\nmaxval {maxval}\nwidth {nx}\nheight {ny}\n"
    );
    let txt_path = path_stem.with_extension("txt");
    std::fs::write(&txt_path, sidecar).map_err(|e| DotError::io(txt_path.display().to_string(), e))?;
    Ok(())
}
