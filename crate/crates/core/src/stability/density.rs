//! Counting condition relating the density of `Λ` near a box to that of `Λ′`
//! inside it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{IndexSet, Window};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityVerdict {
    pub window: Window,
    /// `|Λ ∩ B(K, R₀)|`.
    pub rows_near: usize,
    /// `|Λ′ ∩ K|`.
    pub cols_inside: usize,
    pub pass: bool,
}

fn dist_to_box(x: &[f64], k: &Window) -> f64 {
    k.iter()
        .zip(x)
        .map(|(&[lo, hi], &v)| if v < lo { lo - v } else if v > hi { v - hi } else { 0.0 })
        .map(|d| d * d)
        .sum::<f64>()
        .sqrt()
}

/// For each closed box `K`, compares `|Λ ∩ B(K, R₀)|` with `|Λ′ ∩ K|`, where
/// `B(K, R₀)` holds the points at Euclidean distance below `R₀` from `K`. A
/// failing box rules out `ℓᵖ`-stability of every matrix in the class over
/// `Λ × Λ′` with that `R₀`.
pub fn density_check(rows: &IndexSet, cols: &IndexSet, r0: f64, boxes: &[Window]) -> Result<Vec<DensityVerdict>> {
    if !(r0 > 0.0) {
        return Err(Error::InvalidInput(format!("R0 must be positive, got {r0}")));
    }
    if rows.dim() != cols.dim() {
        return Err(Error::DimensionMismatch { expected: rows.dim(), found: cols.dim() });
    }
    boxes
        .iter()
        .map(|k| {
            if k.len() != rows.dim() {
                return Err(Error::DimensionMismatch { expected: rows.dim(), found: k.len() });
            }
            let rows_near = rows.points().iter().filter(|x| dist_to_box(x, k) < r0).count();
            let cols_inside = cols.points().iter().filter(|x| dist_to_box(x, k) == 0.0).count();
            Ok(DensityVerdict { window: k.clone(), rows_near, cols_inside, pass: rows_near >= cols_inside })
        })
        .collect()
}
