//! Off-diagonal decay of the inverse of a finite window.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matalg::{LocalizedMatrix, OffsetProfile};

/// Windows with `‖A‖₁‖A⁻¹‖₁` at or above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;
/// Profile values at or below this are excluded from the fit.
pub const FIT_FLOOR: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    /// Offset profile of the inverse over the interior rows.
    pub profile: OffsetProfile,
    /// `r` in `profile[k] ≈ c·r^{‖k‖∞}`.
    pub rate: f64,
    pub log_amplitude: f64,
    /// Root mean square residual of the log-linear fit.
    pub residual: f64,
    pub usable_offsets: usize,
    pub condition: f64,
}

pub fn inverse_decay_profile(a: &LocalizedMatrix, margin: f64) -> Result<DecayFit> {
    if !a.is_square() {
        return Err(Error::Precondition("inverse decay needs a square window".into()));
    }
    if a.rows().is_empty() {
        return Err(Error::Precondition("empty window".into()));
    }
    let dense = a.to_dense();
    let inv = dense.clone().lu().try_inverse().ok_or(Error::Singular)?;
    let norm1 = |m: &nalgebra::DMatrix<f64>| {
        m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    };
    let condition = norm1(&dense) * norm1(&inv);
    if !condition.is_finite() || condition >= MAX_CONDITION {
        return Err(Error::IllConditioned(condition));
    }
    let rows = a.rows();
    let interior: Vec<usize> = (0..rows.len()).filter(|&i| rows.depth(rows.point(i)) >= margin).collect();
    if interior.is_empty() {
        return Err(Error::Precondition(format!("no rows at depth {margin} inside the window")));
    }
    let n = rows.len();
    let mut entries = Vec::new();
    for &i in &interior {
        for j in 0..n {
            entries.push((i, j, inv[(i, j)]));
        }
    }
    let restricted = LocalizedMatrix::new(rows.clone(), a.cols().clone(), entries)?;
    let profile = restricted.offset_profile();

    let pts: Vec<(f64, f64)> = profile
        .cells()
        .iter()
        .filter(|(_, &v)| v > FIT_FLOOR)
        .map(|(k, &v)| (k.iter().map(|c| c.abs()).max().unwrap_or(0) as f64, v.ln()))
        .collect();
    let usable = pts.len();
    if pts.iter().all(|p| p.0 == 0.0) {
        let amp = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        return Ok(DecayFit { profile, rate: 0.0, log_amplitude: amp, residual: 0.0, usable_offsets: usable, condition });
    }
    if usable < 4 {
        return Err(Error::InsufficientFit(usable));
    }
    let m = usable as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / m).sqrt();
    Ok(DecayFit { profile, rate: slope.exp(), log_amplitude: intercept, residual, usable_offsets: usable, condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::IndexSet;

    #[test]
    fn identity_profile() {
        let id = LocalizedMatrix::identity(IndexSet::integers(0, 20).unwrap());
        let fit = inverse_decay_profile(&id, 5.0).unwrap();
        assert_eq!(fit.profile.cells().len(), 1);
        assert_eq!(fit.profile.get(&[0]), 1.0);
        assert_eq!(fit.rate, 0.0);
    }

    #[test]
    fn diagonal_two() {
        let set = IndexSet::integers(0, 20).unwrap();
        let d = LocalizedMatrix::diagonal(set, &[2.0; 21]).unwrap();
        let fit = inverse_decay_profile(&d, 5.0).unwrap();
        assert_eq!(fit.profile.get(&[0]), 0.5);
        assert_eq!(fit.profile.cells().len(), 1);
    }

    #[test]
    fn toeplitz_rate() {
        let set = IndexSet::integers(0, 100).unwrap();
        let t = LocalizedMatrix::from_fn(set.clone(), set, 1.0, |x, y| if x == y { 3.0 } else { 1.0 }).unwrap();
        let fit = inverse_decay_profile(&t, 25.0).unwrap();
        let r = (3.0 - 5f64.sqrt()) / 2.0;
        assert!((fit.rate - r).abs() < 0.01, "{}", fit.rate);
    }

    #[test]
    fn singular_window() {
        let set = IndexSet::integers(0, 3).unwrap();
        let m = LocalizedMatrix::from_fn(set.clone(), set, 5.0, |_, _| 1.0).unwrap();
        assert!(inverse_decay_profile(&m, 1.0).is_err());
    }
}
