//! Certified minimum of the symbol `|â(ξ)|` of a finitely supported sequence.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

/// Grid values below this count as a zero of the symbol.
pub const SYMBOL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolVerdict {
    Stable,
    Unstable,
    /// The certified interval straddles zero without a detected zero; a finer
    /// grid may decide.
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymbolCertificate {
    pub grid_size: usize,
    pub grid_min: f64,
    pub argmin: f64,
    pub lipschitz_bound: f64,
    pub certified_min_interval: [f64; 2],
    /// Whether `â` is real (symmetric sequence) and changes sign between two
    /// adjacent grid points.
    pub sign_change: bool,
    pub verdict: SymbolVerdict,
}

/// Evaluates `â(ξ) = Σ_j a(j) e^{−ijξ}` on `ξ_k = 2πk/G`, with `a[m]` the
/// coefficient of index `j = offset + m`.
///
/// `|â|` is Lipschitz with constant `L = Σ_j |a(j)||j|`, so the true minimum
/// lies in `[min_k |â(ξ_k)| − L·h/2, min_k |â(ξ_k)|]` with `h = 2π/G`.
pub fn convolution_stability(a: &[f64], offset: i64, grid_size: usize) -> Result<SymbolCertificate> {
    if a.is_empty() {
        return Err(Error::InvalidInput("empty sequence".into()));
    }
    if grid_size < 4 * a.len() {
        return Err(Error::Precondition(format!(
            "grid of {grid_size} points is below 4x the support width {}",
            a.len()
        )));
    }
    let g = grid_size as i64;
    let coeff = |j: i64| -> f64 {
        let m = j - offset;
        if m >= 0 && (m as usize) < a.len() {
            a[m as usize]
        } else {
            0.0
        }
    };
    let symmetric = (0..a.len() as i64).all(|m| {
        let j = offset + m;
        coeff(-j) == a[m as usize]
    });
    let lipschitz_bound: f64 = a.iter().enumerate().map(|(m, v)| v.abs() * (offset + m as i64).abs() as f64).sum();

    let values: Vec<f64> = (0..g)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (m, &v) in a.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let j = offset + m as i64;
                let phase = 2.0 * PI * ((j * k).rem_euclid(g) as f64) / grid_size as f64;
                re += v * phase.cos();
                im -= v * phase.sin();
            }
            if symmetric {
                re
            } else {
                re.hypot(im)
            }
        })
        .collect();

    let (kmin, grid_min) = values
        .iter()
        .map(|v| v.abs())
        .enumerate()
        .fold((0, f64::INFINITY), |(bk, bv), (k, v)| if v < bv { (k, v) } else { (bk, bv) });
    let sign_change = symmetric
        && (0..values.len()).any(|k| {
            let next = values[(k + 1) % values.len()];
            values[k] * next < 0.0
        });
    let h = 2.0 * PI / grid_size as f64;
    let lower = grid_min - lipschitz_bound * h / 2.0;
    let verdict = if sign_change || grid_min < SYMBOL_TOL {
        SymbolVerdict::Unstable
    } else if lower > 0.0 {
        SymbolVerdict::Stable
    } else {
        SymbolVerdict::Undetermined
    };
    Ok(SymbolCertificate {
        grid_size,
        grid_min,
        argmin: kmin as f64 * h,
        lipschitz_bound,
        certified_min_interval: [lower, grid_min],
        sign_change,
        verdict,
    })
}
