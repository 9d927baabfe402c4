//! Seeded multistart descent for `min ‖Ac‖_p` over the unit `ℓᵖ` sphere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Operator;
use crate::error::{Error, Result};
use crate::norm::{lp_norm, PNorm};

pub const MULTISTART_STARTS: usize = 64;
pub const MULTISTART_MAX_ITER: usize = 5000;
const MIN_STEP: f64 = 1e-10;
const INITIAL_STEP: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct MultistartConfig {
    pub seed: u64,
    pub starts: usize,
    pub max_iter: usize,
}

impl MultistartConfig {
    pub fn with_seed(seed: u64) -> Self {
        MultistartConfig { seed, starts: MULTISTART_STARTS, max_iter: MULTISTART_MAX_ITER }
    }
}

/// A subgradient of `y ↦ ‖y‖_p` at `y ≠ 0`.
fn norm_subgradient(y: &[f64], p: PNorm) -> Vec<f64> {
    if p.is_one() {
        return y.iter().map(|v| if *v > 0.0 { 1.0 } else if *v < 0.0 { -1.0 } else { 0.0 }).collect();
    }
    if p.is_inf() {
        let mut g = vec![0.0; y.len()];
        if let Some((k, v)) = y.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())) {
            g[k] = v.signum();
        }
        return g;
    }
    let q = p.value();
    let n = lp_norm(y, p);
    if n == 0.0 {
        return vec![0.0; y.len()];
    }
    y.iter().map(|v| (v.abs() / n).powf(q - 1.0) * v.signum()).collect()
}

fn normalise(c: &mut [f64], p: PNorm) -> bool {
    let n = lp_norm(c, p);
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    c.iter_mut().for_each(|v| *v /= n);
    true
}

fn descend(op: &Operator, p: PNorm, mut c: Vec<f64>, max_iter: usize) -> f64 {
    let mut f = lp_norm(&op.apply(&c), p);
    let mut step = INITIAL_STEP;
    for _ in 0..max_iter {
        if step < MIN_STEP || f == 0.0 {
            break;
        }
        let y = op.apply(&c);
        let g = op.apply_transpose(&norm_subgradient(&y, p));
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn == 0.0 {
            break;
        }
        let mut trial: Vec<f64> = c.iter().zip(&g).map(|(x, d)| x - step * d / gn).collect();
        if !normalise(&mut trial, p) {
            step *= 0.5;
            continue;
        }
        let ft = lp_norm(&op.apply(&trial), p);
        if ft < f {
            c = trial;
            f = ft;
        } else {
            step *= 0.5;
        }
    }
    f
}

/// Smallest `‖Ac‖_p` found from `cfg.starts` seeded random starts, also
/// compared against the unit coordinate vectors. The result bounds the
/// sphere infimum from above.
pub fn minimise(op: &Operator, p: PNorm, cfg: &MultistartConfig) -> Result<f64> {
    let m = op.ncols();
    if m == 0 {
        return Err(Error::Precondition("operator has no columns".into()));
    }
    let runs: Vec<f64> = (0..cfg.starts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let mut c: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            if !normalise(&mut c, p) {
                c = vec![0.0; m];
                c[0] = 1.0;
            }
            descend(op, p, c, cfg.max_iter)
        })
        .collect();
    let mut cols = vec![Vec::new(); m];
    for &(i, j, v) in op.entries() {
        cols[j].push((i, v));
    }
    let basis = cols
        .iter()
        .map(|col| lp_norm(&col.iter().map(|e| e.1).collect::<Vec<_>>(), p))
        .fold(f64::INFINITY, f64::min);
    let best = runs.into_iter().fold(basis, f64::min);
    if !best.is_finite() {
        return Err(Error::NonConvergence("multistart descent".into()));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_small_direction() {
        // diag(3, 1, 2) attains its minimum 1 at e_2.
        let op = Operator::new(3, 3, vec![(0, 0, 3.0), (1, 1, 1.0), (2, 2, 2.0)]).unwrap();
        for p in [PNorm::ONE, PNorm::new(1.5).unwrap(), PNorm::new(4.0).unwrap(), PNorm::INF] {
            let v = minimise(&op, p, &MultistartConfig::with_seed(11)).unwrap();
            assert!((v - 1.0).abs() < 1e-6, "{p}: {v}");
        }
    }

    #[test]
    fn deterministic() {
        let op = Operator::new(2, 2, vec![(0, 0, 1.0), (0, 1, 0.3), (1, 0, -0.7), (1, 1, 2.0)]).unwrap();
        let p = PNorm::new(3.0).unwrap();
        let cfg = MultistartConfig::with_seed(5);
        assert_eq!(minimise(&op, p, &cfg).unwrap(), minimise(&op, p, &cfg).unwrap());
    }
}
