//! Piecewise-constant functions on dyadic cells and the projections `Pₙ`.

use serde::{Deserialize, Serialize};

use super::profile::TensorProfile;
use crate::error::{Error, Result};
use crate::norm::{lp_norm, PNorm};

/// `Σ_k v_k χ_{2^{−m}(k + [0,1)ᵈ)}` over a box of cell indices
/// `origin + [0, shape)`, stored with the last axis varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicFunction {
    level: u32,
    origin: Vec<i64>,
    shape: Vec<usize>,
    values: Vec<f64>,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for i in (0..shape.len()).rev() {
        idx[i] = flat % shape[i];
        flat /= shape[i];
    }
    idx
}

impl DyadicFunction {
    pub fn new(level: u32, origin: Vec<i64>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if origin.is_empty() || origin.len() != shape.len() {
            return Err(Error::DimensionMismatch { expected: origin.len().max(1), found: shape.len() });
        }
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::IndexMismatch { expected: n, found: values.len() });
        }
        Ok(DyadicFunction { level, origin, shape, values })
    }

    pub fn zeros(level: u32, origin: Vec<i64>, shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        DyadicFunction::new(level, origin, shape, vec![0.0; n])
    }

    /// Exact cell averages `Pₘf` of a tensor profile over the cells with
    /// indices in `[lo, hi)` on each axis.
    pub fn from_profile(f: &TensorProfile, level: u32, lo: &[i64], hi: &[i64]) -> Result<Self> {
        f.check_dim(lo.len())?;
        let shape: Vec<usize> = lo.iter().zip(hi).map(|(a, b)| (b - a).max(0) as usize).collect();
        let h = 0.5f64.powi(level as i32);
        let per_axis: Vec<Vec<f64>> = (0..lo.len())
            .map(|i| {
                (0..shape[i])
                    .map(|k| {
                        let a = (lo[i] + k as i64) as f64 * h;
                        f.factor(i).average(a, a + h)
                    })
                    .collect()
            })
            .collect();
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|flat| unravel(flat, &shape).iter().enumerate().map(|(i, &k)| per_axis[i][k]).product())
            .collect();
        DyadicFunction::new(level, lo.to_vec(), shape, values)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn origin(&self) -> &[i64] {
        &self.origin
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn cell_size(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    /// Cell index of the flat position.
    pub fn cell(&self, flat: usize) -> Vec<i64> {
        unravel(flat, &self.shape).iter().zip(&self.origin).map(|(&k, &o)| o + k as i64).collect()
    }

    pub fn value_at_cell(&self, k: &[i64]) -> f64 {
        let st = strides(&self.shape);
        let mut flat = 0;
        for i in 0..k.len() {
            let off = k[i] - self.origin[i];
            if off < 0 || off as usize >= self.shape[i] {
                return 0.0;
            }
            flat += off as usize * st[i];
        }
        self.values[flat]
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let h = self.cell_size();
        let k: Vec<i64> = x.iter().map(|v| (v / h).floor() as i64).collect();
        self.value_at_cell(&k)
    }

    /// `‖f‖_p = 2^{−md/p} ‖v‖_p`.
    pub fn lp_norm(&self, p: PNorm) -> f64 {
        let scale = self.cell_size().powf(self.dim() as f64 * p.recip());
        lp_norm(&self.values, p) * scale
    }

    /// `Pₙf` for `n ≤ m`: averages over blocks of `2^{m−n}` cells per axis.
    /// The flag reports whether the box had to be padded with zero cells to
    /// cover whole blocks.
    pub fn project(&self, n: u32) -> Result<(Self, bool)> {
        if n > self.level {
            return Err(Error::InvalidInput(format!("cannot project level {} onto finer level {n}", self.level)));
        }
        let b = 1i64 << (self.level - n);
        let lo: Vec<i64> = self.origin.iter().map(|o| o.div_euclid(b)).collect();
        let hi: Vec<i64> = self
            .origin
            .iter()
            .zip(&self.shape)
            .map(|(o, &s)| (o + s as i64 - 1).div_euclid(b) + 1)
            .collect();
        let padded = self
            .origin
            .iter()
            .zip(&self.shape)
            .any(|(o, &s)| o.rem_euclid(b) != 0 || (o + s as i64).rem_euclid(b) != 0);
        let shape: Vec<usize> = lo.iter().zip(&hi).map(|(a, c)| (c - a) as usize).collect();
        let st = strides(&shape);
        let mut values = vec![0.0; shape.iter().product()];
        let denom = (b as f64).powi(self.dim() as i32);
        for (flat, &v) in self.values.iter().enumerate() {
            let k = self.cell(flat);
            let pos: usize = k.iter().zip(&lo).zip(&st).map(|((c, l), s)| (c.div_euclid(b) - l) as usize * s).sum();
            values[pos] += v / denom;
        }
        Ok((DyadicFunction::new(n, lo, shape, values)?, padded))
    }

    /// The same function written on the finer level `m′ ≥ m`.
    pub fn refine(&self, level: u32) -> Result<Self> {
        if level < self.level {
            return Err(Error::InvalidInput(format!("cannot refine level {} to coarser level {level}", self.level)));
        }
        let b = 1i64 << (level - self.level);
        let origin: Vec<i64> = self.origin.iter().map(|o| o * b).collect();
        let shape: Vec<usize> = self.shape.iter().map(|s| s * b as usize).collect();
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|flat| {
                let k: Vec<i64> =
                    unravel(flat, &shape).iter().zip(&origin).map(|(&i, &o)| (o + i as i64).div_euclid(b)).collect();
                self.value_at_cell(&k)
            })
            .collect();
        DyadicFunction::new(level, origin, shape, values)
    }

    /// `self − other` over the union of both boxes, at a common level.
    pub fn sub(&self, other: &DyadicFunction) -> Result<Self> {
        if self.level != other.level || self.dim() != other.dim() {
            return Err(Error::InvalidInput("difference needs equal levels and dimensions".into()));
        }
        let lo: Vec<i64> = self.origin.iter().zip(&other.origin).map(|(a, b)| *a.min(b)).collect();
        let hi: Vec<i64> = (0..self.dim())
            .map(|i| (self.origin[i] + self.shape[i] as i64).max(other.origin[i] + other.shape[i] as i64))
            .collect();
        let shape: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| (b - a) as usize).collect();
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|flat| {
                let k: Vec<i64> = unravel(flat, &shape).iter().zip(&lo).map(|(&i, &o)| o + i as i64).collect();
                self.value_at_cell(&k) - other.value_at_cell(&k)
            })
            .collect();
        DyadicFunction::new(self.level, lo, shape, values)
    }

    pub fn scale(&self, t: f64) -> Self {
        DyadicFunction { values: self.values.iter().map(|v| v * t).collect(), ..self.clone() }
    }
}
