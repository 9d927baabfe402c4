//! Lower and upper `ℓᵖ`-stability constants of finite windows, the cross-`p`
//! equivalence report, the convolution symbol test, inverse off-diagonal
//! decay and the density condition.

mod decay;
mod density;
mod lp;
mod multistart;
mod report;
mod symbol;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matalg::LocalizedMatrix;
use crate::norm::PNorm;

pub use decay::{inverse_decay_profile, DecayFit};
pub use density::{density_check, DensityVerdict};
pub use multistart::{minimise as multistart_minimum, MultistartConfig, MULTISTART_MAX_ITER, MULTISTART_STARTS};
pub use report::{
    classify, equivalence_report, EquivalenceConfig, EquivalenceReport, ReportEntry, StabilityReport, Trend,
};
pub use symbol::{convolution_stability, SymbolCertificate, SymbolVerdict, SYMBOL_TOL};

/// Exact orthant/face enumeration is used up to this many columns.
pub const LP_MAX_COLS: usize = 14;

/// How an estimate was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Singular values from a dense eigen or singular value decomposition.
    Spectral,
    /// One linear program per sign orthant (`p = 1`) or face (`p = ∞`).
    OrthantLp,
    /// `1 / ‖A⁻¹‖_p` for square windows at `p ∈ {1, ∞}`.
    InverseNorm,
    /// Seeded multistart descent on the unit sphere; an upper bound on the
    /// infimum only.
    Multistart,
    /// Maximal absolute column (`p = 1`) or row (`p = ∞`) sum.
    SchurBound,
    /// Riesz–Thorin bound from the `p ∈ {1, 2, ∞}` norms.
    Interpolation,
}

/// A stability constant estimate with its provenance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub certified: bool,
    pub method: Method,
}

impl Estimate {
    pub fn scaled(self, t: f64) -> Self {
        Estimate { value: self.value * t, ..self }
    }
}

/// A real sparse operator `ℝᵐ → ℝⁿ`, the common input of the estimators.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Operator {
    pub fn new(nrows: usize, ncols: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| e.0 >= nrows || e.1 >= ncols) {
            return Err(Error::InvalidInput(format!("entry ({}, {}) outside a {nrows}x{ncols} operator", e.0, e.1)));
        }
        Ok(Operator { nrows, ncols, entries })
    }

    pub fn from_matrix(a: &LocalizedMatrix) -> Self {
        let (nrows, ncols) = a.shape();
        Operator { nrows, ncols, entries: a.entries().to_vec() }
    }

    /// Side-by-side concatenation of blocks sharing the row index set.
    pub fn hstack(blocks: &[LocalizedMatrix]) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::InvalidInput("no blocks to stack".into()));
        };
        let mut entries = Vec::new();
        let mut offset = 0;
        for b in blocks {
            if b.rows() != first.rows() {
                return Err(Error::Precondition("stacked blocks must share their rows".into()));
            }
            entries.extend(b.entries().iter().map(|&(i, j, v)| (i, j + offset, v)));
            offset += b.cols().len();
        }
        Ok(Operator { nrows: first.rows().len(), ncols: offset, entries })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for &(i, j, v) in &self.entries {
            y[i] += v * c[j];
        }
        y
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.ncols];
        for &(i, j, v) in &self.entries {
            c[j] += v * y[i];
        }
        c
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    /// `AᵀA`, accumulated column by column from the sparse entries.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.nrows];
        for &(i, j, v) in &self.entries {
            by_row[i].push((j, v));
        }
        let mut g = DMatrix::zeros(self.ncols, self.ncols);
        for row in &by_row {
            for &(j, a) in row {
                for &(k, b) in row {
                    g[(j, k)] += a * b;
                }
            }
        }
        g
    }

    pub fn max_col_sum(&self) -> f64 {
        let mut c = vec![0.0; self.ncols];
        for &(_, j, v) in &self.entries {
            c[j] += v.abs();
        }
        c.into_iter().fold(0.0, f64::max)
    }

    pub fn max_row_sum(&self) -> f64 {
        let mut r = vec![0.0; self.nrows];
        for &(i, _, v) in &self.entries {
            r[i] += v.abs();
        }
        r.into_iter().fold(0.0, f64::max)
    }

    fn check_nonzero(&self) -> Result<()> {
        if self.nrows == 0 || self.ncols == 0 {
            return Err(Error::Precondition("operator has an empty side".into()));
        }
        if self.entries.iter().all(|e| e.2 == 0.0) {
            return Err(Error::Precondition("operator is zero".into()));
        }
        Ok(())
    }
}

/// Extreme singular values `(σ_min, σ_max)` of the operator.
pub fn singular_range(op: &Operator) -> Result<(f64, f64)> {
    if op.nrows > 2 * op.ncols {
        let g = op.gram();
        let eig = g.symmetric_eigenvalues();
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
        let hi = eig.iter().copied().fold(0.0, f64::max);
        return Ok((lo.sqrt(), hi.sqrt()));
    }
    let a = op.to_dense();
    if a.is_square() && a == a.transpose() {
        let eig = a.symmetric_eigenvalues();
        let lo = eig.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        let hi = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
        return Ok((lo, hi));
    }
    let svd = a
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::NonConvergence("singular value decomposition".into()))?;
    let s = &svd.singular_values;
    let lo = if op.nrows < op.ncols { 0.0 } else { s.iter().copied().fold(f64::INFINITY, f64::min) };
    Ok((lo, s.iter().copied().fold(0.0, f64::max)))
}

/// `inf_{c ≠ 0} ‖Ac‖_p / ‖c‖_p` on the window.
pub fn lower_constant(a: &LocalizedMatrix, p: PNorm, seed: Option<u64>) -> Result<Estimate> {
    lower_constant_op(&Operator::from_matrix(a), p, seed)
}

pub fn lower_constant_op(op: &Operator, p: PNorm, seed: Option<u64>) -> Result<Estimate> {
    op.check_nonzero()?;
    if op.nrows < op.ncols {
        return Err(Error::Precondition(format!(
            "lower constant needs at least as many rows as columns, got {}x{}",
            op.nrows, op.ncols
        )));
    }
    if p.is_two() {
        let (lo, _) = singular_range(op)?;
        return Ok(Estimate { value: lo, certified: true, method: Method::Spectral });
    }
    if p.is_one() || p.is_inf() {
        if op.ncols <= LP_MAX_COLS {
            let value = if p.is_one() { lp::min_l1(op)? } else { lp::min_linf(op)? };
            return Ok(Estimate { value, certified: true, method: Method::OrthantLp });
        }
        if op.nrows == op.ncols {
            let value = match op.to_dense().lu().try_inverse() {
                None => 0.0,
                Some(inv) => {
                    let inv = Operator::from_dense(&inv);
                    1.0 / if p.is_one() { inv.max_col_sum() } else { inv.max_row_sum() }
                }
            };
            return Ok(Estimate { value, certified: true, method: Method::InverseNorm });
        }
    }
    let seed = seed.ok_or(Error::MissingSeed)?;
    let value = multistart::minimise(op, p, &MultistartConfig::with_seed(seed))?;
    Ok(Estimate { value, certified: false, method: Method::Multistart })
}

/// `sup_{c ≠ 0} ‖Ac‖_p / ‖c‖_p`, exact at `p ∈ {1, 2, ∞}` and a
/// Riesz–Thorin upper bound otherwise.
pub fn upper_constant(a: &LocalizedMatrix, p: PNorm) -> Result<Estimate> {
    upper_constant_op(&Operator::from_matrix(a), p)
}

pub fn upper_constant_op(op: &Operator, p: PNorm) -> Result<Estimate> {
    op.check_nonzero()?;
    if p.is_one() {
        return Ok(Estimate { value: op.max_col_sum(), certified: true, method: Method::SchurBound });
    }
    if p.is_inf() {
        return Ok(Estimate { value: op.max_row_sum(), certified: true, method: Method::SchurBound });
    }
    let (_, s2) = singular_range(op)?;
    if p.is_two() {
        return Ok(Estimate { value: s2, certified: true, method: Method::Spectral });
    }
    let (n1, ninf) = (op.max_col_sum(), op.max_row_sum());
    let q = p.recip();
    let mut bound = n1.powf(q) * ninf.powf(1.0 - q);
    if p.value() < 2.0 {
        bound = bound.min(n1.powf(2.0 * q - 1.0) * s2.powf(2.0 - 2.0 * q));
    } else {
        bound = bound.min(s2.powf(2.0 * q) * ninf.powf(1.0 - 2.0 * q));
    }
    Ok(Estimate { value: bound, certified: true, method: Method::Interpolation })
}

impl Operator {
    fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != 0.0 {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Operator { nrows: m.nrows(), ncols: m.ncols(), entries }
    }
}
