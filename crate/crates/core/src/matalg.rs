//! Localized matrices over pairs of index sets and their localization norms.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CutoffOperator, IndexSet};
use crate::norm::{lp_norm, PNorm};

/// Stored entries below this magnitude are dropped.
pub const DROP_TOL: f64 = 1e-300;

/// A finite window `(a(λ, λ′))` of an infinite matrix indexed by `Λ × Λ′`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct LocalizedMatrix {
    rows: IndexSet,
    cols: IndexSet,
    entries: Vec<(usize, usize, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRepr {
    rows: IndexSet,
    cols: IndexSet,
    entries: Vec<(usize, usize, f64)>,
}

impl TryFrom<MatrixRepr> for LocalizedMatrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        LocalizedMatrix::new(r.rows, r.cols, r.entries)
    }
}

impl From<LocalizedMatrix> for MatrixRepr {
    fn from(m: LocalizedMatrix) -> Self {
        MatrixRepr { rows: m.rows, cols: m.cols, entries: m.entries }
    }
}

impl LocalizedMatrix {
    /// Builds a matrix from `(row position, column position, value)` triplets.
    /// Repeated positions are rejected.
    pub fn new(rows: IndexSet, cols: IndexSet, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if rows.dim() != cols.dim() {
            return Err(Error::DimensionMismatch { expected: rows.dim(), found: cols.dim() });
        }
        for &(i, j, v) in &entries {
            if i >= rows.len() || j >= cols.len() {
                return Err(Error::InvalidInput(format!(
                    "entry ({i}, {j}) outside a {}x{} window",
                    rows.len(),
                    cols.len()
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("entry ({i}, {j}) is not finite")));
            }
        }
        entries.retain(|e| e.2.abs() >= DROP_TOL);
        entries.sort_by_key(|a| (a.0, a.1));
        if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidInput(format!("entry ({}, {}) given twice", w[0].0, w[0].1)));
        }
        Ok(LocalizedMatrix { rows, cols, entries })
    }

    /// Builds `a(λ, λ′) = f(λ, λ′)` over all pairs with `‖λ − λ′‖∞ ≤ reach`.
    pub fn from_fn(
        rows: IndexSet,
        cols: IndexSet,
        reach: f64,
        f: impl Fn(&[f64], &[f64]) -> f64,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, x) in rows.points().iter().enumerate() {
            for (j, y) in cols.points().iter().enumerate() {
                if dist_inf(x, y) <= reach {
                    entries.push((i, j, f(x, y)));
                }
            }
        }
        LocalizedMatrix::new(rows, cols, entries)
    }

    pub fn identity(set: IndexSet) -> Self {
        let n = set.len();
        LocalizedMatrix { rows: set.clone(), cols: set, entries: (0..n).map(|i| (i, i, 1.0)).collect() }
    }

    pub fn diagonal(set: IndexSet, d: &[f64]) -> Result<Self> {
        if d.len() != set.len() {
            return Err(Error::IndexMismatch { expected: set.len(), found: d.len() });
        }
        let entries = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        LocalizedMatrix::new(set.clone(), set, entries)
    }

    pub fn zero(rows: IndexSet, cols: IndexSet) -> Result<Self> {
        LocalizedMatrix::new(rows, cols, Vec::new())
    }

    pub fn rows(&self) -> &IndexSet {
        &self.rows
    }

    pub fn cols(&self) -> &IndexSet {
        &self.cols
    }

    /// Stored entries sorted by `(row, column)`.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .binary_search_by(|e| (e.0, e.1).cmp(&(i, j)))
            .map(|k| self.entries[k].2)
            .unwrap_or(0.0)
    }

    fn pair_dist(&self, i: usize, j: usize) -> f64 {
        dist_inf(self.rows.point(i), self.cols.point(j))
    }

    fn offset_cell(&self, i: usize, j: usize) -> Vec<i64> {
        self.rows
            .point(i)
            .iter()
            .zip(self.cols.point(j))
            .map(|(a, b)| (a - b).floor() as i64)
            .collect()
    }

    /// Largest `‖λ − λ′‖∞` over stored entries.
    pub fn band_width(&self) -> f64 {
        self.entries.iter().map(|&(i, j, _)| self.pair_dist(i, j)).fold(0.0, f64::max)
    }

    fn with_entries(&self, entries: Vec<(usize, usize, f64)>) -> Self {
        let mut entries = entries;
        entries.retain(|e| e.2.abs() >= DROP_TOL);
        LocalizedMatrix { rows: self.rows.clone(), cols: self.cols.clone(), entries }
    }

    pub fn scale(&self, t: f64) -> Self {
        self.with_entries(self.entries.iter().map(|&(i, j, v)| (i, j, t * v)).collect())
    }

    pub fn transpose(&self) -> Self {
        let mut entries: Vec<_> = self.entries.iter().map(|&(i, j, v)| (j, i, v)).collect();
        entries.sort_by_key(|a| (a.0, a.1));
        LocalizedMatrix { rows: self.cols.clone(), cols: self.rows.clone(), entries }
    }

    /// `A + t·I` on a square window.
    pub fn add_identity(&self, t: f64) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::Precondition("identity shift needs a square window".into()));
        }
        let mut acc: BTreeMap<(usize, usize), f64> = self.entries.iter().map(|&(i, j, v)| ((i, j), v)).collect();
        for i in 0..self.rows.len() {
            *acc.entry((i, i)).or_insert(0.0) += t;
        }
        Ok(self.with_entries(acc.into_iter().map(|((i, j), v)| (i, j, v)).collect()))
    }

    /// The matrix whose row at position `i` is the row of `self` at
    /// position `perm[i]`, over the same row index set.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        let n = self.rows.len();
        let mut inv = vec![usize::MAX; n];
        if perm.len() != n {
            return Err(Error::IndexMismatch { expected: n, found: perm.len() });
        }
        for (i, &p) in perm.iter().enumerate() {
            if p >= n || inv[p] != usize::MAX {
                return Err(Error::InvalidInput("row permutation is not a bijection".into()));
            }
            inv[p] = i;
        }
        let mut entries: Vec<_> = self.entries.iter().map(|&(i, j, v)| (inv[i], j, v)).collect();
        entries.sort_by_key(|a| (a.0, a.1));
        Ok(LocalizedMatrix { rows: self.rows.clone(), cols: self.cols.clone(), entries })
    }

    /// Simultaneous permutation of rows and columns of a square window: the
    /// point lists are reordered and entries follow their points.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::Precondition("relabelling needs a square window".into()));
        }
        let n = self.rows.len();
        if perm.len() != n {
            return Err(Error::IndexMismatch { expected: n, found: perm.len() });
        }
        let mut inv = vec![usize::MAX; n];
        for (i, &p) in perm.iter().enumerate() {
            if p >= n || inv[p] != usize::MAX {
                return Err(Error::InvalidInput("permutation is not a bijection".into()));
            }
            inv[p] = i;
        }
        let pts = perm.iter().map(|&p| self.rows.point(p).to_vec()).collect();
        let set = IndexSet::new(self.rows.dim(), self.rows.window().clone(), pts)?;
        let entries = self.entries.iter().map(|&(i, j, v)| (inv[i], inv[j], v)).collect();
        LocalizedMatrix::new(set.clone(), set, entries)
    }

    /// `A·B`, requiring `cols(A) = rows(B)`.
    pub fn matmul(&self, other: &LocalizedMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Precondition("inner index sets differ".into()));
        }
        let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); other.rows.len()];
        for &(i, j, v) in &other.entries {
            by_row[i].push((j, v));
        }
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, k, a) in &self.entries {
            for &(j, b) in &by_row[k] {
                *acc.entry((i, j)).or_insert(0.0) += a * b;
            }
        }
        LocalizedMatrix::new(
            self.rows.clone(),
            other.cols.clone(),
            acc.into_iter().map(|((i, j), v)| (i, j, v)).collect(),
        )
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.cols.len());
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
        }
        m
    }

    /// Submatrix on the given row and column positions, with new index sets.
    pub fn restrict(&self, rows: IndexSet, row_pos: &[usize], cols: IndexSet, col_pos: &[usize]) -> Result<Self> {
        let mut rmap = vec![usize::MAX; self.rows.len()];
        let mut cmap = vec![usize::MAX; self.cols.len()];
        for (new, &old) in row_pos.iter().enumerate() {
            rmap[old] = new;
        }
        for (new, &old) in col_pos.iter().enumerate() {
            cmap[old] = new;
        }
        let entries = self
            .entries
            .iter()
            .filter(|&&(i, j, _)| rmap[i] != usize::MAX && cmap[j] != usize::MAX)
            .map(|&(i, j, v)| (rmap[i], cmap[j], v))
            .collect();
        LocalizedMatrix::new(rows, cols, entries)
    }

    /// Restriction to rows and columns inside the lower-corner anchored box of
    /// side `size` of each window.
    pub fn section(&self, size: f64) -> Result<Self> {
        let (rows, rp) = self.rows.section(size)?;
        let (cols, cp) = self.cols.section(size)?;
        self.restrict(rows, &rp, cols, &cp)
    }

    /// Restriction of the columns to points at depth at least `margin` inside
    /// the column window; all rows are kept.
    pub fn interior_columns(&self, margin: f64) -> Result<Self> {
        let (cols, cp) = self.cols.select(self.cols.window().clone(), |p| self.cols.depth(p) >= margin)?;
        let rp: Vec<usize> = (0..self.rows.len()).collect();
        self.restrict(self.rows.clone(), &rp, cols, &cp)
    }

    /// True when `self` is the restriction of `big` to its own point sets.
    pub fn is_section_of(&self, big: &LocalizedMatrix) -> bool {
        let map = |small: &IndexSet, large: &IndexSet| -> Option<Vec<usize>> {
            small.points().iter().map(|p| large.position(p)).collect()
        };
        let (Some(rp), Some(cp)) = (map(&self.rows, &big.rows), map(&self.cols, &big.cols)) else {
            return false;
        };
        let Ok(cut) = big.restrict(self.rows.clone(), &rp, self.cols.clone(), &cp) else {
            return false;
        };
        cut.entries == self.entries
    }

    /// Max of the largest absolute row sum and the largest absolute column sum.
    pub fn schur_norm(&self) -> f64 {
        let mut r = vec![0.0; self.rows.len()];
        let mut c = vec![0.0; self.cols.len()];
        for &(i, j, v) in &self.entries {
            r[i] += v.abs();
            c[j] += v.abs();
        }
        r.iter().chain(&c).fold(0.0, |m: f64, x| m.max(*x))
    }

    pub fn max_row_sum(&self) -> f64 {
        let mut r = vec![0.0; self.rows.len()];
        for &(i, _, v) in &self.entries {
            r[i] += v.abs();
        }
        r.into_iter().fold(0.0, f64::max)
    }

    pub fn max_col_sum(&self) -> f64 {
        let mut c = vec![0.0; self.cols.len()];
        for &(_, j, v) in &self.entries {
            c[j] += v.abs();
        }
        c.into_iter().fold(0.0, f64::max)
    }

    /// `a(k) = sup |a(λ, λ′)|` over pairs with `λ − λ′ ∈ k + [0,1)ᵈ`.
    pub fn offset_profile(&self) -> OffsetProfile {
        let mut map: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for &(i, j, v) in &self.entries {
            let e = map.entry(self.offset_cell(i, j)).or_insert(0.0);
            *e = e.max(v.abs());
        }
        OffsetProfile { dim: self.rows.dim(), cells: map }
    }

    /// `‖A‖_𝒞 = Σ_k a(k)`, summed in lexicographic order of `k`.
    pub fn sjostrand_norm(&self) -> f64 {
        self.offset_profile().total()
    }

    /// `Σ_k w(k) sup |a(j, j′)|` over pairs with `j′ − αj ∈ k + [0,1)ᵈ`.
    pub fn slant_norm(&self, alpha: f64, w: &Weight) -> Result<f64> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidInput(format!("slant parameter must be positive, got {alpha}")));
        }
        if !self.rows.is_integer_lattice() || !self.cols.is_integer_lattice() {
            return Err(Error::NonLattice);
        }
        let mut map: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for &(i, j, v) in &self.entries {
            let k: Vec<i64> = self
                .rows
                .point(i)
                .iter()
                .zip(self.cols.point(j))
                .map(|(a, b)| (b - alpha * a).floor() as i64)
                .collect();
            let e = map.entry(k).or_insert(0.0);
            *e = e.max(v.abs());
        }
        Ok(map
            .iter()
            .map(|(k, s)| {
                let x: Vec<f64> = k.iter().map(|&c| c as f64).collect();
                w.eval(&x) * s
            })
            .sum())
    }

    /// `A_s`: keeps entries with `‖λ − λ′‖∞ < s`.
    pub fn truncate(&self, s: f64) -> Self {
        self.with_entries(
            self.entries
                .iter()
                .copied()
                .filter(|&(i, j, _)| self.pair_dist(i, j) < s)
                .collect(),
        )
    }

    /// `A − A_s`.
    pub fn tail(&self, s: f64) -> Self {
        self.with_entries(
            self.entries
                .iter()
                .copied()
                .filter(|&(i, j, _)| self.pair_dist(i, j) >= s)
                .collect(),
        )
    }

    /// `(s, ‖A − A_s‖_𝒞)` for ascending `s`.
    pub fn truncation_tail(&self, s_values: &[f64]) -> Result<Vec<(f64, f64)>> {
        if s_values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidInput("truncation radii must be ascending".into()));
        }
        Ok(s_values.iter().map(|&s| (s, self.tail(s).sjostrand_norm())).collect())
    }

    /// `Ac`.
    pub fn apply(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.cols.len() {
            return Err(Error::IndexMismatch { expected: self.cols.len(), found: c.len() });
        }
        let mut y = vec![0.0; self.rows.len()];
        for &(i, j, v) in &self.entries {
            y[i] += v * c[j];
        }
        Ok(y)
    }

    /// `Aᵀy`.
    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows.len() {
            return Err(Error::IndexMismatch { expected: self.rows.len(), found: y.len() });
        }
        let mut c = vec![0.0; self.cols.len()];
        for &(i, j, v) in &self.entries {
            c[j] += v * y[i];
        }
        Ok(c)
    }

    /// `Ac` together with the ratio of `‖Ac‖_p` to the right-hand side
    /// `R(Λ)^{1/p} R(Λ′)^{1−1/p} ‖A‖_𝒞 ‖c‖_p` of the boundedness estimate.
    pub fn apply_with_bound(&self, c: &[f64], p: PNorm) -> Result<(Vec<f64>, BoundCheck)> {
        let y = self.apply(c)?;
        let r_rows = self.rows.separation_constant();
        let r_cols = self.cols.separation_constant();
        let sjostrand = self.sjostrand_norm();
        let norm_c = lp_norm(c, p);
        let norm_ac = lp_norm(&y, p);
        let rhs = (r_rows as f64).powf(p.recip()) * (r_cols as f64).powf(1.0 - p.recip()) * sjostrand * norm_c;
        let ratio = if norm_ac == 0.0 { 0.0 } else { norm_ac / rhs };
        Ok((y, BoundCheck { p, ratio, norm_c, norm_ac, r_rows, r_cols, sjostrand }))
    }

    /// `A_N Ψₙᴺ − Ψₙᴺ A_N` with `A_N` the truncation at the cutoff scale.
    pub fn commutator_with_cutoff(&self, op: &CutoffOperator) -> Result<Self> {
        let wr = op.weights(&self.rows)?;
        let wc = op.weights(&self.cols)?;
        let n = op.scale() as f64;
        Ok(self.with_entries(
            self.entries
                .iter()
                .filter(|&&(i, j, _)| self.pair_dist(i, j) < n)
                .map(|&(i, j, v)| (i, j, v * (wc[j] - wr[i])))
                .collect(),
        ))
    }

    /// `inf_{0≤s≤N} (‖A − A_s‖_𝒞 + (s/N)‖A‖_𝒞)`.
    ///
    /// The tail is constant on `(d, d′]` between consecutive pair distances,
    /// equal to the norm of the entries farther than `d`, so the infimum is
    /// approached as `s` decreases to some pair distance `d < N` (or to 0).
    pub fn commutator_bound(&self, scale: u64) -> f64 {
        let n = scale as f64;
        let total = self.sjostrand_norm();
        let mut dists: Vec<f64> = self
            .entries
            .iter()
            .map(|&(i, j, _)| self.pair_dist(i, j))
            .filter(|&d| d < n)
            .collect();
        dists.push(0.0);
        dists.sort_by(f64::total_cmp);
        dists.dedup();
        dists
            .into_iter()
            .map(|d| {
                let beyond = self.with_entries(
                    self.entries
                        .iter()
                        .copied()
                        .filter(|&(i, j, _)| self.pair_dist(i, j) > d)
                        .collect(),
                );
                beyond.sjostrand_norm() + d / n * total
            })
            .fold(total, f64::min)
    }
}

/// `‖x − y‖∞`.
pub fn dist_inf(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()))
}

/// Ratio record of the boundedness estimate for `c ↦ Ac`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub p: PNorm,
    pub ratio: f64,
    pub norm_c: f64,
    pub norm_ac: f64,
    pub r_rows: usize,
    pub r_cols: usize,
    pub sjostrand: f64,
}

/// Per-cell suprema `k ↦ a(k)` of a matrix along its diagonal offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetProfile {
    dim: usize,
    cells: BTreeMap<Vec<i64>, f64>,
}

impl OffsetProfile {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &BTreeMap<Vec<i64>, f64> {
        &self.cells
    }

    pub fn get(&self, k: &[i64]) -> f64 {
        self.cells.get(k).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.cells.values().fold(0.0, |a, v| a + v)
    }
}

#[derive(Serialize)]
struct ProfileCell<'a> {
    k: &'a [i64],
    sup: f64,
}

impl Serialize for OffsetProfile {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.cells.iter().map(|(k, &sup)| ProfileCell { k, sup }))
    }
}

/// Polynomial weight `w(x) = (1 + |x|)^s` with `|·|` the Euclidean norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Weight {
    Polynomial { s: f64 },
}

impl Weight {
    pub const TRIVIAL: Weight = Weight::Polynomial { s: 0.0 };

    pub fn polynomial(s: f64) -> Result<Self> {
        if !(s >= 0.0) {
            return Err(Error::InvalidInput(format!("weight exponent must be nonnegative, got {s}")));
        }
        Ok(Weight::Polynomial { s })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Weight::Polynomial { s } => {
                if s == 0.0 {
                    1.0
                } else {
                    (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt()).powf(s)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toeplitz131(n: i64) -> LocalizedMatrix {
        let set = IndexSet::integers(0, n).unwrap();
        LocalizedMatrix::from_fn(set.clone(), set, 1.0, |x, y| if x == y { 3.0 } else { 1.0 }).unwrap()
    }

    #[test]
    fn schur_examples() {
        let set = IndexSet::integers(0, 1).unwrap();
        let m = LocalizedMatrix::new(set.clone(), set.clone(), vec![(0, 0, 1.0), (0, 1, 2.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(m.schur_norm(), 3.0);
        assert_eq!(LocalizedMatrix::identity(set.clone()).schur_norm(), 1.0);
        assert_eq!(LocalizedMatrix::zero(set.clone(), set).unwrap().schur_norm(), 0.0);
    }

    #[test]
    fn sjostrand_examples() {
        assert_eq!(toeplitz131(1).sjostrand_norm(), 5.0);
        assert_eq!(toeplitz131(30).sjostrand_norm(), 5.0);
        let set = IndexSet::integers(0, 4).unwrap();
        assert_eq!(LocalizedMatrix::identity(set.clone()).sjostrand_norm(), 1.0);
        let d = LocalizedMatrix::diagonal(set, &[1.0, -4.0, 2.0, 0.5, 3.0]).unwrap();
        assert_eq!(d.sjostrand_norm(), 4.0);
    }

    #[test]
    fn offset_cells_are_half_open() {
        let rows = IndexSet::new(1, vec![[0.0, 2.0]], vec![vec![0.5], vec![1.0]]).unwrap();
        let cols = IndexSet::new(1, vec![[0.0, 2.0]], vec![vec![0.0]]).unwrap();
        let m = LocalizedMatrix::new(rows, cols, vec![(0, 0, 2.0), (1, 0, 3.0)]).unwrap();
        let prof = m.offset_profile();
        assert_eq!(prof.get(&[0]), 2.0);
        assert_eq!(prof.get(&[1]), 3.0);
    }

    #[test]
    fn slant_examples() {
        let t = toeplitz131(20);
        assert_eq!(t.slant_norm(1.0, &Weight::TRIVIAL).unwrap(), 5.0);
        let rows = IndexSet::integers(0, 10).unwrap();
        let cols = IndexSet::integers(0, 20).unwrap();
        let m = LocalizedMatrix::from_fn(rows, cols, 20.0, |x, y| if y[0] == 2.0 * x[0] { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(m.slant_norm(2.0, &Weight::TRIVIAL).unwrap(), 1.0);
        assert_eq!(m.scale(0.0).slant_norm(2.0, &Weight::TRIVIAL).unwrap(), 0.0);
        let w = Weight::polynomial(1.0).unwrap();
        assert_eq!(t.slant_norm(1.0, &w).unwrap(), 2.0 + 3.0 + 2.0);
        let frac = IndexSet::grid(vec![[0.0, 2.0]], 0.5).unwrap();
        assert!(matches!(
            LocalizedMatrix::identity(frac).slant_norm(1.0, &Weight::TRIVIAL),
            Err(Error::NonLattice)
        ));
    }

    #[test]
    fn truncation_examples() {
        let t = toeplitz131(10);
        let d = t.truncate(1.0);
        assert_eq!(d.nnz(), 11);
        assert!(d.entries().iter().all(|e| e.0 == e.1 && e.2 == 3.0));
        assert_eq!(t.truncate(0.0).nnz(), 0);
        assert_eq!(t.truncate(1.5), t);
        assert_eq!(t.truncate(f64::INFINITY), t);
        let tails = t.truncation_tail(&[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(tails, vec![(0.0, 5.0), (1.0, 2.0), (2.0, 0.0)]);
        assert!(t.truncation_tail(&[2.0, 1.0]).is_err());
    }

    #[test]
    fn geometric_tail() {
        let set = IndexSet::integers(-60, 60).unwrap();
        let m = LocalizedMatrix::from_fn(set.clone(), set, 60.0, |x, y| 2f64.powf(-(x[0] - y[0]).abs())).unwrap();
        for s in 1..6 {
            let tail = m.truncation_tail(&[s as f64]).unwrap()[0].1;
            let exact = 2f64.powi(2 - s);
            assert!((tail - exact).abs() < 1e-15 * 4.0 + 2f64.powi(-58));
        }
    }

    #[test]
    fn apply_examples() {
        let t = toeplitz131(9);
        let (y, check) = t.apply_with_bound(&[1.0; 10], PNorm::TWO).unwrap();
        assert!(y[1..9].iter().all(|&v| v == 5.0));
        assert_eq!(y[0], 4.0);
        assert!(check.ratio <= 1.0);
        let id = LocalizedMatrix::identity(IndexSet::integers(0, 3).unwrap());
        let c = [1.0, -2.0, 0.5, 3.0];
        let (y, check) = id.apply_with_bound(&c, PNorm::ONE).unwrap();
        assert_eq!(y, c.to_vec());
        assert_eq!(check.ratio, 1.0);
        assert!(t.apply(&[1.0]).is_err());
    }

    #[test]
    fn commutator_examples() {
        let set = IndexSet::integers(-40, 40).unwrap();
        let d = LocalizedMatrix::diagonal(set.clone(), &vec![2.0; 81]).unwrap();
        let op = CutoffOperator::new(vec![0.0], 4).unwrap();
        assert_eq!(d.commutator_with_cutoff(&op).unwrap().nnz(), 0);

        let t = LocalizedMatrix::from_fn(set.clone(), set, 1.0, |x, y| if x == y { 3.0 } else { 1.0 }).unwrap();
        for n in [4u64, 8, 16] {
            let op = CutoffOperator::new(vec![0.0], n).unwrap();
            let c = t.commutator_with_cutoff(&op).unwrap();
            assert!(c.sjostrand_norm() <= 1.0 / n as f64 * 5.0 + 1e-12);
            assert!(c.sjostrand_norm() <= 2.0 / n as f64 + 1e-12);
            assert!(t.commutator_bound(n) <= 5.0 / n as f64 + 1e-12);
        }
    }

    #[test]
    fn commutator_bound_minimises_over_s() {
        let t = toeplitz131(20);
        // Tail 2 on (0, 1] and 0 beyond, so the infimum is min(2, 5/N).
        assert!((t.commutator_bound(10) - 0.5).abs() < 1e-15);
        assert_eq!(t.commutator_bound(1), 2.0);
    }

    #[test]
    fn permutations() {
        let t = toeplitz131(5);
        let perm = [1, 0, 3, 2, 5, 4];
        let p = t.permute_rows(&perm).unwrap();
        assert_eq!(p.get(0, 0), 1.0);
        assert_eq!(p.get(0, 1), 3.0);
        let r = t.relabel(&[5, 4, 3, 2, 1, 0]).unwrap();
        assert_eq!(r.get(0, 0), 3.0);
        assert_eq!(r.rows().point(0), &[5.0]);
    }

    #[test]
    fn sections_nest() {
        let t = toeplitz131(63);
        let s = t.section(16.0).unwrap();
        assert_eq!(s.shape(), (16, 16));
        assert!(s.is_section_of(&t));
        assert!(!t.scale(2.0).section(16.0).unwrap().is_section_of(&t));
    }

    #[test]
    fn json_round_trip() {
        let t = toeplitz131(3);
        let text = serde_json::to_string(&t).unwrap();
        let back: LocalizedMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, t);
        assert!(text.contains(r#""entries":[[0,0,3.0],[0,1,1.0]"#));
    }
}
