//! Finite windows of relatively-separated index sets, the plateau cutoff
//! `ψ` and the multiplication operators `Ψₙᴺ`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates closer than this on every axis identify the same point.
pub const POINT_TOL: f64 = 1e-12;

/// Closed axis-aligned box `∏ [lo_i, hi_i]`.
pub type Window = Vec<[f64; 2]>;

/// A finite window of a relatively-separated set `Λ ⊂ ℝᵈ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "IndexSetRepr", into = "IndexSetRepr")]
pub struct IndexSet {
    dim: usize,
    window: Window,
    points: Vec<Vec<f64>>,
    separation: OnceLock<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexSetRepr {
    dim: usize,
    window: Window,
    points: Vec<Vec<f64>>,
}

impl TryFrom<IndexSetRepr> for IndexSet {
    type Error = Error;

    fn try_from(r: IndexSetRepr) -> Result<Self> {
        IndexSet::new(r.dim, r.window, r.points)
    }
}

impl From<IndexSet> for IndexSetRepr {
    fn from(s: IndexSet) -> Self {
        IndexSetRepr { dim: s.dim, window: s.window, points: s.points }
    }
}

impl PartialEq for IndexSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.window == other.window && self.points == other.points
    }
}

impl IndexSet {
    pub fn new(dim: usize, window: Window, points: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if window.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: window.len() });
        }
        for &[lo, hi] in &window {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidInput(format!("bad window side [{lo}, {hi}]")));
            }
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite point {p:?}")));
            }
            if !inside(&window, p) {
                return Err(Error::Invariant(format!("point {p:?} lies outside the window")));
            }
        }
        check_distinct(&points)?;
        Ok(IndexSet { dim, window, points, separation: OnceLock::new() })
    }

    /// The points `step·k`, `k ∈ ℤᵈ`, inside the closed box `window`, in
    /// lexicographic order with the last axis varying fastest.
    pub fn grid(window: Window, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidInput(format!("grid step must be positive, got {step}")));
        }
        let axes: Vec<Vec<f64>> = window
            .iter()
            .map(|&[lo, hi]| {
                let k0 = (lo / step - POINT_TOL).ceil() as i64;
                let k1 = (hi / step + POINT_TOL).floor() as i64;
                (k0..=k1).map(|k| k as f64 * step).filter(|x| *x >= lo && *x <= hi).collect()
            })
            .collect();
        let dim = window.len();
        IndexSet::new(dim, window, cartesian(&axes))
    }

    /// `{lo, lo+1, …, hi} ⊂ ℤ` with window `[lo, hi]`.
    pub fn integers(lo: i64, hi: i64) -> Result<Self> {
        IndexSet::grid(vec![[lo as f64, hi as f64]], 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `R(Λ)`, cached after the first call.
    pub fn separation_constant(&self) -> usize {
        *self.separation.get_or_init(|| separation_constant(&self.points))
    }

    /// True when every coordinate of every point is an integer.
    pub fn is_integer_lattice(&self) -> bool {
        self.points.iter().flatten().all(|x| x.fract() == 0.0)
    }

    /// Position of `x` in the point list.
    pub fn position(&self, x: &[f64]) -> Option<usize> {
        self.points
            .iter()
            .position(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() <= POINT_TOL))
    }

    /// Subset of the points selected by `keep`, with a new window. Returns the
    /// kept positions alongside.
    pub fn select(&self, window: Window, keep: impl Fn(&[f64]) -> bool) -> Result<(Self, Vec<usize>)> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.points[i])).collect();
        let pts = idx.iter().map(|&i| self.points[i].clone()).collect();
        Ok((IndexSet::new(self.dim, window, pts)?, idx))
    }

    /// The points inside the half-open box `lo + [0, size)ᵈ` anchored at the
    /// lower corner of the window.
    pub fn section(&self, size: f64) -> Result<(Self, Vec<usize>)> {
        let lo: Vec<f64> = self.window.iter().map(|w| w[0]).collect();
        let window: Window = self
            .window
            .iter()
            .map(|&[a, b]| [a, b.min(a + size)])
            .collect();
        self.select(window, |p| p.iter().zip(&lo).all(|(x, l)| *x - *l < size))
    }

    /// Distance from `x` to the nearest face of the window.
    pub fn depth(&self, x: &[f64]) -> f64 {
        self.window
            .iter()
            .zip(x)
            .map(|(&[lo, hi], &c)| (c - lo).min(hi - c))
            .fold(f64::INFINITY, f64::min)
    }
}

fn inside(window: &Window, p: &[f64]) -> bool {
    window.iter().zip(p).all(|(&[lo, hi], &x)| x >= lo && x <= hi)
}

fn check_distinct(points: &[Vec<f64>]) -> Result<()> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
    for (n, &i) in order.iter().enumerate() {
        for &j in &order[n + 1..] {
            if points[j][0] - points[i][0] > POINT_TOL {
                break;
            }
            if points[i].iter().zip(&points[j]).all(|(a, b)| (a - b).abs() <= POINT_TOL) {
                return Err(Error::Invariant(format!("duplicate point {:?}", points[i])));
            }
        }
    }
    Ok(())
}

pub(crate) fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &x in axis {
                let mut p = prefix.clone();
                p.push(x);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// `R(Λ) = max_x #{λ : x ∈ λ + [0,1)ᵈ}`.
///
/// A maximising `x` can be taken with every coordinate equal to a coordinate
/// of some point, so the sweep visits those candidates axis by axis, keeping
/// only the points whose cube still covers the partial candidate.
pub fn separation_constant(points: &[Vec<f64>]) -> usize {
    if points.is_empty() {
        return 0;
    }
    let all: Vec<usize> = (0..points.len()).collect();
    let mut best = 0;
    sweep(points, &all, 0, &mut best);
    best
}

fn sweep(points: &[Vec<f64>], active: &[usize], axis: usize, best: &mut usize) {
    if active.len() <= *best {
        return;
    }
    if axis == points[active[0]].len() {
        *best = active.len();
        return;
    }
    let mut sorted = active.to_vec();
    sorted.sort_by(|&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let mut start = 0;
    for end in 0..sorted.len() {
        let t = points[sorted[end]][axis];
        if end + 1 < sorted.len() && points[sorted[end + 1]][axis] == t {
            continue;
        }
        while t - points[sorted[start]][axis] >= 1.0 {
            start += 1;
        }
        sweep(points, &sorted[start..=end], axis + 1, best);
    }
}

/// `ψ(x) = min(max(2 − ‖x‖∞, 0), 1)`.
pub fn cutoff_psi(x: &[f64]) -> f64 {
    let m = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    (2.0 - m).clamp(0.0, 1.0)
}

/// The multiplication operator `Ψₙᴺ c = (ψ((λ − n)/N) c(λ))_λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffOperator {
    center: Vec<f64>,
    scale: u64,
}

impl CutoffOperator {
    /// `center` must have coordinates in `Nℤ`.
    pub fn new(center: Vec<f64>, scale: u64) -> Result<Self> {
        if scale == 0 {
            return Err(Error::InvalidInput("cutoff scale must be positive".into()));
        }
        let n = scale as f64;
        if center.iter().any(|c| (c / n).fract() != 0.0) {
            return Err(Error::InvalidInput(format!("cutoff center {center:?} is not in {scale}Z^d")));
        }
        Ok(CutoffOperator { center, scale })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn weight(&self, x: &[f64]) -> f64 {
        let n = self.scale as f64;
        let u: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| (a - c) / n).collect();
        cutoff_psi(&u)
    }

    /// Weights `ψ((λ − n)/N)` over the points of `target`.
    pub fn weights(&self, target: &IndexSet) -> Result<Vec<f64>> {
        if target.dim() != self.center.len() {
            return Err(Error::DimensionMismatch { expected: self.center.len(), found: target.dim() });
        }
        Ok(target.points().iter().map(|p| self.weight(p)).collect())
    }

    pub fn apply(&self, target: &IndexSet, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != target.len() {
            return Err(Error::IndexMismatch { expected: target.len(), found: c.len() });
        }
        Ok(self.weights(target)?.iter().zip(c).map(|(w, v)| w * v).collect())
    }
}

/// Outcome of probing `Σ_{n ∈ Nℤᵈ} ψ((x − n)/N)²` at sample points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionReport {
    pub min: f64,
    pub max: f64,
    pub violations: Vec<PartitionViolation>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionViolation {
    pub point: Vec<f64>,
    pub value: f64,
}

/// `Σ_{k ∈ ℤᵈ} ψ(u − k)²`, summing over the at most `4ᵈ` integers within
/// `‖·‖∞`-distance 2 of `u`.
pub fn psi_square_sum(u: &[f64]) -> f64 {
    let axes: Vec<Vec<f64>> = u
        .iter()
        .map(|&x| {
            let k0 = (x - 2.0).floor() as i64;
            (k0..=k0 + 4).map(|k| k as f64).filter(|k| (x - k).abs() < 2.0).collect()
        })
        .collect();
    cartesian(&axes)
        .iter()
        .map(|k| {
            let d: Vec<f64> = u.iter().zip(k).map(|(a, b)| a - b).collect();
            cutoff_psi(&d).powi(2)
        })
        .sum()
}

pub fn cutoff_partition_check(scale: u64, sample_points: &[Vec<f64>]) -> Result<PartitionReport> {
    if scale == 0 {
        return Err(Error::InvalidInput("cutoff scale must be positive".into()));
    }
    let n = scale as f64;
    let mut report = PartitionReport { min: f64::INFINITY, max: f64::NEG_INFINITY, violations: vec![] };
    for x in sample_points {
        let u: Vec<f64> = x.iter().map(|v| v / n).collect();
        let s = psi_square_sum(&u);
        let d = x.len() as i32;
        report.min = report.min.min(s);
        report.max = report.max.max(s);
        if s < 2f64.powi(d) || s > 4f64.powi(d) {
            report.violations.push(PartitionViolation { point: x.clone(), value: s });
        }
    }
    Ok(report)
}
