//! Integral operators `Tf(x) = ∫ K(x, y) f(y) dy` with enveloped kernels,
//! their cell-average discretization `Aₙ`, discretization error curves and
//! the stability of `I + 2^{−nd}Aₙ`.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{cartesian, IndexSet, Window};
use crate::matalg::LocalizedMatrix;
use crate::norm::PNorm;
use crate::quadrature::{adaptive_gl8, gl8};
use crate::stability::{
    classify, convolution_stability, lower_constant, upper_constant, EquivalenceConfig, ReportEntry, StabilityReport,
    SymbolCertificate, Trend,
};
use crate::synthesis::dyadic::DyadicFunction;
use crate::synthesis::family::probe_grid;
use crate::synthesis::profile::{Profile1D, TensorProfile};

/// Kernel values below this level are omitted.
pub const KERNEL_EPS: f64 = 1e-16;
/// Per-entry tolerance for quadrature of non-polynomial kernels.
pub const QUAD_TOL: f64 = 1e-12;
/// Finest level the error curve references beyond the requested one.
pub const REFERENCE_OFFSET: u32 = 3;
const HYPOTHESIS_SLACK: f64 = 1e-12;
/// Samples per unit cell for the sampled suprema in the hypothesis checks.
const SAMPLES_PER_CELL: usize = 64;
const DIRECT_CONV_LIMIT: usize = 1 << 14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelRule {
    /// `K(x, y) = g(x − y)`.
    Convolution { g: TensorProfile },
    /// `K(x, y) = u(x) v(y)`, `d = 1`.
    Separable { u: Profile1D, v: Profile1D },
    /// `K(x, y) = values[i][j]` on `[x_i, x_{i+1}) × [y_j, y_{j+1})`, zero
    /// elsewhere, `d = 1`.
    Table { x_breaks: Vec<f64>, y_breaks: Vec<f64>, values: Vec<Vec<f64>> },
}

fn one() -> usize {
    1
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelOperator {
    pub rule: KernelRule,
    /// `|K(x, y)| ≤ h(x − y)`.
    pub envelope: TensorProfile,
    pub alpha: f64,
    #[serde(rename = "D")]
    pub d_const: f64,
    #[serde(default = "one")]
    pub dim: usize,
    /// The kernel is `K(y, x)` for the rule's `K`.
    #[serde(default, skip_serializing_if = "is_false")]
    pub transposed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelHypotheses {
    /// `‖sup_y |K(y, ·+y)|‖_{𝒲₁}`.
    pub amalgam: f64,
    /// `(δ, ‖sup_y ω_δ(K)(y, ·+y)‖_{𝒲₁}, D·δ^α)`.
    pub moduli: Vec<(f64, f64, f64)>,
    /// `max |K(x, y)| / h(x − y)` over the probes with `h > 0`.
    pub envelope_ratio: f64,
}

/// `h⁻² ∫∫_{cells} f(s − t) ds dt` for cells offset by `k·h`, written as
/// `∫₀¹ (1 − t)(f(kh + th) + f(kh − th)) dt`.
fn tri_weight(f: &Profile1D, k: i64, h: f64) -> Result<f64> {
    let c = k as f64 * h;
    let mut cuts = vec![0.0, 1.0];
    for b in f.breakpoints() {
        for t in [(b - c) / h, (c - b) / h] {
            if t > 0.0 && t < 1.0 {
                cuts.push(t);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let integrand = |t: f64| (1.0 - t) * (f.eval(c + t * h) + f.eval(c - t * h));
    let mut s = 0.0;
    for w in cuts.windows(2) {
        s += if f.is_piecewise_polynomial() {
            gl8(integrand, w[0], w[1])
        } else {
            adaptive_gl8(&integrand, w[0], w[1], QUAD_TOL)?
        };
    }
    Ok(s)
}

/// Overlap length of `[a, b)` and `[c, d)`.
fn overlap(a: f64, b: f64, c: f64, d: f64) -> f64 {
    (b.min(d) - a.max(c)).max(0.0)
}

/// Offset weights of one axis of a convolution kernel: `w[k − k0]` for
/// `k ∈ [k0, k1]`.
#[derive(Clone, Debug)]
struct AxisWeights {
    k0: i64,
    w: Vec<f64>,
}

impl AxisWeights {
    fn get(&self, k: i64) -> f64 {
        let m = k - self.k0;
        if m >= 0 && (m as usize) < self.w.len() {
            self.w[m as usize]
        } else {
            0.0
        }
    }

    fn k1(&self) -> i64 {
        self.k0 + self.w.len() as i64 - 1
    }
}

impl KernelOperator {
    pub fn new(rule: KernelRule, envelope: TensorProfile, alpha: f64, d_const: f64, dim: usize) -> Result<Self> {
        let op = KernelOperator { rule, envelope, alpha, d_const, dim, transposed: false };
        op.validate()?;
        Ok(op)
    }

    /// `K ≡ 0` in dimension `d`.
    pub fn zero(dim: usize) -> Self {
        let z = Profile1D::pp(vec![0.0, 1.0], vec![vec![0.0]]).expect("zero profile");
        KernelOperator {
            rule: KernelRule::Convolution { g: z.clone().into() },
            envelope: z.into(),
            alpha: 1.0,
            d_const: 1.0,
            dim,
            transposed: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("kernel dimension must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidInput(format!("Hölder exponent {} outside (0, 1]", self.alpha)));
        }
        if !(self.d_const > 0.0) || !self.d_const.is_finite() {
            return Err(Error::InvalidInput(format!("constant D = {} must be positive", self.d_const)));
        }
        self.envelope.check_dim(self.dim)?;
        match &self.rule {
            KernelRule::Convolution { g } => g.check_dim(self.dim),
            KernelRule::Separable { .. } if self.dim != 1 => {
                Err(Error::InvalidInput("separable kernels are one-dimensional".into()))
            }
            KernelRule::Separable { .. } => Ok(()),
            KernelRule::Table { x_breaks, y_breaks, values } => {
                if self.dim != 1 {
                    return Err(Error::InvalidInput("tabled kernels are one-dimensional".into()));
                }
                let ascending = |b: &[f64]| b.len() >= 2 && b.windows(2).all(|w| w[0] < w[1]);
                if !ascending(x_breaks) || !ascending(y_breaks) {
                    return Err(Error::InvalidInput("table breakpoints must be strictly ascending".into()));
                }
                if values.len() != x_breaks.len() - 1 || values.iter().any(|r| r.len() != y_breaks.len() - 1) {
                    return Err(Error::InvalidInput("table values do not match the breakpoints".into()));
                }
                Ok(())
            }
        }
    }

    /// The operator with kernel `K(y, x)`.
    pub fn transpose(&self) -> Self {
        KernelOperator { transposed: !self.transposed, ..self.clone() }
    }

    fn eval_rule(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.rule {
            KernelRule::Convolution { g } => {
                let u: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                g.eval(&u)
            }
            KernelRule::Separable { u, v } => u.eval(x[0]) * v.eval(y[0]),
            KernelRule::Table { x_breaks, y_breaks, values } => {
                let find = |b: &[f64], t: f64| {
                    if t < b[0] || t >= b[b.len() - 1] {
                        None
                    } else {
                        Some(b.partition_point(|&v| v <= t) - 1)
                    }
                };
                match (find(x_breaks, x[0]), find(y_breaks, y[0])) {
                    (Some(i), Some(j)) => values[i][j],
                    _ => 0.0,
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.transposed {
            self.eval_rule(y, x)
        } else {
            self.eval_rule(x, y)
        }
    }

    pub fn is_convolution(&self) -> bool {
        matches!(self.rule, KernelRule::Convolution { .. })
    }

    /// Per-axis weights of a convolution kernel at level `n`, oriented for
    /// the stored transposition.
    fn axis_weights(&self, n: u32) -> Result<Vec<AxisWeights>> {
        let KernelRule::Convolution { g } = &self.rule else {
            return Err(Error::InvalidInput("offset weights exist for convolution kernels only".into()));
        };
        let h = 0.5f64.powi(n as i32);
        (0..self.dim)
            .map(|axis| {
                let f = g.factor(axis);
                let (lo, hi) = f.extent(KERNEL_EPS);
                let (k0, k1) = ((lo / h).floor() as i64 - 1, (hi / h).ceil() as i64 + 1);
                let w = (k0..=k1).into_par_iter().map(|k| tri_weight(f, k, h)).collect::<Result<Vec<_>>>()?;
                let aw = AxisWeights { k0, w };
                Ok(if self.transposed {
                    AxisWeights { k0: -aw.k1(), w: aw.w.into_iter().rev().collect() }
                } else {
                    aw
                })
            })
            .collect()
    }

    /// `h⁻²ᵈ ∫∫ K` over the cells with lower corners `hλ` and `hλ′`, for a
    /// rule without translation structure.
    fn cell_average(&self, k: &[i64], kp: &[i64], h: f64) -> f64 {
        let (r, c) = if self.transposed { (kp, k) } else { (k, kp) };
        let (a, b) = (r[0] as f64 * h, c[0] as f64 * h);
        match &self.rule {
            KernelRule::Convolution { .. } => unreachable!("handled through offset weights"),
            KernelRule::Separable { u, v } => u.average(a, a + h) * v.average(b, b + h),
            KernelRule::Table { x_breaks, y_breaks, values } => {
                let mut s = 0.0;
                for (i, row) in values.iter().enumerate() {
                    let ox = overlap(a, a + h, x_breaks[i], x_breaks[i + 1]);
                    if ox == 0.0 {
                        continue;
                    }
                    let mut t = 0.0;
                    for (j, v) in row.iter().enumerate() {
                        t += v * overlap(b, b + h, y_breaks[j], y_breaks[j + 1]);
                    }
                    s += ox * t;
                }
                s / (h * h)
            }
        }
    }

    /// Cells of level `n` on which a non-convolution kernel can be nonzero,
    /// as `(row range, column range)`.
    fn support_cells(&self, n: u32) -> ((i64, i64), (i64, i64)) {
        let s = 2f64.powi(n as i32);
        let cells = |(a, b): (f64, f64)| ((a * s).floor() as i64, (b * s).ceil() as i64);
        let (xr, yr) = match &self.rule {
            KernelRule::Separable { u, v } => (u.extent(KERNEL_EPS), v.extent(KERNEL_EPS)),
            KernelRule::Table { x_breaks, y_breaks, .. } => (
                (x_breaks[0], x_breaks[x_breaks.len() - 1]),
                (y_breaks[0], y_breaks[y_breaks.len() - 1]),
            ),
            KernelRule::Convolution { .. } => unreachable!(),
        };
        let (xr, yr) = (cells(xr), cells(yr));
        if self.transposed {
            (yr, xr)
        } else {
            (xr, yr)
        }
    }

    /// Checks `|K(x, y)| ≤ h(x − y)`, `‖sup_y |K(y, ·+y)|‖_{𝒲₁} ≤ D` and
    /// `‖sup_y ω_δ(K)(y, ·+y)‖_{𝒲₁} ≤ D δ^α` for `δ = 2^{−1}, …, 2^{−10}`.
    /// Suprema over cells are sampled.
    pub fn check_hypotheses(&self) -> Result<KernelHypotheses> {
        self.validate()?;
        let m = self.measure_hypotheses()?;
        if m.amalgam > self.d_const * (1.0 + 1e-12) + HYPOTHESIS_SLACK {
            return Err(Error::Precondition(format!(
                "kernel amalgam norm {:e} exceeds D = {:e}",
                m.amalgam, self.d_const
            )));
        }
        if let Some((delta, v, b)) = m.moduli.iter().find(|(_, v, b)| *v > b * (1.0 + 1e-12) + HYPOTHESIS_SLACK) {
            return Err(Error::Precondition(format!(
                "Hölder condition fails at delta = {delta}: {v:e} > D delta^alpha = {b:e}"
            )));
        }
        if m.envelope_ratio > 1.0 + 1e-12 {
            return Err(Error::Precondition(format!("kernel exceeds its envelope by a factor {:e}", m.envelope_ratio)));
        }
        Ok(m)
    }

    /// The smallest `D` passing [`check_hypotheses`](Self::check_hypotheses)
    /// at the current `α`, inflated by `1e−9` relative.
    pub fn calibrated(mut self) -> Result<Self> {
        let m = self.measure_hypotheses()?;
        let need = m
            .moduli
            .iter()
            .map(|(d, v, _)| v / d.powf(self.alpha))
            .fold(m.amalgam, f64::max);
        self.d_const = need * (1.0 + 1e-9);
        Ok(self)
    }

    fn measure_hypotheses(&self) -> Result<KernelHypotheses> {
        let deltas: Vec<f64> = (1..=10).map(|k| 0.5f64.powi(k)).collect();
        let d = self.dim;
        match &self.rule {
            KernelRule::Convolution { g } => {
                // K(y, x + y) = g(−x), or g(x) when transposed.
                let prof = if self.transposed { g.clone() } else { g.reflect() };
                let amalgam = prof.amalgam_norm(d).value;
                let ext: Vec<(f64, f64)> = prof.extent(d, KERNEL_EPS);
                let cell_lo: Vec<i64> = ext.iter().map(|e| e.0.floor() as i64 - 1).collect();
                let cell_hi: Vec<i64> = ext.iter().map(|e| e.1.ceil() as i64 + 1).collect();
                let per_axis = (SAMPLES_PER_CELL as f64).powf(1.0 / d as f64).ceil() as usize;
                let offsets: Vec<Vec<f64>> =
                    cartesian(&vec![(0..per_axis).map(|i| i as f64 / per_axis as f64).collect(); d]);
                let cells = cartesian(
                    &(0..d).map(|i| (cell_lo[i]..cell_hi[i]).map(|k| k as f64).collect()).collect::<Vec<_>>(),
                );
                let moduli = deltas
                    .par_iter()
                    .map(|&delta| {
                        let total: f64 = cells
                            .iter()
                            .map(|c| {
                                offsets
                                    .iter()
                                    .map(|o| {
                                        let x: Vec<f64> = c.iter().zip(o).map(|(a, b)| a + b).collect();
                                        prof.modulus(2.0 * delta, &x)
                                    })
                                    .fold(0.0, f64::max)
                            })
                            .sum();
                        (delta, total, self.d_const * delta.powf(self.alpha))
                    })
                    .collect();
                let bounds: Vec<(f64, f64)> = g.extent(d, KERNEL_EPS).iter().map(|e| (e.0 - 1.0, e.1 + 1.0)).collect();
                let mut envelope_ratio: f64 = 0.0;
                for u in probe_grid(&bounds, SAMPLES_PER_CELL, 1000) {
                    let v = g.eval(&u).abs();
                    // K(x, y) = g(u) at x − y = u, or at x − y = −u when transposed.
                    let env = if self.transposed {
                        self.envelope.eval(&u.iter().map(|t| -t).collect::<Vec<_>>())
                    } else {
                        self.envelope.eval(&u)
                    };
                    envelope_ratio = envelope_ratio.max(ratio(v, env)?);
                }
                Ok(KernelHypotheses { amalgam, moduli, envelope_ratio })
            }
            _ => self.measure_sampled(&deltas),
        }
    }

    /// Sampled hypotheses of a one-dimensional kernel without translation
    /// structure.
    fn measure_sampled(&self, deltas: &[f64]) -> Result<KernelHypotheses> {
        let ((r0, r1), (c0, c1)) = self.support_cells(0);
        let step = 1.0 / SAMPLES_PER_CELL as f64;
        let ys: Vec<f64> = ((r0 - 1) * SAMPLES_PER_CELL as i64..=(r1 + 1) * SAMPLES_PER_CELL as i64)
            .map(|i| i as f64 * step)
            .collect();
        let (x0, x1) = (c0 - r1 - 2, c1 - r0 + 2);
        let cell_sup = |k: i64, f: &(dyn Fn(f64, f64) -> f64 + Sync)| -> f64 {
            let mut s: f64 = 0.0;
            for i in 0..SAMPLES_PER_CELL {
                let x = k as f64 + i as f64 * step;
                for &y in &ys {
                    s = s.max(f(y, x + y));
                }
            }
            s
        };
        let amalgam: f64 = (x0..x1).into_par_iter().map(|k| cell_sup(k, &|a, b| self.eval(&[a], &[b]).abs())).sum();
        let moduli = deltas
            .iter()
            .map(|&delta| {
                let taps = [-delta, -delta / 2.0, 0.0, delta / 2.0, delta];
                let w = |a: f64, b: f64| {
                    let k = self.eval(&[a], &[b]);
                    let mut m: f64 = 0.0;
                    for s in taps {
                        for t in taps {
                            m = m.max((self.eval(&[a + s], &[b + t]) - k).abs());
                        }
                    }
                    m
                };
                let total: f64 = (x0..x1).into_par_iter().map(|k| cell_sup(k, &w)).sum();
                (delta, total, self.d_const * delta.powf(self.alpha))
            })
            .collect();
        let mut envelope_ratio: f64 = 0.0;
        for &x in &ys {
            for &y in &ys {
                envelope_ratio =
                    envelope_ratio.max(ratio(self.eval(&[x], &[y]).abs(), self.envelope.eval(&[x - y]))?);
            }
        }
        Ok(KernelHypotheses { amalgam, moduli, envelope_ratio })
    }
}

fn ratio(v: f64, env: f64) -> Result<f64> {
    if env > 0.0 {
        Ok(v / env)
    } else if v > HYPOTHESIS_SLACK {
        Err(Error::Precondition(format!("kernel value {v:e} where the envelope vanishes")))
    } else {
        Ok(0.0)
    }
}

/// Cells `k` of level `n` with `hk + h[0,1)ᵈ ⊆ window`.
fn window_cells(window: &Window, n: u32) -> Vec<(i64, i64)> {
    let s = 2f64.powi(n as i32);
    window
        .iter()
        .map(|[lo, hi]| ((lo * s - 1e-9).ceil() as i64, (hi * s + 1e-9).floor() as i64))
        .collect()
}

fn grid_set(ranges: &[(i64, i64)], h: f64) -> Result<(IndexSet, Vec<Vec<i64>>)> {
    let axes: Vec<Vec<f64>> = ranges.iter().map(|&(a, b)| (a..b).map(|k| k as f64).collect()).collect();
    let cells: Vec<Vec<i64>> = cartesian(&axes).into_iter().map(|c| c.iter().map(|&v| v as i64).collect()).collect();
    let points = cells.iter().map(|c| c.iter().map(|&k| k as f64 * h).collect()).collect();
    let window = ranges.iter().map(|&(a, b)| [a as f64 * h, (b - 1).max(a) as f64 * h]).collect();
    Ok((IndexSet::new(ranges.len(), window, points)?, cells))
}

/// `aₙ(λ, λ′)`: the average of `K` over the product of the level-`n` cells
/// at `λ` and `λ′`, for all cells inside `window`.
pub fn discretize_kernel(op: &KernelOperator, n: u32, window: &Window) -> Result<LocalizedMatrix> {
    op.validate()?;
    if window.len() != op.dim {
        return Err(Error::DimensionMismatch { expected: op.dim, found: window.len() });
    }
    let h = 0.5f64.powi(n as i32);
    let ranges = window_cells(window, n);
    if ranges.iter().any(|(a, b)| b <= a) {
        return Err(Error::InvalidInput(format!("window {window:?} holds no cell of level {n}")));
    }
    let (set, cells) = grid_set(&ranges, h)?;
    let shape: Vec<usize> = ranges.iter().map(|(a, b)| (b - a) as usize).collect();
    let mut strides = vec![1usize; op.dim];
    for i in (0..op.dim - 1).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let entries: Vec<(usize, usize, f64)> = if op.is_convolution() {
        let aw = op.axis_weights(n)?;
        cells
            .par_iter()
            .enumerate()
            .flat_map_iter(|(i, k)| {
                // Columns k − m for offsets m in the weight ranges.
                let axes: Vec<Vec<(usize, f64)>> = (0..op.dim)
                    .map(|a| {
                        (aw[a].k0..=aw[a].k1())
                            .filter_map(|m| {
                                let c = k[a] - m;
                                let w = aw[a].get(m);
                                (c >= ranges[a].0 && c < ranges[a].1 && w != 0.0)
                                    .then(|| ((c - ranges[a].0) as usize * strides[a], w))
                            })
                            .collect()
                    })
                    .collect();
                let mut out = vec![(0usize, 1.0f64)];
                for ax in &axes {
                    out = out.iter().flat_map(|&(p, v)| ax.iter().map(move |&(q, w)| (p + q, v * w))).collect();
                }
                out.into_iter().map(move |(j, v)| (i, j, v))
            })
            .collect()
    } else {
        cells
            .par_iter()
            .enumerate()
            .flat_map_iter(|(i, k)| {
                cells
                    .iter()
                    .enumerate()
                    .map(|(j, kp)| (i, j, op.cell_average(k, kp, h)))
                    .filter(|e| e.2 != 0.0)
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    LocalizedMatrix::new(set.clone(), set, entries)
}

/// `Tₙf = PₙTPₙf` for `f` given on level-`n` cells.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelApplication {
    pub output: DyadicFunction,
    /// Bound on the omitted kernel contributions at any point.
    pub tail_bound: f64,
    /// `‖Tₙf‖_r / ‖f‖_r`.
    pub norm_ratio: f64,
    /// `‖h‖_{𝒲₁}`, which bounds the operator norm of `T` on every `Lʳ`.
    pub schur_bound: f64,
}

fn linear_convolution(a: &[f64], b: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = a.len() + b.len() - 1;
    if a.len().min(b.len()) * n <= DIRECT_CONV_LIMIT {
        let mut out = vec![0.0; n];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let size = n.next_power_of_two();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |v: &[f64]| {
        let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        buf.resize(size, Complex::new(0.0, 0.0));
        buf
    };
    let (mut fa, mut fb) = (pad(a), pad(b));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa.iter().take(n).map(|c| c.re / size as f64).collect()
}

/// Convolves the values along one axis with offset weights, widening that
/// axis by the weight support.
fn convolve_axis(
    values: &[f64],
    shape: &[usize],
    axis: usize,
    w: &AxisWeights,
    planner: &mut FftPlanner<f64>,
) -> (Vec<f64>, Vec<usize>) {
    let len = shape[axis];
    let out_len = len + w.w.len() - 1;
    let mut out_shape = shape.to_vec();
    out_shape[axis] = out_len;
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; outer * out_len * inner];
    let mut line = vec![0.0; len];
    for o in 0..outer {
        for i in 0..inner {
            for (t, l) in line.iter_mut().enumerate() {
                *l = values[(o * len + t) * inner + i];
            }
            let conv = linear_convolution(&line, &w.w, planner);
            for (t, v) in conv.into_iter().enumerate() {
                out[(o * out_len + t) * inner + i] = v;
            }
        }
    }
    (out, out_shape)
}

pub fn apply_kernel(op: &KernelOperator, f: &DyadicFunction, r: PNorm) -> Result<KernelApplication> {
    op.validate()?;
    if f.dim() != op.dim {
        return Err(Error::DimensionMismatch { expected: op.dim, found: f.dim() });
    }
    let n = f.level();
    let h = f.cell_size();
    let hd = h.powi(op.dim as i32);
    let output = if op.is_convolution() {
        let aw = op.axis_weights(n)?;
        let mut planner = FftPlanner::new();
        let mut values = f.values().to_vec();
        let mut shape = f.shape().to_vec();
        for (axis, w) in aw.iter().enumerate() {
            (values, shape) = convolve_axis(&values, &shape, axis, w, &mut planner);
        }
        let origin: Vec<i64> = f.origin().iter().zip(&aw).map(|(o, w)| o + w.k0).collect();
        DyadicFunction::new(n, origin, shape, values.into_iter().map(|v| v * hd).collect())?
    } else {
        let ((r0, r1), _) = op.support_cells(n);
        let rows: Vec<i64> = (r0..r1).collect();
        let cols: Vec<(i64, f64)> =
            (0..f.values().len()).map(|i| (f.cell(i)[0], f.values()[i])).filter(|c| c.1 != 0.0).collect();
        let values = rows
            .par_iter()
            .map(|&k| cols.iter().map(|&(kp, c)| op.cell_average(&[k], &[kp], h) * c).sum::<f64>() * h)
            .collect();
        DyadicFunction::new(n, vec![r0], vec![rows.len()], values)?
    };
    let f1 = f.lp_norm(PNorm::ONE);
    let fr = f.lp_norm(r);
    let tail_bound = KERNEL_EPS * f1 * op.envelope.amalgam_norm(op.dim).value.max(1.0);
    let norm_ratio = if fr > 0.0 { output.lp_norm(r) / fr } else { 0.0 };
    Ok(KernelApplication { output, tail_bound, norm_ratio, schur_bound: op.envelope.amalgam_norm(op.dim).value })
}

/// Test functions: linear and cubic B-splines and an indicator, tensorized.
pub fn default_probes(dim: usize) -> Vec<TensorProfile> {
    let parts = [
        Profile1D::bspline(2).expect("order 2"),
        Profile1D::bspline(4).expect("order 4"),
        Profile1D::indicator(0.3, 1.7, 1.0).expect("indicator"),
    ];
    parts.into_iter().map(|p| TensorProfile::new(vec![p; dim]).expect("tensor")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorPoint {
    pub n: u32,
    /// `max_f ‖(T − Tₙ)f‖_r / ‖f‖_r`.
    pub ratio: f64,
    /// `max_f ‖(I − Pₙ)Tf‖_r / ‖f‖_r`.
    pub left_defect: f64,
    /// `max_f ‖T(I − Pₙ)f‖_r / ‖f‖_r`.
    pub right_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub r: PNorm,
    pub points: Vec<ErrorPoint>,
    /// Least-squares slope of `log₂ ratio` against `n`; estimates `−α`.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Ratios never increase by more than `1e−12`.
    pub monotone: bool,
}

fn probe_cells(f: &TensorProfile, d: usize, level: u32) -> (Vec<i64>, Vec<i64>) {
    let s = 2f64.powi(level as i32);
    let ext = f.extent(d, KERNEL_EPS);
    (
        ext.iter().map(|e| (e.0 * s).floor() as i64).collect(),
        ext.iter().map(|e| (e.1 * s).ceil() as i64).collect(),
    )
}

/// `‖(T − Tₙ)f‖_r / ‖f‖_r` per level, with `Tf` replaced by the reference
/// `T_{n+3}P_{n+3}f`.
pub fn discretization_error_curve(
    op: &KernelOperator,
    ns: &[u32],
    probes: &[TensorProfile],
    r: PNorm,
) -> Result<ErrorCurve> {
    op.validate()?;
    if probes.is_empty() || ns.is_empty() {
        return Err(Error::InvalidInput("error curve needs levels and probes".into()));
    }
    let d = op.dim;
    let top = ns.iter().max().copied().unwrap_or(0) + REFERENCE_OFFSET;
    let denoms = probes
        .iter()
        .map(|f| {
            let (lo, hi) = probe_cells(f, d, top);
            let v = DyadicFunction::from_profile(f, top, &lo, &hi)?.lp_norm(r);
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::InvalidInput("probe with zero norm".into()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let points = ns
        .par_iter()
        .map(|&n| {
            let m = n + REFERENCE_OFFSET;
            let mut pt = ErrorPoint { n, ratio: 0.0, left_defect: 0.0, right_defect: 0.0 };
            for (f, denom) in probes.iter().zip(&denoms) {
                let (lo, hi) = probe_cells(f, d, m);
                let fm = DyadicFunction::from_profile(f, m, &lo, &hi)?;
                let (lo, hi) = probe_cells(f, d, n);
                let fnn = DyadicFunction::from_profile(f, n, &lo, &hi)?;
                let tm = apply_kernel(op, &fm, r)?.output;
                let tn = apply_kernel(op, &fnn, r)?.output.refine(m)?;
                pt.ratio = pt.ratio.max(tm.sub(&tn)?.lp_norm(r) / denom);
                let left = tm.sub(&tm.project(n)?.0.refine(m)?)?;
                pt.left_defect = pt.left_defect.max(left.lp_norm(r) / denom);
                let rest = fm.sub(&fnn.refine(m)?)?;
                pt.right_defect = pt.right_defect.max(apply_kernel(op, &rest, r)?.output.lp_norm(r) / denom);
            }
            Ok(pt)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut points = points;
    points.sort_by_key(|p| p.n);
    let monotone = points.windows(2).all(|w| w[1].ratio <= w[0].ratio + 1e-12);
    let fit: Vec<(f64, f64)> =
        points.iter().filter(|p| p.ratio > 0.0).map(|p| (p.n as f64, p.ratio.log2())).collect();
    let (slope, intercept) = match linear_fit(&fit) {
        Some((s, c)) => (Some(s), Some(c)),
        None => (None, None),
    };
    Ok(ErrorCurve { r, points, slope, intercept, monotone })
}

fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let s = sxy / sxx;
    Some((s, my - s * mx))
}

/// Constants of `I + 2^{−nd}Aₙ` at one level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelLevel {
    pub n: u32,
    /// `2^{−nd/p}`: `‖fₙ‖_p = 2^{−nd/p}‖cₙ‖_p` for `fₙ = Σ cₙ(λ)χ_λ`. Lower
    /// and upper constants are ratios and so coincide for functions and
    /// coefficients.
    pub norm_factor: f64,
    /// Measured `‖(T − Tₙ)f‖_p / ‖f‖_p` on the default probes; the constants
    /// of `I + T` differ from those of `I + Tₙ` by at most `‖T − Tₙ‖`.
    pub bias: f64,
    /// Symbol test of the bi-infinite `I + 2^{−n}Aₙ` for one-dimensional
    /// convolution kernels.
    pub symbol: Option<SymbolCertificate>,
    pub report: StabilityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelStability {
    pub p: PNorm,
    pub hypotheses: KernelHypotheses,
    pub levels: Vec<KernelLevel>,
    /// Trend of the lower constants at the finest level.
    pub trend: Trend,
}

/// `[−W/2, W/2]ᵈ`.
pub fn centered_window(size: f64, dim: usize) -> Window {
    vec![[-size / 2.0, size / 2.0]; dim]
}

/// Lower and upper constants of `I + 2^{−nd}Aₙ` over centred windows of
/// the given sizes, for each level.
pub fn perturbed_identity_stability(
    op: &KernelOperator,
    p: PNorm,
    ns: &[u32],
    windows: &[f64],
    seed: Option<u64>,
) -> Result<KernelStability> {
    if ns.is_empty() || windows.is_empty() {
        return Err(Error::InvalidInput("empty level or window ladder".into()));
    }
    let hypotheses = op.check_hypotheses()?;
    let d = op.dim;
    let curve = discretization_error_curve(op, ns, &default_probes(d), p)?;
    let cfg = EquivalenceConfig::default();
    let mut levels = Vec::with_capacity(ns.len());
    for &n in ns {
        let weight = 0.5f64.powi((n as usize * d) as i32);
        let entries = windows
            .par_iter()
            .map(|&w| {
                let b = discretize_kernel(op, n, &centered_window(w, d))?.scale(weight).add_identity(1.0)?;
                Ok(ReportEntry {
                    window: b.rows().len(),
                    lower: lower_constant(&b, p, seed)?,
                    upper: upper_constant(&b, p)?,
                    interior_lower: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let lower: Vec<f64> = entries.iter().map(|e| e.lower.value).collect();
        let trend = classify(&lower, &cfg);
        let symbol = if d == 1 && op.is_convolution() {
            let aw = &op.axis_weights(n)?[0];
            let mut seq: Vec<f64> = aw.w.iter().map(|w| w * weight).collect();
            let (k0, k1) = (aw.k0.min(0), aw.k1().max(0));
            let mut full = vec![0.0; (k1 - k0 + 1) as usize];
            for (m, v) in seq.drain(..).enumerate() {
                full[(aw.k0 + m as i64 - k0) as usize] += v;
            }
            full[(-k0) as usize] += 1.0;
            let grid = (4 * full.len()).next_power_of_two().max(1 << 12);
            Some(convolution_stability(&full, k0, grid)?)
        } else {
            None
        };
        let bias = curve.points.iter().find(|pt| pt.n == n).map(|pt| pt.ratio).unwrap_or(f64::NAN);
        levels.push(KernelLevel {
            n,
            norm_factor: 2f64.powf(-(n as f64) * d as f64 * p.recip()),
            bias,
            symbol,
            report: StabilityReport { p, entries, trend },
        });
    }
    let trend = levels.last().map(|l| l.report.trend).unwrap_or(Trend::Undetermined);
    Ok(KernelStability { p, hypotheses, levels, trend })
}

/// A row of [`kernel_truncation_tail`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub s: f64,
    /// `‖Aₙ − Aₙ,ₛ‖_𝒞`.
    pub tail: f64,
    /// `3ᵈ Σ_{‖j‖∞ ≥ s−3} sup_{j+[0,1)ᵈ} h`.
    pub bound: f64,
}

/// Sjöstrand tails of `Aₙ` over `window` with the envelope bound alongside.
pub fn kernel_truncation_tail(op: &KernelOperator, n: u32, window: &Window, s_values: &[f64]) -> Result<Vec<TailRow>> {
    let a = discretize_kernel(op, n, window)?;
    let tails = a.truncation_tail(s_values)?;
    let d = op.dim;
    let totals: Vec<f64> = (0..d)
        .map(|i| {
            let am = op.envelope.factor(i).amalgam_norm();
            am.value + am.truncation_bound
        })
        .collect();
    let mut rows = Vec::with_capacity(tails.len());
    for (s, tail) in tails {
        let t = s - 3.0;
        let inner: f64 = if t <= 0.0 {
            0.0
        } else {
            let (j0, j1) = ((-t).floor() as i64 + 1, t.ceil() as i64 - 1);
            (0..d).map(|i| (j0..=j1).map(|j| op.envelope.factor(i).cell_sup(j)).sum::<f64>()).product()
        };
        let bound = 3f64.powi(d as i32) * (totals.iter().product::<f64>() - inner).max(0.0);
        if tail > bound * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::Invariant(format!("tail {tail:e} at s = {s} exceeds the envelope bound {bound:e}")));
        }
        rows.push(TailRow { s, tail, bound });
    }
    Ok(rows)
}
