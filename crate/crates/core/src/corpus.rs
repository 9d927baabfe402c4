//! Deterministic test matrices and kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernelop::{KernelOperator, KernelRule};
use crate::lattice::IndexSet;
use crate::matalg::LocalizedMatrix;
use crate::synthesis::profile::Profile1D;

/// `a(i, j) = seq[i − j + center]` on `{0, …, n−1}`.
pub fn toeplitz(seq: &[f64], center: usize, n: usize) -> Result<LocalizedMatrix> {
    if seq.is_empty() || center >= seq.len() {
        return Err(Error::InvalidInput("toeplitz sequence must be nonempty with its center inside".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty window".into()));
    }
    let set = IndexSet::integers(0, n as i64 - 1)?;
    let c = center as i64;
    let mut entries = Vec::new();
    for i in 0..n as i64 {
        for (m, &v) in seq.iter().enumerate() {
            let j = i - (m as i64 - c);
            if (0..n as i64).contains(&j) {
                entries.push((i as usize, j as usize, v));
            }
        }
    }
    LocalizedMatrix::new(set.clone(), set, entries)
}

/// Symmetric Toeplitz window with the middle entry of an odd sequence on
/// the diagonal.
pub fn symmetric_toeplitz(seq: &[f64], n: usize) -> Result<LocalizedMatrix> {
    if seq.len().is_multiple_of(2) {
        return Err(Error::InvalidInput("centered toeplitz sequence must have odd length".into()));
    }
    toeplitz(seq, seq.len() / 2, n)
}

/// Swaps the rows `2k` and `2k + 1`; a trailing odd row stays.
pub fn pair_swap(n: usize) -> Vec<usize> {
    (0..n).map(|i| if i % 2 == 0 { if i + 1 < n { i + 1 } else { i } } else { i - 1 }).collect()
}

pub fn row_permuted(a: &LocalizedMatrix) -> Result<LocalizedMatrix> {
    a.permute_rows(&pair_swap(a.rows().len()))
}

/// Banded matrix on `{0, …, n−1}` with off-diagonal entries uniform in
/// `[−s, s]` for `0 < |i − j| ≤ band` and diagonal `gap + 2·band·s + U[0, s]`,
/// so that every `ℓᵖ` lower constant is at least `gap`. Entries depend only
/// on `(seed, i, j)`, making smaller windows sections of larger ones.
pub fn banded_random(band: usize, scale: f64, gap: f64, seed: u64, n: usize) -> Result<LocalizedMatrix> {
    if !(scale >= 0.0) || !(gap > 0.0) {
        return Err(Error::InvalidInput("banded_random needs scale >= 0 and gap > 0".into()));
    }
    let set = IndexSet::integers(0, n as i64 - 1)?;
    let width = 2 * band as u64 + 1;
    let draw = |i: usize, j: usize| -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 * width + (j as i64 - i as i64 + band as i64) as u64);
        rng.random::<f64>()
    };
    let mut entries = Vec::new();
    for i in 0..n {
        for j in i.saturating_sub(band)..(i + band + 1).min(n) {
            let u = draw(i, j);
            let v = if i == j { gap + 2.0 * band as f64 * scale + u * scale } else { scale * (2.0 * u - 1.0) };
            entries.push((i, j, v));
        }
    }
    LocalizedMatrix::new(set.clone(), set, entries)
}

/// Entries of a slanted matrix around `j′ = αj`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SlantRule {
    /// `a(j, ⌊αj⌋) = 1`.
    Unit,
    /// `a(j, j′) = e^{−rate·|j′ − αj|}` for `|j′ − αj| ≤ reach`.
    Decay { rate: f64, reach: f64 },
}

/// Rows `{0, …, n−1}`, columns the integers reached by the rule.
pub fn slanted(alpha: f64, rule: &SlantRule, n: usize) -> Result<LocalizedMatrix> {
    if !(alpha > 0.0) || n == 0 {
        return Err(Error::InvalidInput("slanted matrices need alpha > 0 and a nonempty window".into()));
    }
    let rows = IndexSet::integers(0, n as i64 - 1)?;
    let mut raw: Vec<(usize, i64, f64)> = Vec::new();
    for j in 0..n {
        let c = alpha * j as f64;
        match rule {
            SlantRule::Unit => raw.push((j, c.floor() as i64, 1.0)),
            SlantRule::Decay { rate, reach } => {
                for jp in (c - reach).ceil() as i64..=(c + reach).floor() as i64 {
                    raw.push((j, jp, (-rate * (jp as f64 - c).abs()).exp()));
                }
            }
        }
    }
    let lo = raw.iter().map(|e| e.1).min().unwrap_or(0).min(0);
    let hi = raw.iter().map(|e| e.1).max().unwrap_or(0);
    let cols = IndexSet::integers(lo, hi)?;
    let entries = raw.into_iter().map(|(i, jp, v)| (i, (jp - lo) as usize, v)).collect();
    LocalizedMatrix::new(rows, cols, entries)
}

/// Gram matrix of the real Gabor system
/// `g_{k,m}(x) = e^{−(x − ka)²/σ²} cos(2π m b x)` for `k ∈ {0, …, n−1}`,
/// `m ∈ {0, …, frequencies−1}`, indexed by the points `(ka, mb)`.
pub fn gabor_gram(sigma: f64, a: f64, b: f64, frequencies: usize, n: usize) -> Result<LocalizedMatrix> {
    if !(sigma > 0.0 && a > 0.0 && b > 0.0) || frequencies == 0 || n == 0 {
        return Err(Error::InvalidInput("gabor parameters must be positive".into()));
    }
    let mut points = Vec::with_capacity(n * frequencies);
    for k in 0..n {
        for m in 0..frequencies {
            points.push(vec![k as f64 * a, m as f64 * b]);
        }
    }
    let window = vec![[0.0, (n - 1) as f64 * a], [0.0, (frequencies - 1) as f64 * b]];
    let set = IndexSet::new(2, window, points)?;
    // e^{−(x−c₁)²/σ²}e^{−(x−c₂)²/σ²} = e^{−(c₁−c₂)²/(2σ²)} e^{−(x−c)²/s²} with
    // c the midpoint and s = σ/√2; ∫ e^{−(x−c)²/s²} cos(ωx) dx = s√π e^{−ω²s²/4} cos(ωc).
    let s = sigma / 2f64.sqrt();
    let tau = 2.0 * std::f64::consts::PI;
    let gauss_cos = |c: f64, w: f64| s * std::f64::consts::PI.sqrt() * (-(w * s).powi(2) / 4.0).exp() * (w * c).cos();
    let pts = set.points().to_vec();
    let mut entries = Vec::new();
    for (i, x) in pts.iter().enumerate() {
        for (j, y) in pts.iter().enumerate() {
            let d = x[0] - y[0];
            let env = (-(d * d) / (2.0 * sigma * sigma)).exp();
            if env < 1e-18 {
                continue;
            }
            let c = (x[0] + y[0]) / 2.0;
            let (w1, w2) = (tau * (x[1] - y[1]), tau * (x[1] + y[1]));
            let v = env * 0.5 * (gauss_cos(c, w1) + gauss_cos(c, w2));
            if v.abs() > 1e-18 {
                entries.push((i, j, v));
            }
        }
    }
    LocalizedMatrix::new(set.clone(), set, entries)
}

/// Gram matrix `⟨B_m(· − i), B_m(· − j)⟩` of the shifts of the cardinal
/// B-spline of order `m` on `{0, …, n−1}`, from exact products.
pub fn bspline_gram(order: usize, n: usize) -> Result<LocalizedMatrix> {
    let b = Profile1D::bspline(order)?;
    let m = order as i64;
    let seq: Vec<f64> = (-(m - 1)..m)
        .map(|k| Ok(b.product(&b.shifted(k as f64))?.integral(-(m as f64), 2.0 * m as f64)))
        .collect::<Result<_>>()?;
    toeplitz(&seq, (m - 1) as usize, n)
}

/// `K(x, y) = θ e^{−(x−y)²/σ²}` with envelope `|K|`, `α = 1` and a
/// calibrated `D`.
pub fn gaussian_kernel(theta: f64, sigma: f64) -> Result<KernelOperator> {
    let g = Profile1D::gaussian(theta, sigma)?;
    let env = Profile1D::gaussian(theta.abs(), sigma)?;
    KernelOperator::new(KernelRule::Convolution { g: g.into() }, env.into(), 1.0, 1.0, 1)?.calibrated()
}

/// A generator family with its window ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusFamily {
    Toeplitz {
        sequence: Vec<f64>,
        #[serde(default)]
        permuted: bool,
    },
    BandedRandom {
        band: usize,
        scale: f64,
        #[serde(default = "default_gap")]
        gap: f64,
    },
    Slanted {
        alpha: f64,
        rule: SlantRule,
    },
    GaborGram {
        sigma: f64,
        a: f64,
        b: f64,
        frequencies: usize,
    },
    BsplineGram {
        order: usize,
    },
    GaussianKernel {
        theta: f64,
        sigma: f64,
    },
}

fn default_gap() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub family: CorpusFamily,
    #[serde(default)]
    pub windows: Vec<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CorpusObject {
    Matrix(LocalizedMatrix),
    Kernel(KernelOperator),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusItem {
    pub name: String,
    pub object: CorpusObject,
}

impl CorpusSpec {
    /// One matrix per window, or the single kernel; each object is checked
    /// against its invariants.
    pub fn generate(&self) -> Result<Vec<CorpusItem>> {
        if let CorpusFamily::GaussianKernel { theta, sigma } = &self.family {
            let k = gaussian_kernel(*theta, *sigma)?;
            k.check_hypotheses()?;
            return Ok(vec![CorpusItem { name: "gaussian_kernel".into(), object: CorpusObject::Kernel(k) }]);
        }
        if self.windows.is_empty() {
            return Err(Error::InvalidInput("matrix families need at least one window".into()));
        }
        self.windows
            .iter()
            .map(|&n| {
                let (name, m) = match &self.family {
                    CorpusFamily::Toeplitz { sequence, permuted } => {
                        let m = symmetric_toeplitz(sequence, n)?;
                        if *permuted {
                            ("toeplitz_permuted", row_permuted(&m)?)
                        } else {
                            ("toeplitz", m)
                        }
                    }
                    CorpusFamily::BandedRandom { band, scale, gap } => {
                        let seed = self.seed.ok_or(Error::MissingSeed)?;
                        ("banded_random", banded_random(*band, *scale, *gap, seed, n)?)
                    }
                    CorpusFamily::Slanted { alpha, rule } => ("slanted", slanted(*alpha, rule, n)?),
                    CorpusFamily::GaborGram { sigma, a, b, frequencies } => {
                        ("gabor_gram", gabor_gram(*sigma, *a, *b, *frequencies, n)?)
                    }
                    CorpusFamily::BsplineGram { order } => ("bspline_gram", bspline_gram(*order, n)?),
                    CorpusFamily::GaussianKernel { .. } => unreachable!(),
                };
                if !m.sjostrand_norm().is_finite() {
                    return Err(Error::Invariant(format!("{name} window {n} has an infinite localization norm")));
                }
                Ok(CorpusItem { name: format!("{name}_{n}"), object: CorpusObject::Matrix(m) })
            })
            .collect()
    }
}
