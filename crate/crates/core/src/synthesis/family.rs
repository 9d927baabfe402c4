//! Generator families `{φ_λ}` with an envelope and a modulus bound, and the
//! synthesis operator `c ↦ Σ c(λ) φ_λ`.

use serde::{Deserialize, Serialize};

use super::profile::TensorProfile;
use crate::error::{Error, Result};
use crate::lattice::{cartesian, IndexSet};
use crate::norm::{lp_norm, PNorm};

/// Profiles are negligible below this level outside their extent.
pub const EXTENT_EPS: f64 = 1e-16;
/// Slack allowed in the sampled hypothesis checks.
pub const PROBE_SLACK: f64 = 1e-12;

/// How `φ_λ` is obtained from the index `λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorRule {
    /// `φ_{λ,i}(x) = profiles[i](x − λ)`: one block of columns per profile.
    Shift { profiles: Vec<TensorProfile> },
    /// `φ_λ(x) = profiles[λ](x − λ)`, one profile per index point.
    Table { profiles: Vec<TensorProfile> },
}

/// An increasing bound `ω(δ)` with `ω(0+) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModulusBound {
    /// `C·δ^α`.
    Power {
        #[serde(rename = "C")]
        c: f64,
        alpha: f64,
    },
    /// Step function: `ω(δ)` is the value at the smallest tabulated
    /// `δ′ ≥ δ`.
    Table { deltas: Vec<f64>, values: Vec<f64> },
    /// Fitted to measured moduli and inflated to bound them on the probe grid.
    Auto,
}

impl ModulusBound {
    pub fn eval(&self, delta: f64) -> Result<f64> {
        match self {
            ModulusBound::Power { c, alpha } => Ok(c * delta.powf(*alpha)),
            ModulusBound::Table { deltas, values } => deltas
                .iter()
                .zip(values)
                .filter(|(d, _)| **d >= delta)
                .min_by(|a, b| a.0.total_cmp(b.0))
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::InvalidInput(format!("modulus table does not reach delta = {delta}"))),
            ModulusBound::Auto => Err(Error::InvalidInput("automatic modulus bound is not calibrated yet".into())),
        }
    }
}

/// Sampling parameters for the hypothesis checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Points per unit cell of `ℝᵈ`.
    pub per_cell: usize,
    pub min_points: usize,
    pub deltas: Vec<f64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { per_cell: 64, min_points: 1000, deltas: (1..=10).map(|k| 0.5f64.powi(k)).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub probe_points: usize,
    /// `max_x |φ(x)| / h(x)` over the probes with `h(x) > 0`.
    pub envelope_ratio: f64,
    /// `(δ, max_x ω_δ(φ)(x) / h(x))`.
    pub modulus_ratios: Vec<(f64, f64)>,
    /// The bound in force after calibration.
    pub modulus: ModulusBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorFamily {
    pub index: IndexSet,
    pub rule: GeneratorRule,
    pub envelope: TensorProfile,
    pub modulus: ModulusBound,
}

/// Probe points on `∏ [lo_i, hi_i]` with about `per_cell` points per unit
/// cell, and at least `min_points` in total.
pub fn probe_grid(bounds: &[(f64, f64)], per_cell: usize, min_points: usize) -> Vec<Vec<f64>> {
    let d = bounds.len() as i32;
    let mut per_axis = (per_cell as f64).powf(1.0 / d as f64).ceil().max(1.0);
    loop {
        let axes: Vec<Vec<f64>> = bounds
            .iter()
            .map(|&(a, b)| {
                let n = (((b - a) * per_axis).ceil() as usize).max(1);
                (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
            })
            .collect();
        let total: usize = axes.iter().map(|a| a.len()).product();
        if total >= min_points {
            return cartesian(&axes);
        }
        per_axis *= 2.0;
    }
}

impl GeneratorFamily {
    pub fn new(index: IndexSet, rule: GeneratorRule, envelope: TensorProfile, modulus: ModulusBound) -> Result<Self> {
        let fam = GeneratorFamily { index, rule, envelope, modulus };
        fam.validate()?;
        Ok(fam)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.index.dim();
        self.envelope.check_dim(d)?;
        let profiles = match &self.rule {
            GeneratorRule::Shift { profiles } => {
                if profiles.is_empty() {
                    return Err(Error::InvalidInput("shift rule without profiles".into()));
                }
                profiles
            }
            GeneratorRule::Table { profiles } => {
                if profiles.len() != self.index.len() {
                    return Err(Error::IndexMismatch { expected: self.index.len(), found: profiles.len() });
                }
                profiles
            }
        };
        profiles.iter().try_for_each(|p| p.check_dim(d))
    }

    pub fn dim(&self) -> usize {
        self.index.dim()
    }

    /// Number of column blocks: one per profile of a shift rule, one otherwise.
    pub fn blocks(&self) -> usize {
        match &self.rule {
            GeneratorRule::Shift { profiles } => profiles.len(),
            GeneratorRule::Table { .. } => 1,
        }
    }

    /// Total number of generators.
    pub fn len(&self) -> usize {
        self.blocks() * self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Local profile `x ↦ φ(x + λ)` of generator `i` in block `b`.
    pub fn local_profile(&self, b: usize, i: usize) -> &TensorProfile {
        match &self.rule {
            GeneratorRule::Shift { profiles } => &profiles[b],
            GeneratorRule::Table { profiles } => &profiles[i],
        }
    }

    fn distinct_profiles(&self) -> Vec<&TensorProfile> {
        match &self.rule {
            GeneratorRule::Shift { profiles } | GeneratorRule::Table { profiles } => profiles.iter().collect(),
        }
    }

    /// The family restricted to the index points selected by `section`.
    pub fn section(&self, size: f64) -> Result<Self> {
        let (index, kept) = self.index.section(size)?;
        let rule = match &self.rule {
            GeneratorRule::Shift { .. } => self.rule.clone(),
            GeneratorRule::Table { profiles } => {
                GeneratorRule::Table { profiles: kept.iter().map(|&i| profiles[i].clone()).collect() }
            }
        };
        Ok(GeneratorFamily { index, rule, envelope: self.envelope.clone(), modulus: self.modulus.clone() })
    }

    /// Samples `|φ(x)| ≤ h(x)` and `ω_δ(φ)(x) ≤ ω(δ) h(x)` for every distinct
    /// local profile on a probe grid covering its extent widened by 1. An
    /// automatic modulus bound is calibrated first: `log ω` is fitted
    /// linearly in `log δ`, `α` is clipped to `(0, 1]` and `C` raised until
    /// the measured ratios lie below `C·δ^α`.
    pub fn check_hypotheses(&self, cfg: &ProbeConfig) -> Result<HypothesisReport> {
        let d = self.dim();
        let mut envelope_ratio: f64 = 0.0;
        let mut ratios = vec![0.0_f64; cfg.deltas.len()];
        let mut count = 0;
        for prof in self.distinct_profiles() {
            let bounds: Vec<(f64, f64)> =
                prof.extent(d, EXTENT_EPS).into_iter().map(|(a, b)| (a - 1.0, b + 1.0)).collect();
            let grid = probe_grid(&bounds, cfg.per_cell, cfg.min_points);
            count += grid.len();
            for x in &grid {
                let h = self.envelope.eval(x);
                let v = prof.eval(x).abs();
                if v > h + PROBE_SLACK {
                    return Err(Error::Precondition(format!(
                        "envelope violated at {x:?}: |phi| = {v:e} > h = {h:e}"
                    )));
                }
                if h > 0.0 {
                    envelope_ratio = envelope_ratio.max(v / h);
                }
                for (r, &delta) in ratios.iter_mut().zip(&cfg.deltas) {
                    let w = prof.modulus(delta, x);
                    if h > 0.0 {
                        *r = r.max(w / h);
                    } else if w > PROBE_SLACK {
                        return Err(Error::Precondition(format!(
                            "modulus of continuity {w:e} at {x:?} where the envelope vanishes"
                        )));
                    }
                }
            }
        }
        let modulus = match &self.modulus {
            ModulusBound::Auto => calibrate(&cfg.deltas, &ratios),
            m => m.clone(),
        };
        for (&delta, &r) in cfg.deltas.iter().zip(&ratios) {
            let bound = modulus.eval(delta)?;
            if r > bound * (1.0 + 1e-9) + PROBE_SLACK {
                return Err(Error::Precondition(format!(
                    "modulus bound violated at delta = {delta}: measured {r:e} > {bound:e}"
                )));
            }
        }
        Ok(HypothesisReport {
            probe_points: count,
            envelope_ratio,
            modulus_ratios: cfg.deltas.iter().copied().zip(ratios).collect(),
            modulus,
        })
    }

    /// `Σ c(λ) φ_λ` sampled on `grid`, with coefficients listed block by block.
    pub fn synthesize(&self, c: &[f64], grid: &UniformGrid) -> Result<SynthesisSample> {
        if c.len() != self.len() {
            return Err(Error::IndexMismatch { expected: self.len(), found: c.len() });
        }
        if grid.lo.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: grid.lo.len() });
        }
        let points = grid.points();
        let mut values = vec![0.0; points.len()];
        let n = self.index.len();
        for b in 0..self.blocks() {
            for i in 0..n {
                let coeff = c[b * n + i];
                if coeff == 0.0 {
                    continue;
                }
                let lam = self.index.point(i);
                let prof = self.local_profile(b, i);
                let ext = prof.extent(self.dim(), EXTENT_EPS);
                for (v, x) in values.iter_mut().zip(&points) {
                    let u: Vec<f64> = x.iter().zip(lam).map(|(a, l)| a - l).collect();
                    if u.iter().zip(&ext).all(|(t, (lo, hi))| *t >= *lo && *t <= *hi) {
                        *v += coeff * prof.eval(&u);
                    }
                }
            }
        }
        let tail_bound = EXTENT_EPS * c.iter().map(|v| v.abs()).sum::<f64>();
        Ok(SynthesisSample { points, values, step: grid.step, tail_bound })
    }

    /// Ratio of the sampled `‖S c‖_p` to `R(Λ)^{1−1/p}‖h‖_{𝒲₁}‖c‖_p`.
    pub fn synthesis_bound_ratio(&self, c: &[f64], sample: &SynthesisSample, p: PNorm) -> f64 {
        let r = self.index.separation_constant() as f64;
        let h = self.envelope.amalgam_norm(self.dim()).value;
        let denom = r.powf(1.0 - p.recip()) * h * lp_norm(c, p);
        if denom == 0.0 {
            0.0
        } else {
            sample.lp_norm(p, self.dim()) / denom
        }
    }
}

fn calibrate(deltas: &[f64], ratios: &[f64]) -> ModulusBound {
    let pts: Vec<(f64, f64)> =
        deltas.iter().zip(ratios).filter(|(_, r)| **r > 0.0).map(|(d, r)| (d.ln(), r.ln())).collect();
    if pts.is_empty() {
        return ModulusBound::Power { c: 0.0, alpha: 1.0 };
    }
    let alpha = if pts.len() < 2 {
        1.0
    } else {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxy / sxx).clamp(1e-3, 1.0)
    };
    let c = deltas.iter().zip(ratios).map(|(d, r)| r / d.powf(alpha)).fold(0.0, f64::max);
    ModulusBound::Power { c: c * (1.0 + 1e-9), alpha }
}

/// Points `lo + step·k`, `0 ≤ k_i < counts_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub lo: Vec<f64>,
    pub step: f64,
    pub counts: Vec<usize>,
}

impl UniformGrid {
    pub fn points(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .lo
            .iter()
            .zip(&self.counts)
            .map(|(&a, &n)| (0..n).map(|k| a + self.step * k as f64).collect())
            .collect();
        cartesian(&axes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthesisSample {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub step: f64,
    /// Bound on the omitted contributions at each point.
    pub tail_bound: f64,
}

impl SynthesisSample {
    /// Riemann-sum approximation of the `Lᵖ` norm.
    pub fn lp_norm(&self, p: PNorm, d: usize) -> f64 {
        lp_norm(&self.values, p) * self.step.powf(d as f64 * p.recip())
    }
}
