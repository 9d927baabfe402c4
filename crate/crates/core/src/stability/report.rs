//! Lower and upper constants across a ladder of nested windows and several
//! norm indices, with the cross-`p` stabilization structure.

use rayon::prelude::*;
use serde::Serialize;

use super::{lower_constant, upper_constant, Estimate};
use crate::error::{Error, Result};
use crate::matalg::LocalizedMatrix;
use crate::norm::PNorm;

/// Behaviour of lower constants as the window grows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Stable,
    Degenerating,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceConfig {
    pub ps: Vec<PNorm>,
    /// Lower constants must end above this to count as stable.
    pub tau: f64,
    /// Largest relative change over the last rung for a stable ladder.
    pub stable_tol: f64,
    /// Smallest relative decrease per rung for a degenerating ladder.
    pub decay: f64,
    /// Number of consecutive decreasing rungs required for degeneration.
    pub min_doublings: usize,
    /// Also estimate lower constants over test vectors supported at depth at
    /// least the band width inside the window.
    pub interior: bool,
    pub seed: Option<u64>,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        EquivalenceConfig {
            ps: vec![PNorm::ONE, PNorm::TWO, PNorm::INF],
            tau: 0.1,
            stable_tol: 0.05,
            decay: 0.3,
            min_doublings: 3,
            interior: true,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportEntry {
    pub window: usize,
    pub lower: Estimate,
    pub upper: Estimate,
    pub interior_lower: Option<Estimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub p: PNorm,
    pub entries: Vec<ReportEntry>,
    pub trend: Trend,
}

impl StabilityReport {
    pub fn window_sizes(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.window).collect()
    }

    pub fn lower_constants(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.lower.value).collect()
    }

    pub fn upper_constants(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.upper.value).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub reports: Vec<StabilityReport>,
    pub tau: f64,
    pub interior_margin: Option<f64>,
    /// Some `p` stabilizes while another degenerates.
    pub counterexample_candidate: bool,
    pub all_stable: bool,
    pub all_degenerating: bool,
    pub notes: Vec<String>,
}

/// Classifies a ladder of lower constants listed by increasing window.
pub fn classify(values: &[f64], cfg: &EquivalenceConfig) -> Trend {
    if values.len() < 2 {
        return Trend::Undetermined;
    }
    let decreasing = values
        .windows(2)
        .rev()
        .take_while(|w| w[1] <= (1.0 - cfg.decay) * w[0])
        .count();
    if decreasing >= cfg.min_doublings {
        return Trend::Degenerating;
    }
    let (prev, last) = (values[values.len() - 2], values[values.len() - 1]);
    if prev > 0.0 && ((last - prev) / prev).abs() < cfg.stable_tol && last > cfg.tau {
        return Trend::Stable;
    }
    Trend::Undetermined
}

/// Estimates constants on each window of a nested ladder (listed from the
/// smallest) at every `p` of the configuration.
pub fn equivalence_report(windows: &[LocalizedMatrix], cfg: &EquivalenceConfig) -> Result<EquivalenceReport> {
    if windows.is_empty() {
        return Err(Error::InvalidInput("empty window ladder".into()));
    }
    for (k, w) in windows.windows(2).enumerate() {
        if !w[0].is_section_of(&w[1]) {
            return Err(Error::NotNested(format!("window {k} is not a section of window {}", k + 1)));
        }
    }
    let margin = cfg.interior.then(|| windows.last().map(|w| w.band_width()).unwrap_or(0.0));
    let tasks: Vec<(usize, usize)> =
        (0..cfg.ps.len()).flat_map(|pi| (0..windows.len()).map(move |wi| (pi, wi))).collect();
    let results: Vec<Result<ReportEntry>> = tasks
        .par_iter()
        .map(|&(pi, wi)| {
            let (a, p) = (&windows[wi], cfg.ps[pi]);
            let lower = lower_constant(a, p, cfg.seed)?;
            let upper = upper_constant(a, p)?;
            let interior_lower = match margin {
                Some(m) => {
                    let inner = a.interior_columns(m)?;
                    if inner.cols().is_empty() || inner.nnz() == 0 {
                        None
                    } else {
                        Some(lower_constant(&inner, p, cfg.seed)?)
                    }
                }
                None => None,
            };
            Ok(ReportEntry { window: a.rows().len(), lower, upper, interior_lower })
        })
        .collect();
    let mut results = results.into_iter();
    let mut reports = Vec::new();
    for &p in &cfg.ps {
        let entries: Vec<ReportEntry> = results.by_ref().take(windows.len()).collect::<Result<_>>()?;
        let lows: Vec<f64> = entries.iter().map(|e| e.lower.value).collect();
        reports.push(StabilityReport { p, entries, trend: classify(&lows, cfg) });
    }
    reports.sort_by(|a, b| a.p.partial_cmp(&b.p).unwrap_or(std::cmp::Ordering::Equal));
    let any = |t: Trend| reports.iter().any(|r| r.trend == t);
    let all = |t: Trend| reports.iter().all(|r| r.trend == t);
    let mut notes = Vec::new();
    if cfg.ps.iter().any(|p| p.is_inf()) {
        notes.push("p = inf is treated as every finite p; the argument for that endpoint is not spelled out".into());
    }
    if reports.iter().any(|r| r.entries.iter().any(|e| !e.lower.certified)) {
        notes.push("uncertified lower constants are upper bounds on the window infimum".into());
    }
    Ok(EquivalenceReport {
        tau: cfg.tau,
        interior_margin: margin,
        counterexample_candidate: any(Trend::Stable) && any(Trend::Degenerating),
        all_stable: all(Trend::Stable),
        all_degenerating: all(Trend::Degenerating),
        notes,
        reports,
    })
}
