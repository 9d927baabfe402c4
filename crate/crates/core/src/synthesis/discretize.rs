//! The cell-average matrix `A_{n₀}` of a generator family and the synthesis
//! stability ladder built on it.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::family::{GeneratorFamily, ProbeConfig, EXTENT_EPS};
use crate::error::{Error, Result};
use crate::lattice::IndexSet;
use crate::matalg::LocalizedMatrix;
use crate::norm::PNorm;
use crate::stability::{classify, EquivalenceConfig, ReportEntry, StabilityReport};
use crate::stability::{lower_constant_op, upper_constant_op, Operator};

/// `a(λ′, λ) = 2^{n₀d} ∫_{λ′+2^{−n₀}[0,1)ᵈ} φ_λ`, one block per generator
/// profile, rows over the dyadic cells meeting some generator's extent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthesisMatrix {
    pub level: u32,
    pub rows: IndexSet,
    pub blocks: Vec<LocalizedMatrix>,
}

impl SynthesisMatrix {
    pub fn operator(&self) -> Result<Operator> {
        Operator::hstack(&self.blocks)
    }

    /// Cell indices `k` of the rows, `λ′ = 2^{−n₀}k`.
    pub fn row_cells(&self) -> Vec<Vec<i64>> {
        let scale = 2f64.powi(self.level as i32);
        self.rows.points().iter().map(|x| x.iter().map(|v| (v * scale).round() as i64).collect()).collect()
    }
}

fn cell_range(lo: f64, hi: f64, scale: f64) -> (i64, i64) {
    ((lo * scale).floor() as i64, (hi * scale).ceil() as i64)
}

pub fn discretize_synthesis(fam: &GeneratorFamily, n0: u32) -> Result<SynthesisMatrix> {
    fam.validate()?;
    if fam.index.is_empty() {
        return Err(Error::InvalidInput("generator family without index points".into()));
    }
    let d = fam.dim();
    let scale = 2f64.powi(n0 as i32);
    let h = 1.0 / scale;
    let n = fam.index.len();

    // Per (block, generator): the per-axis cell ranges and cell averages.
    let columns: Vec<Vec<(Vec<i64>, Vec<Vec<f64>>)>> = (0..fam.blocks())
        .map(|b| {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let lam = fam.index.point(i);
                    let prof = fam.local_profile(b, i);
                    let ext = prof.extent(d, EXTENT_EPS);
                    let mut start = Vec::with_capacity(d);
                    let mut avgs = Vec::with_capacity(d);
                    for axis in 0..d {
                        let (k0, k1) = cell_range(lam[axis] + ext[axis].0, lam[axis] + ext[axis].1, scale);
                        let f = prof.factor(axis);
                        avgs.push(
                            (k0..k1)
                                .map(|k| {
                                    let a = k as f64 * h - lam[axis];
                                    f.average(a, a + h)
                                })
                                .collect(),
                        );
                        start.push(k0);
                    }
                    (start, avgs)
                })
                .collect()
        })
        .collect();

    let mut cells: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    for block in &columns {
        for (start, avgs) in block {
            for_each_cell(start, avgs, |k, _| {
                cells.entry(k).or_insert(0);
            });
        }
    }
    for (pos, v) in cells.values_mut().enumerate() {
        *v = pos;
    }
    let points: Vec<Vec<f64>> = cells.keys().map(|k| k.iter().map(|&c| c as f64 * h).collect()).collect();
    let window = (0..d)
        .map(|a| {
            let lo = points.iter().map(|x| x[a]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|x| x[a]).fold(f64::NEG_INFINITY, f64::max);
            [lo, hi]
        })
        .collect();
    let rows = IndexSet::new(d, window, points)?;

    let blocks = columns
        .iter()
        .map(|block| {
            let mut entries = Vec::new();
            for (j, (start, avgs)) in block.iter().enumerate() {
                for_each_cell(start, avgs, |k, v| {
                    if v != 0.0 {
                        entries.push((cells[&k], j, v));
                    }
                });
            }
            LocalizedMatrix::new(rows.clone(), fam.index.clone(), entries)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthesisMatrix { level: n0, rows, blocks })
}

fn for_each_cell(start: &[i64], avgs: &[Vec<f64>], mut f: impl FnMut(Vec<i64>, f64)) {
    let d = start.len();
    if avgs.iter().any(|a| a.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; d];
    loop {
        let k: Vec<i64> = idx.iter().zip(start).map(|(&i, &s)| s + i as i64).collect();
        let v: f64 = idx.iter().zip(avgs).map(|(&i, a)| a[i]).product();
        f(k, v);
        let mut axis = d;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < avgs[axis].len() {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Constants of the synthesis operator at one `n₀`, per window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelReport {
    pub n0: u32,
    /// `2^{−n₀d/p}`, the factor converting `‖A_{n₀}c‖_p` to `‖S c‖_p`.
    pub norm_factor: f64,
    /// `R(Λ)^{1−1/p}·ω(2^{−n₀})·‖h‖_{𝒲₁}`: the shape of the discretization
    /// bias, up to an absolute constant.
    pub bias_scale: f64,
    pub report: StabilityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthesisStability {
    pub p: PNorm,
    pub levels: Vec<LevelReport>,
    /// Relative change of the lower constant on the largest window between
    /// the two finest levels.
    pub level_drift: Option<f64>,
}

/// Lower and upper constants of `c ↦ Σ c(λ)φ_λ` restricted to `c` supported
/// on index sections of the given sizes, computed from `A_{n₀}` for each
/// `n₀`. The hypotheses of the family are checked first.
pub fn synthesis_stability(
    fam: &GeneratorFamily,
    p: PNorm,
    n0s: &[u32],
    windows: &[f64],
    seed: Option<u64>,
) -> Result<SynthesisStability> {
    if n0s.is_empty() || windows.is_empty() {
        return Err(Error::InvalidInput("empty level or window ladder".into()));
    }
    let hyp = fam.check_hypotheses(&ProbeConfig::default())?;
    let d = fam.dim();
    let sections = windows.iter().map(|&w| fam.section(w)).collect::<Result<Vec<_>>>()?;
    let cfg = EquivalenceConfig::default();
    let mut levels = Vec::with_capacity(n0s.len());
    for &n0 in n0s {
        let factor = 2f64.powf(-(n0 as f64) * d as f64 * p.recip());
        let entries = sections
            .par_iter()
            .map(|sec| {
                let op = discretize_synthesis(sec, n0)?.operator()?;
                Ok(ReportEntry {
                    window: sec.len(),
                    lower: lower_constant_op(&op, p, seed)?.scaled(factor),
                    upper: upper_constant_op(&op, p)?.scaled(factor),
                    interior_lower: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let lower: Vec<f64> = entries.iter().map(|e| e.lower.value).collect();
        let trend = classify(&lower, &cfg);
        let r = fam.index.separation_constant() as f64;
        let bias_scale = r.powf(1.0 - p.recip())
            * hyp.modulus.eval(0.5f64.powi(n0 as i32)).unwrap_or(f64::NAN)
            * fam.envelope.amalgam_norm(d).value;
        levels.push(LevelReport { n0, norm_factor: factor, bias_scale, report: StabilityReport { p, entries, trend } });
    }
    let level_drift = match levels.as_slice() {
        [.., a, b] => {
            let (x, y) = (a.report.entries.last().unwrap().lower.value, b.report.entries.last().unwrap().lower.value);
            Some(if x == 0.0 { (y - x).abs() } else { ((y - x) / x).abs() })
        }
        _ => None,
    };
    Ok(SynthesisStability { p, levels, level_drift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::family::{GeneratorRule, ModulusBound};
    use crate::synthesis::profile::{Profile1D, TensorProfile};

    fn shifts(profile: TensorProfile, envelope: Profile1D, d: usize, n: i64) -> GeneratorFamily {
        let index = if d == 1 {
            IndexSet::integers(0, n - 1).unwrap()
        } else {
            IndexSet::grid(vec![[0.0, (n - 1) as f64]; d], 1.0).unwrap()
        };
        let env = TensorProfile::new(vec![envelope; d]).unwrap();
        GeneratorFamily::new(
            index,
            GeneratorRule::Shift { profiles: vec![profile] },
            env,
            ModulusBound::Power { c: 1.0, alpha: 1.0 },
        )
        .unwrap()
    }

    fn hats(n: i64) -> GeneratorFamily {
        shifts(Profile1D::hat().into(), Profile1D::indicator(-1.0, 3.0, 1.0).unwrap(), 1, n)
    }

    #[test]
    fn indicator_shifts_give_identity() {
        let chi = Profile1D::indicator(0.0, 1.0, 1.0).unwrap();
        let fam = shifts(chi.clone().into(), chi, 1, 10);
        let m = discretize_synthesis(&fam, 0).unwrap();
        assert_eq!(m.rows.len(), 10);
        assert_eq!(m.blocks[0].to_dense(), nalgebra::DMatrix::identity(10, 10));
    }

    #[test]
    fn hat_columns_are_halves() {
        let m = discretize_synthesis(&hats(6), 0).unwrap();
        let a = &m.blocks[0];
        for j in 0..6 {
            let col: Vec<f64> = a.entries().iter().filter(|e| e.1 == j).map(|e| e.2).collect();
            assert_eq!(col, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn refinement_consistency() {
        let fams = [
            hats(5),
            shifts(
                Profile1D::gaussian(1.0, 0.7).unwrap().into(),
                Profile1D::exponential(4.0, 0.5).unwrap(),
                1,
                4,
            ),
            shifts(
                TensorProfile::new(vec![Profile1D::bspline(3).unwrap(), Profile1D::hat()]).unwrap(),
                Profile1D::indicator(-1.0, 4.0, 1.0).unwrap(),
                2,
                3,
            ),
        ];
        for fam in &fams {
            let d = fam.dim();
            for n0 in 0..3 {
                let coarse = discretize_synthesis(fam, n0).unwrap();
                let fine = discretize_synthesis(fam, n0 + 1).unwrap();
                let (cd, fd) = (coarse.blocks[0].to_dense(), fine.blocks[0].to_dense());
                let fine_cells = fine.row_cells();
                let mut agg = nalgebra::DMatrix::zeros(cd.nrows(), cd.ncols());
                let lookup: BTreeMap<Vec<i64>, usize> =
                    coarse.row_cells().into_iter().enumerate().map(|(i, k)| (k, i)).collect();
                for (r, k) in fine_cells.iter().enumerate() {
                    let parent: Vec<i64> = k.iter().map(|c| c.div_euclid(2)).collect();
                    let Some(&i) = lookup.get(&parent) else {
                        assert!(fd.row(r).iter().all(|v| v.abs() < 1e-300));
                        continue;
                    };
                    for j in 0..cd.ncols() {
                        agg[(i, j)] += fd[(r, j)] / 2f64.powi(d as i32);
                    }
                }
                assert!((agg - cd).abs().max() < 1e-12);
            }
        }
    }

    #[test]
    fn sjostrand_bounded_by_envelope() {
        for n0 in 0..4 {
            let fam = hats(12);
            let a = &discretize_synthesis(&fam, n0).unwrap().blocks[0];
            let bound = 2.0 * fam.envelope.amalgam_norm(1).value;
            assert!(a.sjostrand_norm() <= bound + 1e-12);
            let lin = a.scale(3.0);
            let c: Vec<f64> = (0..12).map(|i| i as f64 - 4.5).collect();
            let (y, y3) = (a.apply(&c).unwrap(), lin.apply(&c).unwrap());
            assert!(y.iter().zip(&y3).all(|(u, v)| (3.0 * u - v).abs() < 1e-12));
        }
    }

    #[test]
    fn indicator_shifts_are_isometric() {
        let chi = Profile1D::indicator(0.0, 1.0, 1.0).unwrap();
        let mut fam = shifts(chi.into(), Profile1D::indicator(-1.0, 2.0, 1.0).unwrap(), 1, 16);
        fam.modulus = ModulusBound::Power { c: 1.0, alpha: 0.0 };
        for p in [PNorm::ONE, PNorm::TWO, PNorm::INF, PNorm::new(3.0).unwrap()] {
            let s = synthesis_stability(&fam, p, &[0, 2], &[4.0, 8.0], Some(1)).unwrap();
            for lvl in &s.levels {
                for e in &lvl.report.entries {
                    assert!((e.lower.value - 1.0).abs() < 1e-9, "{p} {e:?}");
                    assert!((e.upper.value - 1.0).abs() < 1e-9, "{p} {e:?}");
                }
            }
        }
    }

    #[test]
    fn hat_shifts_riesz_bounds() {
        let s = synthesis_stability(&hats(64), PNorm::TWO, &[3, 4], &[16.0, 64.0], None).unwrap();
        let e = s.levels[1].report.entries.last().unwrap();
        assert!((e.lower.value - (1.0f64 / 3.0).sqrt()).abs() < 0.02);
        assert!((e.upper.value - 1.0).abs() < 0.02);
        assert!(s.level_drift.unwrap() < 0.01);
    }

    #[test]
    fn violated_envelope_blocks_stability() {
        let bump = Profile1D::pp(vec![0.0, 1.0], vec![vec![1.2]]).unwrap();
        let fam = shifts(bump.into(), Profile1D::indicator(0.0, 1.0, 1.0).unwrap(), 1, 8);
        let err = synthesis_stability(&fam, PNorm::TWO, &[2], &[8.0], None).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
