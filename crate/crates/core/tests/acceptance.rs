use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use locop_core::corpus::{
    banded_random, bspline_gram, gaussian_kernel, pair_swap, row_permuted, slanted, symmetric_toeplitz, SlantRule,
};
use locop_core::kernelop::{default_probes, discretization_error_curve, perturbed_identity_stability};
use locop_core::stability::{
    classify, convolution_stability, density_check, equivalence_report, inverse_decay_profile, lower_constant,
    EquivalenceConfig, SymbolVerdict, Trend,
};
use locop_core::synthesis::{synthesis_stability, GeneratorFamily, GeneratorRule, ModulusBound};
use locop_core::{CutoffOperator, DyadicFunction, IndexSet, LocalizedMatrix, PNorm, Profile1D, TensorProfile};
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn ps() -> [PNorm; 3] {
    [PNorm::ONE, PNorm::TWO, PNorm::INF]
}

fn eigen_extremes(a: &LocalizedMatrix) -> (f64, f64) {
    let e = SymmetricEigen::new(a.to_dense()).eigenvalues;
    (e.min(), e.max())
}

fn toeplitz_min_section() -> Outcome {
    let a = symmetric_toeplitz(&[1.0, 3.0, 1.0], 200).map_err(err)?;
    let closed = 3.0 - 2.0 * (PI / 201.0).cos();
    let (oracle, _) = eigen_extremes(&a);
    check((oracle - closed).abs() <= 1e-12 * closed, format!("eigensolver {oracle} vs closed form {closed}"))?;
    let l = lower_constant(&a, PNorm::TWO, None).map_err(err)?;
    let rel = (l.value - oracle).abs() / oracle;
    check(rel <= 1e-9, format!("lower {} vs {oracle}, rel {rel:e}", l.value))?;
    check(l.certified, "estimate not certified")?;
    Ok(format!("lower {:.12}, rel err {rel:.1e}", l.value))
}

fn symbol_verdicts() -> Outcome {
    let bad = convolution_stability(&[1.0, 2.0, 1.0], -1, 1 << 16).map_err(err)?;
    let [lo, hi] = bad.certified_min_interval;
    check(bad.verdict == SymbolVerdict::Unstable, format!("(1,2,1) verdict {:?}", bad.verdict))?;
    check(lo <= 0.0 && 0.0 <= hi, format!("(1,2,1) interval [{lo}, {hi}] misses 0"))?;
    let good = convolution_stability(&[1.0, 3.0, 1.0], -1, 1 << 16).map_err(err)?;
    let [glo, ghi] = good.certified_min_interval;
    check(good.verdict == SymbolVerdict::Stable, format!("(1,3,1) verdict {:?}", good.verdict))?;
    check(glo >= 0.999 && ghi <= 1.0, format!("(1,3,1) interval [{glo}, {ghi}]"))?;
    Ok(format!("(1,2,1) in [{lo:.2e}, {hi:.2e}], (1,3,1) in [{glo:.6}, {ghi:.6}]"))
}

fn inverse_decay() -> Outcome {
    let a = symmetric_toeplitz(&[1.0, 3.0, 1.0], 101).map_err(err)?;
    let target = (3.0 - 5f64.sqrt()) / 2.0;
    let inv = a.to_dense().try_inverse().ok_or("singular window")?;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        (0..=20).map(|k| (k as f64, inv[(50, 50 + k)].abs().ln())).unzip();
    let (mx, my) = (xs.iter().sum::<f64>() / 21.0, ys.iter().sum::<f64>() / 21.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let oracle = slope.exp();
    check((oracle - target).abs() <= 0.01, format!("dense oracle rate {oracle}"))?;
    let fit = inverse_decay_profile(&a, 25.0).map_err(err)?;
    check((fit.rate - target).abs() <= 0.01, format!("rate {} vs {target}", fit.rate))?;
    Ok(format!("rate {:.6} (oracle {oracle:.6}, target {target:.6})", fit.rate))
}

fn ladder(big: &LocalizedMatrix, sizes: &[f64]) -> Result<Vec<LocalizedMatrix>, String> {
    sizes.iter().map(|&s| big.section(s).map_err(err)).collect()
}

fn equivalence_structure() -> Outcome {
    let sizes = [64.0, 128.0, 256.0];
    let cfg = EquivalenceConfig { seed: Some(7), ..Default::default() };
    let t = symmetric_toeplitz(&[1.0, 3.0, 1.0], 256).map_err(err)?;
    let stable = [
        ("toeplitz(1,3,1)", t.clone()),
        ("row-permuted", row_permuted(&t).map_err(err)?),
        ("banded_random", banded_random(2, 1.0, 0.5, 7, 256).map_err(err)?),
    ];
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for (name, big) in &stable {
        let r = equivalence_report(&ladder(big, &sizes)?, &cfg).map_err(err)?;
        for rep in &r.reports {
            let lows = rep.lower_constants();
            let change = ((lows[2] - lows[1]) / lows[1]).abs();
            if !(change < 0.05 && lows[2] > 0.1 && rep.trend == Trend::Stable) {
                failures.push(format!("{name} p={} lower {lows:.4?}, last change {:.1}%", rep.p, 100.0 * change));
            }
        }
        summary.push(format!("{name} stable"));
    }
    let bad = symmetric_toeplitz(&[1.0, 2.0, 1.0], 256).map_err(err)?;
    let r = equivalence_report(&ladder(&bad, &sizes)?, &cfg).map_err(err)?;
    for rep in &r.reports {
        let lows = rep.lower_constants();
        for w in lows.windows(2) {
            check(w[1] <= 0.7 * w[0], format!("toeplitz(1,2,1) p={}: {lows:?}", rep.p))?;
        }
    }
    let deep = EquivalenceConfig { min_doublings: 2, ..cfg };
    for rep in &r.reports {
        check(classify(&rep.lower_constants(), &deep) == Trend::Degenerating, "classification of (1,2,1)")?;
    }
    summary.push("toeplitz(1,2,1) decays at every p".into());
    check(failures.is_empty(), failures.join("; "))?;
    Ok(summary.join(", "))
}

fn corpus_matrices() -> Result<Vec<(String, LocalizedMatrix)>, String> {
    let t = symmetric_toeplitz(&[1.0, 3.0, 1.0], 128).map_err(err)?;
    Ok(vec![
        ("toeplitz(1,3,1)".into(), t.clone()),
        ("toeplitz(1,2,1)".into(), symmetric_toeplitz(&[1.0, 2.0, 1.0], 128).map_err(err)?),
        ("row-permuted".into(), t.permute_rows(&pair_swap(128)).map_err(err)?),
        ("banded_random".into(), banded_random(2, 1.0, 0.5, 11, 128).map_err(err)?),
        ("banded_random(4)".into(), banded_random(4, 0.3, 0.5, 12, 96).map_err(err)?),
        ("slanted".into(), slanted(2.0, &SlantRule::Decay { rate: 1.0, reach: 3.0 }, 64).map_err(err)?),
        ("bspline_gram(4)".into(), bspline_gram(4, 64).map_err(err)?),
    ])
}

fn commutator_invariant() -> Outcome {
    let mut checked = 0;
    for (name, a) in corpus_matrices()? {
        let s = a.band_width();
        for n in [4u64, 8, 16, 32] {
            for k in [-2i64, 0, 1, 3, 8, 20] {
                let c = (k * n as i64) as f64;
                let op = CutoffOperator::new(vec![c], n).map_err(err)?;
                let lhs = a.commutator_with_cutoff(&op).map_err(err)?.sjostrand_norm();
                let rhs = s / n as f64 * a.sjostrand_norm();
                check(lhs <= rhs + 1e-12, format!("{name} N={n} center {c}: {lhs} > {rhs}"))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} (matrix, N, center) cases"))
}

fn truncation_tails() -> Outcome {
    for (name, a) in corpus_matrices()? {
        let diam = a.band_width();
        let s: Vec<f64> = (0..=(2.0 * diam).ceil() as usize + 4).map(|k| k as f64 * 0.5).collect();
        let tails = a.truncation_tail(&s).map_err(err)?;
        check(tails.windows(2).all(|w| w[1].1 <= w[0].1), format!("{name}: tails increase"))?;
        for &(r, v) in &tails {
            check(r <= diam || v == 0.0, format!("{name}: tail {v} at s={r} beyond diameter {diam}"))?;
        }
    }
    let t = symmetric_toeplitz(&[1.0, 3.0, 1.0], 128).map_err(err)?;
    let tails: Vec<f64> = t.truncation_tail(&[0.0, 1.0, 2.0]).map_err(err)?.into_iter().map(|x| x.1).collect();
    check(tails == [5.0, 2.0, 0.0], format!("toeplitz(1,3,1) tails {tails:?}"))?;
    Ok(format!("toeplitz(1,3,1) tails {tails:?}"))
}

fn hat_synthesis() -> Outcome {
    let index = IndexSet::integers(0, 255).map_err(err)?;
    let fam = GeneratorFamily::new(
        index,
        GeneratorRule::Shift { profiles: vec![Profile1D::hat().into()] },
        Profile1D::indicator(-1.0, 3.0, 1.0).map_err(err)?.into(),
        ModulusBound::Power { c: 1.0, alpha: 1.0 },
    )
    .map_err(err)?;
    let (gmin, gmax) = eigen_extremes(&bspline_gram(2, 256).map_err(err)?);
    let (olow, oup) = (gmin.sqrt(), gmax.sqrt());
    check((olow - (1.0f64 / 3.0).sqrt()).abs() < 0.01 * olow && (oup - 1.0).abs() < 0.01, "gram oracle")?;
    let s = synthesis_stability(&fam, PNorm::TWO, &[6], &[256.0], None).map_err(err)?;
    let e = &s.levels[0].report.entries[0];
    let (low, up) = (e.lower.value, e.upper.value);
    let target = (1.0f64 / 3.0).sqrt();
    check((low - target).abs() <= 0.01 * target, format!("lower {low} vs {target}"))?;
    check((up - 1.0).abs() <= 0.01, format!("upper {up}"))?;
    Ok(format!("lower {low:.6} (gram {olow:.6}), upper {up:.6} (gram {oup:.6})"))
}

/// `‖Σ a_k χ_k‖_p` by summing `|f|^p` at midpoints of a finer grid.
fn midpoint_norm(f: &DyadicFunction, p: PNorm) -> f64 {
    let fine = f.level() + 1;
    let h = 0.5f64.powi(fine as i32);
    let d = f.dim();
    let count: usize = f.shape().iter().map(|s| 2 * s).product();
    let mut acc: f64 = 0.0;
    for flat in 0..count {
        let mut rest = flat;
        let mut x = vec![0.0; d];
        for a in (0..d).rev() {
            let n = 2 * f.shape()[a];
            x[a] = (2 * f.origin()[a] + (rest % n) as i64) as f64 * h + h / 2.0;
            rest /= n;
        }
        let v = f.eval(&x).abs();
        acc = if p.is_inf() { acc.max(v) } else { acc + v.powf(p.value()) * h.powi(d as i32) };
    }
    if p.is_inf() {
        acc
    } else {
        acc.powf(1.0 / p.value())
    }
}

fn dyadic_norm_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let d = 1 + trial % 2;
        let shape: Vec<usize> = (0..d).map(|_| rng.random_range(1..=if d == 1 { 40 } else { 8 })).collect();
        let origin: Vec<i64> = (0..d).map(|_| rng.random_range(-10..10)).collect();
        let len = shape.iter().product();
        let a: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
        for n0 in 0..=6u32 {
            let f = DyadicFunction::new(n0, origin.clone(), shape.clone(), a.clone()).map_err(err)?;
            for p in ps() {
                let seq = locop_core::lp_norm(&a, p);
                let expected = 2f64.powf(-(n0 as f64) * d as f64 * p.recip()) * seq;
                let direct = midpoint_norm(&f, p);
                let (e1, e2) = ((f.lp_norm(p) - expected).abs(), (direct - expected).abs());
                worst = worst.max(e1).max(e2);
                check(e1 <= 1e-12 && e2 <= 1e-12, format!("trial {trial} n0={n0} p={p}: {e1:e} {e2:e}"))?;
            }
        }
    }
    Ok(format!("worst deviation {worst:.1e}"))
}

fn kernel_rate() -> Outcome {
    let op = gaussian_kernel(0.1, 1.0).map_err(err)?;
    let ns: Vec<u32> = (3..=8).collect();
    let curve = discretization_error_curve(&op, &ns, &default_probes(1), PNorm::TWO).map_err(err)?;
    let slope = curve.slope.ok_or("no slope")?;
    check((-1.2..=-0.8).contains(&slope), format!("slope {slope}"))?;
    let ratios: Vec<String> = curve.points.iter().map(|p| format!("{:.2e}", p.ratio)).collect();
    Ok(format!("slope {slope:.4}, ratios [{}]", ratios.join(", ")))
}

fn perturbed_identity() -> Outcome {
    let op = gaussian_kernel(0.1, 1.0).map_err(err)?;
    let s = perturbed_identity_stability(&op, PNorm::TWO, &[2, 3, 4], &[8.0, 16.0, 32.0], None).map_err(err)?;
    let mut lows = Vec::new();
    for lvl in &s.levels {
        for e in &lvl.report.entries {
            check((0.82..=1.18).contains(&e.lower.value), format!("n={} W={}: {}", lvl.n, e.window, e.lower.value))?;
            lows.push(e.lower.value);
        }
        check(lvl.report.trend == Trend::Stable, format!("n={} trend {:?}", lvl.n, lvl.report.trend))?;
    }
    let mut probes: Vec<TensorProfile> = default_probes(1);
    probes.push(Profile1D::gaussian(1.0, 0.7).map_err(err)?.into());
    for probe in &probes {
        let f = DyadicFunction::from_profile(probe, 9, &[-4096], &[4096]).map_err(err)?;
        for n in 0..=8u32 {
            let (pf, _) = f.project(n).map_err(err)?;
            let (ppf, _) = pf.project(n).map_err(err)?;
            let idem = pf.values().iter().zip(ppf.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            check(idem <= 1e-12, format!("P_n not idempotent: {idem}"))?;
            for q in [PNorm::ONE, PNorm::TWO, PNorm::new(3.0).map_err(err)?, PNorm::INF] {
                check(pf.lp_norm(q) <= f.lp_norm(q) * (1.0 + 1e-14), format!("P_{n} expands at q={q}"))?;
            }
        }
    }
    let (lo, hi) = lows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(format!("lower constants in [{lo:.4}, {hi:.4}]"))
}

fn density() -> Outcome {
    let pts = |step: i64| (-100..=200).filter(|k| k % step == 0).map(|k| vec![k as f64]).collect::<Vec<_>>();
    let set = |step| IndexSet::new(1, vec![[-100.0, 200.0]], pts(step)).map_err(err);
    let (even, all) = (set(2)?, set(1)?);
    let k = vec![[10.0, 90.0]];
    let v = density_check(&even, &all, 3.0, &[k]).map_err(err)?;
    let near = (-100..=200).filter(|j| j % 2 == 0 && *j > 7 && *j < 93).count();
    let inside = (10..=90).count();
    check(v[0].rows_near == near && v[0].cols_inside == inside, format!("counts {v:?}"))?;
    check(!v[0].pass && near < inside, "2Z against Z passes")?;
    let boxes: Vec<_> = (-90..150).step_by(7).flat_map(|a| [1, 4, 15, 60].map(|w| vec![[a as f64, (a + w) as f64]])).collect();
    let same = density_check(&all, &all, 3.0, &boxes).map_err(err)?;
    check(same.iter().all(|v| v.pass), "identical sets fail some box")?;
    Ok(format!("2Z vs Z: {near} < {inside}; Z vs Z passes {} boxes", boxes.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Option<u64>); 11] = [
        ("C1 toeplitz finite section lower constant", toeplitz_min_section, Some(1)),
        ("C2 symbol verdicts", symbol_verdicts, Some(1)),
        ("C3 inverse decay rate", inverse_decay, Some(1)),
        ("C4 equivalence structure", equivalence_structure, Some(30)),
        ("C5 commutator bound", commutator_invariant, Some(5)),
        ("C6 truncation tails", truncation_tails, None),
        ("C7 hat synthesis constants", hat_synthesis, Some(5)),
        ("C8 dyadic norm identity", dyadic_norm_identity, None),
        ("C9 kernel discretization rate", kernel_rate, Some(20)),
        ("C10 perturbed identity", perturbed_identity, None),
        ("C11 density condition", density, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if took > Duration::from_secs(l) => Err(format!("took {took:.2?}, limit {l} s")),
            (o, _) => o,
        };
        match outcome {
            Ok(msg) => println!("PASS {name} ({took:.2?}): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name} ({took:.2?}): {msg}");
            }
        }
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
