use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use locop_core::corpus::{CorpusObject, CorpusSpec};
use locop_core::kernelop::{
    default_probes, discretization_error_curve, kernel_truncation_tail, perturbed_identity_stability, centered_window,
    ErrorCurve, KernelStability, TailRow,
};
use locop_core::lattice::{IndexSet, Window};
use locop_core::stability::{
    convolution_stability, density_check, equivalence_report, inverse_decay_profile, upper_constant, DecayFit,
    DensityVerdict, EquivalenceConfig, EquivalenceReport, Estimate, StabilityReport, SymbolCertificate,
};
use locop_core::synthesis::{synthesis_stability, GeneratorFamily, SynthesisStability};
use locop_core::{KernelOperator, LocalizedMatrix, PNorm, Weight};
use serde::{Deserialize, Serialize};

use crate::output::{json_bytes, num, read_json, read_sequence, sha256_hex, write_atomic, write_json, Table};
use crate::CliError;

/// Dyadic levels given as `a..b` (inclusive) or a comma list.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Levels(pub Vec<u32>);

impl FromStr for Levels {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("cannot parse levels {s:?}");
        if let Some((a, b)) = s.split_once("..") {
            let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            return Ok(Levels((a..=b).collect()));
        }
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>().map(Levels)
    }
}

impl<'de> Deserialize<'de> for Levels {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            List(Vec<u32>),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::List(v) => Ok(Levels(v)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn default_ps() -> Vec<PNorm> {
    vec![PNorm::ONE, PNorm::TWO, PNorm::INF]
}

fn default_two() -> Vec<PNorm> {
    vec![PNorm::TWO]
}

fn rebase(dir: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = dir.join(&*p);
    }
}

fn rebase_opt(dir: &Path, p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        rebase(dir, p);
    }
}

fn load_matrix(path: &Path) -> Result<LocalizedMatrix, CliError> {
    read_json(path)
}

fn ladder(a: &LocalizedMatrix, windows: &[f64]) -> Result<Vec<LocalizedMatrix>, CliError> {
    if windows.is_empty() {
        return Ok(vec![a.clone()]);
    }
    let mut sizes = windows.to_vec();
    sizes.sort_by(f64::total_cmp);
    Ok(sizes.iter().map(|&s| a.section(s)).collect::<locop_core::Result<_>>()?)
}

fn curve_table(reports: &[StabilityReport]) -> Table {
    let mut t = Table::new(&["window", "p", "lower", "upper", "certified"]);
    for r in reports {
        for e in &r.entries {
            t.push(vec![
                e.window.to_string(),
                r.p.to_string(),
                num(e.lower.value),
                num(e.upper.value),
                e.lower.certified.to_string(),
            ]);
        }
    }
    t
}

#[derive(Args, Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct ManifestFile {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct Manifest {
    analysis: &'static str,
    spec: CorpusSpec,
    files: Vec<ManifestFile>,
}

pub fn gen(a: &GenArgs) -> Result<(), CliError> {
    let spec: CorpusSpec = read_json(&a.spec)?;
    let items = spec.generate()?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let mut files = Vec::new();
    for item in &items {
        let name = format!("{}.json", item.name);
        let bytes = match &item.object {
            CorpusObject::Matrix(m) => json_bytes(m)?,
            CorpusObject::Kernel(k) => json_bytes(k)?,
        };
        write_atomic(&a.out.join(&name), &bytes)?;
        files.push(ManifestFile { path: name, sha256: sha256_hex(&bytes), bytes: bytes.len() });
    }
    write_json(&a.out.join("manifest.json"), &Manifest { analysis: "gen", spec, files })
}

#[derive(Args, Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Norm indices for the upper constants.
    #[arg(long, value_delimiter = ',', default_value = "1,2,inf")]
    #[serde(default = "default_ps")]
    pub p: Vec<PNorm>,
    /// Truncation radii for the tail curve.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub tails: Vec<f64>,
    /// Slant parameter for the unweighted slant norm.
    #[arg(long)]
    #[serde(default)]
    pub slant: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Offset profile as CSV `k_1,…,k_d,sup_value`.
    #[arg(long)]
    #[serde(default)]
    pub profile_csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct PEstimate {
    p: PNorm,
    estimate: Estimate,
}

#[derive(Serialize)]
struct NormsReport {
    analysis: &'static str,
    rows: usize,
    cols: usize,
    nnz: usize,
    separation_rows: usize,
    separation_cols: usize,
    band_width: f64,
    schur: f64,
    sjostrand: f64,
    slant: Option<f64>,
    upper: Vec<PEstimate>,
    tails: Vec<(f64, f64)>,
}

pub fn norms(a: &NormsArgs) -> Result<(), CliError> {
    let m = load_matrix(&a.matrix)?;
    let upper = a
        .p
        .iter()
        .map(|&p| Ok(PEstimate { p, estimate: upper_constant(&m, p)? }))
        .collect::<Result<_, CliError>>()?;
    let mut tails = a.tails.clone();
    tails.sort_by(f64::total_cmp);
    let report = NormsReport {
        analysis: "norms",
        rows: m.rows().len(),
        cols: m.cols().len(),
        nnz: m.nnz(),
        separation_rows: m.rows().separation_constant(),
        separation_cols: m.cols().separation_constant(),
        band_width: m.band_width(),
        schur: m.schur_norm(),
        sjostrand: m.sjostrand_norm(),
        slant: a.slant.map(|s| m.slant_norm(s, &Weight::TRIVIAL)).transpose()?,
        upper,
        tails: m.truncation_tail(&tails)?,
    };
    if let Some(path) = &a.profile_csv {
        let profile = m.offset_profile();
        let mut header: Vec<String> = (1..=profile.dim()).map(|i| format!("k_{i}")).collect();
        header.push("sup_value".into());
        let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
        for (k, v) in profile.cells() {
            let mut row: Vec<String> = k.iter().map(i64::to_string).collect();
            row.push(num(*v));
            t.push(row);
        }
        t.write(path)?;
    }
    write_json(&a.out, &report)
}

#[derive(Args, Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,inf")]
    #[serde(default = "default_ps")]
    pub p: Vec<PNorm>,
    /// Section sizes of the window ladder; the whole matrix when empty.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub windows: Vec<f64>,
    /// Seed for the multistart estimator.
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Curves as CSV `window,p,lower,upper,certified`.
    #[arg(long)]
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct StabReport<'a> {
    analysis: &'static str,
    reports: &'a [StabilityReport],
}

pub fn stab(a: &StabArgs) -> Result<(), CliError> {
    let m = load_matrix(&a.matrix)?;
    let cfg = EquivalenceConfig { ps: a.p.clone(), interior: false, seed: a.seed, ..Default::default() };
    let r = equivalence_report(&ladder(&m, &a.windows)?, &cfg)?;
    if let Some(path) = &a.csv {
        curve_table(&r.reports).write(path)?;
    }
    write_json(&a.out, &StabReport { analysis: "stab", reports: &r.reports })
}

#[derive(Args, Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,inf")]
    #[serde(default = "default_ps")]
    pub p: Vec<PNorm>,
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub windows: Vec<f64>,
    /// Lower constants must end above this to count as stable.
    #[arg(long)]
    #[serde(default)]
    pub tau: Option<f64>,
    /// Skip the interior test vectors.
    #[arg(long)]
    #[serde(default)]
    pub no_interior: bool,
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct EquivReport {
    analysis: &'static str,
    #[serde(flatten)]
    report: EquivalenceReport,
}

pub fn equiv(a: &EquivArgs) -> Result<(), CliError> {
    let m = load_matrix(&a.matrix)?;
    let mut cfg = EquivalenceConfig { ps: a.p.clone(), interior: !a.no_interior, seed: a.seed, ..Default::default() };
    if let Some(t) = a.tau {
        cfg.tau = t;
    }
    let report = equivalence_report(&ladder(&m, &a.windows)?, &cfg)?;
    if let Some(path) = &a.csv {
        curve_table(&report.reports).write(path)?;
    }
    write_json(&a.out, &EquivReport { analysis: "equiv", report })
}

#[derive(Args, Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvArgs {
    /// Sequence file: numbers separated by commas or whitespace.
    #[arg(long)]
    pub seq: PathBuf,
    /// Index of the first coefficient; centred when omitted.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub offset: Option<i64>,
    #[arg(long, default_value_t = 65536)]
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn default_grid() -> usize {
    65536
}

#[derive(Serialize)]
struct ConvReport {
    analysis: &'static str,
    sequence: Vec<f64>,
    offset: i64,
    #[serde(flatten)]
    certificate: SymbolCertificate,
}

pub fn conv(a: &ConvArgs) -> Result<(), CliError> {
    let sequence = read_sequence(&a.seq)?;
    let offset = a.offset.unwrap_or(-(sequence.len() as i64 / 2));
    let certificate = convolution_stability(&sequence, offset, a.grid)?;
    write_json(&a.out, &ConvReport { analysis: "conv", sequence, offset, certificate })
}

#[derive(Args, Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvdecayArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Rows closer than this to the window boundary are left out.
    #[arg(long)]
    pub margin: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Inverse offset profile as CSV `k_1,…,k_d,sup_value`.
    #[arg(long)]
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct InvdecayReport {
    analysis: &'static str,
    margin: f64,
    #[serde(flatten)]
    fit: DecayFit,
}

pub fn invdecay(a: &InvdecayArgs) -> Result<(), CliError> {
    let m = load_matrix(&a.matrix)?;
    let fit = inverse_decay_profile(&m, a.margin)?;
    if let Some(path) = &a.csv {
        let mut header: Vec<String> = (1..=fit.profile.dim()).map(|i| format!("k_{i}")).collect();
        header.push("sup_value".into());
        let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
        for (k, v) in fit.profile.cells() {
            let mut row: Vec<String> = k.iter().map(i64::to_string).collect();
            row.push(num(*v));
            t.push(row);
        }
        t.write(path)?;
    }
    write_json(&a.out, &InvdecayReport { analysis: "invdecay", margin: a.margin, fit })
}

#[derive(Args, Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityArgs {
    #[arg(long)]
    pub rows: PathBuf,
    #[arg(long)]
    pub cols: PathBuf,
    #[arg(long)]
    pub r0: f64,
    /// JSON list of boxes, each a list of `[lo, hi]` per axis.
    #[arg(long)]
    pub boxes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct DensityReport {
    analysis: &'static str,
    r0: f64,
    pass: bool,
    verdicts: Vec<DensityVerdict>,
}

pub fn density(a: &DensityArgs) -> Result<(), CliError> {
    let rows: IndexSet = read_json(&a.rows)?;
    let cols: IndexSet = read_json(&a.cols)?;
    let boxes: Vec<Window> = read_json(&a.boxes)?;
    let verdicts = density_check(&rows, &cols, a.r0, &boxes)?;
    let pass = verdicts.iter().all(|v| v.pass);
    write_json(&a.out, &DensityReport { analysis: "density", r0: a.r0, pass, verdicts })
}

#[derive(Args, Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthArgs {
    #[arg(long)]
    pub family: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    #[serde(default = "default_two")]
    pub p: Vec<PNorm>,
    /// Discretization levels.
    #[arg(long)]
    pub n0: Levels,
    /// Section sizes of the coefficient windows.
    #[arg(long, value_delimiter = ',', required = true)]
    pub window: Vec<f64>,
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Curves as CSV `n0,window,p,lower,upper,certified`.
    #[arg(long)]
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct SynthReport {
    analysis: &'static str,
    results: Vec<SynthesisStability>,
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let fam: GeneratorFamily = read_json(&a.family)?;
    let mut windows = a.window.clone();
    windows.sort_by(f64::total_cmp);
    let results = a
        .p
        .iter()
        .map(|&p| synthesis_stability(&fam, p, &a.n0.0, &windows, a.seed))
        .collect::<locop_core::Result<Vec<_>>>()?;
    if let Some(path) = &a.csv {
        let mut t = Table::new(&["n0", "window", "p", "lower", "upper", "certified"]);
        for s in &results {
            for lvl in &s.levels {
                for e in &lvl.report.entries {
                    t.push(vec![
                        lvl.n0.to_string(),
                        e.window.to_string(),
                        s.p.to_string(),
                        num(e.lower.value),
                        num(e.upper.value),
                        e.lower.certified.to_string(),
                    ]);
                }
            }
        }
        t.write(path)?;
    }
    write_json(&a.out, &SynthReport { analysis: "synth", results })
}

#[derive(Args, Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelArgs {
    #[arg(long)]
    pub kernel: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    #[serde(default = "default_two")]
    pub p: Vec<PNorm>,
    /// Levels of the discretization error curve.
    #[arg(long)]
    pub n: Levels,
    /// Side lengths of the centred windows for the perturbed identity.
    #[arg(long, value_delimiter = ',', required = true)]
    pub window: Vec<f64>,
    /// Levels of the perturbed identity; the coarsest curve level when omitted.
    #[arg(long)]
    #[serde(default)]
    pub stab_n: Option<Levels>,
    /// Truncation radii for the tail table on the largest window.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub tails: Vec<f64>,
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
    /// Error curve as CSV `n,r,ratio,left_defect,right_defect`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub report: Option<PathBuf>,
}

#[derive(Serialize)]
struct KernelReport {
    analysis: &'static str,
    kernel: KernelOperator,
    curves: Vec<ErrorCurve>,
    stability: Vec<KernelStability>,
    tails: Vec<TailRow>,
}

pub fn kernel(a: &KernelArgs) -> Result<(), CliError> {
    let op: KernelOperator = read_json(&a.kernel)?;
    op.validate()?;
    if a.n.0.is_empty() {
        return Err(locop_core::Error::InvalidInput("no levels given".into()).into());
    }
    let probes = default_probes(op.dim);
    let curves = a
        .p
        .iter()
        .map(|&r| discretization_error_curve(&op, &a.n.0, &probes, r))
        .collect::<locop_core::Result<Vec<_>>>()?;
    let stab_n = a.stab_n.clone().map(|l| l.0).unwrap_or_else(|| vec![*a.n.0.iter().min().expect("nonempty")]);
    let mut windows = a.window.clone();
    windows.sort_by(f64::total_cmp);
    let stability = a
        .p
        .iter()
        .map(|&p| perturbed_identity_stability(&op, p, &stab_n, &windows, a.seed))
        .collect::<locop_core::Result<Vec<_>>>()?;
    let tails = if a.tails.is_empty() {
        Vec::new()
    } else {
        let mut s = a.tails.clone();
        s.sort_by(f64::total_cmp);
        let w = centered_window(*windows.last().expect("nonempty"), op.dim);
        kernel_truncation_tail(&op, stab_n[0], &w, &s)?
    };
    let mut t = Table::new(&["n", "r", "ratio", "left_defect", "right_defect"]);
    for c in &curves {
        for pt in &c.points {
            t.push(vec![pt.n.to_string(), c.r.to_string(), num(pt.ratio), num(pt.left_defect), num(pt.right_defect)]);
        }
    }
    t.write(&a.out)?;
    if let Some(path) = &a.report {
        write_json(path, &KernelReport { analysis: "kernel", kernel: op, curves, stability, tails })?;
    }
    Ok(())
}

/// A config file for `run`: the analysis name plus the flags of that
/// subcommand, with paths relative to the config file.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "analysis", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunConfig {
    Gen(GenArgs),
    Norms(NormsArgs),
    Stab(StabArgs),
    Equiv(EquivArgs),
    Conv(ConvArgs),
    Invdecay(InvdecayArgs),
    Density(DensityArgs),
    Synth(SynthArgs),
    Kernel(KernelArgs),
}

impl RunConfig {
    pub fn rebase(&mut self, dir: &Path) {
        match self {
            RunConfig::Gen(a) => {
                rebase(dir, &mut a.spec);
                rebase(dir, &mut a.out);
            }
            RunConfig::Norms(a) => {
                rebase(dir, &mut a.matrix);
                rebase(dir, &mut a.out);
                rebase_opt(dir, &mut a.profile_csv);
            }
            RunConfig::Stab(a) => {
                rebase(dir, &mut a.matrix);
                rebase(dir, &mut a.out);
                rebase_opt(dir, &mut a.csv);
            }
            RunConfig::Equiv(a) => {
                rebase(dir, &mut a.matrix);
                rebase(dir, &mut a.out);
                rebase_opt(dir, &mut a.csv);
            }
            RunConfig::Conv(a) => {
                rebase(dir, &mut a.seq);
                rebase(dir, &mut a.out);
            }
            RunConfig::Invdecay(a) => {
                rebase(dir, &mut a.matrix);
                rebase(dir, &mut a.out);
                rebase_opt(dir, &mut a.csv);
            }
            RunConfig::Density(a) => {
                rebase(dir, &mut a.rows);
                rebase(dir, &mut a.cols);
                rebase(dir, &mut a.boxes);
                rebase(dir, &mut a.out);
            }
            RunConfig::Synth(a) => {
                rebase(dir, &mut a.family);
                rebase(dir, &mut a.out);
                rebase_opt(dir, &mut a.csv);
            }
            RunConfig::Kernel(a) => {
                rebase(dir, &mut a.kernel);
                rebase(dir, &mut a.out);
                rebase_opt(dir, &mut a.report);
            }
        }
    }

    pub fn execute(&self) -> Result<(), CliError> {
        match self {
            RunConfig::Gen(a) => gen(a),
            RunConfig::Norms(a) => norms(a),
            RunConfig::Stab(a) => stab(a),
            RunConfig::Equiv(a) => equiv(a),
            RunConfig::Conv(a) => conv(a),
            RunConfig::Invdecay(a) => invdecay(a),
            RunConfig::Density(a) => density(a),
            RunConfig::Synth(a) => synth(a),
            RunConfig::Kernel(a) => kernel(a),
        }
    }
}

pub fn run(config: &Path) -> Result<(), CliError> {
    let mut cfg: RunConfig = read_json(config)?;
    cfg.rebase(config.parent().unwrap_or(Path::new(".")));
    cfg.execute()
}
