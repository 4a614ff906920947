//! Command-line front end. Every command prints one report (JSON object or
//! CSV table) to stdout or `--out`, and embeds the resolved configuration
//! and the crate version.
//!
//! Exit codes: 0 success, 1 a hard verification check failed, 2 usage or
//! I/O error, 3 `diagnose` found a vanishing three-coordinate floor.

use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundInputs};
use crate::corr::{self, CorrelationModel};
use crate::error::{Error, Result};
use crate::experiment::{self, BootstrapStudyConfig, DataModel, FamilyChoice, Innovation, RateStudyConfig};
use crate::rng;
use crate::stein::gauss_delta_terms;
use crate::suite::{self, SuiteConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "STEINCLT_SEED";
const DEFAULT_SEED: u64 = 0;
const DEFAULT_SAMPLES: usize = 200_000;
/// `diagnose` treats a three-coordinate floor at or below this as zero.
pub const BETA_FLOOR: f64 = 1e-10;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONDITION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "steinclt", version, about = "Gaussian approximation on polytopes: verification suites, bound evaluators and simulation studies")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalArgs {
    /// Master seed. Falls back to STEINCLT_SEED, then the config file, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo samples per estimate (commands that use it).
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// TOML file with a top-level table of global keys and one table per command.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pair and triple floors, smallest eigenvalue and angle floors of a correlation matrix.
    Diagnose(DiagnoseArgs),
    /// Randomized identity and inequality checks on random polytopes.
    VerifyLemmas(VerifyArgs),
    /// Closed-form bound evaluators.
    Bounds {
        #[command(subcommand)]
        action: BoundsAction,
    },
    /// Empirical Kolmogorov distance along an n grid with a log-log slope fit.
    RateStudy(RateArgs),
    /// Multiplier bootstrap accuracy over many simulated datasets.
    BootstrapStudy(BootstrapArgs),
    /// Distance between two centered Gaussians against the comparison bound.
    CompareGaussians(CompareArgs),
}

#[derive(Debug, Subcommand)]
pub enum BoundsAction {
    Eval(BoundsArgs),
}

/// Merges `other` into `self` field by field, keeping values already set.
macro_rules! fill_from {
    ($self:ident, $other:ident; $($f:ident),*) => {
        $( if $self.$f.is_none() { $self.$f = $other.$f; } )*
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseArgs {
    /// Correlation or covariance matrix as header-free CSV.
    pub sigma: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub suite_size: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsArgs {
    /// main, bounded, gauss-comparison, bootstrap, quarter-rate or eigen-floor.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub n: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub b: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub covgap: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Absolute constant multiplying the bound.
    #[arg(long)]
    pub c: Option<f64>,
    /// Per-summand bound for the bounded preset.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Entrywise covariance gap for the gauss-comparison preset.
    #[arg(long)]
    pub delta_inf: Option<f64>,
    /// Smallest eigenvalue for the eigen-floor preset.
    #[arg(long)]
    pub sigma_star2: Option<f64>,
    /// Comma-separated sample sizes; switches to one row per n.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArgs {
    /// identity, equicorr:RHO, twoblock:SPLIT:WITHIN:ACROSS, lowrank:RANK:RIDGE, random, or csv:PATH.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// rademacher, uniform, laplace, truncnorm:C or gaussian.
    #[arg(long)]
    pub innovation: Option<String>,
    /// auto, grid or random.
    #[arg(long)]
    pub family: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub ci_resamples: Option<usize>,
    /// Also write the per-n rows as CSV here.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub datasets: Option<usize>,
    #[arg(long)]
    pub n_boot: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub pilot: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Second covariance, in the same syntax as --model (default identity).
    #[arg(long)]
    pub model1: Option<String>,
    /// Compare against `(1 - mix) Sigma + mix Sigma1` instead of `Sigma1` itself.
    #[arg(long)]
    pub mix: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(flatten)]
    global: GlobalArgs,
    diagnose: Option<DiagnoseArgs>,
    #[serde(rename = "verify-lemmas")]
    verify_lemmas: Option<VerifyArgs>,
    bounds: Option<BoundsArgs>,
    #[serde(rename = "rate-study")]
    rate_study: Option<RateArgs>,
    #[serde(rename = "bootstrap-study")]
    bootstrap_study: Option<BootstrapArgs>,
    #[serde(rename = "compare-gaussians")]
    compare_gaussians: Option<CompareArgs>,
}

impl ConfigFile {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

impl ModelArgs {
    fn fill(&mut self, other: ModelArgs) {
        fill_from!(self, other; model, dim, innovation, family);
    }
}

/// A named correlation structure.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Identity,
    Equicorrelated(f64),
    TwoBlock { split: usize, within: f64, across: f64 },
    LowRank { rank: usize, ridge: f64 },
    Random,
    Csv(PathBuf),
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("malformed model {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| parts.get(i).and_then(|p| p.parse::<f64>().ok()).ok_or_else(bad);
        let int = |i: usize| parts.get(i).and_then(|p| p.parse::<usize>().ok()).ok_or_else(bad);
        let spec = match parts[0] {
            "identity" if parts.len() == 1 => ModelSpec::Identity,
            "random" if parts.len() == 1 => ModelSpec::Random,
            "equicorr" if parts.len() == 2 => ModelSpec::Equicorrelated(num(1)?),
            "twoblock" if parts.len() == 4 => ModelSpec::TwoBlock { split: int(1)?, within: num(2)?, across: num(3)? },
            "lowrank" if parts.len() == 3 => ModelSpec::LowRank { rank: int(1)?, ridge: num(2)? },
            "csv" if s.len() > 4 => ModelSpec::Csv(PathBuf::from(&s[4..])),
            _ => return Err(bad()),
        };
        Ok(spec)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Identity => write!(f, "identity"),
            ModelSpec::Equicorrelated(r) => write!(f, "equicorr:{r}"),
            ModelSpec::TwoBlock { split, within, across } => write!(f, "twoblock:{split}:{within}:{across}"),
            ModelSpec::LowRank { rank, ridge } => write!(f, "lowrank:{rank}:{ridge}"),
            ModelSpec::Random => write!(f, "random"),
            ModelSpec::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

impl ModelSpec {
    /// Builds the correlation model; random structures draw from `seed`.
    pub fn build(&self, dim: usize, seed: u64) -> Result<CorrelationModel> {
        let mut r = rng::stream(seed, &[0x30DE1]);
        let m = match self {
            ModelSpec::Identity => CorrelationModel::validate_and_normalize(&DMatrix::identity(dim, dim))?,
            ModelSpec::Equicorrelated(rho) => CorrelationModel::equicorrelated(dim, *rho)?,
            ModelSpec::TwoBlock { split, within, across } => CorrelationModel::two_block(dim, *split, *within, *across)?,
            ModelSpec::LowRank { rank, ridge } => CorrelationModel::low_rank_ridge(dim, *rank, *ridge, &mut r)?,
            ModelSpec::Random => CorrelationModel::random(dim, &mut r)?,
            ModelSpec::Csv(p) => CorrelationModel::validate_and_normalize(&corr::read_matrix_csv(p)?)?,
        };
        Ok(m)
    }
}

/// Resolved model options echoed in reports.
#[derive(Debug, Clone, Serialize)]
pub struct ModelConfig {
    pub model: String,
    pub dim: usize,
    pub innovation: String,
    pub family: FamilyChoice,
}

fn resolve_model(args: &ModelArgs, default_model: &str, seed: u64) -> Result<(ModelConfig, CorrelationModel, Innovation)> {
    let spec: ModelSpec = args.model.as_deref().unwrap_or(default_model).parse()?;
    let innovation: Innovation = args.innovation.as_deref().unwrap_or("rademacher").parse()?;
    let family: FamilyChoice = args.family.as_deref().unwrap_or("auto").parse()?;
    let sigma = spec.build(args.dim.unwrap_or(5), seed)?;
    if let Some(d) = args.dim {
        if d != sigma.dim {
            return Err(Error::ShapeMismatch(format!("--dim {d} but the model has dimension {}", sigma.dim)));
        }
    }
    let cfg = ModelConfig { model: spec.to_string(), dim: sigma.dim, innovation: innovation.to_string(), family };
    Ok((cfg, sigma, innovation))
}

/// A report ready to be written.
pub enum Output {
    Json(serde_json::Value),
    Csv(Vec<u8>),
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    schema_version: u32,
    version: &'static str,
    command: &'a str,
    config: C,
    result: R,
}

fn envelope<C: Serialize, R: Serialize>(command: &str, config: C, result: R) -> Result<serde_json::Value> {
    let e = Envelope { schema_version: SCHEMA_VERSION, version: env!("CARGO_PKG_VERSION"), command, config, result };
    serde_json::to_value(&e).map_err(|e| Error::Parse(e.to_string()))
}

fn csv_table<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// Result of a command: the report plus the process exit code.
pub struct Outcome {
    pub output: Output,
    pub code: i32,
}

impl Outcome {
    fn ok(output: Output) -> Self {
        Outcome { output, code: EXIT_OK }
    }
}

/// Global settings after merging flags, environment and config file.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub seed: u64,
    pub samples: usize,
    pub format: Format,
}

fn resolve_global(flags: &GlobalArgs, file: &GlobalArgs, env_seed: Option<&str>) -> Result<Resolved> {
    let env_seed = match env_seed {
        Some(s) => Some(s.trim().parse::<u64>().map_err(|_| Error::Parse(format!("{SEED_ENV}={s:?} is not a 64-bit seed")))?),
        None => None,
    };
    Ok(Resolved {
        seed: flags.seed.or(env_seed).or(file.seed).unwrap_or(DEFAULT_SEED),
        samples: flags.samples.or(file.samples).unwrap_or(DEFAULT_SAMPLES),
        format: flags.format.or(file.format).unwrap_or(Format::Json),
    })
}

fn diagnose(args: DiagnoseArgs, g: &Resolved) -> Result<Outcome> {
    let path = args.sigma.ok_or_else(|| Error::InvalidArgument("diagnose needs a matrix CSV".into()))?;
    let model = CorrelationModel::validate_and_normalize(&corr::read_matrix_csv(&path)?)?;
    let diag = model.diagnostics();
    let code = if diag.beta_sq <= BETA_FLOOR { EXIT_CONDITION } else { EXIT_OK };
    let output = match g.format {
        Format::Json => {
            // Diagnostics stay flat at the top level next to the report metadata.
            let mut v = serde_json::to_value(&diag).map_err(|e| Error::Parse(e.to_string()))?;
            let m = v.as_object_mut().expect("diagnostics serialize to an object");
            m.insert("schema_version".into(), SCHEMA_VERSION.into());
            m.insert("version".into(), env!("CARGO_PKG_VERSION").into());
            m.insert("command".into(), "diagnose".into());
            m.insert("config".into(), serde_json::json!({ "sigma": path.display().to_string() }));
            Output::Json(v)
        }
        Format::Csv => Output::Csv(csv_table(std::slice::from_ref(&diag))?),
    };
    Ok(Outcome { output, code })
}

fn verify(args: VerifyArgs, g: &Resolved) -> Result<Outcome> {
    let cfg = SuiteConfig { dim: args.dim.unwrap_or(3), suite_size: args.suite_size.unwrap_or(10), samples: g.samples, seed: g.seed };
    let report = suite::run_suite(&cfg)?;
    let code = if report.hard_failures > 0 { EXIT_VERIFY } else { EXIT_OK };
    let output = match g.format {
        Format::Json => Output::Json(envelope("verify-lemmas", &cfg, &report)?),
        Format::Csv => Output::Csv(csv_table(&report.checks)?),
    };
    Ok(Outcome { output, code })
}

#[derive(Debug, Clone, Serialize)]
struct BoundRow {
    n: f64,
    bound: f64,
    vacuous: bool,
    /// Named intermediate quantities, in a fixed order per preset.
    components: Vec<(&'static str, f64)>,
}

#[derive(Debug, Clone, Serialize)]
struct BoundsConfig {
    preset: String,
    inputs: BoundInputs,
    delta: Option<f64>,
    delta_inf: Option<f64>,
    sigma_star2: Option<f64>,
    n_grid: Option<Vec<f64>>,
}

fn eval_preset(cfg: &BoundsConfig, inp: &BoundInputs) -> Result<BoundRow> {
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::InvalidArgument(format!("preset {} needs --{name}", cfg.preset)));
    let (bound, components) = match cfg.preset.as_str() {
        "main" => {
            let p = bounds::main_bound_parts(inp)?;
            (p.bound, vec![("cov_term", p.cov_term), ("rate_term", p.rate_term)])
        }
        "bounded" => {
            let b = bounds::bounded_case_bound(need(cfg.delta, "delta")?, inp)?;
            let comps = vec![("delta0", b.delta0), ("delta1", b.delta1), ("delta2", b.delta2), ("t0", b.t0), ("t", b.t), ("kappa", b.kappa)];
            (b.bound, comps)
        }
        "gauss-comparison" => (bounds::gauss_comparison_bound(need(cfg.delta_inf, "delta-inf")?, inp.d, inp.alpha_sq, inp.c_user)?, vec![]),
        "bootstrap" => (bounds::bootstrap_bound(inp)?, vec![]),
        "quarter-rate" => (bounds::prior_bounds(inp, 0.0).quarter_rate, vec![]),
        "eigen-floor" => (bounds::eigen_floor_bound(inp, need(cfg.sigma_star2, "sigma-star2")?)?, vec![]),
        other => return Err(Error::Parse(format!("unknown preset {other:?}"))),
    };
    Ok(BoundRow { n: inp.n, bound, vacuous: bound > 1.0, components })
}

fn bound_json(row: &BoundRow) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    m.insert("n".into(), row.n.into());
    m.insert("bound".into(), row.bound.into());
    m.insert("vacuous".into(), row.vacuous.into());
    for (k, v) in &row.components {
        m.insert((*k).into(), (*v).into());
    }
    serde_json::Value::Object(m)
}

fn bounds_eval(args: BoundsArgs, g: &Resolved) -> Result<Outcome> {
    let base = BoundInputs::default();
    let inputs = BoundInputs {
        n: args.n.unwrap_or(base.n),
        d: args.d.unwrap_or(base.d),
        b_scale: args.b.unwrap_or(base.b_scale),
        alpha_sq: args.alpha2.unwrap_or(base.alpha_sq),
        beta_sq: args.beta2.unwrap_or(base.beta_sq),
        cov_gap: args.covgap.unwrap_or(base.cov_gap),
        gamma: args.gamma.unwrap_or(base.gamma),
        c_user: args.c.unwrap_or(base.c_user),
    };
    let cfg = BoundsConfig {
        preset: args.preset.unwrap_or_else(|| "main".into()),
        inputs,
        delta: args.delta,
        delta_inf: args.delta_inf,
        sigma_star2: args.sigma_star2,
        n_grid: args.n_grid,
    };
    let Some(grid) = cfg.n_grid.clone() else {
        let row = eval_preset(&cfg, &cfg.inputs)?;
        let output = match g.format {
            Format::Json => Output::Json(envelope("bounds eval", &cfg, bound_json(&row))?),
            Format::Csv => Output::Csv(bound_csv(std::slice::from_ref(&row))?),
        };
        return Ok(Outcome::ok(output));
    };
    let rows = grid
        .iter()
        .map(|&n| eval_preset(&cfg, &BoundInputs { n, ..cfg.inputs.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let output = match g.format {
        Format::Json => Output::Json(envelope("bounds eval", &cfg, rows.iter().map(bound_json).collect::<Vec<_>>())?),
        Format::Csv => Output::Csv(bound_csv(&rows)?),
    };
    Ok(Outcome::ok(output))
}

fn bound_csv(rows: &[BoundRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["n", "bound", "vacuous"];
    if let Some(r) = rows.first() {
        header.extend(r.components.iter().map(|c| c.0));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.n.to_string(), r.bound.to_string(), r.vacuous.to_string()];
        rec.extend(r.components.iter().map(|c| c.1.to_string()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

#[derive(Serialize)]
struct RateConfig<'a> {
    #[serde(flatten)]
    model: &'a ModelConfig,
    seed: u64,
    #[serde(flatten)]
    study: &'a RateStudyConfig,
}

fn rate(args: RateArgs, g: &Resolved) -> Result<Outcome> {
    let (mc, sigma, innovation) = resolve_model(&args.model, "equicorr:0.5", g.seed)?;
    let base = RateStudyConfig::default();
    let study = RateStudyConfig {
        n_grid: args.n_grid.unwrap_or(base.n_grid),
        reps: args.reps.unwrap_or(base.reps),
        family: mc.family,
        ci_resamples: args.ci_resamples.unwrap_or(base.ci_resamples),
    };
    let model = DataModel::new(sigma, innovation);
    let res = experiment::rate_study(&model, &study, g.seed)?;
    if let Some(path) = &args.table {
        write_bytes(Some(path), &csv_table(&res.rows)?)?;
    }
    let cfg = RateConfig { model: &mc, seed: g.seed, study: &study };
    let output = match g.format {
        Format::Json => Output::Json(envelope("rate-study", &cfg, &res)?),
        Format::Csv => Output::Csv(csv_table(&res.rows)?),
    };
    Ok(Outcome::ok(output))
}

#[derive(Serialize)]
struct BootstrapConfig<'a> {
    #[serde(flatten)]
    model: &'a ModelConfig,
    seed: u64,
    #[serde(flatten)]
    study: &'a BootstrapStudyConfig,
}

fn bootstrap(args: BootstrapArgs, g: &Resolved) -> Result<Outcome> {
    let (mc, sigma, innovation) = resolve_model(&args.model, "equicorr:0.5", g.seed)?;
    let base = BootstrapStudyConfig::default();
    let study = BootstrapStudyConfig {
        n: args.n.unwrap_or(base.n),
        datasets: args.datasets.unwrap_or(base.datasets),
        n_boot: args.n_boot.unwrap_or(base.n_boot),
        gamma: args.gamma.unwrap_or(base.gamma),
        pilot: args.pilot.unwrap_or(base.pilot),
        family: mc.family,
    };
    let model = DataModel::new(sigma, innovation);
    let res = experiment::bootstrap_study(&model, &study, g.seed)?;
    let cfg = BootstrapConfig { model: &mc, seed: g.seed, study: &study };
    let output = match g.format {
        Format::Json => Output::Json(envelope("bootstrap-study", &cfg, &res)?),
        Format::Csv => Output::Csv(csv_table(&res.datasets)?),
    };
    Ok(Outcome::ok(output))
}

#[derive(Serialize)]
struct CompareConfig<'a> {
    #[serde(flatten)]
    model: &'a ModelConfig,
    model1: String,
    mix: Option<f64>,
    c_user: f64,
    seed: u64,
    samples: usize,
}

#[derive(Serialize)]
struct CompareResult {
    delta_inf: f64,
    alpha_sq: f64,
    /// Largest `sum_k` of the discrepancy terms, closed form.
    delta_terms_max: f64,
    delta_terms_gap: f64,
    rho_hat: f64,
    rho_stderr: f64,
    family_size: usize,
    bound: f64,
    bound_vacuous: bool,
}

fn compare(args: CompareArgs, g: &Resolved) -> Result<Outcome> {
    let (mc, sigma, _) = resolve_model(&args.model, "equicorr:0.5", g.seed)?;
    let spec1: ModelSpec = args.model1.as_deref().unwrap_or("identity").parse()?;
    let other = spec1.build(sigma.dim, rng::derive(g.seed, &[1]))?;
    let sigma1 = match args.mix {
        Some(s) if (0.0..=1.0).contains(&s) => &sigma.sigma * (1.0 - s) + &other.sigma * s,
        Some(s) => return Err(Error::InvalidArgument(format!("mix {s} outside [0, 1]"))),
        None => other.sigma.clone(),
    };
    let c_user = args.c.unwrap_or(1.0);
    let terms = gauss_delta_terms(&sigma1, &sigma.sigma)?;
    let family = mc.family.build(&sigma.sigma, g.seed)?;
    let cmp = experiment::compare_gaussians(&sigma.sigma, &sigma1, &family, g.samples, g.seed)?;
    let bound = bounds::gauss_comparison_bound(cmp.delta_inf, (sigma.dim as f64).max(3.0), sigma.alpha_sq, c_user)?;
    let res = CompareResult {
        delta_inf: cmp.delta_inf,
        alpha_sq: sigma.alpha_sq,
        delta_terms_max: terms.closed.max_sum(),
        delta_terms_gap: terms.max_gap,
        rho_hat: cmp.rho.rho_hat,
        rho_stderr: cmp.rho.stderr_at_argmax,
        family_size: cmp.rho.family_size,
        bound,
        bound_vacuous: bound > 1.0,
    };
    let cfg = CompareConfig { model: &mc, model1: spec1.to_string(), mix: args.mix, c_user, seed: g.seed, samples: g.samples };
    let output = match g.format {
        Format::Json => Output::Json(envelope("compare-gaussians", &cfg, &res)?),
        Format::Csv => Output::Csv(csv_table(std::slice::from_ref(&res))?),
    };
    Ok(Outcome::ok(output))
}

fn write_bytes(path: Option<&PathBuf>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn render(output: &Output) -> Result<Vec<u8>> {
    match output {
        Output::Json(v) => {
            let mut s = serde_json::to_string(v).map_err(|e| Error::Parse(e.to_string()))?;
            s.push('\n');
            Ok(s.into_bytes())
        }
        Output::Csv(b) => Ok(b.clone()),
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Diagnose(_) => "diagnose",
        Command::VerifyLemmas(_) => "verify-lemmas",
        Command::Bounds { .. } => "bounds",
        Command::RateStudy(_) => "rate-study",
        Command::BootstrapStudy(_) => "bootstrap-study",
        Command::CompareGaussians(_) => "compare-gaussians",
    }
}

/// Runs a parsed command line and writes its report.
pub fn execute(cli: Cli, env_seed: Option<&str>) -> Result<i32> {
    let file = match &cli.global.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let g = resolve_global(&cli.global, &file.global, env_seed)?;
    let outcome = match cli.command {
        Command::Diagnose(mut a) => {
            let f = file.diagnose.unwrap_or_default();
            fill_from!(a, f; sigma);
            diagnose(a, &g)?
        }
        Command::VerifyLemmas(mut a) => {
            let f = file.verify_lemmas.unwrap_or_default();
            fill_from!(a, f; dim, suite_size);
            verify(a, &g)?
        }
        Command::Bounds { action: BoundsAction::Eval(mut a) } => {
            let f = file.bounds.unwrap_or_default();
            fill_from!(a, f; preset, n, d, b, alpha2, beta2, covgap, gamma, c, delta, delta_inf, sigma_star2, n_grid);
            bounds_eval(a, &g)?
        }
        Command::RateStudy(mut a) => {
            let f = file.rate_study.unwrap_or_default();
            a.model.fill(f.model);
            fill_from!(a, f; n_grid, reps, ci_resamples, table);
            rate(a, &g)?
        }
        Command::BootstrapStudy(mut a) => {
            let f = file.bootstrap_study.unwrap_or_default();
            a.model.fill(f.model);
            fill_from!(a, f; n, datasets, n_boot, gamma, pilot);
            bootstrap(a, &g)?
        }
        Command::CompareGaussians(mut a) => {
            let f = file.compare_gaussians.unwrap_or_default();
            a.model.fill(f.model);
            fill_from!(a, f; model1, mix, c);
            compare(a, &g)?
        }
    };
    write_bytes(cli.global.out.as_ref(), &render(&outcome.output)?)?;
    Ok(outcome.code)
}

/// Parses `args` (program name first) and runs the command, returning the exit code.
pub fn run<I, T>(args: I, env_seed: Option<&str>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let name = subcommand_name(&cli.command);
    match execute(cli, env_seed) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Parse(_) | Error::InvalidArgument(_)) {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!("\n{}", sub.render_usage());
                }
            }
            EXIT_USAGE
        }
    }
}

pub fn main() -> i32 {
    let env_seed = std::env::var(SEED_ENV).ok();
    run(std::env::args_os(), env_seed.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_specs_round_trip() {
        for s in ["identity", "equicorr:0.5", "twoblock:2:0.6:0.1", "lowrank:2:0", "random", "csv:a/b.csv"] {
            assert_eq!(s.parse::<ModelSpec>().unwrap().to_string(), s);
        }
        for s in ["equicorr", "equicorr:x", "twoblock:2:0.5", "nope", "csv:"] {
            assert!(s.parse::<ModelSpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn seed_precedence() {
        let flags = GlobalArgs { seed: Some(3), ..Default::default() };
        let file = GlobalArgs { seed: Some(9), samples: Some(10), ..Default::default() };
        assert_eq!(resolve_global(&flags, &file, Some("5")).unwrap().seed, 3);
        assert_eq!(resolve_global(&GlobalArgs::default(), &file, Some("5")).unwrap().seed, 5);
        let g = resolve_global(&GlobalArgs::default(), &file, None).unwrap();
        assert_eq!((g.seed, g.samples), (9, 10));
        assert_eq!(resolve_global(&GlobalArgs::default(), &GlobalArgs::default(), None).unwrap().seed, DEFAULT_SEED);
        assert!(resolve_global(&GlobalArgs::default(), &file, Some("x")).is_err());
    }

    #[test]
    fn config_file_tables_parse() {
        let text = "seed = 4\nformat = \"csv\"\n[rate-study]\nmodel = \"equicorr:0.3\"\nreps = 10\n[bounds]\nB = 2.0\n";
        let f: ConfigFile = toml::from_str(text).unwrap();
        assert_eq!(f.global.seed, Some(4));
        assert_eq!(f.global.format, Some(Format::Csv));
        let r = f.rate_study.unwrap();
        assert_eq!(r.model.model.as_deref(), Some("equicorr:0.3"));
        assert_eq!(r.reps, Some(10));
        assert_eq!(f.bounds.unwrap().b, Some(2.0));
        assert!(toml::from_str::<ConfigFile>("[rate-study]\nrepz = 3\n").is_err());
    }

    #[test]
    fn bounds_preset_rows() {
        let cfg = BoundsConfig {
            preset: "main".into(),
            inputs: BoundInputs::default(),
            delta: None,
            delta_inf: None,
            sigma_star2: None,
            n_grid: None,
        };
        let row = eval_preset(&cfg, &cfg.inputs).unwrap();
        assert_eq!(row.components.len(), 2);
        assert!((row.bound - bounds::main_bound(&cfg.inputs).unwrap()).abs() < 1e-15);
        let bad = BoundsConfig { preset: "bounded".into(), ..cfg };
        assert!(matches!(eval_preset(&bad, &bad.inputs), Err(Error::InvalidArgument(_))));
    }
}
