//! Layered run configuration: defaults < config file < environment < flags.
//!
//! The config file is a single TOML document whose keys mirror the long
//! flag names. Every effective value is echoed into command outputs (or
//! stderr for stream commands) so runs are reproducible from their logs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use codeprov::detect::Method;
use codeprov::perturb::PerturbationConfig;
use codeprov::remote::{RemoteOptions, ENV_SCORER_TIMEOUT_MS, ENV_SCORER_URL};
use codeprov::scoring::{Scorer, ScorerSpec};
use codeprov::surrogate::SurrogateModel;
use serde::Deserialize;

/// Marker error for misuse that clap cannot catch (maps to exit 64).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => bail!("unknown format {other:?} (expected json or csv)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EpsilonPolicy {
    /// Score-only output; no verdict field.
    Off,
    Value(f64),
    /// Median of the scores in the calibration file.
    Auto,
}

/// Keys mirror the long flags; all optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub scorer: Option<Vec<String>>,
    pub method: Option<Vec<String>>,
    pub k: Option<u32>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub lambda_spaces: Option<f64>,
    pub lambda_newlines: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub format: Option<String>,
    pub trim_tokens: Option<usize>,
    pub epsilon: Option<String>,
    pub calibration: Option<PathBuf>,
    pub sweep_k: Option<String>,
    pub unsafe_locations: Option<bool>,
    pub approx_rank: Option<bool>,
    pub keep_degenerate: Option<bool>,
    pub perturber: Option<String>,
    pub span_fraction: Option<f64>,
    pub scorer_timeout_ms: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    /// TOML config file; flags and environment override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Scorer endpoint URL or surrogate:<model path>; repeat for a
    /// cross-scorer matrix (CODEPROV_SCORER_URL supplies a default)
    #[arg(long, global = true, value_name = "SPEC")]
    pub scorer: Vec<String>,

    /// Detection method(s); comma separated or repeated
    #[arg(long, global = true, value_delimiter = ',', value_name = "NAME")]
    pub method: Vec<String>,

    /// Number of perturbations
    #[arg(long, global = true)]
    pub k: Option<u32>,

    /// Fraction of eligible space-insertion locations to use
    #[arg(long, global = true)]
    pub alpha: Option<f64>,

    /// Fraction of lines receiving newline insertions
    #[arg(long, global = true)]
    pub beta: Option<f64>,

    /// Poisson mean for inserted spaces per location
    #[arg(long = "lambda-spaces", global = true)]
    pub lambda_spaces: Option<f64>,

    /// Poisson mean for inserted newlines per line
    #[arg(long = "lambda-newlines", global = true)]
    pub lambda_newlines: Option<f64>,

    /// Decision threshold: a number, or "auto" for the median of
    /// --calibration scores; omit for score-only output
    #[arg(long, global = true, value_name = "EPS|auto")]
    pub epsilon: Option<String>,

    /// Calibration score file (JSONL with a "score" field per line)
    #[arg(long, global = true, value_name = "FILE")]
    pub calibration: Option<PathBuf>,

    /// RNG seed; drawn from system entropy (and printed) when omitted
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for sample-parallel stages
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Output format for reports
    #[arg(long, global = true, value_name = "json|csv")]
    pub format: Option<String>,

    /// Trim inputs to this many scorer tokens
    #[arg(long = "trim-tokens", global = true, value_name = "N")]
    pub trim_tokens: Option<usize>,

    /// Perturbation counts for the k-sweep, comma separated
    #[arg(long = "sweep-k", global = true, value_name = "K1,K2,...")]
    pub sweep_k: Option<String>,

    /// Allow space insertion at every character boundary (ablation)
    #[arg(long = "unsafe-locations", global = true)]
    pub unsafe_locations: bool,

    /// Accept lower-bound ranks from scorers that cap candidate lists
    #[arg(long = "approx-rank", global = true)]
    pub approx_rank: bool,

    /// Keep degenerate (guarded-denominator) scores in AUROC
    #[arg(long = "keep-degenerate", global = true)]
    pub keep_degenerate: bool,

    /// External mask-and-recover perturber endpoint (/v1/perturb)
    #[arg(long, global = true, value_name = "URL")]
    pub perturber: Option<String>,

    /// span_fraction forwarded opaquely to the external perturber
    #[arg(long = "span-fraction", global = true)]
    pub span_fraction: Option<f64>,
}

/// Fully resolved configuration after layering.
#[derive(Debug)]
pub struct RunConfig {
    pub perturb: PerturbationConfig,
    pub scorer_specs: Vec<String>,
    pub methods: Vec<Method>,
    pub epsilon: EpsilonPolicy,
    pub calibration: Option<PathBuf>,
    pub format: OutputFormat,
    pub trim_tokens: usize,
    pub workers: Option<usize>,
    pub approx_rank: bool,
    pub keep_degenerate: bool,
    pub sweep_k: Vec<u32>,
    pub perturber: Option<String>,
    pub span_fraction: f64,
    pub remote_options: RemoteOptions,
    pub seed_was_drawn: bool,
}

pub fn resolve(args: &CommonArgs) -> Result<RunConfig> {
    let file = FileConfig::load(args.config.as_deref())?;

    let scorer_specs = if !args.scorer.is_empty() {
        args.scorer.clone()
    } else if let Ok(url) = std::env::var(ENV_SCORER_URL) {
        vec![url]
    } else {
        file.scorer.clone().unwrap_or_default()
    };

    let method_names = if !args.method.is_empty() {
        args.method.clone()
    } else {
        file.method.clone().unwrap_or_default()
    };
    let methods = method_names
        .iter()
        .map(|name| name.parse::<Method>().map_err(anyhow::Error::from))
        .collect::<Result<Vec<Method>>>()?;

    let (seed, seed_was_drawn) = match args.seed.or(file.seed) {
        Some(seed) => (seed, false),
        None => (rand::random::<u64>(), true),
    };

    let defaults = PerturbationConfig::default();
    let perturb = PerturbationConfig {
        alpha: args.alpha.or(file.alpha).unwrap_or(defaults.alpha),
        beta: args.beta.or(file.beta).unwrap_or(defaults.beta),
        lambda_spaces: args
            .lambda_spaces
            .or(file.lambda_spaces)
            .unwrap_or(defaults.lambda_spaces),
        lambda_newlines: args
            .lambda_newlines
            .or(file.lambda_newlines)
            .unwrap_or(defaults.lambda_newlines),
        k: args.k.or(file.k).unwrap_or(defaults.k),
        seed,
        unsafe_locations: args.unsafe_locations || file.unsafe_locations.unwrap_or(false),
    };
    perturb.validate().map_err(|e| anyhow::anyhow!("{e}"))?;

    let epsilon = match args.epsilon.as_deref().or(file.epsilon.as_deref()) {
        None => EpsilonPolicy::Off,
        Some("auto") => EpsilonPolicy::Auto,
        Some(value) => EpsilonPolicy::Value(
            value
                .parse::<f64>()
                .with_context(|| format!("--epsilon must be a number or \"auto\", got {value:?}"))?,
        ),
    };

    let format = match args.format.as_deref().or(file.format.as_deref()) {
        None => OutputFormat::Json,
        Some(name) => name.parse()?,
    };

    let sweep_k = match args.sweep_k.as_deref().or(file.sweep_k.as_deref()) {
        None => Vec::new(),
        Some(list) => list
            .split(',')
            .map(|part| {
                part.trim()
                    .parse::<u32>()
                    .with_context(|| format!("bad --sweep-k entry {part:?}"))
            })
            .collect::<Result<Vec<u32>>>()?,
    };

    let mut remote_options = RemoteOptions::default();
    if let Ok(ms) = std::env::var(ENV_SCORER_TIMEOUT_MS) {
        remote_options.timeout_ms = ms
            .parse()
            .with_context(|| format!("{ENV_SCORER_TIMEOUT_MS} must be an integer, got {ms:?}"))?;
    } else if let Some(ms) = file.scorer_timeout_ms {
        remote_options.timeout_ms = ms;
    }

    Ok(RunConfig {
        perturb,
        scorer_specs,
        methods,
        epsilon,
        calibration: args.calibration.clone().or(file.calibration),
        format,
        trim_tokens: args.trim_tokens.or(file.trim_tokens).unwrap_or(128),
        workers: args.workers.or(file.workers),
        approx_rank: args.approx_rank || file.approx_rank.unwrap_or(false),
        keep_degenerate: args.keep_degenerate || file.keep_degenerate.unwrap_or(false),
        sweep_k,
        perturber: args.perturber.clone().or(file.perturber),
        span_fraction: args.span_fraction.or(file.span_fraction).unwrap_or(0.3),
        remote_options,
        seed_was_drawn,
    })
}

impl RunConfig {
    /// Open every configured scorer; fails when none are configured.
    pub fn open_scorers(&self) -> Result<Vec<Box<dyn Scorer>>> {
        if self.scorer_specs.is_empty() {
            bail!(
                "no scorer configured: pass --scorer URL|surrogate:PATH or set {ENV_SCORER_URL}"
            );
        }
        self.scorer_specs
            .iter()
            .map(|spec| self.open_scorer(spec))
            .collect()
    }

    pub fn open_scorer(&self, spec: &str) -> Result<Box<dyn Scorer>> {
        match spec.parse::<ScorerSpec>()? {
            ScorerSpec::Surrogate { path } => {
                let model = SurrogateModel::load(&path)
                    .with_context(|| format!("loading surrogate model {}", path.display()))?;
                Ok(Box::new(model))
            }
            ScorerSpec::Remote { url } => Ok(Box::new(codeprov::remote::RemoteScorer::new(
                &url,
                self.remote_options.clone(),
            )?)),
        }
    }

    /// Resolve the epsilon policy to a concrete threshold, if any.
    pub fn resolve_epsilon(&self) -> Result<Option<f64>> {
        match &self.epsilon {
            EpsilonPolicy::Off => Ok(None),
            EpsilonPolicy::Value(value) => Ok(Some(*value)),
            EpsilonPolicy::Auto => {
                let path = self.calibration.as_ref().ok_or_else(|| {
                    anyhow::Error::from(UsageError(
                        "--epsilon auto requires --calibration FILE".into(),
                    ))
                })?;
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading calibration file {}", path.display()))?;
                let mut scores: Vec<f64> = Vec::new();
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    let value: serde_json::Value = serde_json::from_str(line)
                        .context("calibration lines must be JSON objects")?;
                    let score = value
                        .get("score")
                        .and_then(|s| s.as_f64())
                        .ok_or_else(|| anyhow::anyhow!("calibration line missing \"score\""))?;
                    scores.push(score);
                }
                if scores.is_empty() {
                    bail!("calibration file {} has no scores", path.display());
                }
                scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let n = scores.len();
                let median = if n % 2 == 1 {
                    scores[n / 2]
                } else {
                    (scores[n / 2 - 1] + scores[n / 2]) / 2.0
                };
                Ok(Some(median))
            }
        }
    }
}
