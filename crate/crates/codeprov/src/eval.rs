//! Paired benchmark construction, detector suite runs, and reports.
//!
//! A benchmark is a balanced set of human/machine pairs: the human side is
//! a function body from a real corpus, the machine side is a generator's
//! continuation of that function's prompt (signature plus docstring), both
//! trimmed to the same scorer-token budget. Pair members share an id stem
//! (`p00042-human` / `p00042-machine`).
//!
//! `run_suite` scores every sample under every scorer, derives each
//! requested method's oriented score from one cached scoring pass, and
//! reports AUROC per (scorer, method) cell. Per-sample score means are
//! persisted as JSONL next to the dataset so k-sweeps and re-runs with new
//! methods do not re-score; degenerate or failed samples drop with their
//! pair partner so the benchmark stays balanced.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{extract_prompt, trim, CodeSample, Corpus, Label};
use crate::detect::{
    detectgpt_from, npr_from, perturbed_scores, DetectError, Method, PerturbedScores, Perturber,
    StylizedPerturber,
};
use crate::metrics::{auroc_exact, wilcoxon_rank_sum, MetricsError};
use crate::perturb::PerturbationConfig;
use crate::scoring::{
    mean_entropy, mean_log_likelihood, mean_log_rank, mean_rank, ScoreError, Scorer,
};
use crate::surrogate::SurrogateModel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no methods requested")]
    NoMethods,
    #[error("no scorers supplied")]
    NoScorers,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("insufficient corpus: needed {needed} usable pairs, got {got}")]
    InsufficientCorpus { needed: usize, got: usize },
    #[error("generation failed: {0}")]
    GenerationUnavailable(String),
    #[error("npr_mlm requires an external perturber endpoint")]
    MissingPerturber,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cache io: {0}")]
    CacheIo(#[from] std::io::Error),
}

/// A code generator that continues a prompt; the surrogate model in-process
/// or a remote `/v1/generate` endpoint.
pub trait Generator: Send + Sync {
    fn id(&self) -> &str;

    fn generate(
        &self,
        prompt: &str,
        max_tokens: usize,
        temperature: f64,
        top_p: f64,
        seed: u64,
    ) -> Result<String, ScoreError>;
}

impl Generator for SurrogateModel {
    fn id(&self) -> &str {
        Scorer::id(self)
    }

    fn generate(
        &self,
        prompt: &str,
        max_tokens: usize,
        temperature: f64,
        top_p: f64,
        seed: u64,
    ) -> Result<String, ScoreError> {
        self.sample(prompt, max_tokens, temperature, top_p, seed)
    }
}

impl Generator for crate::remote::GenerationClient {
    fn id(&self) -> &str {
        crate::remote::GenerationClient::id(self)
    }

    /// The wire protocol carries no seed; determinism is the endpoint's
    /// configuration responsibility.
    fn generate(
        &self,
        prompt: &str,
        max_tokens: usize,
        temperature: f64,
        top_p: f64,
        _seed: u64,
    ) -> Result<String, ScoreError> {
        crate::remote::GenerationClient::generate(self, prompt, max_tokens, temperature, top_p)
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkParams {
    pub n_pairs: usize,
    pub temperature: f64,
    pub top_p: f64,
    /// Trim budget in scorer tokens, applied to both sides.
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        BenchmarkParams {
            n_pairs: 200,
            temperature: 0.2,
            top_p: 0.95,
            max_tokens: 128,
            seed: 0,
        }
    }
}

fn pair_seed(seed: u64, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"codeprov.benchmark.v1");
    hasher.update(seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Build a balanced paired benchmark from a human corpus and a generator.
///
/// Human side: the function body after the extracted prompt. Machine side:
/// the generator's continuation of that prompt. Samples without an
/// extractable prompt or with an empty trimmed side are skipped.
pub fn build_benchmark(
    human: &Corpus,
    generator: &dyn Generator,
    trim_scorer: &dyn Scorer,
    params: &BenchmarkParams,
) -> Result<Vec<CodeSample>, EvalError> {
    if params.max_tokens == 0 {
        return Err(EvalError::InvalidParameter("max_tokens must be >= 1"));
    }
    let mut out = Vec::with_capacity(params.n_pairs * 2);
    let mut pair = 0usize;
    for sample in &human.samples {
        if pair == params.n_pairs {
            break;
        }
        let Some(split) = extract_prompt(&sample.text) else {
            continue;
        };
        let human_text = trim(&split.body, params.max_tokens, trim_scorer)?;
        if human_text.trim().is_empty() {
            continue;
        }
        let machine_raw = generator
            .generate(
                &split.prompt,
                params.max_tokens,
                params.temperature,
                params.top_p,
                pair_seed(params.seed, pair as u64),
            )
            .map_err(|e| EvalError::GenerationUnavailable(e.to_string()))?;
        let machine_text = trim(&machine_raw, params.max_tokens, trim_scorer)?;
        if machine_text.trim().is_empty() {
            continue;
        }
        out.push(CodeSample {
            id: format!("p{pair:05}-human"),
            text: human_text,
            label: Label::Human,
            prompt: Some(split.prompt.clone()),
            source_model: None,
            temperature: None,
            language: sample.language,
        });
        out.push(CodeSample {
            id: format!("p{pair:05}-machine"),
            text: machine_text,
            label: Label::Machine,
            prompt: Some(split.prompt),
            source_model: Some(generator.id().to_string()),
            temperature: Some(params.temperature),
            language: sample.language,
        });
        pair += 1;
    }
    if pair < params.n_pairs {
        return Err(EvalError::InsufficientCorpus { needed: params.n_pairs, got: pair });
    }
    Ok(out)
}

/// Hash of the perturbation knobs that determine variant texts. `k` is
/// excluded: variant streams are prefix-stable in the variant index, so a
/// cache built at one `k` serves any smaller or larger `k`.
pub fn perturb_config_hash(config: &PerturbationConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"codeprov.perturbcfg.v1");
    hasher.update(config.alpha.to_le_bytes());
    hasher.update(config.beta.to_le_bytes());
    hasher.update(config.lambda_spaces.to_le_bytes());
    hasher.update(config.lambda_newlines.to_le_bytes());
    hasher.update(config.seed.to_le_bytes());
    hasher.update([config.unsafe_locations as u8]);
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Means of one unperturbed scoring pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseScores {
    pub mean_log_likelihood: f64,
    pub mean_log_rank: f64,
    pub mean_rank: f64,
    pub mean_entropy: Option<f64>,
    pub has_lower_bound_ranks: bool,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheEntry {
    sample_id: String,
    scorer_id: String,
    /// `"base"` for unperturbed scores, or the perturbation config hash
    /// (for stylized variants) / `"mlm:<k>"` (for external variants).
    config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<BaseScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    perturbed: Option<PerturbedScores>,
}

type CacheKey = (String, String, String);

fn load_cache(path: &Path) -> Result<HashMap<CacheKey, CacheEntry>, EvalError> {
    let mut map = HashMap::new();
    if !path.exists() {
        return Ok(map);
    }
    let data = fs::read_to_string(path)?;
    for line in data.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CacheEntry>(line) {
            Ok(entry) => {
                let key = (
                    entry.sample_id.clone(),
                    entry.scorer_id.clone(),
                    entry.config_hash.clone(),
                );
                map.insert(key, entry);
            }
            Err(e) => log::warn!("ignoring malformed cache line: {e}"),
        }
    }
    Ok(map)
}

fn store_cache(path: &Path, cache: &HashMap<CacheKey, CacheEntry>) -> Result<(), EvalError> {
    let mut keys: Vec<&CacheKey> = cache.keys().collect();
    keys.sort();
    let mut out = Vec::new();
    for key in keys {
        serde_json::to_writer(&mut out, &cache[key]).expect("cache entries serialize");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    pub approx_rank: bool,
    pub keep_degenerate: bool,
    /// JSONL score cache; typically `<dataset>.scores.jsonl`.
    pub cache_path: Option<PathBuf>,
    /// Extra perturbation counts for the sweep section (the configured `k`
    /// is always evaluated when a perturbation method is requested).
    pub sweep_k: Vec<u32>,
    /// Echoed into the report for reproducibility.
    pub trim_tokens: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportConfig {
    pub k: u32,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_spaces: f64,
    pub lambda_newlines: f64,
    pub seed: u64,
    pub unsafe_locations: bool,
    pub perturb_config_hash: String,
    pub scorer_ids: Vec<String>,
    pub methods: Vec<Method>,
    pub approx_rank: bool,
    pub keep_degenerate: bool,
    pub trim_tokens: Option<usize>,
    pub sweep_k: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportCell {
    pub scorer_id: String,
    pub method: Method,
    pub auroc: f64,
    /// Exact Mann-Whitney statistic in half-units; `auroc` is
    /// `half_wins / (2 * pairs)`.
    pub auroc_half_wins: u64,
    pub auroc_pairs: u64,
    pub n_machine: usize,
    pub n_human: usize,
    pub degenerate_dropped: usize,
    pub errors_dropped: usize,
    pub wilcoxon_z: Option<f64>,
    pub wilcoxon_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scorer_id: String,
    pub k: u32,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleFailure {
    pub sample_id: String,
    pub scorer_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: ReportConfig,
    pub balanced: bool,
    pub n_machine: usize,
    pub n_human: usize,
    pub cells: Vec<ReportCell>,
    pub sweep: Vec<SweepRow>,
    pub errors: Vec<SampleFailure>,
}

/// Table-shaped CSV: one row per scorer, one AUROC column per method.
pub fn write_report_csv<W: Write>(report: &EvalReport, out: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["scorer".to_string()];
    header.extend(report.config.methods.iter().map(|m| m.name().to_string()));
    writer.write_record(&header)?;
    for scorer_id in &report.config.scorer_ids {
        let mut row = vec![scorer_id.clone()];
        for method in &report.config.methods {
            let cell = report
                .cells
                .iter()
                .find(|c| &c.scorer_id == scorer_id && c.method == *method);
            row.push(cell.map_or(String::new(), |c| format!("{:.4}", c.auroc)));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Everything scored for one (sample, scorer) pair.
struct SampleScores {
    base: Option<BaseScores>,
    stylized: Option<PerturbedScores>,
    mlm: Option<PerturbedScores>,
    error: Option<String>,
}

fn compute_base(scorer: &dyn Scorer, text: &str) -> Result<BaseScores, ScoreError> {
    let scored = scorer.score(text)?;
    Ok(BaseScores {
        mean_log_likelihood: mean_log_likelihood(&scored)?,
        mean_log_rank: mean_log_rank(&scored)?,
        mean_rank: mean_rank(&scored)?,
        mean_entropy: mean_entropy(&scored).ok(),
        has_lower_bound_ranks: scored.has_lower_bound_ranks(),
        token_count: scored.tokens.len(),
    })
}

/// Extend cached stylized variant means up to `k` variants, rescoring only
/// the missing tail (variant streams are prefix-stable).
fn extend_stylized(
    cached: Option<PerturbedScores>,
    code: &str,
    sample_id: &str,
    scorer: &dyn Scorer,
    config: &PerturbationConfig,
    k: u32,
    approx_rank: bool,
) -> Result<PerturbedScores, DetectError> {
    if let Some(scores) = &cached {
        if scores.variant_log_ranks.len() >= k as usize {
            return Ok(cached.unwrap());
        }
    }
    let perturber = StylizedPerturber { config: config.clone() };
    match cached {
        None => perturbed_scores(code, sample_id, scorer, &perturber, k, approx_rank),
        Some(mut scores) => {
            let have = scores.variant_log_ranks.len();
            let variants = perturber.perturb(code, k, sample_id)?;
            for variant in &variants[have..] {
                let scored = scorer.score(variant)?;
                if scored.has_lower_bound_ranks() && !approx_rank {
                    return Err(DetectError::Score(ScoreError::RankUnavailable));
                }
                scores.variant_log_likelihoods.push(mean_log_likelihood(&scored)?);
                scores.variant_log_ranks.push(mean_log_rank(&scored)?);
            }
            Ok(scores)
        }
    }
}

struct MethodNeeds {
    base: bool,
    stylized: bool,
    mlm: bool,
}

fn method_needs(methods: &[Method], external: bool) -> MethodNeeds {
    let mut needs = MethodNeeds { base: false, stylized: false, mlm: false };
    for method in methods {
        match method {
            Method::LogP | Method::Entropy | Method::Rank | Method::LogRank | Method::Lrr => {
                needs.base = true
            }
            Method::DetectCodeGpt => needs.stylized = true,
            Method::NprMlm => needs.mlm = true,
            Method::DetectGpt => {
                if external {
                    needs.mlm = true
                } else {
                    needs.stylized = true
                }
            }
        }
    }
    needs
}

/// One method's oriented score for one sample, from its cached stats.
/// `Ok(None)` means the sample cannot serve this method (recorded upstream).
fn method_score(
    method: Method,
    scores: &SampleScores,
    k: usize,
    approx_rank: bool,
    external: bool,
) -> Result<(f64, bool), String> {
    let base = || scores.base.as_ref().ok_or_else(|| "missing base scores".to_string());
    let ranks_ok = |b: &BaseScores| {
        if b.has_lower_bound_ranks && !approx_rank {
            Err("exact ranks unavailable (rerun with --approx-rank to accept)".to_string())
        } else {
            Ok(())
        }
    };
    match method {
        Method::LogP => Ok((base()?.mean_log_likelihood, false)),
        Method::Entropy => base()?
            .mean_entropy
            .map(|e| (e, false))
            .ok_or_else(|| "entropy unavailable from this scorer".to_string()),
        Method::Rank => {
            let b = base()?;
            ranks_ok(b)?;
            Ok((-b.mean_rank, false))
        }
        Method::LogRank => {
            let b = base()?;
            ranks_ok(b)?;
            Ok((-b.mean_log_rank, false))
        }
        Method::Lrr => {
            let b = base()?;
            ranks_ok(b)?;
            let denom = b.mean_log_rank;
            if denom <= crate::detect::DEGENERATE_DENOMINATOR {
                Ok((
                    b.mean_log_likelihood.abs() / crate::detect::DEGENERATE_DENOMINATOR,
                    true,
                ))
            } else {
                Ok((b.mean_log_likelihood.abs() / denom, false))
            }
        }
        Method::DetectGpt => {
            let stats = if external { &scores.mlm } else { &scores.stylized };
            let stats = stats.as_ref().ok_or("missing perturbed scores")?;
            let result = detectgpt_from(stats, k.min(stats.variant_log_likelihoods.len()))
                .map_err(|e| e.to_string())?;
            Ok((result.score, result.degenerate))
        }
        Method::NprMlm => {
            let stats = scores.mlm.as_ref().ok_or("missing external perturbed scores")?;
            let result = npr_from(stats, k.min(stats.variant_log_ranks.len()), Method::NprMlm)
                .map_err(|e| e.to_string())?;
            Ok((result.score, result.degenerate))
        }
        Method::DetectCodeGpt => {
            let stats = scores.stylized.as_ref().ok_or("missing perturbed scores")?;
            let result = npr_from(stats, k, Method::DetectCodeGpt).map_err(|e| e.to_string())?;
            Ok((result.score, result.degenerate))
        }
    }
}

fn pair_key(id: &str) -> Option<&str> {
    id.strip_suffix("-human").or_else(|| id.strip_suffix("-machine"))
}

/// Run every requested method under every scorer and report per-cell AUROC.
pub fn run_suite(
    dataset: &[CodeSample],
    methods: &[Method],
    scorers: &[&dyn Scorer],
    config: &PerturbationConfig,
    external_perturber: Option<&dyn Perturber>,
    options: &SuiteOptions,
) -> Result<EvalReport, EvalError> {
    if methods.is_empty() {
        return Err(EvalError::NoMethods);
    }
    if scorers.is_empty() {
        return Err(EvalError::NoScorers);
    }
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    config.validate().map_err(DetectError::Perturb)?;
    if methods.contains(&Method::NprMlm) && external_perturber.is_none() {
        return Err(EvalError::MissingPerturber);
    }

    let needs = method_needs(methods, external_perturber.is_some());
    let k_max = options
        .sweep_k
        .iter()
        .copied()
        .chain([config.k])
        .max()
        .unwrap();
    let cfg_hash = perturb_config_hash(config);
    let mlm_hash = format!("mlm:{}", config.k);

    let mut cache = match &options.cache_path {
        Some(path) => load_cache(path)?,
        None => HashMap::new(),
    };

    let n_machine = dataset.iter().filter(|s| s.label == Label::Machine).count();
    let n_human = dataset.len() - n_machine;
    let balanced = n_machine == n_human;
    if !balanced {
        log::warn!("dataset is unbalanced: {n_machine} machine vs {n_human} human");
    }

    let mut errors: Vec<SampleFailure> = Vec::new();
    let mut cells: Vec<ReportCell> = Vec::new();
    let mut sweep: Vec<SweepRow> = Vec::new();

    for scorer in scorers {
        let scorer_id = scorer.id().to_string();
        // snapshot of relevant cache entries for the parallel pass
        let cached: Vec<(Option<BaseScores>, Option<PerturbedScores>, Option<PerturbedScores>)> =
            dataset
                .iter()
                .map(|sample| {
                    let base = cache
                        .get(&(sample.id.clone(), scorer_id.clone(), "base".into()))
                        .and_then(|e| e.base.clone());
                    let stylized = cache
                        .get(&(sample.id.clone(), scorer_id.clone(), cfg_hash.clone()))
                        .and_then(|e| e.perturbed.clone());
                    let mlm = cache
                        .get(&(sample.id.clone(), scorer_id.clone(), mlm_hash.clone()))
                        .and_then(|e| e.perturbed.clone());
                    (base, stylized, mlm)
                })
                .collect();

        let results: Vec<SampleScores> = dataset
            .par_iter()
            .zip(cached.into_par_iter())
            .map(|(sample, (cached_base, cached_stylized, cached_mlm))| {
                let mut out = SampleScores {
                    base: cached_base,
                    stylized: cached_stylized,
                    mlm: cached_mlm,
                    error: None,
                };
                if needs.base && out.base.is_none() {
                    match compute_base(*scorer, &sample.text) {
                        Ok(base) => out.base = Some(base),
                        Err(e) => {
                            out.error = Some(e.to_string());
                            return out;
                        }
                    }
                }
                if needs.stylized {
                    match extend_stylized(
                        out.stylized.take(),
                        &sample.text,
                        &sample.id,
                        *scorer,
                        config,
                        k_max,
                        options.approx_rank,
                    ) {
                        Ok(scores) => out.stylized = Some(scores),
                        Err(e) => {
                            out.error = Some(e.to_string());
                            return out;
                        }
                    }
                }
                if needs.mlm && out.mlm.is_none() {
                    let perturber = external_perturber.expect("checked above");
                    match perturbed_scores(
                        &sample.text,
                        &sample.id,
                        *scorer,
                        perturber,
                        config.k,
                        options.approx_rank,
                    ) {
                        Ok(scores) => out.mlm = Some(scores),
                        Err(e) => {
                            out.error = Some(e.to_string());
                            return out;
                        }
                    }
                }
                out
            })
            .collect();

        // fold results back into the cache
        for (sample, scores) in dataset.iter().zip(&results) {
            if let Some(error) = &scores.error {
                errors.push(SampleFailure {
                    sample_id: sample.id.clone(),
                    scorer_id: scorer_id.clone(),
                    message: error.clone(),
                });
            }
            if let Some(base) = &scores.base {
                cache
                    .entry((sample.id.clone(), scorer_id.clone(), "base".into()))
                    .or_insert_with(|| CacheEntry {
                        sample_id: sample.id.clone(),
                        scorer_id: scorer_id.clone(),
                        config_hash: "base".into(),
                        base: None,
                        perturbed: None,
                    })
                    .base = Some(base.clone());
            }
            if let Some(stylized) = &scores.stylized {
                cache
                    .entry((sample.id.clone(), scorer_id.clone(), cfg_hash.clone()))
                    .or_insert_with(|| CacheEntry {
                        sample_id: sample.id.clone(),
                        scorer_id: scorer_id.clone(),
                        config_hash: cfg_hash.clone(),
                        base: None,
                        perturbed: None,
                    })
                    .perturbed = Some(stylized.clone());
            }
            if let Some(mlm) = &scores.mlm {
                cache
                    .entry((sample.id.clone(), scorer_id.clone(), mlm_hash.clone()))
                    .or_insert_with(|| CacheEntry {
                        sample_id: sample.id.clone(),
                        scorer_id: scorer_id.clone(),
                        config_hash: mlm_hash.clone(),
                        base: None,
                        perturbed: None,
                    })
                    .perturbed = Some(mlm.clone());
            }
        }

        // assemble per-method cells at the configured k; a method with no
        // scoreable pairs drops its cell (failures are already itemised)
        for &method in methods {
            match assemble_cell(
                dataset,
                &results,
                &scorer_id,
                method,
                config.k as usize,
                options,
                external_perturber.is_some(),
                &mut errors,
            ) {
                Some(cell) => cells.push(cell),
                None => log::warn!(
                    "{scorer_id}/{}: no scoreable pairs, cell omitted",
                    method.name()
                ),
            }
        }

        // k-sweep over the stylized detector
        if !options.sweep_k.is_empty() && needs.stylized {
            for &k in &options.sweep_k {
                if k == 0 {
                    return Err(EvalError::InvalidParameter("sweep k must be >= 1"));
                }
                let cell = assemble_cell(
                    dataset,
                    &results,
                    &scorer_id,
                    Method::DetectCodeGpt,
                    k as usize,
                    options,
                    external_perturber.is_some(),
                    &mut Vec::new(), // sweep failures mirror the main cell's
                );
                if let Some(cell) = cell {
                    sweep.push(SweepRow { scorer_id: scorer_id.clone(), k, auroc: cell.auroc });
                }
            }
        }
    }

    if let Some(path) = &options.cache_path {
        store_cache(path, &cache)?;
    }

    Ok(EvalReport {
        config: ReportConfig {
            k: config.k,
            alpha: config.alpha,
            beta: config.beta,
            lambda_spaces: config.lambda_spaces,
            lambda_newlines: config.lambda_newlines,
            seed: config.seed,
            unsafe_locations: config.unsafe_locations,
            perturb_config_hash: cfg_hash,
            scorer_ids: scorers.iter().map(|s| s.id().to_string()).collect(),
            methods: methods.to_vec(),
            approx_rank: options.approx_rank,
            keep_degenerate: options.keep_degenerate,
            trim_tokens: options.trim_tokens,
            sweep_k: options.sweep_k.clone(),
        },
        balanced,
        n_machine,
        n_human,
        cells,
        sweep,
        errors,
    })
}

#[allow(clippy::too_many_arguments)]
fn assemble_cell(
    dataset: &[CodeSample],
    results: &[SampleScores],
    scorer_id: &str,
    method: Method,
    k: usize,
    options: &SuiteOptions,
    external: bool,
    errors: &mut Vec<SampleFailure>,
) -> Option<ReportCell> {
    // per-sample outcome: Ok((score, degenerate)) or failure
    let outcomes: Vec<Option<(f64, bool)>> = dataset
        .iter()
        .zip(results)
        .map(|(sample, scores)| {
            if scores.error.is_some() {
                return None;
            }
            match method_score(method, scores, k, options.approx_rank, external) {
                Ok(outcome) => Some(outcome),
                Err(message) => {
                    errors.push(SampleFailure {
                        sample_id: sample.id.clone(),
                        scorer_id: scorer_id.to_string(),
                        message: format!("{}: {message}", method.name()),
                    });
                    None
                }
            }
        })
        .collect();

    // group samples into pairs by id stem; unpaired samples stand alone
    let mut pairs: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, sample) in dataset.iter().enumerate() {
        let key = pair_key(&sample.id)
            .map(str::to_string)
            .unwrap_or_else(|| format!("\u{0}solo:{}", sample.id));
        pairs.entry(key).or_default().push(i);
    }

    let mut machine = Vec::new();
    let mut human = Vec::new();
    let mut degenerate_dropped = 0;
    let mut errors_dropped = 0;
    for indexes in pairs.values() {
        let any_failed = indexes.iter().any(|&i| outcomes[i].is_none());
        if any_failed {
            errors_dropped += 1;
            continue;
        }
        let any_degenerate = indexes
            .iter()
            .any(|&i| outcomes[i].is_some_and(|(_, d)| d));
        if any_degenerate && !options.keep_degenerate {
            degenerate_dropped += 1;
            continue;
        }
        for &i in indexes {
            let (score, _) = outcomes[i].unwrap();
            match dataset[i].label {
                Label::Machine => machine.push(score),
                Label::Human => human.push(score),
            }
        }
    }

    let stat = auroc_exact(&machine, &human).ok()?;
    let rank_sum = if machine.len() >= 3 && human.len() >= 3 {
        wilcoxon_rank_sum(&machine, &human).ok()
    } else {
        None
    };
    Some(ReportCell {
        scorer_id: scorer_id.to_string(),
        method,
        auroc: stat.value(),
        auroc_half_wins: stat.half_wins,
        auroc_pairs: stat.pairs,
        n_machine: machine.len(),
        n_human: human.len(),
        degenerate_dropped,
        errors_dropped,
        wilcoxon_z: rank_sum.map(|t| t.statistic),
        wilcoxon_p: rank_sum.map(|t| t.p_value),
    })
}
