//! Zero-shot detection scores over a scorer and a perturber.
//!
//! Every method is reduced to one oriented scalar where greater means more
//! likely machine-authored; the orientation map lives in one table
//! ([`Method::orientation`]) so downstream AUROC never needs per-method
//! sign logic. Perturbation methods expose their per-variant means
//! ([`PerturbedScores`]) so a k-sweep can reuse one scoring pass.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perturb::{perturb_set_for_sample, PerturbError, PerturbationConfig};
use crate::scoring::{
    mean_entropy, mean_log_likelihood, mean_log_rank, mean_rank, ScoreError, ScoredCode, Scorer,
};

/// Denominator guard for the ratio statistics: a mean log rank at or below
/// this is treated as degenerate (rank-1-everywhere snippets).
pub const DEGENERATE_DENOMINATOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LogP,
    Entropy,
    Rank,
    LogRank,
    Lrr,
    DetectGpt,
    NprMlm,
    DetectCodeGpt,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::LogP,
        Method::Entropy,
        Method::Rank,
        Method::LogRank,
        Method::Lrr,
        Method::DetectGpt,
        Method::NprMlm,
        Method::DetectCodeGpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::LogP => "log_p",
            Method::Entropy => "entropy",
            Method::Rank => "rank",
            Method::LogRank => "log_rank",
            Method::Lrr => "lrr",
            Method::DetectGpt => "detectgpt",
            Method::NprMlm => "npr_mlm",
            Method::DetectCodeGpt => "detect_code_gpt",
        }
    }

    /// Sign applied to the raw statistic so that greater implies machine.
    /// Entropy keeps its published orientation (high entropy => machine)
    /// even though it is empirically weak; raw scores stay available.
    pub fn orientation(self) -> f64 {
        match self {
            Method::LogP => 1.0,
            Method::Entropy => 1.0,
            Method::Rank => -1.0,
            Method::LogRank => -1.0,
            Method::Lrr => 1.0,
            Method::DetectGpt => 1.0,
            Method::NprMlm => 1.0,
            Method::DetectCodeGpt => 1.0,
        }
    }

    pub fn uses_perturbations(self) -> bool {
        matches!(self, Method::DetectGpt | Method::NprMlm | Method::DetectCodeGpt)
    }

    pub fn uses_ranks(self) -> bool {
        matches!(
            self,
            Method::Rank | Method::LogRank | Method::Lrr | Method::NprMlm | Method::DetectCodeGpt
        )
    }
}

impl std::str::FromStr for Method {
    type Err = DetectError;

    fn from_str(s: &str) -> Result<Self, DetectError> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "log_p" | "logp" => Ok(Method::LogP),
            "entropy" => Ok(Method::Entropy),
            "rank" => Ok(Method::Rank),
            "log_rank" | "logrank" => Ok(Method::LogRank),
            "lrr" => Ok(Method::Lrr),
            "detectgpt" | "detect_gpt" => Ok(Method::DetectGpt),
            "npr_mlm" | "npr" => Ok(Method::NprMlm),
            "detect_code_gpt" | "detectcodegpt" => Ok(Method::DetectCodeGpt),
            _ => Err(DetectError::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error("perturber unavailable: {0}")]
    PerturberUnavailable(String),
    #[error("perturber protocol error: {0}")]
    PerturberProtocol(String),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// One detection outcome. `score` is orientation-normalised; `raw_score`
/// is the statistic before the sign map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub method: Method,
    pub score: f64,
    pub raw_score: f64,
    pub oriented: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_used: Option<u32>,
    /// Set when a ratio denominator hit the guard; such scores are
    /// excluded from AUROC unless explicitly kept.
    #[serde(default)]
    pub degenerate: bool,
}

impl DetectionResult {
    fn from_raw(method: Method, raw: f64) -> Self {
        DetectionResult {
            method,
            score: method.orientation() * raw,
            raw_score: raw,
            oriented: true,
            verdict: None,
            k_used: None,
            degenerate: false,
        }
    }

    /// Attach a threshold verdict: true iff the oriented score exceeds
    /// `epsilon`.
    pub fn with_verdict(mut self, epsilon: f64) -> Self {
        self.verdict = Some(self.score > epsilon);
        self
    }
}

fn guard_ranks(sc: &ScoredCode, approx_rank: bool) -> Result<(), DetectError> {
    if sc.has_lower_bound_ranks() && !approx_rank {
        return Err(DetectError::Score(ScoreError::RankUnavailable));
    }
    Ok(())
}

/// Mean log likelihood, oriented as-is (machine code scores higher).
pub fn score_log_p(sc: &ScoredCode) -> Result<DetectionResult, DetectError> {
    Ok(DetectionResult::from_raw(Method::LogP, mean_log_likelihood(sc)?))
}

/// Mean predictive entropy, oriented positively per its published reading.
pub fn score_entropy(sc: &ScoredCode) -> Result<DetectionResult, DetectError> {
    Ok(DetectionResult::from_raw(Method::Entropy, mean_entropy(sc)?))
}

/// Negated mean rank (machine code has smaller ranks).
pub fn score_rank(sc: &ScoredCode, approx_rank: bool) -> Result<DetectionResult, DetectError> {
    guard_ranks(sc, approx_rank)?;
    Ok(DetectionResult::from_raw(Method::Rank, mean_rank(sc)?))
}

/// Negated mean log rank.
pub fn score_log_rank(sc: &ScoredCode, approx_rank: bool) -> Result<DetectionResult, DetectError> {
    guard_ranks(sc, approx_rank)?;
    Ok(DetectionResult::from_raw(Method::LogRank, mean_log_rank(sc)?))
}

/// LRR = |mean log likelihood| / mean log rank, with the denominator
/// clamped at the degeneracy guard (all-rank-1 inputs flag the result).
pub fn score_lrr(sc: &ScoredCode, approx_rank: bool) -> Result<DetectionResult, DetectError> {
    guard_ranks(sc, approx_rank)?;
    let ll = mean_log_likelihood(sc)?;
    let log_rank = mean_log_rank(sc)?;
    let (raw, degenerate) = ratio_with_guard(ll.abs(), log_rank);
    let mut result = DetectionResult::from_raw(Method::Lrr, raw);
    result.degenerate = degenerate;
    Ok(result)
}

fn ratio_with_guard(numerator: f64, denominator: f64) -> (f64, bool) {
    if denominator <= DEGENERATE_DENOMINATOR {
        (numerator / DEGENERATE_DENOMINATOR, true)
    } else {
        (numerator / denominator, false)
    }
}

/// A source of perturbed variants. The stylized whitespace perturber is
/// the built-in implementation; an external mask-and-recover endpoint can
/// stand behind the same contract. Implementations are shared across
/// evaluation worker threads.
pub trait Perturber: Send + Sync {
    fn id(&self) -> &str;

    /// Exactly `k` variants of `code`.
    fn perturb(&self, code: &str, k: u32, sample_id: &str) -> Result<Vec<String>, DetectError>;
}

/// The whitespace perturber of this crate behind the [`Perturber`] trait.
pub struct StylizedPerturber {
    pub config: PerturbationConfig,
}

impl Perturber for StylizedPerturber {
    fn id(&self) -> &str {
        "stylized"
    }

    fn perturb(&self, code: &str, k: u32, sample_id: &str) -> Result<Vec<String>, DetectError> {
        let config = PerturbationConfig { k, ..self.config.clone() };
        let set = perturb_set_for_sample(code, &config, sample_id)?;
        Ok(set.variants.into_iter().map(|v| v.text).collect())
    }
}

/// Per-variant score means for one sample; enough to compute every
/// perturbation statistic at any `k` up to the number of variants scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedScores {
    pub original_log_likelihood: f64,
    pub original_log_rank: f64,
    pub variant_log_likelihoods: Vec<f64>,
    pub variant_log_ranks: Vec<f64>,
}

/// Score `code` and `k` perturbed variants through `scorer`.
pub fn perturbed_scores(
    code: &str,
    sample_id: &str,
    scorer: &dyn Scorer,
    perturber: &dyn Perturber,
    k: u32,
    approx_rank: bool,
) -> Result<PerturbedScores, DetectError> {
    if k == 0 {
        return Err(DetectError::InvalidParameter("k must be >= 1"));
    }
    let original = scorer.score(code)?;
    guard_ranks(&original, approx_rank)?;
    let variants = perturber.perturb(code, k, sample_id)?;
    if variants.len() != k as usize {
        return Err(DetectError::PerturberProtocol(format!(
            "asked for {k} variants, received {}",
            variants.len()
        )));
    }
    let mut variant_log_likelihoods = Vec::with_capacity(variants.len());
    let mut variant_log_ranks = Vec::with_capacity(variants.len());
    for variant in &variants {
        let scored = scorer.score(variant)?;
        guard_ranks(&scored, approx_rank)?;
        variant_log_likelihoods.push(mean_log_likelihood(&scored)?);
        variant_log_ranks.push(mean_log_rank(&scored)?);
    }
    Ok(PerturbedScores {
        original_log_likelihood: mean_log_likelihood(&original)?,
        original_log_rank: mean_log_rank(&original)?,
        variant_log_likelihoods,
        variant_log_ranks,
    })
}

/// Likelihood discrepancy over the first `k` cached variants:
/// original mean log likelihood minus the variants' average.
pub fn detectgpt_from(scores: &PerturbedScores, k: usize) -> Result<DetectionResult, DetectError> {
    if k == 0 || k > scores.variant_log_likelihoods.len() {
        return Err(DetectError::InvalidParameter("k out of range for cached variants"));
    }
    let perturbed_mean =
        scores.variant_log_likelihoods[..k].iter().sum::<f64>() / k as f64;
    let raw = scores.original_log_likelihood - perturbed_mean;
    let mut result = DetectionResult::from_raw(Method::DetectGpt, raw);
    result.k_used = Some(k as u32);
    Ok(result)
}

/// Normalized perturbed log rank over the first `k` cached variants:
/// the variants' mean log rank divided by the original's.
pub fn npr_from(
    scores: &PerturbedScores,
    k: usize,
    method: Method,
) -> Result<DetectionResult, DetectError> {
    if k == 0 || k > scores.variant_log_ranks.len() {
        return Err(DetectError::InvalidParameter("k out of range for cached variants"));
    }
    let perturbed_mean = scores.variant_log_ranks[..k].iter().sum::<f64>() / k as f64;
    let (raw, degenerate) = ratio_with_guard(perturbed_mean, scores.original_log_rank);
    let mut result = DetectionResult::from_raw(method, raw);
    result.k_used = Some(k as u32);
    result.degenerate = degenerate;
    Ok(result)
}

/// DetectGPT's likelihood discrepancy with an arbitrary perturber.
pub fn score_detectgpt(
    code: &str,
    scorer: &dyn Scorer,
    perturber: &dyn Perturber,
    k: u32,
) -> Result<DetectionResult, DetectError> {
    let scores = perturbed_scores(code, "", scorer, perturber, k, false)?;
    detectgpt_from(&scores, k as usize)
}

/// NPR with an arbitrary perturber (the external-MLM baseline when handed
/// a remote perturber).
pub fn score_npr(
    code: &str,
    scorer: &dyn Scorer,
    perturber: &dyn Perturber,
    k: u32,
) -> Result<DetectionResult, DetectError> {
    let scores = perturbed_scores(code, "", scorer, perturber, k, false)?;
    npr_from(&scores, k as usize, Method::NprMlm)
}

/// The stylized-perturbation detector: NPR over whitespace perturbations,
/// with an optional decision threshold. Deterministic given
/// `(code, config.seed)`.
pub fn detect_code_gpt(
    code: &str,
    scorer: &dyn Scorer,
    config: &PerturbationConfig,
    epsilon: Option<f64>,
) -> Result<DetectionResult, DetectError> {
    detect_code_gpt_for_sample(code, "", scorer, config, epsilon)
}

/// [`detect_code_gpt`] with an explicit sample id for RNG stream
/// derivation under parallel evaluation.
pub fn detect_code_gpt_for_sample(
    code: &str,
    sample_id: &str,
    scorer: &dyn Scorer,
    config: &PerturbationConfig,
    epsilon: Option<f64>,
) -> Result<DetectionResult, DetectError> {
    if code.is_empty() {
        return Err(DetectError::Perturb(PerturbError::EmptyCode));
    }
    config.validate()?;
    let perturber = StylizedPerturber { config: config.clone() };
    let scores = perturbed_scores(code, sample_id, scorer, &perturber, config.k, false)?;
    let mut result = npr_from(&scores, config.k as usize, Method::DetectCodeGpt)?;
    if let Some(epsilon) = epsilon {
        result = result.with_verdict(epsilon);
    }
    Ok(result)
}
