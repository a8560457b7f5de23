//! Token-level naturalness scoring under a language model.
//!
//! A [`Scorer`] maps a text to per-token log-likelihood, rank and entropy.
//! Scoring must be deterministic: the same text through the same scorer
//! yields an identical [`ScoredCode`]. Everything downstream (stylometry
//! naturalness tables, detectors, evaluation) works against this trait, so
//! the model behind it can be a remote inference endpoint or the built-in
//! n-gram surrogate.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One scored model token. Byte ranges tile the scored text in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredToken {
    pub text: String,
    pub byte_start: usize,
    pub byte_end: usize,
    /// Natural log of the token's probability; always <= 0.
    pub log_likelihood: f64,
    /// 1-based position in the probability-sorted candidate list.
    pub rank: u64,
    /// Predictive entropy in nats at this position, when the scorer can
    /// expose its full distribution.
    pub entropy: Option<f64>,
    /// True when the scorer only saw a top-K candidate list and `rank` is
    /// the lower bound `K + 1` rather than the exact value.
    #[serde(default)]
    pub rank_is_lower_bound: bool,
}

/// Scoring result for one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCode {
    pub text: String,
    pub tokens: Vec<ScoredToken>,
    pub scorer_id: String,
}

impl ScoredCode {
    pub fn has_lower_bound_ranks(&self) -> bool {
        self.tokens.iter().any(|t| t.rank_is_lower_bound)
    }
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("cannot score empty text")]
    EmptyText,
    #[error("scored code has no tokens")]
    EmptyScore,
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("scorer protocol error: {0}")]
    ScorerProtocolError(String),
    #[error("exact token ranks unavailable from this scorer")]
    RankUnavailable,
    #[error("entropy unavailable from this scorer")]
    EntropyUnavailable,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A deterministic token-level scoring model.
pub trait Scorer: Send + Sync {
    /// Stable identifier used in caches and reports.
    fn id(&self) -> &str;

    fn score(&self, text: &str) -> Result<ScoredCode, ScoreError>;
}

/// Arithmetic mean of per-token log-likelihoods.
pub fn mean_log_likelihood(sc: &ScoredCode) -> Result<f64, ScoreError> {
    if sc.tokens.is_empty() {
        return Err(ScoreError::EmptyScore);
    }
    let sum: f64 = sc.tokens.iter().map(|t| t.log_likelihood).sum();
    Ok(sum / sc.tokens.len() as f64)
}

/// Arithmetic mean of per-token `ln(rank)`.
pub fn mean_log_rank(sc: &ScoredCode) -> Result<f64, ScoreError> {
    if sc.tokens.is_empty() {
        return Err(ScoreError::EmptyScore);
    }
    let sum: f64 = sc.tokens.iter().map(|t| (t.rank as f64).ln()).sum();
    Ok(sum / sc.tokens.len() as f64)
}

/// Arithmetic mean of per-token ranks.
pub fn mean_rank(sc: &ScoredCode) -> Result<f64, ScoreError> {
    if sc.tokens.is_empty() {
        return Err(ScoreError::EmptyScore);
    }
    let sum: f64 = sc.tokens.iter().map(|t| t.rank as f64).sum();
    Ok(sum / sc.tokens.len() as f64)
}

/// Arithmetic mean of per-position entropies. Fails when any token lacks
/// an entropy value (remote scorer without full distributions).
pub fn mean_entropy(sc: &ScoredCode) -> Result<f64, ScoreError> {
    if sc.tokens.is_empty() {
        return Err(ScoreError::EmptyScore);
    }
    let mut sum = 0.0;
    for token in &sc.tokens {
        sum += token.entropy.ok_or(ScoreError::EntropyUnavailable)?;
    }
    Ok(sum / sc.tokens.len() as f64)
}

/// Parsed `--scorer` argument: either an HTTP endpoint or
/// `surrogate:<model path>`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSpec {
    Remote { url: String },
    Surrogate { path: PathBuf },
}

impl std::str::FromStr for ScorerSpec {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, ScoreError> {
        if let Some(path) = s.strip_prefix("surrogate:") {
            if path.is_empty() {
                return Err(ScoreError::InvalidParameter("empty surrogate model path"));
            }
            Ok(ScorerSpec::Surrogate { path: PathBuf::from(path) })
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(ScorerSpec::Remote { url: s.to_string() })
        } else {
            Err(ScoreError::InvalidParameter(
                "scorer must be an http(s) URL or surrogate:<path>",
            ))
        }
    }
}
