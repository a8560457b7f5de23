//! Corpus-level stylometry: token frequency, syntax-element distributions
//! with chi-square comparison, Zipf and Heaps law fits, conciseness stats,
//! and per-category naturalness under a scorer.
//!
//! All token statistics are over lexer spans; whitespace spans are excluded
//! from frequency ranking, vocabulary and token counts (they still count in
//! category distributions, which cover all seven categories). Empty or
//! whitespace-only samples are skipped with a logged warning.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::dataset::Corpus;
use crate::lex::{category_counts, lex, Category, LexError, LexedCode};
use crate::scoring::{ScoreError, Scorer};

pub const DEFAULT_HEAPS_CHECKPOINTS: usize = 50;

#[derive(Debug, Error)]
pub enum StylometryError {
    #[error("empty corpus (no usable samples)")]
    EmptyCorpus,
    #[error("too few tokens: need {needed}, got {got}")]
    TooFewTokens { needed: usize, got: usize },
    #[error("degenerate contingency table (fewer than 2 non-empty categories)")]
    DegenerateTable,
    #[error("scorer token alignment failure: {0}")]
    AlignmentFailure(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

fn usable_lexed(corpus: &Corpus) -> Result<Vec<(usize, LexedCode)>, StylometryError> {
    let mut out = Vec::with_capacity(corpus.samples.len());
    for (i, sample) in corpus.samples.iter().enumerate() {
        if sample.text.trim().is_empty() {
            log::warn!("skipping empty sample {:?} in corpus {:?}", sample.id, corpus.name);
            continue;
        }
        out.push((i, lex(&sample.text, sample.language)?));
    }
    Ok(out)
}

/// Aggregate non-whitespace token counts over a corpus.
pub fn token_counts(corpus: &Corpus) -> Result<HashMap<String, u64>, StylometryError> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for (_, lexed) in usable_lexed(corpus)? {
        for span in &lexed.spans {
            if span.category != Category::Whitespace {
                *counts.entry(span.text.clone()).or_insert(0) += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(StylometryError::EmptyCorpus);
    }
    Ok(counts)
}

/// Full rank-frequency table: descending count, ties broken by token text.
pub fn rank_frequency(corpus: &Corpus) -> Result<Vec<(String, u64)>, StylometryError> {
    let mut rows: Vec<(String, u64)> = token_counts(corpus)?.into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(rows)
}

/// The `top_k` most frequent tokens.
pub fn token_frequency(
    corpus: &Corpus,
    top_k: usize,
) -> Result<Vec<(String, u64)>, StylometryError> {
    if top_k == 0 {
        return Err(StylometryError::InvalidParameter("top_k must be >= 1"));
    }
    let mut rows = rank_frequency(corpus)?;
    rows.truncate(top_k);
    Ok(rows)
}

/// Aggregate span counts per category over a corpus.
pub fn corpus_category_counts(
    corpus: &Corpus,
) -> Result<BTreeMap<Category, u64>, StylometryError> {
    let mut totals: BTreeMap<Category, u64> = Category::ALL.iter().map(|&c| (c, 0)).collect();
    for (_, lexed) in usable_lexed(corpus)? {
        for (category, count) in category_counts(&lexed) {
            *totals.get_mut(&category).unwrap() += count;
        }
    }
    if totals.values().all(|&c| c == 0) {
        return Err(StylometryError::EmptyCorpus);
    }
    Ok(totals)
}

#[derive(Debug, Clone, Serialize)]
pub struct CategoryComparison {
    pub statistic: f64,
    pub p_value: f64,
    pub degrees_of_freedom: u64,
    /// Categories empty in both corpora, excluded from the table.
    pub dropped_categories: Vec<Category>,
    pub counts_a: BTreeMap<Category, u64>,
    pub counts_b: BTreeMap<Category, u64>,
}

/// Pearson chi-square over the two corpora's category contingency table.
pub fn compare_category_distributions(
    a: &Corpus,
    b: &Corpus,
) -> Result<CategoryComparison, StylometryError> {
    let counts_a = corpus_category_counts(a)?;
    let counts_b = corpus_category_counts(b)?;
    let kept: Vec<Category> = Category::ALL
        .iter()
        .copied()
        .filter(|c| counts_a[c] + counts_b[c] > 0)
        .collect();
    let dropped: Vec<Category> = Category::ALL
        .iter()
        .copied()
        .filter(|c| counts_a[c] + counts_b[c] == 0)
        .collect();
    if kept.len() < 2 {
        return Err(StylometryError::DegenerateTable);
    }
    let total_a: u64 = kept.iter().map(|c| counts_a[c]).sum();
    let total_b: u64 = kept.iter().map(|c| counts_b[c]).sum();
    let grand = (total_a + total_b) as f64;
    let mut statistic = 0.0;
    for category in &kept {
        let row = (counts_a[category] + counts_b[category]) as f64;
        for (observed, column_total) in [
            (counts_a[category] as f64, total_a as f64),
            (counts_b[category] as f64, total_b as f64),
        ] {
            let expected = row * column_total / grand;
            let diff = observed - expected;
            statistic += diff * diff / expected;
        }
    }
    let degrees_of_freedom = (kept.len() - 1) as u64;
    let p_value = if statistic <= 0.0 {
        1.0
    } else {
        let dist = ChiSquared::new(degrees_of_freedom as f64)
            .expect("df >= 1 by construction");
        (1.0 - dist.cdf(statistic)).clamp(0.0, 1.0)
    };
    Ok(CategoryComparison {
        statistic,
        p_value,
        degrees_of_freedom,
        dropped_categories: dropped,
        counts_a,
        counts_b,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ZipfFit {
    /// Negative slope of the log-log rank-frequency line.
    pub zipf_alpha: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub ranks_used: usize,
}

/// Least-squares line on `(ln rank, ln frequency)`. Ranks with frequency 1
/// are excluded to stabilise the slope (all ranks are used when that would
/// leave fewer than two points).
pub fn fit_zipf(corpus: &Corpus) -> Result<ZipfFit, StylometryError> {
    let rows = rank_frequency(corpus)?;
    if rows.len() < 10 {
        return Err(StylometryError::TooFewTokens { needed: 10, got: rows.len() });
    }
    let mut points: Vec<(f64, f64)> = rows
        .iter()
        .enumerate()
        .filter(|(_, (_, count))| *count >= 2)
        .map(|(i, (_, count))| ((i as f64 + 1.0).ln(), (*count as f64).ln()))
        .collect();
    if points.len() < 2 {
        points = rows
            .iter()
            .enumerate()
            .map(|(i, (_, count))| ((i as f64 + 1.0).ln(), (*count as f64).ln()))
            .collect();
    }
    let (slope, intercept, r_squared) = least_squares(&points);
    Ok(ZipfFit {
        zipf_alpha: -slope,
        intercept,
        r_squared,
        ranks_used: points.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HeapsFit {
    /// Slope of the log-log vocabulary-vs-corpus-size line.
    pub heaps_beta: f64,
    pub coefficient: f64,
    pub r_squared: f64,
    pub checkpoints_used: usize,
}

/// Vocabulary size at evenly spaced prefixes of the corpus token stream.
pub fn vocabulary_growth(
    corpus: &Corpus,
    checkpoints: usize,
) -> Result<Vec<(u64, u64)>, StylometryError> {
    if checkpoints < 2 {
        return Err(StylometryError::InvalidParameter("checkpoints must be >= 2"));
    }
    let mut stream: Vec<String> = Vec::new();
    for (_, lexed) in usable_lexed(corpus)? {
        for span in &lexed.spans {
            if span.category != Category::Whitespace {
                stream.push(span.text.clone());
            }
        }
    }
    let total = stream.len();
    if total < checkpoints {
        return Err(StylometryError::TooFewTokens { needed: checkpoints, got: total });
    }
    let mut targets: Vec<usize> = (1..=checkpoints)
        .map(|i| ((i * total) as f64 / checkpoints as f64).round() as usize)
        .map(|d| d.clamp(1, total))
        .collect();
    targets.dedup();

    let mut seen: HashSet<&str> = HashSet::new();
    let mut out = Vec::with_capacity(targets.len());
    let mut next = 0;
    for (i, token) in stream.iter().enumerate() {
        seen.insert(token.as_str());
        while next < targets.len() && targets[next] == i + 1 {
            out.push(((i + 1) as u64, seen.len() as u64));
            next += 1;
        }
    }
    Ok(out)
}

/// Least-squares line on `(ln corpus size, ln vocabulary)`.
pub fn fit_heaps(corpus: &Corpus, checkpoints: usize) -> Result<HeapsFit, StylometryError> {
    let growth = vocabulary_growth(corpus, checkpoints)?;
    let points: Vec<(f64, f64)> = growth
        .iter()
        .map(|&(d, v)| ((d as f64).ln(), (v as f64).ln()))
        .collect();
    let (slope, intercept, r_squared) = least_squares(&points);
    Ok(HeapsFit {
        heaps_beta: slope,
        coefficient: intercept.exp(),
        r_squared,
        checkpoints_used: points.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LengthStats {
    pub token_count_histogram: BTreeMap<u64, u64>,
    pub line_count_histogram: BTreeMap<u64, u64>,
    pub mean_tokens: f64,
    pub median_tokens: f64,
    pub mean_lines: f64,
    pub median_lines: f64,
    pub samples_used: usize,
    pub samples_skipped: usize,
}

/// Conciseness statistics: non-whitespace tokens and non-blank lines per
/// sample.
pub fn length_stats(corpus: &Corpus) -> Result<LengthStats, StylometryError> {
    if corpus.samples.is_empty() {
        return Err(StylometryError::EmptyCorpus);
    }
    let lexed = usable_lexed(corpus)?;
    let mut token_counts_per_sample: Vec<u64> = Vec::new();
    let mut line_counts: Vec<u64> = Vec::new();
    for (i, lexed_code) in &lexed {
        let tokens = lexed_code
            .spans
            .iter()
            .filter(|s| s.category != Category::Whitespace)
            .count() as u64;
        if tokens == 0 {
            log::warn!(
                "skipping whitespace-only sample {:?}",
                corpus.samples[*i].id
            );
            continue;
        }
        let lines = corpus.samples[*i]
            .text
            .split('\n')
            .filter(|line| !line.trim().is_empty())
            .count() as u64;
        token_counts_per_sample.push(tokens);
        line_counts.push(lines);
    }
    if token_counts_per_sample.is_empty() {
        return Err(StylometryError::EmptyCorpus);
    }
    let histogram = |values: &[u64]| {
        let mut h: BTreeMap<u64, u64> = BTreeMap::new();
        for &v in values {
            *h.entry(v).or_insert(0) += 1;
        }
        h
    };
    let samples_used = token_counts_per_sample.len();
    Ok(LengthStats {
        token_count_histogram: histogram(&token_counts_per_sample),
        line_count_histogram: histogram(&line_counts),
        mean_tokens: mean_u64(&token_counts_per_sample),
        median_tokens: median_u64(&mut token_counts_per_sample.clone()),
        mean_lines: mean_u64(&line_counts),
        median_lines: median_u64(&mut line_counts.clone()),
        samples_used,
        samples_skipped: corpus.samples.len() - samples_used,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NaturalnessRow {
    pub mean_log_likelihood: f64,
    pub mean_log_rank: f64,
    pub token_count: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NaturalnessTable {
    /// Rows only for categories that received at least one scorer token.
    pub rows: BTreeMap<Category, NaturalnessRow>,
    pub all: NaturalnessRow,
    pub samples_used: usize,
    pub samples_skipped: usize,
}

/// Mean log-likelihood and log-rank per syntax category.
///
/// Every scorer token is assigned the category of the lexer span with the
/// largest byte overlap (earlier span on ties); the ALL row is the exact
/// token-count-weighted mean of the category rows.
pub fn category_naturalness(
    corpus: &Corpus,
    scorer: &dyn Scorer,
) -> Result<NaturalnessTable, StylometryError> {
    #[derive(Default, Clone, Copy)]
    struct Acc {
        ll: f64,
        log_rank: f64,
        n: u64,
    }
    let mut accs: BTreeMap<Category, Acc> = BTreeMap::new();
    let mut samples_used = 0;
    let mut samples_skipped = 0;
    for sample in &corpus.samples {
        if sample.text.trim().is_empty() {
            log::warn!("skipping empty sample {:?}", sample.id);
            samples_skipped += 1;
            continue;
        }
        let scored = scorer.score(&sample.text)?;
        let lexed = lex(&sample.text, sample.language)?;
        let spans = &lexed.spans;
        let mut si = 0;
        for token in &scored.tokens {
            if token.byte_end > sample.text.len() || token.byte_start >= token.byte_end {
                return Err(StylometryError::AlignmentFailure(format!(
                    "scorer token [{}, {}) outside text of {} bytes",
                    token.byte_start,
                    token.byte_end,
                    sample.text.len()
                )));
            }
            while si < spans.len() && spans[si].end <= token.byte_start {
                si += 1;
            }
            let mut best: Option<(usize, Category)> = None;
            let mut k = si;
            while k < spans.len() && spans[k].start < token.byte_end {
                let overlap = token.byte_end.min(spans[k].end)
                    - token.byte_start.max(spans[k].start);
                if overlap > 0 && best.is_none_or(|(b, _)| overlap > b) {
                    best = Some((overlap, spans[k].category));
                }
                k += 1;
            }
            let Some((_, category)) = best else {
                return Err(StylometryError::AlignmentFailure(format!(
                    "no span overlaps scorer token at [{}, {})",
                    token.byte_start, token.byte_end
                )));
            };
            let acc = accs.entry(category).or_default();
            acc.ll += token.log_likelihood;
            acc.log_rank += (token.rank as f64).ln();
            acc.n += 1;
        }
        samples_used += 1;
    }
    if samples_used == 0 {
        return Err(StylometryError::EmptyCorpus);
    }
    let mut all = Acc::default();
    for acc in accs.values() {
        all.ll += acc.ll;
        all.log_rank += acc.log_rank;
        all.n += acc.n;
    }
    let row = |acc: &Acc| NaturalnessRow {
        mean_log_likelihood: acc.ll / acc.n as f64,
        mean_log_rank: acc.log_rank / acc.n as f64,
        token_count: acc.n,
    };
    Ok(NaturalnessTable {
        rows: accs.iter().map(|(&c, acc)| (c, row(acc))).collect(),
        all: row(&all),
        samples_used,
        samples_skipped,
    })
}

/// One comparison row in the shape of the per-category naturalness table:
/// machine and human means side by side with machine-advantage deltas
/// (`delta_log_likelihood = machine - human`,
/// `delta_log_rank = human - machine`; both positive when machine code is
/// the more natural).
#[derive(Debug, Clone, Serialize)]
pub struct NaturalnessDeltaRow {
    pub category: String,
    pub machine_log_likelihood: f64,
    pub human_log_likelihood: f64,
    pub delta_log_likelihood: f64,
    pub machine_log_rank: f64,
    pub human_log_rank: f64,
    pub delta_log_rank: f64,
}

/// Join two naturalness tables on category; rows present in both, plus ALL.
pub fn naturalness_delta(
    machine: &NaturalnessTable,
    human: &NaturalnessTable,
) -> Vec<NaturalnessDeltaRow> {
    let make = |name: &str, m: &NaturalnessRow, h: &NaturalnessRow| NaturalnessDeltaRow {
        category: name.to_string(),
        machine_log_likelihood: m.mean_log_likelihood,
        human_log_likelihood: h.mean_log_likelihood,
        delta_log_likelihood: m.mean_log_likelihood - h.mean_log_likelihood,
        machine_log_rank: m.mean_log_rank,
        human_log_rank: h.mean_log_rank,
        delta_log_rank: h.mean_log_rank - m.mean_log_rank,
    };
    let mut rows = Vec::new();
    for category in Category::ALL {
        if let (Some(m), Some(h)) = (machine.rows.get(&category), human.rows.get(&category)) {
            rows.push(make(category.name(), m, h));
        }
    }
    rows.push(make("ALL", &machine.all, &human.all));
    rows
}

/// Everything the analyzer computes for one corpus. Fits are optional:
/// a corpus can be too small for a stable Zipf or Heaps fit, and
/// naturalness needs a scorer.
#[derive(Debug, Clone, Serialize)]
pub struct CorpusSection {
    pub name: String,
    pub sample_count: usize,
    pub category_counts: BTreeMap<Category, u64>,
    pub category_proportions: BTreeMap<Category, f64>,
    pub top_tokens: Vec<(String, u64)>,
    pub zipf: Option<ZipfFit>,
    pub heaps: Option<HeapsFit>,
    pub length: LengthStats,
    pub naturalness: Option<NaturalnessTable>,
}

/// Full analyzer output: one or two corpora plus their comparison. When
/// two corpora are given, the first is treated as the machine side in
/// delta columns.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub corpus_a: CorpusSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_b: Option<CorpusSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi_square: Option<CategoryComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub naturalness_delta: Option<Vec<NaturalnessDeltaRow>>,
}

pub fn analyze_corpus(
    corpus: &Corpus,
    scorer: Option<&dyn Scorer>,
    top_k: usize,
) -> Result<CorpusSection, StylometryError> {
    let counts = corpus_category_counts(corpus)?;
    let total: u64 = counts.values().sum();
    let proportions = counts
        .iter()
        .map(|(&c, &n)| (c, n as f64 / total as f64))
        .collect();
    let zipf = match fit_zipf(corpus) {
        Ok(fit) => Some(fit),
        Err(StylometryError::TooFewTokens { needed, got }) => {
            log::warn!("{}: zipf fit skipped ({got} of {needed} tokens)", corpus.name);
            None
        }
        Err(e) => return Err(e),
    };
    let heaps = match fit_heaps(corpus, DEFAULT_HEAPS_CHECKPOINTS) {
        Ok(fit) => Some(fit),
        Err(StylometryError::TooFewTokens { needed, got }) => {
            log::warn!("{}: heaps fit skipped ({got} of {needed} tokens)", corpus.name);
            None
        }
        Err(e) => return Err(e),
    };
    let naturalness = match scorer {
        Some(scorer) => Some(category_naturalness(corpus, scorer)?),
        None => None,
    };
    Ok(CorpusSection {
        name: corpus.name.clone(),
        sample_count: corpus.samples.len(),
        category_counts: counts,
        category_proportions: proportions,
        top_tokens: token_frequency(corpus, top_k)?,
        zipf,
        heaps,
        length: length_stats(corpus)?,
        naturalness,
    })
}

/// Analyze one corpus, or compare two (`a` = machine side, `b` = human).
pub fn analyze(
    a: &Corpus,
    b: Option<&Corpus>,
    scorer: Option<&dyn Scorer>,
    top_k: usize,
) -> Result<AnalyzeReport, StylometryError> {
    let corpus_a = analyze_corpus(a, scorer, top_k)?;
    let Some(b) = b else {
        return Ok(AnalyzeReport {
            corpus_a,
            corpus_b: None,
            chi_square: None,
            naturalness_delta: None,
        });
    };
    let corpus_b = analyze_corpus(b, scorer, top_k)?;
    let chi_square = compare_category_distributions(a, b)?;
    let naturalness_delta = match (&corpus_a.naturalness, &corpus_b.naturalness) {
        (Some(machine), Some(human)) => Some(naturalness_delta(machine, human)),
        _ => None,
    };
    Ok(AnalyzeReport {
        corpus_a,
        corpus_b: Some(corpus_b),
        chi_square: Some(chi_square),
        naturalness_delta,
    })
}

/// Comparison-table CSV: one row per category plus ALL, machine and human
/// means side by side with both delta columns.
pub fn write_naturalness_delta_csv<W: std::io::Write>(
    rows: &[NaturalnessDeltaRow],
    out: W,
) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "category",
        "machine_log_likelihood",
        "human_log_likelihood",
        "delta_log_likelihood",
        "machine_log_rank",
        "human_log_rank",
        "delta_log_rank",
    ])?;
    for row in rows {
        writer.write_record([
            row.category.clone(),
            format!("{:.4}", row.machine_log_likelihood),
            format!("{:.4}", row.human_log_likelihood),
            format!("{:.4}", row.delta_log_likelihood),
            format!("{:.4}", row.machine_log_rank),
            format!("{:.4}", row.human_log_rank),
            format!("{:.4}", row.delta_log_rank),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn mean_u64(values: &[u64]) -> f64 {
    values.iter().sum::<u64>() as f64 / values.len() as f64
}

fn median_u64(values: &mut [u64]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

/// Least-squares line fit returning `(slope, intercept, r_squared)`.
fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let r_squared = if syy <= 1e-12 {
        if ss_res <= 1e-9 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    (slope, intercept, r_squared)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CodeSample;
    use crate::scoring::{ScoredCode, ScoredToken};

    fn corpus_of(texts: &[&str]) -> Corpus {
        Corpus::from_texts("test", texts.iter().map(|s| s.to_string()))
    }

    /// Corpus where the r-th distinct token (1-based) appears
    /// `floor(scale / r^exponent)` times, chunked into samples.
    fn power_law_corpus(exponent: f64, scale: f64, ranks: usize) -> Corpus {
        let mut texts = Vec::new();
        let mut current = String::new();
        let mut tokens_in_chunk = 0;
        for r in 1..=ranks {
            let count = (scale / (r as f64).powf(exponent)).floor() as usize;
            for _ in 0..count.max(1) {
                current.push_str(&format!("t{r} "));
                tokens_in_chunk += 1;
                if tokens_in_chunk == 2000 {
                    texts.push(std::mem::take(&mut current));
                    tokens_in_chunk = 0;
                }
            }
        }
        if !current.is_empty() {
            texts.push(current);
        }
        corpus_of(&texts.iter().map(|s| s.as_str()).collect::<Vec<_>>())
    }

    #[test]
    fn token_frequency_counts_and_order() {
        let corpus = corpus_of(&["a a b"]);
        let rows = token_frequency(&corpus, 10).unwrap();
        assert_eq!(rows, vec![("a".into(), 2), ("b".into(), 1)]);
    }

    #[test]
    fn token_frequency_tie_break_is_lexicographic() {
        let corpus = corpus_of(&["b a b a c"]);
        let rows = token_frequency(&corpus, 10).unwrap();
        assert_eq!(rows, vec![("a".into(), 2), ("b".into(), 2), ("c".into(), 1)]);
    }

    #[test]
    fn token_frequency_doubles_with_duplicate_file() {
        let single = corpus_of(&["x = x + 1\n"]);
        let double = corpus_of(&["x = x + 1\n", "x = x + 1\n"]);
        let a = token_frequency(&single, 10).unwrap();
        let b = token_frequency(&double, 10).unwrap();
        for ((ta, ca), (tb, cb)) in a.iter().zip(&b) {
            assert_eq!(ta, tb);
            assert_eq!(ca * 2, *cb);
        }
    }

    #[test]
    fn token_frequency_is_order_invariant() {
        let a = corpus_of(&["x = 1\n", "def f(): pass\n"]);
        let b = corpus_of(&["def f(): pass\n", "x = 1\n"]);
        assert_eq!(
            token_frequency(&a, 100).unwrap(),
            token_frequency(&b, 100).unwrap()
        );
    }

    #[test]
    fn chi_square_identical_corpora() {
        let corpus = corpus_of(&["def f(x):\n    return x + 1\n"]);
        let cmp = compare_category_distributions(&corpus, &corpus).unwrap();
        assert_eq!(cmp.statistic, 0.0);
        assert_eq!(cmp.p_value, 1.0);
    }

    #[test]
    fn chi_square_two_disjoint_categories() {
        // 10 keyword-only spans vs 10 identifier-only spans
        let a = corpus_of(&["def"; 10]);
        let b = corpus_of(&["x"; 10]);
        let cmp = compare_category_distributions(&a, &b).unwrap();
        assert!((cmp.statistic - 20.0).abs() < 1e-9);
        assert_eq!(cmp.degrees_of_freedom, 1);
        // frozen from an independent chi-square table: sf(20, df=1)
        assert!((cmp.p_value - 7.74421643e-6).abs() < 1e-12);
        assert_eq!(cmp.dropped_categories.len(), 5);
    }

    #[test]
    fn chi_square_is_symmetric() {
        let a = corpus_of(&["def f(x):\n    return x\n"]);
        let b = corpus_of(&["value = compute(1, 2) # note\n"]);
        let ab = compare_category_distributions(&a, &b).unwrap();
        let ba = compare_category_distributions(&b, &a).unwrap();
        assert!((ab.statistic - ba.statistic).abs() < 1e-12);
        assert!((ab.p_value - ba.p_value).abs() < 1e-12);
    }

    #[test]
    fn zipf_recovers_planted_exponents() {
        for (exponent, scale) in [(1.0, 1e4), (2.0, 2e5)] {
            let corpus = power_law_corpus(exponent, scale, 100);
            let fit = fit_zipf(&corpus).unwrap();
            assert!(
                (fit.zipf_alpha - exponent).abs() <= 0.02,
                "exponent {exponent}: got {}",
                fit.zipf_alpha
            );
            assert!(fit.r_squared > 0.99);
        }
    }

    #[test]
    fn zipf_flat_distribution_has_zero_alpha() {
        let text = (1..=20).map(|r| format!("t{r} ").repeat(5)).collect::<String>();
        let corpus = corpus_of(&[text.as_str()]);
        let fit = fit_zipf(&corpus).unwrap();
        assert!(fit.zipf_alpha.abs() < 1e-6);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn zipf_needs_ten_distinct_tokens() {
        let corpus = corpus_of(&["a b c d e"]);
        assert!(matches!(
            fit_zipf(&corpus),
            Err(StylometryError::TooFewTokens { needed: 10, .. })
        ));
    }

    #[test]
    fn heaps_all_distinct_is_linear() {
        let text: String = (0..500).map(|i| format!("w{i} ")).collect();
        let corpus = corpus_of(&[text.as_str()]);
        let fit = fit_heaps(&corpus, 50).unwrap();
        assert!((fit.heaps_beta - 1.0).abs() < 1e-6, "beta {}", fit.heaps_beta);
    }

    #[test]
    fn heaps_constant_vocabulary_is_flat() {
        let text = "w ".repeat(500);
        let corpus = corpus_of(&[text.as_str()]);
        let fit = fit_heaps(&corpus, 50).unwrap();
        assert!(fit.heaps_beta.abs() < 1e-6);
    }

    #[test]
    fn heaps_recovers_square_root_growth() {
        // introduce a new token exactly when round(sqrt(D)) increments
        let total = 10_000usize;
        let mut text = String::new();
        let mut vocab = 0usize;
        for d in 1..=total {
            let target = (d as f64).sqrt().round() as usize;
            if target > vocab {
                vocab = target;
                text.push_str(&format!("n{vocab} "));
            } else {
                text.push_str("n1 ");
            }
        }
        let corpus = corpus_of(&[text.as_str()]);
        let fit = fit_heaps(&corpus, 50).unwrap();
        assert!(
            (fit.heaps_beta - 0.5).abs() <= 0.05,
            "beta {}",
            fit.heaps_beta
        );
    }

    #[test]
    fn length_stats_basics() {
        let corpus = corpus_of(&["x = 1\n"]);
        let stats = length_stats(&corpus).unwrap();
        assert_eq!(stats.mean_tokens, 3.0);
        assert_eq!(stats.mean_lines, 1.0);
    }

    #[test]
    fn length_stats_skips_blank_samples_and_blank_lines() {
        let corpus = corpus_of(&["a\n\n\nb\n", "   \n"]);
        let stats = length_stats(&corpus).unwrap();
        assert_eq!(stats.samples_used, 1);
        assert_eq!(stats.samples_skipped, 1);
        assert_eq!(stats.mean_lines, 2.0);
    }

    struct ConstantScorer;

    impl Scorer for ConstantScorer {
        fn id(&self) -> &str {
            "constant"
        }

        fn score(&self, text: &str) -> Result<ScoredCode, ScoreError> {
            if text.is_empty() {
                return Err(ScoreError::EmptyText);
            }
            let tokens = text
                .as_bytes()
                .iter()
                .enumerate()
                .map(|(i, _)| ScoredToken {
                    text: "b".into(),
                    byte_start: i,
                    byte_end: i + 1,
                    log_likelihood: -2.0,
                    rank: 1,
                    entropy: Some(0.5),
                    rank_is_lower_bound: false,
                })
                .collect();
            Ok(ScoredCode { text: text.into(), tokens, scorer_id: "constant".into() })
        }
    }

    #[test]
    fn naturalness_constant_scorer_gives_constant_means() {
        let corpus = corpus_of(&["def f(x):\n    return x + 1\n"]);
        let table = category_naturalness(&corpus, &ConstantScorer).unwrap();
        for row in table.rows.values() {
            assert!((row.mean_log_likelihood + 2.0).abs() < 1e-12);
            assert_eq!(row.mean_log_rank, 0.0);
        }
        assert!((table.all.mean_log_likelihood + 2.0).abs() < 1e-12);
    }

    #[test]
    fn naturalness_single_category_all_equals_row() {
        let corpus = corpus_of(&["def"]);
        let table = category_naturalness(&corpus, &ConstantScorer).unwrap();
        assert_eq!(table.rows.len(), 1);
        let row = table.rows[&Category::Keyword];
        assert_eq!(row.token_count, table.all.token_count);
        assert_eq!(row.mean_log_likelihood, table.all.mean_log_likelihood);
    }

    #[test]
    fn naturalness_all_row_is_weighted_mean() {
        let corpus = corpus_of(&[
            "def f(a, b=2):\n    # add\n    return a + b\n",
            "x = 'text'\n",
        ]);
        let table = category_naturalness(&corpus, &ConstantScorer).unwrap();
        let total: u64 = table.rows.values().map(|r| r.token_count).sum();
        assert_eq!(total, table.all.token_count);
        let weighted_ll: f64 = table
            .rows
            .values()
            .map(|r| r.mean_log_likelihood * r.token_count as f64)
            .sum::<f64>()
            / total as f64;
        assert!((weighted_ll - table.all.mean_log_likelihood).abs() < 1e-6);
    }

    #[test]
    fn naturalness_delta_signs() {
        let machine = NaturalnessTable {
            rows: BTreeMap::from([(
                Category::Keyword,
                NaturalnessRow {
                    mean_log_likelihood: -1.0,
                    mean_log_rank: 0.2,
                    token_count: 10,
                },
            )]),
            all: NaturalnessRow {
                mean_log_likelihood: -1.0,
                mean_log_rank: 0.2,
                token_count: 10,
            },
            samples_used: 1,
            samples_skipped: 0,
        };
        let human = NaturalnessTable {
            rows: BTreeMap::from([(
                Category::Keyword,
                NaturalnessRow {
                    mean_log_likelihood: -2.0,
                    mean_log_rank: 1.0,
                    token_count: 10,
                },
            )]),
            all: NaturalnessRow {
                mean_log_likelihood: -2.0,
                mean_log_rank: 1.0,
                token_count: 10,
            },
            samples_used: 1,
            samples_skipped: 0,
        };
        let rows = naturalness_delta(&machine, &human);
        assert_eq!(rows.len(), 2);
        assert!((rows[0].delta_log_likelihood - 1.0).abs() < 1e-12);
        assert!((rows[0].delta_log_rank - 0.8).abs() < 1e-12);
        assert_eq!(rows[1].category, "ALL");
    }

    #[test]
    fn analyze_two_corpora_has_comparison_sections() {
        let texts: Vec<String> = (0..30)
            .map(|i| format!("def f{i}(a, b):\n    v{i} = a + {i}\n    return v{i} * b\n"))
            .collect();
        let a = corpus_of(&texts.iter().map(|s| s.as_str()).collect::<Vec<_>>());
        let b = corpus_of(&["x = 'one two' # note\ny = [1, 2]\n"; 20]);
        let report = analyze(&a, Some(&b), Some(&ConstantScorer), 10).unwrap();
        assert!(report.corpus_b.is_some());
        assert!(report.chi_square.is_some());
        let delta = report.naturalness_delta.unwrap();
        assert_eq!(delta.last().unwrap().category, "ALL");
        assert!(report.corpus_a.zipf.is_some());
        assert_eq!(report.corpus_a.top_tokens.len(), 10);
    }

    #[test]
    fn empty_corpus_errors() {
        let corpus = Corpus::new("empty", vec![CodeSample::human("a", "   ")]);
        assert!(matches!(
            token_frequency(&corpus, 5),
            Err(StylometryError::EmptyCorpus)
        ));
        assert!(matches!(
            length_stats(&corpus),
            Err(StylometryError::EmptyCorpus)
        ));
    }
}
