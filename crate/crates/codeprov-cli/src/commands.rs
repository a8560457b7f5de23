//! Subcommand implementations. Each returns the process exit code.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use codeprov::dataset::{read_dataset, trim, write_dataset, Corpus};
use codeprov::detect::{
    detect_code_gpt_for_sample, score_detectgpt, score_entropy, score_log_p, score_log_rank,
    score_lrr, score_npr, score_rank, DetectionResult, Method, Perturber, StylizedPerturber,
};
use codeprov::eval::{
    build_benchmark, run_suite, write_report_csv, BenchmarkParams, Generator, SuiteOptions,
};
use codeprov::remote::{GenerationClient, MlmPerturberClient};
use codeprov::scoring::{Scorer, ScorerSpec};
use codeprov::stylometry::{self, AnalyzeReport};
use codeprov::surrogate::{train_surrogate, SurrogateModel};
use serde::Serialize;

use crate::config::{OutputFormat, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_PER_INPUT: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_DATA: u8 = 65;
pub const EXIT_UNAVAILABLE: u8 = 69;

use crate::config::UsageError;

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn read_input(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .context("reading stdin")?;
        Ok(text)
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

/// Stable-order JSONL record for `detect` output.
#[derive(Serialize)]
struct DetectLine<'a> {
    input: &'a str,
    method: Method,
    score: f64,
    raw_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_used: Option<u32>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<bool>,
}

fn run_method(
    method: Method,
    text: &str,
    sample_id: &str,
    scorer: &dyn Scorer,
    config: &RunConfig,
    epsilon: Option<f64>,
) -> Result<DetectionResult> {
    let result = match method {
        Method::LogP => score_log_p(&scorer.score(text)?)?,
        Method::Entropy => score_entropy(&scorer.score(text)?)?,
        Method::Rank => score_rank(&scorer.score(text)?, config.approx_rank)?,
        Method::LogRank => score_log_rank(&scorer.score(text)?, config.approx_rank)?,
        Method::Lrr => score_lrr(&scorer.score(text)?, config.approx_rank)?,
        Method::DetectGpt => match self::external_perturber(config)? {
            Some(external) => {
                score_detectgpt(text, scorer, external.as_ref(), config.perturb.k)?
            }
            None => {
                let stylized = StylizedPerturber { config: config.perturb.clone() };
                score_detectgpt(text, scorer, &stylized, config.perturb.k)?
            }
        },
        Method::NprMlm => {
            let Some(external) = self::external_perturber(config)? else {
                return Err(usage(
                    "npr_mlm needs --perturber URL (the external mask-and-recover endpoint)"
                        .to_string(),
                ));
            };
            score_npr(text, scorer, external.as_ref(), config.perturb.k)?
        }
        Method::DetectCodeGpt => {
            detect_code_gpt_for_sample(text, sample_id, scorer, &config.perturb, epsilon)?
        }
    };
    Ok(match (method, epsilon) {
        (Method::DetectCodeGpt, _) => result, // verdict already attached
        (_, Some(epsilon)) => result.with_verdict(epsilon),
        (_, None) => result,
    })
}

fn external_perturber(config: &RunConfig) -> Result<Option<Box<dyn Perturber>>> {
    match &config.perturber {
        None => Ok(None),
        Some(url) => Ok(Some(Box::new(MlmPerturberClient::new(
            url,
            config.span_fraction,
            config.remote_options.clone(),
        )?))),
    }
}

pub fn cmd_detect(paths: &[PathBuf], config: &RunConfig) -> Result<u8> {
    let method = match config.methods.as_slice() {
        [one] => *one,
        [] => return Err(usage("detect requires exactly one --method")),
        _ => return Err(usage("detect takes a single --method")),
    };
    let scorer = match config.open_scorers()?.into_iter().next() {
        Some(scorer) => scorer,
        None => unreachable!("open_scorers errors when empty"),
    };
    let epsilon = config.resolve_epsilon()?;
    let inputs: Vec<PathBuf> = if paths.is_empty() {
        vec![PathBuf::from("-")]
    } else {
        paths.to_vec()
    };

    let stdout = std::io::stdout();
    let mut failed = 0usize;
    for path in &inputs {
        let name = path.display().to_string();
        let outcome = read_input(path).and_then(|raw| {
            let text = trim(&raw, config.trim_tokens, scorer.as_ref())?;
            if text.trim().is_empty() {
                bail!("input is empty after trimming");
            }
            run_method(method, &text, &name, scorer.as_ref(), config, epsilon)
        });
        match outcome {
            Ok(result) => {
                let line = DetectLine {
                    input: &name,
                    method: result.method,
                    score: result.score,
                    raw_score: result.raw_score,
                    k_used: result.k_used,
                    degenerate: result.degenerate,
                    verdict: result.verdict,
                };
                let mut handle = stdout.lock();
                serde_json::to_writer(&mut handle, &line)?;
                writeln!(handle)?;
            }
            Err(error) => {
                // a dead scorer fails every input; stop with the transport code
                if is_unavailable(&error) {
                    return Err(error);
                }
                eprintln!("error: {name}: {error:#}");
                failed += 1;
            }
        }
    }
    Ok(if failed > 0 { EXIT_PER_INPUT } else { EXIT_OK })
}

pub fn is_unavailable(error: &anyhow::Error) -> bool {
    error.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<codeprov::scoring::ScoreError>(),
            Some(codeprov::scoring::ScoreError::ScorerUnavailable(_))
        ) || matches!(
            cause.downcast_ref::<codeprov::detect::DetectError>(),
            Some(codeprov::detect::DetectError::PerturberUnavailable(_))
                | Some(codeprov::detect::DetectError::Score(
                    codeprov::scoring::ScoreError::ScorerUnavailable(_)
                ))
        )
    })
}

pub fn is_usage(error: &anyhow::Error) -> bool {
    error.chain().any(|c| c.downcast_ref::<UsageError>().is_some())
}

#[derive(Serialize)]
struct PerturbLine<'a> {
    variant_index: usize,
    #[serde(rename = "type")]
    kind: codeprov::perturb::PerturbationType,
    text: &'a str,
}

pub fn cmd_perturb(path: Option<&Path>, config: &RunConfig) -> Result<u8> {
    let path = path.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("-"));
    let text = read_input(&path)?;
    if text.is_empty() {
        return Err(usage("cannot perturb empty input"));
    }
    let set = codeprov::perturb::perturb_set(&text, &config.perturb)?;
    let stdout = std::io::stdout();
    let mut handle = stdout.lock();
    for (variant_index, variant) in set.variants.iter().enumerate() {
        let line = PerturbLine { variant_index, kind: variant.kind, text: &variant.text };
        serde_json::to_writer(&mut handle, &line)?;
        writeln!(handle)?;
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct AnalyzeOutput<'a> {
    seed: u64,
    trim_tokens: usize,
    scorer_ids: Vec<String>,
    #[serde(flatten)]
    report: &'a AnalyzeReport,
}

pub fn cmd_analyze(
    corpora: &[PathBuf],
    out_dir: &Path,
    top_tokens: usize,
    config: &RunConfig,
) -> Result<u8> {
    let (first, second) = match corpora {
        [a] => (a, None),
        [a, b] => (a, Some(b)),
        _ => return Err(usage("analyze takes one or two corpus paths")),
    };
    let corpus_a = Corpus::load(first)?;
    let corpus_b = second.map(|p| Corpus::load(p)).transpose()?;

    let scorer = match config.scorer_specs.first() {
        Some(spec) => Some(config.open_scorer(spec)?),
        None => None,
    };
    let report = stylometry::analyze(
        &corpus_a,
        corpus_b.as_ref(),
        scorer.as_deref(),
        top_tokens,
    )?;

    match config.format {
        OutputFormat::Json => {
            let output = AnalyzeOutput {
                seed: config.perturb.seed,
                trim_tokens: config.trim_tokens,
                scorer_ids: scorer.iter().map(|s| s.id().to_string()).collect(),
                report: &report,
            };
            println!("{}", serde_json::to_string_pretty(&output)?);
        }
        OutputFormat::Csv => {
            fs::create_dir_all(out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            write_analyze_csvs(&report, &corpus_a, corpus_b.as_ref(), out_dir)?;
        }
    }
    Ok(EXIT_OK)
}

fn write_analyze_csvs(
    report: &AnalyzeReport,
    corpus_a: &Corpus,
    corpus_b: Option<&Corpus>,
    dir: &Path,
) -> Result<()> {
    use codeprov::lex::Category;

    let open = |name: &str| -> Result<csv::Writer<fs::File>> {
        let path = dir.join(name);
        let file = fs::File::create(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        eprintln!("wrote {}", path.display());
        Ok(csv::Writer::from_writer(file))
    };

    // categories.csv: counts and proportions side by side
    let mut w = open("categories.csv")?;
    match &report.corpus_b {
        Some(b) => {
            w.write_record(["category", "count_a", "proportion_a", "count_b", "proportion_b"])?;
            for category in Category::ALL {
                w.write_record([
                    category.name().to_string(),
                    report.corpus_a.category_counts[&category].to_string(),
                    format!("{:.6}", report.corpus_a.category_proportions[&category]),
                    b.category_counts[&category].to_string(),
                    format!("{:.6}", b.category_proportions[&category]),
                ])?;
            }
        }
        None => {
            w.write_record(["category", "count", "proportion"])?;
            for category in Category::ALL {
                w.write_record([
                    category.name().to_string(),
                    report.corpus_a.category_counts[&category].to_string(),
                    format!("{:.6}", report.corpus_a.category_proportions[&category]),
                ])?;
            }
        }
    }
    w.flush()?;

    let corpora: Vec<(&str, &Corpus, &stylometry::CorpusSection)> = match (corpus_b, &report.corpus_b)
    {
        (Some(b), Some(section_b)) => vec![
            ("a", corpus_a, &report.corpus_a),
            ("b", b, section_b),
        ],
        _ => vec![("a", corpus_a, &report.corpus_a)],
    };

    for (tag, corpus, section) in &corpora {
        let mut w = open(&format!("top_tokens_{tag}.csv"))?;
        w.write_record(["rank", "token", "count"])?;
        for (i, (token, count)) in section.top_tokens.iter().enumerate() {
            w.write_record([(i + 1).to_string(), token.clone(), count.to_string()])?;
        }
        w.flush()?;

        let mut w = open(&format!("rank_frequency_{tag}.csv"))?;
        w.write_record(["rank", "frequency"])?;
        for (i, (_, count)) in stylometry::rank_frequency(corpus)?.iter().enumerate() {
            w.write_record([(i + 1).to_string(), count.to_string()])?;
        }
        w.flush()?;

        if let Ok(growth) =
            stylometry::vocabulary_growth(corpus, stylometry::DEFAULT_HEAPS_CHECKPOINTS)
        {
            let mut w = open(&format!("vocabulary_growth_{tag}.csv"))?;
            w.write_record(["corpus_size", "vocabulary"])?;
            for (d, v) in growth {
                w.write_record([d.to_string(), v.to_string()])?;
            }
            w.flush()?;
        }

        let mut w = open(&format!("lengths_{tag}.csv"))?;
        w.write_record(["kind", "value", "samples"])?;
        for (value, count) in &section.length.token_count_histogram {
            w.write_record(["tokens".into(), value.to_string(), count.to_string()])?;
        }
        for (value, count) in &section.length.line_count_histogram {
            w.write_record(["lines".into(), value.to_string(), count.to_string()])?;
        }
        w.flush()?;
    }

    if let Some(chi) = &report.chi_square {
        let mut w = open("chi_square.csv")?;
        w.write_record(["statistic", "p_value", "degrees_of_freedom"])?;
        w.write_record([
            format!("{:.6}", chi.statistic),
            format!("{:.6e}", chi.p_value),
            chi.degrees_of_freedom.to_string(),
        ])?;
        w.flush()?;
    }

    match (&report.naturalness_delta, &report.corpus_a.naturalness) {
        (Some(delta), _) => {
            let path = dir.join("naturalness.csv");
            let file = fs::File::create(&path)
                .with_context(|| format!("creating {}", path.display()))?;
            stylometry::write_naturalness_delta_csv(delta, file)?;
            eprintln!("wrote {}", path.display());
        }
        (None, Some(table)) => {
            let mut w = open("naturalness.csv")?;
            w.write_record(["category", "mean_log_likelihood", "mean_log_rank", "token_count"])?;
            for (category, row) in &table.rows {
                w.write_record([
                    category.name().to_string(),
                    format!("{:.4}", row.mean_log_likelihood),
                    format!("{:.4}", row.mean_log_rank),
                    row.token_count.to_string(),
                ])?;
            }
            w.write_record([
                "ALL".to_string(),
                format!("{:.4}", table.all.mean_log_likelihood),
                format!("{:.4}", table.all.mean_log_rank),
                table.all.token_count.to_string(),
            ])?;
            w.flush()?;
        }
        _ => {}
    }
    Ok(())
}

pub fn cmd_evaluate(
    dataset_path: &Path,
    out_dir: &Path,
    cache: Option<&Path>,
    config: &RunConfig,
) -> Result<u8> {
    if config.methods.is_empty() {
        return Err(usage("evaluate requires --method (comma separated list)"));
    }
    let read = read_dataset(dataset_path)?;
    for (line, message) in &read.malformed {
        eprintln!("{}:{line}: {message}", dataset_path.display());
    }
    if read.malformed.len() * 100 > read.total_lines {
        eprintln!(
            "{} of {} dataset lines are malformed (over 1%); aborting",
            read.malformed.len(),
            read.total_lines
        );
        return Ok(EXIT_DATA);
    }

    let scorers = config.open_scorers()?;
    let scorer_refs: Vec<&dyn Scorer> = scorers.iter().map(|b| b.as_ref()).collect();
    let external = external_perturber(config)?;

    let cache_path = cache.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut path = dataset_path.as_os_str().to_owned();
        path.push(".scores.jsonl");
        PathBuf::from(path)
    });
    let options = SuiteOptions {
        approx_rank: config.approx_rank,
        keep_degenerate: config.keep_degenerate,
        cache_path: Some(cache_path),
        sweep_k: config.sweep_k.clone(),
        trim_tokens: Some(config.trim_tokens),
    };
    let report = run_suite(
        &read.samples,
        &config.methods,
        &scorer_refs,
        &config.perturb,
        external.as_deref(),
        &options,
    )?;

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let json_path = out_dir.join("report.json");
    fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
    eprintln!("wrote {}", json_path.display());
    let csv_path = out_dir.join("report.csv");
    write_report_csv(&report, fs::File::create(&csv_path)?)?;
    eprintln!("wrote {}", csv_path.display());

    for cell in &report.cells {
        println!(
            "{:<24} {:<16} auroc={:.4} n={}/{} dropped={}+{}",
            cell.scorer_id,
            cell.method.name(),
            cell.auroc,
            cell.n_machine,
            cell.n_human,
            cell.degenerate_dropped,
            cell.errors_dropped
        );
    }
    for row in &report.sweep {
        println!("{:<24} sweep k={:<5} auroc={:.4}", row.scorer_id, row.k, row.auroc);
    }
    if !report.errors.is_empty() {
        eprintln!("{} per-sample failures (see report.json)", report.errors.len());
    }
    Ok(EXIT_OK)
}

pub fn cmd_build_benchmark(
    corpus_path: &Path,
    generator_spec: &str,
    n_pairs: usize,
    temperature: f64,
    top_p: f64,
    out: &Path,
    config: &RunConfig,
) -> Result<u8> {
    let corpus = Corpus::load(corpus_path)?;
    let params = BenchmarkParams {
        n_pairs,
        temperature,
        top_p,
        max_tokens: config.trim_tokens,
        seed: config.perturb.seed,
    };

    // the generator is either the local surrogate (which can also trim) or
    // a remote generation endpoint (which needs a separate trim scorer)
    let surrogate_generator: Option<SurrogateModel> =
        match generator_spec.parse::<ScorerSpec>()? {
            ScorerSpec::Surrogate { path } => Some(SurrogateModel::load(&path)?),
            ScorerSpec::Remote { .. } => None,
        };
    let dataset = match &surrogate_generator {
        Some(model) => {
            let trim_scorer: Box<dyn Scorer> = match config.scorer_specs.first() {
                Some(spec) => config.open_scorer(spec)?,
                None => Box::new(model.clone()),
            };
            build_benchmark(&corpus, model, trim_scorer.as_ref(), &params)?
        }
        None => {
            let client = GenerationClient::new(generator_spec, config.remote_options.clone())?;
            let trim_scorer = config
                .open_scorers()
                .context("a remote generator needs --scorer for token trimming")?
                .into_iter()
                .next()
                .unwrap();
            build_benchmark(&corpus, &client as &dyn Generator, trim_scorer.as_ref(), &params)?
        }
    };

    write_dataset(&dataset, out)?;
    eprintln!(
        "wrote {} ({} samples = {} pairs; temperature {}, top_p {}, trim {}, seed {})",
        out.display(),
        dataset.len(),
        dataset.len() / 2,
        temperature,
        top_p,
        config.trim_tokens,
        config.perturb.seed,
    );
    Ok(EXIT_OK)
}

pub fn cmd_train_surrogate(
    corpus_path: &Path,
    out: &Path,
    order: usize,
    smoothing: f64,
) -> Result<u8> {
    let corpus = Corpus::load(corpus_path)?;
    let model = train_surrogate(&corpus, order, smoothing)?;
    model.save(out)?;
    eprintln!(
        "trained {} on {} samples ({} bytes); wrote {}",
        Scorer::id(&model),
        corpus.samples.len(),
        corpus.samples.iter().map(|s| s.text.len()).sum::<usize>(),
        out.display()
    );
    Ok(EXIT_OK)
}
