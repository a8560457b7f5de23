//! Code samples, corpora, and the JSONL dataset format.
//!
//! A dataset is one [`CodeSample`] JSON object per line, UTF-8. Reading
//! reports malformed lines with their line numbers instead of failing the
//! whole file; writing what was read back produces byte-identical output
//! for files this module wrote.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lex::Language;
use crate::scoring::{ScoreError, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Human,
    Machine,
}

/// One code snippet with provenance label and generation metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeSample {
    pub id: String,
    pub text: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    pub language: Language,
}

impl CodeSample {
    pub fn human(id: impl Into<String>, text: impl Into<String>) -> Self {
        CodeSample {
            id: id.into(),
            text: text.into(),
            label: Label::Human,
            prompt: None,
            source_model: None,
            temperature: None,
            language: Language::Python,
        }
    }
}

/// A named collection of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub samples: Vec<CodeSample>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, samples: Vec<CodeSample>) -> Self {
        Corpus { name: name.into(), samples }
    }

    pub fn from_texts<I, S>(name: &str, texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let samples = texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| CodeSample::human(format!("{name}-{i:05}"), text))
            .collect();
        Corpus { name: name.to_string(), samples }
    }

    /// Load a corpus from a `.jsonl` dataset file or a directory of `.py`
    /// files (walked recursively, sorted by path for determinism).
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".to_string());
        if path.is_dir() {
            let mut files: Vec<_> = walkdir::WalkDir::new(path)
                .into_iter()
                .filter_map(|e| e.ok())
                .filter(|e| {
                    e.file_type().is_file()
                        && e.path().extension().is_some_and(|x| x == "py")
                })
                .map(|e| e.into_path())
                .collect();
            files.sort();
            let mut samples = Vec::with_capacity(files.len());
            for file in files {
                let text = fs::read_to_string(&file)
                    .map_err(|e| DatasetError::Io(file.display().to_string(), e))?;
                let id = file
                    .strip_prefix(path)
                    .unwrap_or(&file)
                    .to_string_lossy()
                    .into_owned();
                samples.push(CodeSample::human(id, text));
            }
            Ok(Corpus { name, samples })
        } else {
            let read = read_dataset(path)?;
            if let Some((line, err)) = read.malformed.first() {
                log::warn!("{}: {} malformed lines (first at line {line}: {err})",
                    path.display(), read.malformed.len());
            }
            Ok(Corpus { name, samples: read.samples })
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
}

/// Result of reading a dataset: good samples plus per-line parse failures.
#[derive(Debug)]
pub struct DatasetRead {
    pub samples: Vec<CodeSample>,
    /// (1-based line number, error description)
    pub malformed: Vec<(usize, String)>,
    pub total_lines: usize,
}

pub fn read_dataset(path: &Path) -> Result<DatasetRead, DatasetError> {
    let file = fs::File::open(path).map_err(|e| DatasetError::Io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut samples: Vec<CodeSample> = Vec::new();
    let mut malformed = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut total_lines = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        total_lines += 1;
        match serde_json::from_str::<CodeSample>(&line) {
            Ok(sample) => {
                if !seen.insert(sample.id.clone()) {
                    malformed.push((idx + 1, format!("duplicate id {:?}", sample.id)));
                } else if sample.text.trim().is_empty() {
                    malformed.push((idx + 1, "empty text".to_string()));
                } else {
                    samples.push(sample);
                }
            }
            Err(e) => malformed.push((idx + 1, e.to_string())),
        }
    }
    Ok(DatasetRead { samples, malformed, total_lines })
}

pub fn write_dataset(samples: &[CodeSample], path: &Path) -> Result<(), DatasetError> {
    let mut out = Vec::new();
    for sample in samples {
        serde_json::to_writer(&mut out, sample).expect("sample serialization cannot fail");
        out.push(b'\n');
    }
    let mut file =
        fs::File::create(path).map_err(|e| DatasetError::Io(path.display().to_string(), e))?;
    file.write_all(&out)
        .map_err(|e| DatasetError::Io(path.display().to_string(), e))?;
    Ok(())
}

/// Keep the prefix covering the first `max_tokens` scorer tokens. The cut
/// is widened to the next character boundary, so multi-byte characters are
/// never split; idempotent for a fixed scorer.
pub fn trim(text: &str, max_tokens: usize, scorer: &dyn Scorer) -> Result<String, ScoreError> {
    if max_tokens == 0 {
        return Err(ScoreError::InvalidParameter("max_tokens must be >= 1"));
    }
    if text.is_empty() {
        return Ok(String::new());
    }
    let scored = scorer.score(text)?;
    if scored.tokens.len() <= max_tokens {
        return Ok(text.to_string());
    }
    let mut end = scored.tokens[max_tokens - 1].byte_end;
    while end < text.len() && !text.is_char_boundary(end) {
        end += 1;
    }
    Ok(text[..end].to_string())
}

/// A sample split into generation prompt and reference body;
/// `prompt + body` reproduces the original text exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSplit {
    pub prompt: String,
    pub body: String,
}

/// Split a Python function into its prompt (leading comments, decorators,
/// the `def` signature, and a docstring when present) and the remaining
/// body. Returns None when no complete signature with a non-empty body is
/// found.
pub fn extract_prompt(text: &str) -> Option<PromptSplit> {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut offset = 0;
    let mut i = 0;

    // leading blanks, comments and decorators
    while i < lines.len() {
        let trimmed = lines[i].trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('@') {
            offset += lines[i].len();
            i += 1;
        } else {
            break;
        }
    }

    // signature: def ...(...) possibly spanning lines, ending with ':'
    let sig = lines.get(i)?.trim_start();
    if !(sig.starts_with("def ") || sig.starts_with("async def ")) {
        return None;
    }
    let mut depth: i32 = 0;
    let mut closed = false;
    while i < lines.len() {
        let line = lines[i];
        for b in line.bytes() {
            match b {
                b'(' | b'[' | b'{' => depth += 1,
                b')' | b']' | b'}' => depth -= 1,
                _ => {}
            }
        }
        offset += line.len();
        i += 1;
        if depth <= 0 && line.trim_end().ends_with(':') {
            closed = true;
            break;
        }
    }
    if !closed {
        return None;
    }

    // optional docstring directly after the signature
    let mut j = i;
    while j < lines.len() && lines[j].trim().is_empty() {
        j += 1;
    }
    if let Some(line) = lines.get(j) {
        let trimmed = line.trim_start();
        let quote = ["\"\"\"", "'''"]
            .into_iter()
            .find(|q| trimmed.starts_with(*q) || trimmed.starts_with(&format!("r{q}")));
        if let Some(quote) = quote {
            let opener_rest = &trimmed[trimmed.find(quote).unwrap() + 3..];
            let mut done = opener_rest.contains(quote);
            // consume blanks before the docstring plus its lines
            for line in &lines[i..=j] {
                offset += line.len();
            }
            let mut k = j + 1;
            while !done && k < lines.len() {
                offset += lines[k].len();
                done = lines[k].contains(quote);
                k += 1;
            }
        }
    }

    let prompt = &text[..offset];
    let body = &text[offset..];
    if body.trim().is_empty() {
        return None;
    }
    Some(PromptSplit { prompt: prompt.to_string(), body: body.to_string() })
}
