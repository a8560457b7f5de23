//! Deterministic byte-level n-gram model standing in for a neural scorer.
//!
//! Tokens are single bytes; the conditional for a byte is add-`s` smoothed
//! over its preceding `order - 1` bytes, truncated near the start of the
//! text (so position `i` conditions on `min(i, order - 1)` bytes, and
//! short contexts are trained from sample starts only). The model is
//! immutable after training, scores deterministically, samples
//! deterministically given a seed, and round-trips bit-exactly through a
//! versioned binary format.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::dataset::Corpus;
use crate::scoring::{ScoreError, ScoredCode, ScoredToken, Scorer};

pub const DEFAULT_ORDER: usize = 5;
pub const DEFAULT_SMOOTHING: f64 = 0.5;

const MAGIC: &[u8; 8] = b"CPSURR01";
const VOCAB: usize = 256;

/// Per-context successor counts, sparse and sorted by byte value.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    entries: Vec<(u8, u64)>,
}

impl ContextCounts {
    fn bump(&mut self, byte: u8) {
        self.total += 1;
        match self.entries.binary_search_by_key(&byte, |&(b, _)| b) {
            Ok(i) => self.entries[i].1 += 1,
            Err(i) => self.entries.insert(i, (byte, 1)),
        }
    }

    fn count(&self, byte: u8) -> u64 {
        self.entries
            .binary_search_by_key(&byte, |&(b, _)| b)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }
}

static EMPTY_CONTEXT: ContextCounts = ContextCounts { total: 0, entries: Vec::new() };

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    order: usize,
    smoothing: f64,
    contexts: HashMap<Box<[u8]>, ContextCounts>,
    fingerprint: [u8; 32],
    id: String,
}

impl SurrogateModel {
    /// Train over raw texts. At least one text is required; use
    /// [`SurrogateModel::untrained`] for the pure-smoothing model.
    pub fn train<'a, I>(texts: I, order: usize, smoothing: f64) -> Result<Self, ScoreError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        validate_params(order, smoothing)?;
        let mut contexts: HashMap<Box<[u8]>, ContextCounts> = HashMap::new();
        let mut hasher = Sha256::new();
        hasher.update(b"codeprov.surrogate.v1");
        hasher.update((order as u64).to_le_bytes());
        hasher.update(smoothing.to_le_bytes());
        let mut seen_any = false;
        for text in texts {
            seen_any = true;
            let bytes = text.as_bytes();
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(bytes);
            for i in 0..bytes.len() {
                let ctx = &bytes[i - i.min(order - 1)..i];
                contexts
                    .entry(ctx.into())
                    .or_default()
                    .bump(bytes[i]);
            }
        }
        if !seen_any {
            return Err(ScoreError::EmptyCorpus);
        }
        Ok(Self::assemble(order, smoothing, contexts, hasher.finalize().into()))
    }

    /// A model with no counts: every conditional is uniform over bytes.
    pub fn untrained(order: usize, smoothing: f64) -> Result<Self, ScoreError> {
        validate_params(order, smoothing)?;
        let mut hasher = Sha256::new();
        hasher.update(b"codeprov.surrogate.v1.untrained");
        hasher.update((order as u64).to_le_bytes());
        hasher.update(smoothing.to_le_bytes());
        Ok(Self::assemble(order, smoothing, HashMap::new(), hasher.finalize().into()))
    }

    fn assemble(
        order: usize,
        smoothing: f64,
        contexts: HashMap<Box<[u8]>, ContextCounts>,
        fingerprint: [u8; 32],
    ) -> Self {
        let id = format!(
            "ngram{}-{}",
            order,
            fingerprint[..6]
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect::<String>()
        );
        SurrogateModel { order, smoothing, contexts, fingerprint, id }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    fn context_for(&self, bytes: &[u8], pos: usize) -> &ContextCounts {
        let ctx = &bytes[pos - pos.min(self.order - 1)..pos];
        self.contexts.get(ctx).unwrap_or(&EMPTY_CONTEXT)
    }

    /// Smoothed probability of `byte` after `ctx` (`ctx` is truncated to
    /// the model's context length if longer).
    fn prob_in(&self, counts: &ContextCounts, byte: u8) -> f64 {
        (counts.count(byte) as f64 + self.smoothing)
            / (counts.total as f64 + VOCAB as f64 * self.smoothing)
    }

    /// The full 256-way conditional after `ctx`, by brute enumeration.
    /// Sums to 1 up to float error; used by tests and sampling.
    pub fn conditional(&self, ctx: &[u8]) -> [f64; VOCAB] {
        let start = ctx.len() - ctx.len().min(self.order - 1);
        let counts = self.contexts.get(&ctx[start..]).unwrap_or(&EMPTY_CONTEXT);
        let mut dist = [0.0; VOCAB];
        for (b, slot) in dist.iter_mut().enumerate() {
            *slot = self.prob_in(counts, b as u8);
        }
        dist
    }

    /// Exact rank of `byte` in the conditional: 1 + number of strictly
    /// more probable candidates + more-probable-tied candidates with a
    /// smaller byte value. O(distinct successors).
    fn rank_in(&self, counts: &ContextCounts, byte: u8) -> u64 {
        let c = counts.count(byte);
        let mut rank = 1u64;
        for &(b, count) in &counts.entries {
            if count > c || (count == c && b < byte) {
                rank += 1;
            }
        }
        if c == 0 {
            // unseen bytes tie at count 0; smaller unseen byte values come first
            let unseen_before = (0..byte).filter(|&b| counts.count(b) == 0).count() as u64;
            rank += unseen_before;
        }
        rank
    }

    /// Predictive entropy in nats of the conditional, via the closed form
    /// over seen successors plus the shared unseen mass.
    fn entropy_in(&self, counts: &ContextCounts) -> f64 {
        let denom = counts.total as f64 + VOCAB as f64 * self.smoothing;
        let p_unseen = self.smoothing / denom;
        let mut h = 0.0;
        for &(_, count) in &counts.entries {
            let p = (count as f64 + self.smoothing) / denom;
            h -= p * p.ln();
        }
        let unseen = VOCAB - counts.entries.len();
        h -= unseen as f64 * p_unseen * p_unseen.ln();
        h
    }

    /// Autoregressive continuation of `prompt`: `max_len` bytes sampled
    /// with temperature scaling and nucleus truncation. `temperature == 0`
    /// is greedy decoding. Invalid UTF-8 in the raw byte output is
    /// replaced during the final string conversion.
    pub fn sample(
        &self,
        prompt: &str,
        max_len: usize,
        temperature: f64,
        top_p: f64,
        seed: u64,
    ) -> Result<String, ScoreError> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(ScoreError::InvalidParameter("temperature must be >= 0 and finite"));
        }
        if !(top_p > 0.0 && top_p <= 1.0) {
            return Err(ScoreError::InvalidParameter("top_p must be in (0, 1]"));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut bytes: Vec<u8> = prompt.as_bytes().to_vec();
        let prompt_len = bytes.len();
        for _ in 0..max_len {
            let counts = self.context_for(&bytes, bytes.len());
            let next = self.sample_one(counts, temperature, top_p, &mut rng);
            bytes.push(next);
        }
        Ok(String::from_utf8_lossy(&bytes[prompt_len..]).into_owned())
    }

    fn sample_one<R: Rng>(
        &self,
        counts: &ContextCounts,
        temperature: f64,
        top_p: f64,
        rng: &mut R,
    ) -> u8 {
        // candidates in probability order: seen successors by count
        // descending (byte ascending on ties), then unseen bytes ascending
        let mut seen: Vec<(u8, u64)> = counts.entries.clone();
        seen.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut candidates: Vec<(u8, f64)> = Vec::with_capacity(VOCAB);
        for &(b, _) in &seen {
            candidates.push((b, self.prob_in(counts, b)));
        }
        let p_unseen = self.smoothing / (counts.total as f64 + VOCAB as f64 * self.smoothing);
        for b in 0..VOCAB as u16 {
            if counts.count(b as u8) == 0 {
                candidates.push((b as u8, p_unseen));
            }
        }

        if temperature == 0.0 {
            return candidates[0].0;
        }

        // temperature scaling in log space, anchored at the top candidate
        let top_ln = candidates[0].1.ln();
        let mut weights: Vec<f64> = candidates
            .iter()
            .map(|&(_, p)| ((p.ln() - top_ln) / temperature).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }

        // nucleus: smallest prefix with cumulative mass >= top_p
        let mut kept = weights.len();
        let mut cum = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            cum += w;
            if cum >= top_p {
                kept = i + 1;
                break;
            }
        }
        let mass: f64 = weights[..kept].iter().sum();
        let target = rng.gen::<f64>() * mass;
        let mut acc = 0.0;
        for i in 0..kept {
            acc += weights[i];
            if target < acc {
                return candidates[i].0;
            }
        }
        candidates[kept - 1].0
    }

    /// Serialize to the versioned binary format. Contexts are emitted in
    /// lexicographic (length, bytes) order so equal models produce equal
    /// bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.order as u32).to_le_bytes());
        out.extend_from_slice(&self.smoothing.to_le_bytes());
        out.extend_from_slice(&self.fingerprint);
        let mut keys: Vec<&Box<[u8]>> = self.contexts.keys().collect();
        keys.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out.extend_from_slice(&(keys.len() as u64).to_le_bytes());
        for key in keys {
            let counts = &self.contexts[key];
            out.push(key.len() as u8);
            out.extend_from_slice(key);
            out.extend_from_slice(&(counts.entries.len() as u16).to_le_bytes());
            for &(byte, count) in &counts.entries {
                out.push(byte);
                out.extend_from_slice(&count.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, ScoreError> {
        let mut reader = ByteReader { data, pos: 0 };
        let magic = reader.take(8)?;
        if magic != MAGIC {
            return Err(ScoreError::ScorerProtocolError(
                "bad surrogate model magic".into(),
            ));
        }
        let order = u32::from_le_bytes(reader.take(4)?.try_into().unwrap()) as usize;
        let smoothing = f64::from_le_bytes(reader.take(8)?.try_into().unwrap());
        let fingerprint: [u8; 32] = reader.take(32)?.try_into().unwrap();
        validate_params(order, smoothing)?;
        let n_contexts = u64::from_le_bytes(reader.take(8)?.try_into().unwrap());
        let mut contexts = HashMap::with_capacity(n_contexts as usize);
        for _ in 0..n_contexts {
            let ctx_len = reader.take(1)?[0] as usize;
            let ctx: Box<[u8]> = reader.take(ctx_len)?.into();
            let n_entries = u16::from_le_bytes(reader.take(2)?.try_into().unwrap());
            let mut counts = ContextCounts::default();
            for _ in 0..n_entries {
                let byte = reader.take(1)?[0];
                let count = u64::from_le_bytes(reader.take(8)?.try_into().unwrap());
                counts.total += count;
                counts.entries.push((byte, count));
            }
            contexts.insert(ctx, counts);
        }
        Ok(Self::assemble(order, smoothing, contexts, fingerprint))
    }

    pub fn save(&self, path: &Path) -> Result<(), ScoreError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        let data = fs::read(path)?;
        Self::from_bytes(&data)
    }
}

fn validate_params(order: usize, smoothing: f64) -> Result<(), ScoreError> {
    if order < 1 {
        return Err(ScoreError::InvalidParameter("order must be >= 1"));
    }
    if order > 255 {
        return Err(ScoreError::InvalidParameter("order must fit in a byte"));
    }
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(ScoreError::InvalidParameter("smoothing must be > 0 and finite"));
    }
    Ok(())
}

struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ScoreError> {
        if self.pos + n > self.data.len() {
            return Err(ScoreError::ScorerProtocolError(
                "truncated surrogate model file".into(),
            ));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
}

impl Scorer for SurrogateModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, text: &str) -> Result<ScoredCode, ScoreError> {
        if text.is_empty() {
            return Err(ScoreError::EmptyText);
        }
        let bytes = text.as_bytes();
        let mut tokens = Vec::with_capacity(bytes.len());
        for (i, &byte) in bytes.iter().enumerate() {
            let counts = self.context_for(bytes, i);
            tokens.push(ScoredToken {
                text: byte_token_text(byte),
                byte_start: i,
                byte_end: i + 1,
                log_likelihood: self.prob_in(counts, byte).ln(),
                rank: self.rank_in(counts, byte),
                entropy: Some(self.entropy_in(counts)),
                rank_is_lower_bound: false,
            });
        }
        Ok(ScoredCode {
            text: text.to_string(),
            tokens,
            scorer_id: self.id.clone(),
        })
    }
}

/// Train the default-parameter surrogate over a corpus.
pub fn train_surrogate(
    corpus: &Corpus,
    order: usize,
    smoothing: f64,
) -> Result<SurrogateModel, ScoreError> {
    if corpus.samples.is_empty() {
        return Err(ScoreError::EmptyCorpus);
    }
    SurrogateModel::train(
        corpus.samples.iter().map(|s| s.text.as_str()),
        order,
        smoothing,
    )
}

fn byte_token_text(b: u8) -> String {
    if b.is_ascii_graphic() || b == b' ' {
        (b as char).to_string()
    } else {
        format!("\\x{b:02x}")
    }
}
