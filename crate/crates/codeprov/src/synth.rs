//! Deterministic synthetic Python corpus generation.
//!
//! Emits prompt-extractable functions with deliberately varied identifiers,
//! literals and formatting: per-function spacing habits, optional blank
//! lines, coined rare names alongside a skewed common-name pool. The point
//! is that corpus statistics (vocabulary growth, rank-frequency shape,
//! whitespace habits) behave like hand-written code at desk scale, without
//! shipping or downloading a real dataset. Benchmarks and self-tests use
//! it; it is not a substitute for a real corpus.
//!
//! Indentation is tab-based, one byte per level. With four-space indents
//! the run of spaces becomes an absorbing context for byte n-gram models
//! at low sampling temperature (the corpus makes `p(space | "    ")`
//! dominant), and every sampled continuation floods with whitespace.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::dataset::{CodeSample, Corpus};

const VERBS: &[&str] = &[
    "load", "parse", "build", "update", "compute", "merge", "emit", "flush", "index", "scan",
    "track", "filter", "render", "apply", "resolve", "extract", "encode", "decode", "validate",
    "collect",
];

const NOUNS: &[&str] = &[
    "config", "entry", "record", "buffer", "cache", "token", "node", "user", "path", "chunk",
    "batch", "value", "table", "field", "header", "segment", "frame", "item", "state", "result",
];

const COMMON_VARS: &[&str] = &[
    "data", "result", "value", "items", "key", "name", "path", "count", "total", "index", "out",
    "entry", "node", "text", "line", "row", "obj", "val", "buf", "i", "n", "x",
];

const METHODS: &[&str] = &[
    "append", "get", "items", "keys", "strip", "split", "join", "update", "pop", "sort",
    "startswith", "lower", "format", "copy", "extend",
];

const CALLS: &[&str] = &[
    "len", "str", "int", "float", "list", "dict", "set", "sorted", "sum", "max", "min", "range",
    "enumerate", "zip", "isinstance", "repr",
];

const WORDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "omega", "input", "output", "total", "limit", "offset",
    "width", "height", "label", "title", "query", "spam", "eggs", "north", "south", "primary",
];

const DOC_WORDS: &[&str] = &[
    "return", "compute", "update", "the", "a", "given", "current", "next", "first", "last",
    "total", "cached", "pending", "raw", "merged", "sorted", "filtered", "value", "entries",
    "records", "buffer", "index", "mapping", "payload", "snapshot", "for", "of", "from", "with",
];

const EXCEPTIONS: &[&str] = &["ValueError", "TypeError", "KeyError", "RuntimeError"];

const SYLLABLES: &[&str] = &["da", "ro", "mi", "ta", "lu", "ke", "sa", "po", "ni", "ve", "zu", "ha"];

const BINOPS: &[&str] = &["+", "-", "*", "//", "%", "+", "-"];

const CMPOPS: &[&str] = &["==", "!=", "<", ">", "<=", ">="];

/// Per-function formatting habits; the human-style entropy source.
struct Style {
    /// 0: dense (`a+b`), 1: spaced (`a + b`), 2: coin per operator
    op_pad: u8,
    comma_space: bool,
    blank_line_prob: f64,
    quote: char,
    docstring: bool,
}

struct Gen<R: Rng> {
    rng: R,
    style: Style,
    vars: Vec<String>,
}

impl<R: Rng> Gen<R> {
    fn new(mut rng: R) -> Self {
        let style = Style {
            op_pad: rng.gen_range(0..3),
            comma_space: rng.gen_bool(0.8),
            blank_line_prob: pick_f64(&mut rng, &[0.0, 0.1, 0.25, 0.4]),
            quote: if rng.gen_bool(0.6) { '\'' } else { '"' },
            docstring: rng.gen_bool(0.7),
        };
        Gen { rng, style, vars: Vec::new() }
    }

    fn op(&mut self, op: &str) -> String {
        let pad = match self.style.op_pad {
            0 => false,
            1 => true,
            _ => self.rng.gen_bool(0.5),
        };
        if pad {
            format!(" {op} ")
        } else {
            op.to_string()
        }
    }

    fn comma(&self) -> &'static str {
        if self.style.comma_space {
            ", "
        } else {
            ","
        }
    }

    fn coined(&mut self) -> String {
        let n = self.rng.gen_range(2..4);
        let mut s: String = (0..n).map(|_| *pick(&mut self.rng, SYLLABLES)).collect();
        if self.rng.gen_bool(0.2) {
            s.push_str(&self.rng.gen_range(0..10).to_string());
        }
        s
    }

    fn fresh_var(&mut self) -> String {
        let name = if self.rng.gen_bool(0.55) {
            (*pick(&mut self.rng, COMMON_VARS)).to_string()
        } else if self.rng.gen_bool(0.5) {
            format!(
                "{}_{}",
                pick(&mut self.rng, VERBS),
                pick(&mut self.rng, NOUNS)
            )
        } else {
            self.coined()
        };
        if !self.vars.contains(&name) {
            self.vars.push(name.clone());
        }
        name
    }

    fn var(&mut self) -> String {
        if self.vars.is_empty() {
            return self.fresh_var();
        }
        // skew towards early (frequent) names
        let idx = self
            .rng
            .gen_range(0..self.vars.len())
            .min(self.rng.gen_range(0..self.vars.len()));
        self.vars[idx].clone()
    }

    fn int_literal(&mut self) -> String {
        let magnitude: u32 = self.rng.gen_range(0..5);
        self.rng.gen_range(0..10i64.pow(magnitude) + 10).to_string()
    }

    fn string_literal(&mut self) -> String {
        let q = self.style.quote;
        let words = self.rng.gen_range(1..3);
        let body = (0..words)
            .map(|_| *pick(&mut self.rng, WORDS))
            .collect::<Vec<_>>()
            .join(" ");
        format!("{q}{body}{q}")
    }

    fn fstring(&mut self) -> String {
        let q = self.style.quote;
        let word = pick(&mut self.rng, WORDS);
        let var = self.var();
        format!("f{q}{word}={{{var}}}{q}")
    }

    fn expr(&mut self, depth: usize) -> String {
        let roll = if depth == 0 {
            self.rng.gen_range(0..100)
        } else {
            self.rng.gen_range(0..55) // shallow once nested
        };
        match roll {
            0..=21 => self.var(),
            22..=33 => self.int_literal(),
            34..=37 => format!(
                "{}.{}",
                self.rng.gen_range(0..100),
                self.rng.gen_range(0..100)
            ),
            38..=47 => self.string_literal(),
            48..=51 => (*pick(&mut self.rng, &["True", "False", "None"])).to_string(),
            52..=54 => self.fstring(),
            55..=69 => {
                let op = (*pick(&mut self.rng, BINOPS)).to_string();
                format!(
                    "{}{}{}",
                    self.expr(depth + 1),
                    self.op(&op),
                    self.expr(depth + 1)
                )
            }
            70..=81 => {
                let callee = pick(&mut self.rng, CALLS);
                let args = self.rng.gen_range(1..3);
                let args = (0..args)
                    .map(|_| self.expr(depth + 1))
                    .collect::<Vec<_>>()
                    .join(self.comma());
                format!("{callee}({args})")
            }
            82..=89 => {
                let recv = self.var();
                let method = pick(&mut self.rng, METHODS);
                if self.rng.gen_bool(0.5) {
                    format!("{recv}.{method}()")
                } else {
                    let arg = self.expr(depth + 1);
                    format!("{recv}.{method}({arg})")
                }
            }
            90..=93 => {
                let recv = self.var();
                if self.rng.gen_bool(0.5) {
                    let key = self.string_literal();
                    format!("{recv}[{key}]")
                } else {
                    let idx = self.rng.gen_range(0..4);
                    format!("{recv}[{idx}]")
                }
            }
            94..=96 => {
                let inner = (0..self.rng.gen_range(1..4))
                    .map(|_| self.expr(depth + 1))
                    .collect::<Vec<_>>()
                    .join(self.comma());
                format!("[{inner}]")
            }
            _ => {
                let key = self.string_literal();
                let value = self.expr(depth + 1);
                format!("{{{key}: {value}}}")
            }
        }
    }

    fn condition(&mut self) -> String {
        match self.rng.gen_range(0..3) {
            0 => {
                let op = (*pick(&mut self.rng, CMPOPS)).to_string();
                format!("{}{}{}", self.var(), self.op(&op), self.expr(1))
            }
            1 => format!("{} is not None", self.var()),
            _ => {
                if self.rng.gen_bool(0.5) {
                    self.var()
                } else {
                    format!("not {}", self.var())
                }
            }
        }
    }

    fn comment_line(&mut self, indent: &str) -> String {
        let n = self.rng.gen_range(2..6);
        let words = (0..n)
            .map(|_| *pick(&mut self.rng, DOC_WORDS))
            .collect::<Vec<_>>()
            .join(" ");
        format!("{indent}# {words}\n")
    }

    fn statement(&mut self, out: &mut String, level: usize, depth: usize) {
        let indent = "\t".repeat(level);
        if self.rng.gen_bool(self.style.blank_line_prob) {
            out.push('\n');
        }
        if self.rng.gen_bool(0.08) {
            out.push_str(&self.comment_line(&indent));
        }
        let roll = if depth >= 2 {
            self.rng.gen_range(0..55) // no further nesting
        } else {
            self.rng.gen_range(0..100)
        };
        match roll {
            0..=29 => {
                let target = self.fresh_var();
                let value = self.expr(0);
                let eq = self.op("=");
                out.push_str(&format!("{indent}{target}{eq}{value}\n"));
            }
            30..=39 => {
                let target = self.var();
                let op = format!("{}=", pick(&mut self.rng, &["+", "-", "*"]));
                let value = self.expr(1);
                let padded = self.op(&op);
                out.push_str(&format!("{indent}{target}{padded}{value}\n"));
            }
            40..=49 => {
                let call = self.expr(1);
                let recv = self.var();
                let method = pick(&mut self.rng, &["append", "add", "update", "extend"]);
                out.push_str(&format!("{indent}{recv}.{method}({call})\n"));
            }
            50..=54 => {
                let exc = pick(&mut self.rng, EXCEPTIONS);
                let msg = if self.rng.gen_bool(0.4) {
                    self.fstring()
                } else {
                    self.string_literal()
                };
                out.push_str(&format!("{indent}raise {exc}({msg})\n"));
            }
            55..=74 => {
                let cond = self.condition();
                out.push_str(&format!("{indent}if {cond}:\n"));
                self.block(out, level + 1, depth + 1, 1..3);
                if self.rng.gen_bool(0.35) {
                    out.push_str(&format!("{indent}else:\n"));
                    self.block(out, level + 1, depth + 1, 1..3);
                }
            }
            75..=89 => {
                let it = self.fresh_var();
                let iterable = if self.rng.gen_bool(0.5) {
                    format!("range({})", self.int_literal())
                } else {
                    self.var()
                };
                out.push_str(&format!("{indent}for {it} in {iterable}:\n"));
                self.block(out, level + 1, depth + 1, 1..3);
            }
            90..=94 => {
                out.push_str(&format!("{indent}while {}:\n", self.condition()));
                self.block(out, level + 1, depth + 1, 1..2);
            }
            _ => {
                out.push_str(&format!("{indent}try:\n"));
                self.block(out, level + 1, depth + 1, 1..2);
                let exc = pick(&mut self.rng, EXCEPTIONS);
                out.push_str(&format!("{indent}except {exc}:\n"));
                self.block(out, level + 1, depth + 1, 1..2);
            }
        }
    }

    fn block(&mut self, out: &mut String, level: usize, depth: usize, count: std::ops::Range<usize>) {
        let n = self.rng.gen_range(count);
        for _ in 0..n {
            self.statement(out, level, depth);
        }
    }

    fn docstring(&mut self, out: &mut String) {
        let n = self.rng.gen_range(3..9);
        let mut words: Vec<String> = (0..n)
            .map(|_| (*pick(&mut self.rng, DOC_WORDS)).to_string())
            .collect();
        if let Some(first) = words.first_mut() {
            let mut chars = first.chars();
            if let Some(c) = chars.next() {
                *first = c.to_uppercase().chain(chars).collect();
            }
        }
        let text = words.join(" ");
        if self.rng.gen_bool(0.65) {
            out.push_str(&format!("\t\"\"\"{text}.\"\"\"\n"));
        } else {
            let extra = (0..self.rng.gen_range(2..5))
                .map(|_| *pick(&mut self.rng, DOC_WORDS))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&format!("\t\"\"\"{text}.\n\n\t{extra}.\n\t\"\"\"\n"));
        }
    }

    fn function(&mut self) -> String {
        let mut out = String::new();
        if self.rng.gen_bool(0.25) {
            let line = self.comment_line("");
            out.push_str(&line);
        }
        let name = format!(
            "{}_{}",
            pick(&mut self.rng, VERBS),
            pick(&mut self.rng, NOUNS)
        );
        let n_params = self.rng.gen_range(0..4);
        let mut params: Vec<String> = Vec::new();
        for i in 0..n_params {
            let p = self.fresh_var();
            if i == n_params - 1 && self.rng.gen_bool(0.3) {
                let eq = if self.rng.gen_bool(0.5) { "=" } else { " = " };
                params.push(format!("{p}{eq}{}", self.int_literal()));
            } else {
                params.push(p);
            }
        }
        out.push_str(&format!("def {name}({}):\n", params.join(self.comma())));
        if self.style.docstring {
            self.docstring(&mut out);
        }

        let statements = self.rng.gen_range(3..9);
        for _ in 0..statements {
            self.statement(&mut out, 1, 0);
        }
        match self.rng.gen_range(0..10) {
            0..=6 => {
                let value = self.expr(0);
                out.push_str(&format!("\treturn {value}\n"));
            }
            7 | 8 => {
                out.push_str(&format!("\treturn {}\n", self.var()));
            }
            _ => {}
        }
        out
    }
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [&'a str]) -> &'a &'a str {
    &items[rng.gen_range(0..items.len())]
}

fn pick_f64<R: Rng>(rng: &mut R, items: &[f64]) -> f64 {
    items[rng.gen_range(0..items.len())]
}

fn sample_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"codeprov.synth.v1");
    hasher.update(seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    ChaCha12Rng::from_seed(hasher.finalize().into())
}

/// One synthetic function, deterministic in `(seed, index)`.
pub fn function(seed: u64, index: u64) -> String {
    Gen::new(sample_rng(seed, index)).function()
}

/// A corpus of `functions` synthetic Python functions.
pub fn corpus(name: &str, functions: usize, seed: u64) -> Corpus {
    let samples = (0..functions)
        .map(|i| CodeSample::human(format!("{name}-{i:05}"), function(seed, i as u64)))
        .collect();
    Corpus::new(name, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::extract_prompt;
    use crate::lex::{lex, Language};

    #[test]
    fn deterministic() {
        assert_eq!(function(7, 3), function(7, 3));
        assert_ne!(function(7, 3), function(7, 4));
    }

    #[test]
    fn functions_lex_losslessly() {
        for i in 0..200 {
            let text = function(11, i);
            let lexed = lex(&text, Language::Python).unwrap();
            let joined: String = lexed.spans.iter().map(|s| s.text.as_str()).collect();
            assert_eq!(joined, text);
        }
    }

    #[test]
    fn most_functions_are_prompt_extractable() {
        let total = 300u64;
        let extractable = (0..total)
            .filter(|&i| extract_prompt(&function(23, i)).is_some())
            .count() as u64;
        assert!(extractable * 10 >= total * 8, "{extractable}/{total}");
    }

    #[test]
    fn corpus_is_sizeable_and_varied() {
        let corpus = corpus("synth", 100, 1);
        assert_eq!(corpus.samples.len(), 100);
        let total: usize = corpus.samples.iter().map(|s| s.text.len()).sum();
        assert!(total > 10_000, "total {total}");
        let distinct: std::collections::HashSet<&str> =
            corpus.samples.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(distinct.len(), 100);
    }
}
