//! Error-tolerant Python lexer with syntax-element classification.
//!
//! Splits source into a lossless sequence of spans: concatenating span texts
//! in order reproduces the input byte-for-byte, whitespace included. Each
//! span carries one of seven syntax categories. Strings decompose at quote
//! granularity: quote characters (with any prefix) are syntactic symbols
//! and the enclosed text is a literal, so `"abc"` yields three spans.
//! f-string interpolations are lexed recursively.
//!
//! Invalid code still lexes; characters that fit no rule become one-byte
//! best-effort spans. The lexer never fails on syntactically broken input.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The seven syntax-element categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Keyword,
    Identifier,
    Literal,
    Operator,
    SyntacticSymbol,
    Comment,
    Whitespace,
}

impl Category {
    /// All categories in a fixed reporting order.
    pub const ALL: [Category; 7] = [
        Category::Keyword,
        Category::Identifier,
        Category::Literal,
        Category::Operator,
        Category::SyntacticSymbol,
        Category::Comment,
        Category::Whitespace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Keyword => "keyword",
            Category::Identifier => "identifier",
            Category::Literal => "literal",
            Category::Operator => "operator",
            Category::SyntacticSymbol => "syntactic_symbol",
            Category::Comment => "comment",
            Category::Whitespace => "whitespace",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Supported source languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    Python,
}

impl std::str::FromStr for Language {
    type Err = LexError;

    fn from_str(s: &str) -> Result<Self, LexError> {
        match s.to_ascii_lowercase().as_str() {
            "python" | "py" => Ok(Language::Python),
            other => Err(LexError::UnsupportedLanguage(other.to_string())),
        }
    }
}

/// One lexed token span. Byte offsets are half-open `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub category: Category,
    /// 1-based line number of the span's first byte.
    pub line: u32,
}

/// A fully lexed source string. Spans tile `source` with no gaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexedCode {
    pub source: String,
    pub spans: Vec<TokenSpan>,
    pub language: Language,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexError {
    #[error("unsupported language: {0}")]
    UnsupportedLanguage(String),
    #[error("input is not valid UTF-8")]
    InvalidEncoding,
    #[error("empty code")]
    EmptyCode,
}

/// Python keywords, minus the constants `True`/`False`/`None` which are
/// literals. Soft keywords (`match`, `case`, `_`) stay identifiers: they are
/// indistinguishable from names at the lexical level.
const KEYWORDS: &[&str] = &[
    "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del", "elif",
    "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda",
    "nonlocal", "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

const CONSTANTS: &[&str] = &["True", "False", "None"];

/// Multi-byte operators, longest first so the matcher is greedy.
const OPERATORS_3: &[&str] = &["**=", "//=", ">>=", "<<="];
const OPERATORS_2: &[&str] = &[
    "**", "//", ">>", "<<", "<=", ">=", "==", "!=", "+=", "-=", "*=", "/=", "%=", "@=", "&=",
    "|=", "^=", ":=", "->",
];
const OPERATORS_1: &[u8] = b"+-*/%@&|^~<>=";

/// The symbol set of the category table: `: ) ] [ ( , " ' { } .`
/// (quotes reach this table only via string lexing).
const SYMBOLS_1: &[u8] = b":)][(,.{}";

fn is_ws_byte(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0c)
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_ascii_alphabetic() || (!c.is_ascii() && c.is_alphabetic())
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_ascii_alphanumeric() || (!c.is_ascii() && c.is_alphanumeric())
}

/// Lex `source` into categorised spans.
///
/// Never fails on malformed code; the only errors are environmental
/// (unsupported language). Empty input yields an empty span list.
pub fn lex(source: &str, language: Language) -> Result<LexedCode, LexError> {
    match language {
        Language::Python => Ok(Lexer::new(source).run()),
    }
}

/// Lex raw bytes, rejecting invalid UTF-8 with [`LexError::InvalidEncoding`].
pub fn lex_bytes(source: &[u8], language: Language) -> Result<LexedCode, LexError> {
    let text = std::str::from_utf8(source).map_err(|_| LexError::InvalidEncoding)?;
    lex(text, language)
}

/// Span-count fraction of each category. Absent categories map to 0.0.
pub fn category_proportions(code: &LexedCode) -> Result<BTreeMap<Category, f64>, LexError> {
    if code.spans.is_empty() {
        return Err(LexError::EmptyCode);
    }
    let counts = category_counts(code);
    let total = code.spans.len() as f64;
    Ok(Category::ALL
        .iter()
        .map(|&c| (c, counts[&c] as f64 / total))
        .collect())
}

/// Raw span count per category (all seven keys always present).
pub fn category_counts(code: &LexedCode) -> BTreeMap<Category, u64> {
    let mut counts: BTreeMap<Category, u64> = Category::ALL.iter().map(|&c| (c, 0)).collect();
    for span in &code.spans {
        *counts.get_mut(&span.category).unwrap() += 1;
    }
    counts
}

/// Debug dump: one token per line as `start<TAB>end<TAB>category<TAB>text`
/// with backslash-escaped text.
pub fn write_tsv<W: Write>(code: &LexedCode, mut out: W) -> std::io::Result<()> {
    for span in &code.spans {
        let escaped: String = span
            .text
            .chars()
            .flat_map(|c| match c {
                '\t' => "\\t".chars().collect::<Vec<_>>(),
                '\n' => "\\n".chars().collect(),
                '\r' => "\\r".chars().collect(),
                '\\' => "\\\\".chars().collect(),
                c => vec![c],
            })
            .collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            span.start, span.end, span.category, escaped
        )?;
    }
    Ok(())
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    spans: Vec<TokenSpan>,
    fstring_depth: u32,
}

enum ExprEnd {
    /// Hit `}` closing the interpolation.
    Closed,
    /// Newline inside a single-quoted f-string, or end of input; the
    /// enclosing string is abandoned as unterminated.
    Abandoned,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            line: 1,
            spans: Vec::new(),
            fstring_depth: 0,
        }
    }

    fn run(mut self) -> LexedCode {
        while self.lex_one_token() {}
        debug_assert_eq!(
            self.spans.iter().map(|s| s.text.as_str()).collect::<String>(),
            self.src
        );
        LexedCode {
            source: self.src.to_string(),
            spans: self.spans,
            language: Language::Python,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<u8> {
        self.bytes.get(self.pos + off).copied()
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn push(&mut self, start: usize, category: Category) {
        let end = self.pos;
        debug_assert!(start < end, "empty span at {start}");
        let text = &self.src[start..end];
        self.spans.push(TokenSpan {
            text: text.to_string(),
            start,
            end,
            category,
            line: self.line,
        });
        self.line += text.bytes().filter(|&b| b == b'\n').count() as u32;
    }

    /// Lex exactly one token at the cursor. Returns false at end of input.
    fn lex_one_token(&mut self) -> bool {
        let Some(b) = self.peek() else { return false };
        let start = self.pos;

        if is_ws_byte(b) {
            while self.peek().is_some_and(is_ws_byte) {
                self.pos += 1;
            }
            self.push(start, Category::Whitespace);
            return true;
        }
        if b == b'#' {
            while self.peek().is_some_and(|b| b != b'\n') {
                self.pos += 1;
            }
            self.push(start, Category::Comment);
            return true;
        }
        if b == b'"' || b == b'\'' {
            self.lex_string(start, start);
            return true;
        }
        if b.is_ascii_digit() || (b == b'.' && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()))
        {
            self.lex_number(start);
            return true;
        }
        if self.peek_char().is_some_and(is_ident_start) {
            self.lex_word(start);
            return true;
        }

        // ellipsis before single-dot symbol
        if b == b'.' && self.peek_at(1) == Some(b'.') && self.peek_at(2) == Some(b'.') {
            self.pos += 3;
            self.push(start, Category::SyntacticSymbol);
            return true;
        }
        for op in OPERATORS_3 {
            if self.src[self.pos..].starts_with(op) {
                self.pos += 3;
                self.push(start, Category::Operator);
                return true;
            }
        }
        for op in OPERATORS_2 {
            if self.src[self.pos..].starts_with(op) {
                self.pos += 2;
                self.push(start, Category::Operator);
                return true;
            }
        }
        if OPERATORS_1.contains(&b) {
            self.pos += 1;
            self.push(start, Category::Operator);
            return true;
        }
        if SYMBOLS_1.contains(&b) {
            self.pos += 1;
            self.push(start, Category::SyntacticSymbol);
            return true;
        }

        // best effort: anything else (`;`, `\`, `!`, stray unicode) is a
        // one-character punctuation-like span
        self.pos += self.peek_char().map_or(1, char::len_utf8);
        self.push(start, Category::SyntacticSymbol);
        true
    }

    fn lex_word(&mut self, start: usize) {
        while self.peek_char().is_some_and(is_ident_continue) {
            self.pos += self.peek_char().unwrap().len_utf8();
        }
        let word = &self.src[start..self.pos];

        // a short prefix of string-prefix letters directly before a quote
        // opens a string (r'...', b"...", f'...', rb'...', ...)
        if word.len() <= 2
            && word.bytes().all(|b| matches!(b, b'r' | b'b' | b'u' | b'f' | b'R' | b'B' | b'U' | b'F'))
            && matches!(self.peek(), Some(b'"') | Some(b'\''))
        {
            self.lex_string(start, self.pos);
            return;
        }

        let category = if CONSTANTS.contains(&word) {
            Category::Literal
        } else if KEYWORDS.contains(&word) {
            Category::Keyword
        } else {
            Category::Identifier
        };
        self.push(start, category);
    }

    fn lex_number(&mut self, start: usize) {
        let radix_digits: fn(u8) -> bool = if self.peek() == Some(b'0')
            && matches!(self.peek_at(1), Some(b'x') | Some(b'X'))
        {
            self.pos += 2;
            |b| b.is_ascii_hexdigit() || b == b'_'
        } else if self.peek() == Some(b'0') && matches!(self.peek_at(1), Some(b'b') | Some(b'B')) {
            self.pos += 2;
            |b| matches!(b, b'0' | b'1' | b'_')
        } else if self.peek() == Some(b'0') && matches!(self.peek_at(1), Some(b'o') | Some(b'O')) {
            self.pos += 2;
            |b| matches!(b, b'0'..=b'7' | b'_')
        } else {
            |b| b.is_ascii_digit() || b == b'_'
        };

        let decimal = self.pos == start; // no radix prefix consumed
        while self.peek().is_some_and(radix_digits) {
            self.pos += 1;
        }
        if decimal {
            if self.peek() == Some(b'.') {
                self.pos += 1;
                while self.peek().is_some_and(|b| b.is_ascii_digit() || b == b'_') {
                    self.pos += 1;
                }
            }
            if matches!(self.peek(), Some(b'e') | Some(b'E')) {
                let after_sign = match self.peek_at(1) {
                    Some(b'+') | Some(b'-') => 2,
                    _ => 1,
                };
                if self.peek_at(after_sign).is_some_and(|b| b.is_ascii_digit()) {
                    self.pos += after_sign;
                    while self.peek().is_some_and(|b| b.is_ascii_digit() || b == b'_') {
                        self.pos += 1;
                    }
                }
            }
            if matches!(self.peek(), Some(b'j') | Some(b'J')) {
                self.pos += 1;
            }
        }
        self.push(start, Category::Literal);
    }

    /// Lex a string from its opening quote. `prefix_start` is where any
    /// prefix letters began; `quote_start` points at the first quote byte.
    fn lex_string(&mut self, prefix_start: usize, quote_start: usize) {
        let prefix = &self.src[prefix_start..quote_start];
        let is_f = prefix.bytes().any(|b| b == b'f' || b == b'F');
        let quote = self.bytes[quote_start];
        let triple = self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote);
        let qlen = if triple { 3 } else { 1 };
        self.pos = quote_start + qlen;
        self.push(prefix_start, Category::SyntacticSymbol);

        if is_f && self.fstring_depth < 8 {
            self.fstring_depth += 1;
            self.lex_fstring_body(quote, triple, qlen);
            self.fstring_depth -= 1;
        } else {
            self.lex_plain_string_body(quote, triple, qlen);
        }
    }

    fn at_closing_quote(&self, quote: u8, triple: bool) -> bool {
        if triple {
            self.peek() == Some(quote)
                && self.peek_at(1) == Some(quote)
                && self.peek_at(2) == Some(quote)
        } else {
            self.peek() == Some(quote)
        }
    }

    /// Flush `[content_start, pos)` as a literal span if non-empty.
    fn flush_content(&mut self, content_start: usize) {
        if self.pos > content_start {
            self.push(content_start, Category::Literal);
        }
    }

    fn lex_plain_string_body(&mut self, quote: u8, triple: bool, qlen: usize) {
        let content_start = self.pos;
        loop {
            match self.peek() {
                None => {
                    self.flush_content(content_start);
                    return; // unterminated
                }
                Some(b'\n') if !triple => {
                    self.flush_content(content_start);
                    return; // unterminated at end of line
                }
                Some(b'\\') => {
                    self.pos += 1;
                    if let Some(c) = self.peek_char() {
                        self.pos += c.len_utf8();
                    }
                }
                _ if self.at_closing_quote(quote, triple) => {
                    self.flush_content(content_start);
                    let close = self.pos;
                    self.pos += qlen;
                    self.push(close, Category::SyntacticSymbol);
                    return;
                }
                Some(_) => {
                    self.pos += self.peek_char().unwrap().len_utf8();
                }
            }
        }
    }

    fn lex_fstring_body(&mut self, quote: u8, triple: bool, qlen: usize) {
        let mut content_start = self.pos;
        loop {
            match self.peek() {
                None => {
                    self.flush_content(content_start);
                    return;
                }
                Some(b'\n') if !triple => {
                    self.flush_content(content_start);
                    return;
                }
                Some(b'\\') => {
                    self.pos += 1;
                    if let Some(c) = self.peek_char() {
                        self.pos += c.len_utf8();
                    }
                }
                // {{ and }} are escaped braces, plain content
                Some(b'{') if self.peek_at(1) == Some(b'{') => self.pos += 2,
                Some(b'}') if self.peek_at(1) == Some(b'}') => self.pos += 2,
                Some(b'{') => {
                    self.flush_content(content_start);
                    let brace = self.pos;
                    self.pos += 1;
                    self.push(brace, Category::SyntacticSymbol);
                    match self.lex_fexpr(quote, triple) {
                        ExprEnd::Closed => content_start = self.pos,
                        ExprEnd::Abandoned => return,
                    }
                }
                _ if self.at_closing_quote(quote, triple) => {
                    self.flush_content(content_start);
                    let close = self.pos;
                    self.pos += qlen;
                    self.push(close, Category::SyntacticSymbol);
                    return;
                }
                Some(_) => {
                    self.pos += self.peek_char().unwrap().len_utf8();
                }
            }
        }
    }

    /// Lex an interpolation after its `{`. Consumes through the closing `}`.
    fn lex_fexpr(&mut self, quote: u8, triple: bool) -> ExprEnd {
        let mut depth: i32 = 0;
        loop {
            match self.peek() {
                None => return ExprEnd::Abandoned,
                Some(b'\n') if !triple => return ExprEnd::Abandoned,
                Some(b'}') if depth == 0 => {
                    let brace = self.pos;
                    self.pos += 1;
                    self.push(brace, Category::SyntacticSymbol);
                    return ExprEnd::Closed;
                }
                Some(b':') if depth == 0 => {
                    let colon = self.pos;
                    self.pos += 1;
                    self.push(colon, Category::SyntacticSymbol);
                    return self.lex_format_spec(quote, triple);
                }
                Some(b) => {
                    if matches!(b, b'(' | b'[' | b'{') {
                        depth += 1;
                    } else if matches!(b, b')' | b']' | b'}') {
                        depth -= 1;
                    }
                    if !self.lex_one_token() {
                        return ExprEnd::Abandoned;
                    }
                }
            }
        }
    }

    /// Format spec after `:` inside an interpolation: literal text up to the
    /// closing `}`, with nested `{...}` interpolations lexed recursively.
    fn lex_format_spec(&mut self, quote: u8, triple: bool) -> ExprEnd {
        let mut content_start = self.pos;
        loop {
            match self.peek() {
                None => {
                    self.flush_content(content_start);
                    return ExprEnd::Abandoned;
                }
                Some(b'\n') if !triple => {
                    self.flush_content(content_start);
                    return ExprEnd::Abandoned;
                }
                Some(b'}') => {
                    self.flush_content(content_start);
                    let brace = self.pos;
                    self.pos += 1;
                    self.push(brace, Category::SyntacticSymbol);
                    return ExprEnd::Closed;
                }
                Some(b'{') => {
                    self.flush_content(content_start);
                    let brace = self.pos;
                    self.pos += 1;
                    self.push(brace, Category::SyntacticSymbol);
                    match self.lex_fexpr(quote, triple) {
                        ExprEnd::Closed => content_start = self.pos,
                        ExprEnd::Abandoned => return ExprEnd::Abandoned,
                    }
                }
                Some(_) => {
                    self.pos += self.peek_char().unwrap().len_utf8();
                }
            }
        }
    }
}
