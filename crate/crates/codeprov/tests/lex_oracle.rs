//! Cross-checks the lexer against a frozen reference tokenization.
//!
//! `fixtures/lex_oracle.json` was generated by running CPython's stdlib
//! `tokenize` module over each source and mapping its token kinds through
//! the same seven-category table (strings expanded to
//! symbol/literal/symbol). The reference tokenizer does not emit
//! whitespace or line-continuation backslashes, so the comparison covers
//! the non-whitespace, non-continuation token stream; whitespace coverage
//! is checked separately via the lossless-tiling property.

use codeprov::lex::{lex, Category, Language};
use serde::Deserialize;

#[derive(Deserialize)]
struct Fixture {
    cases: Vec<Case>,
}

#[derive(Deserialize)]
struct Case {
    source: String,
    expected: Vec<Expected>,
}

#[derive(Deserialize)]
struct Expected {
    category: Category,
    text: String,
}

fn load() -> Fixture {
    serde_json::from_str(include_str!("fixtures/lex_oracle.json")).unwrap()
}

#[test]
fn matches_reference_tokenizer() {
    let fixture = load();
    assert!(fixture.cases.len() >= 30);
    for case in &fixture.cases {
        let lexed = lex(&case.source, Language::Python).unwrap();
        let got: Vec<(Category, String)> = lexed
            .spans
            .iter()
            .filter(|s| s.category != Category::Whitespace && s.text != "\\")
            .map(|s| (s.category, s.text.clone()))
            .collect();
        let want: Vec<(Category, String)> = case
            .expected
            .iter()
            .map(|e| (e.category, e.text.clone()))
            .collect();
        assert_eq!(got, want, "mismatch for source {:?}", case.source);
    }
}

#[test]
fn lossless_over_oracle_corpus() {
    for case in &load().cases {
        let lexed = lex(&case.source, Language::Python).unwrap();
        let joined: String = lexed.spans.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(joined, case.source);
    }
}
