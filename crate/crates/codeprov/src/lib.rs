//! Zero-shot machine-generated code detection and code stylometry.
//!
//! The crate is organised around a small pipeline:
//!
//! - [`lex`] splits source code into lossless, categorised token spans.
//! - [`stylometry`] computes corpus statistics over lexed code (frequency
//!   tables, category distributions, Zipf/Heaps fits, naturalness tables).
//! - [`perturb`] generates stylized whitespace perturbations of a snippet.
//! - [`scoring`] defines the token-level scoring abstraction; [`surrogate`]
//!   is a deterministic byte n-gram scorer, [`remote`] a client for an
//!   inference endpoint speaking the `/v1/score` protocol.
//! - [`detect`] implements the zero-shot detection scores on top of a scorer
//!   and a perturber.
//! - [`dataset`] and [`eval`] build paired human/machine benchmarks, run
//!   detector suites and report AUROC with significance tests.
//! - [`synth`] generates deterministic synthetic Python corpora so the whole
//!   pipeline can be exercised without any external model or dataset.

pub mod dataset;
pub mod detect;
pub mod eval;
pub mod lex;
pub mod metrics;
pub mod perturb;
pub mod remote;
pub mod scoring;
pub mod stylometry;
pub mod surrogate;
pub mod synth;
