//! Neighbourhood-based testing of code-generating language models.
//!
//! A *question template* is a programming problem with parameters; every
//! valuation of its parameter set yields a *question instance*, and all
//! instances of one template form a *neighbourhood*. Each response a model
//! returns is judged by an instantiated *oracle* (well-formedness checks,
//! fixed tests, and differential fuzzing against a model solution), and the
//! resulting verdict grid is scored per neighbourhood.
//!
//! Module map:
//!
//! - [`template`]: parameter specs, parameter sets, question instantiation,
//!   bundle parsing and validation.
//! - [`oracle`]: oracle instantiation and the staged verdict pipeline.
//! - [`exec`]: execution backends (stub replay, subprocess bridge).
//! - [`gateway`]: prompts, model adapters, code extraction.
//! - [`scoring`]: correctness score, pass@k, neighbourhood categories.
//! - [`campaign`]: planning, running, persisting and resuming campaigns.
//! - [`report`]: histograms, category counts, failure tables, report files.
//! - [`corpus`]: the shipped template bundles.

pub mod campaign;
pub mod corpus;
pub mod exec;
pub mod gateway;
pub mod hash;
pub mod oracle;
pub mod par;
pub mod report;
pub mod scoring;
mod slots;
pub mod template;

pub use oracle::{Category, Verdict};
pub use par::Executor;
