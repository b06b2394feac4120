//! Execution backends: the stub replayer and the subprocess bridge to the
//! sandbox runner.
//!
//! Stages 1-3 (function present, name, arity) are structural and computed in
//! process by [`pyscan`]; stages 4-7 need the target-language runtime.

mod bridge;
pub mod pyscan;
mod stub;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{hash64, HashPart};
use crate::oracle::ResourceLimits;

pub use bridge::{SubprocessBackend, SubprocessConfig};
pub use stub::{configure_stub, ScriptedRun, StubBackend, StubDefault, StubScript};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("execution backend unavailable: {0}")]
    Unavailable(String),
    #[error("sandbox protocol violation: {0}")]
    Protocol(String),
    #[error("sandbox internal fault (exit {code}): {message}")]
    Internal { code: i32, message: String },
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    FunctionPresent,
    FunctionName,
    Arity,
    Parse,
    Lint,
    FixedTest,
    Differential,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::FunctionPresent,
        Stage::FunctionName,
        Stage::Arity,
        Stage::Parse,
        Stage::Lint,
        Stage::FixedTest,
        Stage::Differential,
    ];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
}

/// Why a stage failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    MissingFunction,
    NameMismatch,
    ArityMismatch,
    Syntax,
    Lint,
    Assertion,
    Exception,
    Timeout,
    Memory,
    Mismatch,
}

/// One record of the stage log. Field order is the wire order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub status: StageStatus,
    #[serde(default)]
    pub failure: Option<FailureKind>,
    #[serde(default)]
    pub detail: String,
    #[serde(default)]
    pub elapsed_ms: u64,
    #[serde(default)]
    pub peak_memory_bytes: Option<u64>,
    /// Position of the fixed test (stage 6 only).
    #[serde(default)]
    pub test_index: Option<usize>,
    /// Generated arguments that exposed a mismatch (stage 7 only).
    #[serde(default)]
    pub counterexample: Option<serde_json::Value>,
}

impl StageOutcome {
    pub fn ok(stage: Stage) -> Self {
        Self {
            stage,
            status: StageStatus::Ok,
            failure: None,
            detail: String::new(),
            elapsed_ms: 0,
            peak_memory_bytes: None,
            test_index: None,
            counterexample: None,
        }
    }

    pub fn failed(stage: Stage, failure: Option<FailureKind>, detail: impl Into<String>) -> Self {
        Self {
            status: StageStatus::Failed,
            failure,
            detail: detail.into(),
            ..Self::ok(stage)
        }
    }

    pub fn with_test_index(mut self, index: usize) -> Self {
        self.test_index = Some(index);
        self
    }

    pub fn is_failed(&self) -> bool {
        self.status == StageStatus::Failed
    }
}

/// Everything needed to judge one candidate; mirrors a concrete oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionJob {
    pub oracle_id: String,
    pub candidate_source: Option<String>,
    pub function_name: String,
    pub arity: usize,
    pub fixed_tests: Vec<String>,
    pub model_solution: String,
    pub generator_source: String,
    pub fuzz_trials: u32,
    pub fuzz_seed: u64,
    pub limits: ResourceLimits,
}

/// Identity of a job for stubbing and caching: candidate, oracle, fuzz seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fingerprint(pub u64);

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl ExecutionJob {
    pub fn fingerprint(&self) -> Fingerprint {
        let candidate = match &self.candidate_source {
            Some(src) => HashPart::Str(src),
            None => HashPart::U64(0),
        };
        Fingerprint(hash64(&[
            candidate,
            HashPart::Str(&self.oracle_id),
            HashPart::U64(self.fuzz_seed),
        ]))
    }
}

/// Truncate a log after its first failed record.
pub(crate) fn cut_at_failure(mut log: Vec<StageOutcome>) -> Vec<StageOutcome> {
    if let Some(k) = log.iter().position(StageOutcome::is_failed) {
        log.truncate(k + 1);
    }
    log
}

/// Structural stages 1-3, shared by every backend that checks real source.
pub fn structural_stages(job: &ExecutionJob) -> Vec<StageOutcome> {
    let Some(source) = job.candidate_source.as_deref() else {
        return vec![StageOutcome::failed(
            Stage::FunctionPresent,
            Some(FailureKind::MissingFunction),
            "no candidate source",
        )];
    };
    let defs = pyscan::function_defs(source);
    let Some(chosen) = pyscan::select(&defs, &job.function_name) else {
        return vec![StageOutcome::failed(
            Stage::FunctionPresent,
            Some(FailureKind::MissingFunction),
            "no function definition found",
        )];
    };
    let mut log = vec![StageOutcome::ok(Stage::FunctionPresent)];
    if chosen.name != job.function_name {
        log.push(StageOutcome::failed(
            Stage::FunctionName,
            Some(FailureKind::NameMismatch),
            format!("expected `{}`, found `{}`", job.function_name, chosen.name),
        ));
        return log;
    }
    log.push(StageOutcome::ok(Stage::FunctionName));
    if !chosen.signature.accepts(job.arity) {
        log.push(StageOutcome::failed(
            Stage::Arity,
            Some(FailureKind::ArityMismatch),
            format!(
                "`{}` takes {}, expected {} positional argument(s)",
                chosen.name, chosen.signature, job.arity
            ),
        ));
        return log;
    }
    log.push(StageOutcome::ok(Stage::Arity));
    log
}

/// A place where jobs execute.
///
/// Implementations must be reentrant: evaluations of distinct jobs may run
/// concurrently and must not share interpreter state.
pub trait ExecutionBackend: Send + Sync {
    /// Stages 1-5, stopping at the first failure.
    fn check_well_formedness(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError>;

    /// Stage 6, one record per fixed test in declared order.
    fn run_fixed_tests(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError>;

    /// Stage 7.
    fn run_differential(&self, job: &ExecutionJob) -> Result<StageOutcome, BackendError>;

    /// The whole pipeline; nothing follows a failed record.
    fn run_pipeline(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        let mut log = cut_at_failure(self.check_well_formedness(job)?);
        if log.iter().any(StageOutcome::is_failed) {
            return Ok(log);
        }
        log.extend(cut_at_failure(self.run_fixed_tests(job)?));
        if log.iter().any(StageOutcome::is_failed) {
            return Ok(log);
        }
        log.push(self.run_differential(job)?);
        Ok(log)
    }
}

impl<B: ExecutionBackend + ?Sized> ExecutionBackend for &B {
    fn check_well_formedness(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        (**self).check_well_formedness(job)
    }
    fn run_fixed_tests(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        (**self).run_fixed_tests(job)
    }
    fn run_differential(&self, job: &ExecutionJob) -> Result<StageOutcome, BackendError> {
        (**self).run_differential(job)
    }
    fn run_pipeline(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        (**self).run_pipeline(job)
    }
}

impl<B: ExecutionBackend + ?Sized> ExecutionBackend for std::sync::Arc<B> {
    fn check_well_formedness(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        (**self).check_well_formedness(job)
    }
    fn run_fixed_tests(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        (**self).run_fixed_tests(job)
    }
    fn run_differential(&self, job: &ExecutionJob) -> Result<StageOutcome, BackendError> {
        (**self).run_differential(job)
    }
    fn run_pipeline(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        (**self).run_pipeline(job)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    pub fn job(candidate: Option<&str>) -> ExecutionJob {
        ExecutionJob {
            oracle_id: "sum_even_ints_inclusive#0".into(),
            candidate_source: candidate.map(str::to_string),
            function_name: "sum_even_ints_inclusive".into(),
            arity: 1,
            fixed_tests: vec![
                "def test_odd_range():\n  odd_list = [i for i in range(-10001, 8*10, 2)]\n  assert sum_even_ints_inclusive(odd_list) == 0\n".into(),
            ],
            model_solution: "def sum_even_ints_inclusive(lst):\n  lst = lst[1 : 8 + 1]\n  return sum([i for i in lst if i % 2 == 0])\n".into(),
            generator_source: "def generate(rng):\n  return ([rng.randint(-9, 9) for _ in range(12)],)\n".into(),
            fuzz_trials: 50,
            fuzz_seed: 7,
            limits: ResourceLimits::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::job;
    use super::*;

    #[test]
    fn absent_source_fails_stage_one() {
        let log = structural_stages(&job(None));
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].stage, Stage::FunctionPresent);
        assert!(log[0].is_failed());
    }

    #[test]
    fn prose_fails_stage_one() {
        let log = structural_stages(&job(Some("I cannot help with that.")));
        assert!(log[0].is_failed());
    }

    #[test]
    fn wrong_name_fails_stage_two() {
        let log = structural_stages(&job(Some("def foo(lst):\n    return 0\n")));
        assert_eq!(log.last().unwrap().stage, Stage::FunctionName);
        assert!(log.last().unwrap().is_failed());
    }

    #[test]
    fn wrong_arity_fails_stage_three() {
        let log = structural_stages(&job(Some(
            "def sum_even_ints_inclusive(lst, start, end):\n    return 0\n",
        )));
        assert_eq!(log.last().unwrap().stage, Stage::Arity);
        assert!(log.last().unwrap().is_failed());
    }

    #[test]
    fn expected_name_preferred_over_helpers() {
        let src = "def helper(a, b):\n    return a\n\ndef sum_even_ints_inclusive(lst):\n    return helper(lst, 0)\n";
        let log = structural_stages(&job(Some(src)));
        assert_eq!(log.len(), 3);
        assert!(log.iter().all(|s| !s.is_failed()));
    }

    #[test]
    fn fingerprint_depends_on_candidate_oracle_and_seed() {
        let a = job(Some("def f(x): pass"));
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.fuzz_seed += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        let mut c = a.clone();
        c.oracle_id = "other#0".into();
        assert_ne!(a.fingerprint(), c.fingerprint());
        let d = job(None);
        let e = job(Some(""));
        assert_ne!(d.fingerprint(), e.fingerprint());
    }

    #[test]
    fn stage_outcome_wire_field_order() {
        let s = StageOutcome::failed(Stage::FixedTest, Some(FailureKind::Assertion), "boom")
            .with_test_index(0);
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"stage":"fixed_test","status":"failed","failure":"assertion","detail":"boom","elapsed_ms":0,"peak_memory_bytes":null,"test_index":0,"counterexample":null}"#
        );
    }
}
