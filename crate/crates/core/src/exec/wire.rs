//! Sandbox wire protocol.
//!
//! The bridge writes one [`JobDescriptor`] as JSON to the runner's stdin and
//! reads newline-delimited [`StageOutcome`](super::StageOutcome) records from
//! its stdout. Field order is fixed by declaration order here and mirrored in
//! `schemas/job_descriptor.schema.json`.

use serde::{Deserialize, Serialize};

use super::{ExecutionJob, StageOutcome};
use crate::oracle::ResourceLimits;

pub const PROTOCOL_VERSION: u32 = 1;

/// Upper bound on one stage record line.
pub const MAX_RECORD_BYTES: usize = 64 * 1024;

/// Exit status meaning the runner completed the protocol.
pub const EXIT_OK: i32 = 0;
/// Exit status for a descriptor the runner could not accept.
pub const EXIT_MALFORMED: i32 = 2;
/// Exit status for a fault inside the runner itself.
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireLimits {
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
    pub memory_bytes: u64,
}

impl From<ResourceLimits> for WireLimits {
    fn from(l: ResourceLimits) -> Self {
        Self {
            cpu_seconds: l.cpu_seconds,
            wall_seconds: l.wall_seconds,
            memory_bytes: l.memory_bytes,
        }
    }
}

/// Wire form of an [`ExecutionJob`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobDescriptor {
    pub protocol: u32,
    pub job_id: String,
    pub oracle_id: String,
    pub function_name: String,
    pub arity: usize,
    pub candidate_source: String,
    pub fixed_tests: Vec<String>,
    pub model_solution: String,
    pub generator_source: String,
    pub fuzz_trials: u32,
    pub fuzz_seed: u64,
    pub limits: WireLimits,
    /// Linter message ids counted as static errors.
    pub lint_rules: Vec<String>,
}

impl JobDescriptor {
    /// `None` when the job has no candidate: such jobs never reach the runner.
    pub fn from_job(job: &ExecutionJob, lint_rules: &[String]) -> Option<Self> {
        Some(Self {
            protocol: PROTOCOL_VERSION,
            job_id: job.fingerprint().to_string(),
            oracle_id: job.oracle_id.clone(),
            function_name: job.function_name.clone(),
            arity: job.arity,
            candidate_source: job.candidate_source.clone()?,
            fixed_tests: job.fixed_tests.clone(),
            model_solution: job.model_solution.clone(),
            generator_source: job.generator_source.clone(),
            fuzz_trials: job.fuzz_trials,
            fuzz_seed: job.fuzz_seed,
            limits: job.limits.into(),
            lint_rules: lint_rules.to_vec(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("descriptor serializes")
    }
}

/// Parse one stdout line into a stage record.
pub fn parse_record(line: &str) -> Result<StageOutcome, String> {
    if line.len() > MAX_RECORD_BYTES {
        return Err(format!(
            "stage record of {} bytes exceeds the {MAX_RECORD_BYTES}-byte limit",
            line.len()
        ));
    }
    serde_json::from_str(line).map_err(|e| format!("bad stage record: {e}"))
}

pub fn encode_record(outcome: &StageOutcome) -> String {
    serde_json::to_string(outcome).expect("stage outcome serializes")
}

/// Lint rule ids shipped in `config/lint-rules.txt` (one per line, `#` comments).
pub fn parse_lint_rules(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}
