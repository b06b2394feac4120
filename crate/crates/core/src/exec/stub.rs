use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::{
    cut_at_failure, structural_stages, BackendError, ExecutionBackend, ExecutionJob, FailureKind,
    Fingerprint, Stage, StageOutcome,
};

/// A scripted stage-log for one job: every stage succeeds except, optionally,
/// one failing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedRun {
    pub fail_at: Option<(Stage, Option<FailureKind>)>,
    pub detail: String,
}

impl ScriptedRun {
    pub fn all_ok() -> Self {
        Self {
            fail_at: None,
            detail: String::new(),
        }
    }

    pub fn failing_at(stage: Stage, failure: Option<FailureKind>) -> Self {
        Self {
            fail_at: Some((stage, failure)),
            detail: "scripted failure".into(),
        }
    }

    fn outcome(&self, stage: Stage) -> StageOutcome {
        match self.fail_at {
            Some((s, kind)) if s == stage => StageOutcome::failed(stage, kind, self.detail.clone()),
            _ => StageOutcome::ok(stage),
        }
    }

    fn fixed_tests(&self, job: &ExecutionJob) -> Vec<StageOutcome> {
        // A scripted stage-6 failure lands on the first test.
        (0..job.fixed_tests.len())
            .map(|i| {
                let o = if i == 0 { self.outcome(Stage::FixedTest) } else { StageOutcome::ok(Stage::FixedTest) };
                o.with_test_index(i)
            })
            .collect()
    }
}

type Rule = Arc<dyn Fn(&ExecutionJob) -> ScriptedRun + Send + Sync>;

/// What the stub does for jobs with no scripted fingerprint.
#[derive(Clone)]
pub enum StubDefault {
    Fixed(ScriptedRun),
    Rule(Rule),
}

impl fmt::Debug for StubDefault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StubDefault::Fixed(r) => f.debug_tuple("Fixed").field(r).finish(),
            StubDefault::Rule(_) => f.write_str("Rule(..)"),
        }
    }
}

/// Fingerprint-keyed script plus a default.
#[derive(Debug, Clone)]
pub struct StubScript {
    pub scripted: HashMap<Fingerprint, ScriptedRun>,
    pub default: StubDefault,
}

impl StubScript {
    pub fn all_ok() -> Self {
        Self::default_run(ScriptedRun::all_ok())
    }

    pub fn default_run(run: ScriptedRun) -> Self {
        Self {
            scripted: HashMap::new(),
            default: StubDefault::Fixed(run),
        }
    }

    pub fn rule(f: impl Fn(&ExecutionJob) -> ScriptedRun + Send + Sync + 'static) -> Self {
        Self {
            scripted: HashMap::new(),
            default: StubDefault::Rule(Arc::new(f)),
        }
    }

    /// Judge by reference text: structural stages 1-3 are checked for real;
    /// a candidate byte-equal (modulo trailing whitespace) to the model
    /// solution passes, anything else fails its first fixed test.
    pub fn reference_match() -> Self {
        Self::rule(|job| {
            if let Some(last) = structural_stages(job).last().filter(|s| s.is_failed()) {
                return ScriptedRun {
                    fail_at: Some((last.stage, last.failure)),
                    detail: last.detail.clone(),
                };
            }
            let candidate = job.candidate_source.as_deref().unwrap_or("");
            if candidate.trim_end() == job.model_solution.trim_end() {
                ScriptedRun::all_ok()
            } else {
                ScriptedRun {
                    fail_at: Some((Stage::FixedTest, Some(FailureKind::Assertion))),
                    detail: "candidate differs from the model solution".into(),
                }
            }
        })
    }

    pub fn with(mut self, fingerprint: Fingerprint, run: ScriptedRun) -> Self {
        self.scripted.insert(fingerprint, run);
        self
    }
}

/// Replays scripted outcomes; needs no target-language runtime.
#[derive(Debug, Clone)]
pub struct StubBackend {
    script: StubScript,
}

impl StubBackend {
    pub fn new(script: StubScript) -> Self {
        Self { script }
    }

    fn run_for(&self, job: &ExecutionJob) -> ScriptedRun {
        if let Some(run) = self.script.scripted.get(&job.fingerprint()) {
            return run.clone();
        }
        match &self.script.default {
            StubDefault::Fixed(run) => run.clone(),
            StubDefault::Rule(rule) => rule(job),
        }
    }
}

/// Build a stub backend from a script.
pub fn configure_stub(script: StubScript) -> StubBackend {
    StubBackend::new(script)
}

impl ExecutionBackend for StubBackend {
    fn check_well_formedness(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        let run = self.run_for(job);
        Ok(cut_at_failure(
            Stage::ALL[..5].iter().map(|s| run.outcome(*s)).collect(),
        ))
    }

    fn run_fixed_tests(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        Ok(self.run_for(job).fixed_tests(job))
    }

    fn run_differential(&self, job: &ExecutionJob) -> Result<StageOutcome, BackendError> {
        Ok(self.run_for(job).outcome(Stage::Differential))
    }
}
