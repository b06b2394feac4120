//! Oracle templates, their instantiation, and the staged verdict pipeline.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::exec::{BackendError, ExecutionBackend, ExecutionJob, FailureKind, Stage, StageOutcome, StageStatus};
use crate::template::{render, ParameterValuation, QuestionTemplate, TemplateError};

/// Default differential trials per question instance.
pub const DEFAULT_FUZZ_TRIALS: u32 = 50;

/// Per-execution resource ceilings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
    pub memory_bytes: u64,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            cpu_seconds: 10.0,
            wall_seconds: 15.0,
            memory_bytes: 512 * 1024 * 1024,
        }
    }
}

impl ResourceLimits {
    pub fn validate(&self) -> Result<(), String> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.cpu_seconds) {
            return Err(format!("cpu_seconds must be positive, got {}", self.cpu_seconds));
        }
        if !positive(self.wall_seconds) {
            return Err(format!("wall_seconds must be positive, got {}", self.wall_seconds));
        }
        if self.memory_bytes == 0 {
            return Err("memory_bytes must be positive".into());
        }
        Ok(())
    }
}

/// The parameterised judge of one question template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleTemplate {
    pub function_name: String,
    pub arity: usize,
    pub fixed_test_templates: Vec<String>,
    pub model_solution_template: String,
    /// Source defining `generate(rng)`; placeholders are allowed.
    pub generator_source: String,
    pub default_fuzz_trials: u32,
}

/// An oracle rendered for one question instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcreteOracle {
    pub template_id: String,
    pub instance_index: usize,
    pub function_name: String,
    pub arity: usize,
    pub fixed_tests: Vec<String>,
    pub model_solution: String,
    pub generator_source: String,
    pub fuzz_trials: u32,
    pub fuzz_seed: u64,
    pub limits: ResourceLimits,
}

impl ConcreteOracle {
    pub fn oracle_id(&self) -> String {
        format!("{}#{}", self.template_id, self.instance_index)
    }

    pub fn job(&self, candidate_source: Option<&str>) -> ExecutionJob {
        ExecutionJob {
            oracle_id: self.oracle_id(),
            candidate_source: candidate_source.map(str::to_string),
            function_name: self.function_name.clone(),
            arity: self.arity,
            fixed_tests: self.fixed_tests.clone(),
            model_solution: self.model_solution.clone(),
            generator_source: self.generator_source.clone(),
            fuzz_trials: self.fuzz_trials,
            fuzz_seed: self.fuzz_seed,
            limits: self.limits,
        }
    }
}

/// Render every oracle source with the instance's valuation.
pub fn instantiate_oracle(
    template: &QuestionTemplate,
    oracle: &OracleTemplate,
    instance_index: usize,
    valuation: &ParameterValuation,
    fuzz_trials: u32,
    fuzz_seed: u64,
    limits: ResourceLimits,
) -> Result<ConcreteOracle, TemplateError> {
    template.space.check(valuation)?;
    let fixed_tests = oracle
        .fixed_test_templates
        .iter()
        .map(|t| render::render(t, valuation))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConcreteOracle {
        template_id: template.id.clone(),
        instance_index,
        function_name: oracle.function_name.clone(),
        arity: oracle.arity,
        fixed_tests,
        model_solution: render::render(&oracle.model_solution_template, valuation)?,
        generator_source: render::render(&oracle.generator_source, valuation)?,
        fuzz_trials,
        fuzz_seed,
        limits,
    })
}

/// Verdict categories in precedence order (earliest pipeline stage first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    NoFunction,
    WrongFunctionName,
    WrongArgCount,
    SyntaxError,
    StaticTypeError,
    ResourceExhaustion,
    RuntimeError,
    AssertionError,
    FuzzingFailure,
    Passed,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::NoFunction,
        Category::WrongFunctionName,
        Category::WrongArgCount,
        Category::SyntaxError,
        Category::StaticTypeError,
        Category::ResourceExhaustion,
        Category::RuntimeError,
        Category::AssertionError,
        Category::FuzzingFailure,
        Category::Passed,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Category::NoFunction => "no_function",
            Category::WrongFunctionName => "wrong_function_name",
            Category::WrongArgCount => "wrong_arg_count",
            Category::SyntaxError => "syntax_error",
            Category::StaticTypeError => "static_type_error",
            Category::ResourceExhaustion => "resource_exhaustion",
            Category::RuntimeError => "runtime_error",
            Category::AssertionError => "assertion_error",
            Category::FuzzingFailure => "fuzzing_failure",
            Category::Passed => "passed",
        }
    }

    /// Human-readable row label.
    pub fn label(self) -> &'static str {
        match self {
            Category::NoFunction => "no function",
            Category::WrongFunctionName => "wrong function name",
            Category::WrongArgCount => "wrong count of arguments",
            Category::SyntaxError => "syntax error",
            Category::StaticTypeError => "static type error",
            Category::ResourceExhaustion => "resource exhaustion",
            Category::RuntimeError => "runtime error",
            Category::AssertionError => "assertion error",
            Category::FuzzingFailure => "fuzzing failure",
            Category::Passed => "passed",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_pass(self) -> bool {
        self == Category::Passed
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Outcome of judging one response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub category: Category,
    pub stages: Vec<StageOutcome>,
    pub response_ref: String,
}

/// Category of the earliest failed stage, or `passed` when none failed.
pub fn classify_failure(stage_log: &[StageOutcome]) -> Category {
    let Some(failed) = stage_log.iter().find(|s| s.status == StageStatus::Failed) else {
        return Category::Passed;
    };
    let resource = matches!(
        failed.failure,
        Some(FailureKind::Timeout) | Some(FailureKind::Memory)
    );
    match failed.stage {
        Stage::FunctionPresent => Category::NoFunction,
        Stage::FunctionName => Category::WrongFunctionName,
        Stage::Arity => Category::WrongArgCount,
        Stage::Parse => Category::SyntaxError,
        Stage::Lint => Category::StaticTypeError,
        Stage::FixedTest if resource => Category::ResourceExhaustion,
        Stage::FixedTest if failed.failure == Some(FailureKind::Exception) => {
            Category::RuntimeError
        }
        Stage::FixedTest => Category::AssertionError,
        Stage::Differential if resource => Category::ResourceExhaustion,
        Stage::Differential => Category::FuzzingFailure,
    }
}

/// Check that a completed stage log covers the whole pipeline.
fn check_complete(log: &[StageOutcome], job: &ExecutionJob) -> Result<(), BackendError> {
    let mut expected: Vec<Stage> = vec![
        Stage::FunctionPresent,
        Stage::FunctionName,
        Stage::Arity,
        Stage::Parse,
        Stage::Lint,
    ];
    expected.extend(std::iter::repeat_n(Stage::FixedTest, job.fixed_tests.len()));
    expected.push(Stage::Differential);
    let got: Vec<Stage> = log.iter().map(|s| s.stage).collect();
    if got != expected {
        return Err(BackendError::Protocol(format!(
            "stage log for {} is incomplete or out of order: {:?}",
            job.oracle_id, got
        )));
    }
    Ok(())
}

fn check_order(log: &[StageOutcome], job: &ExecutionJob) -> Result<(), BackendError> {
    if log.is_empty() {
        return Err(BackendError::Protocol(format!(
            "empty stage log for {}",
            job.oracle_id
        )));
    }
    for pair in log.windows(2) {
        if pair[0].status == StageStatus::Failed {
            return Err(BackendError::Protocol(format!(
                "stage {:?} reported after a failed stage for {}",
                pair[1].stage, job.oracle_id
            )));
        }
        if pair[1].stage < pair[0].stage {
            return Err(BackendError::Protocol(format!(
                "stage {:?} reported after {:?} for {}",
                pair[1].stage, pair[0].stage, job.oracle_id
            )));
        }
    }
    Ok(())
}

/// Judge one response through the staged pipeline.
///
/// Stages run in fixed order and stop at the first failure. Infrastructure
/// faults surface as [`BackendError`], never as a verdict.
pub fn evaluate_response(
    response_source: Option<&str>,
    oracle: &ConcreteOracle,
    backend: &dyn ExecutionBackend,
    response_ref: impl Into<String>,
) -> Result<Verdict, BackendError> {
    let job = oracle.job(response_source);
    let stages = backend.run_pipeline(&job)?;
    check_order(&stages, &job)?;
    let category = classify_failure(&stages);
    if category == Category::Passed {
        check_complete(&stages, &job)?;
    }
    Ok(Verdict {
        category,
        stages,
        response_ref: response_ref.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{ScriptedRun, StubBackend, StubScript};
    use crate::template::fixtures::{sum_even_template, pair};
    use proptest::prelude::*;

    pub const SUM_EVEN_TEST: &str = "def test_odd_range():\n  odd_list = [i for i in range(-10001, {{p2}}*10, 2)]\n  assert sum_even_ints_inclusive(odd_list) == 0\n";
    pub const SUM_EVEN_SOLUTION: &str = "def sum_even_ints_inclusive(lst):\n  lst = lst[{{p1}} : {{p2}} + 1]\n  return sum([i for i in lst if i % 2 == 0])\n";

    fn sum_even_oracle() -> OracleTemplate {
        OracleTemplate {
            function_name: "sum_even_ints_inclusive".into(),
            arity: 1,
            fixed_test_templates: vec![SUM_EVEN_TEST.into(), "def test_plain():\n  assert True\n".into()],
            model_solution_template: SUM_EVEN_SOLUTION.into(),
            generator_source: "def generate(rng):\n  return ([rng.randint(-9, 9) for _ in range({{p2}} + 3)],)\n".into(),
            default_fuzz_trials: DEFAULT_FUZZ_TRIALS,
        }
    }

    fn concrete(p1: i64, p2: i64) -> ConcreteOracle {
        instantiate_oracle(
            &sum_even_template(),
            &sum_even_oracle(),
            0,
            &pair(p1, p2),
            50,
            99,
            ResourceLimits::default(),
        )
        .unwrap()
    }

    #[test]
    fn sum_even_test_instance() {
        let o = concrete(1, 8);
        assert_eq!(
            o.fixed_tests[0],
            "def test_odd_range():\n  odd_list = [i for i in range(-10001, 8*10, 2)]\n  assert sum_even_ints_inclusive(odd_list) == 0\n"
        );
    }

    #[test]
    fn sum_even_solution_instance() {
        let o = concrete(1, 8);
        assert_eq!(
            o.model_solution,
            "def sum_even_ints_inclusive(lst):\n  lst = lst[1 : 8 + 1]\n  return sum([i for i in lst if i % 2 == 0])\n"
        );
    }

    #[test]
    fn placeholder_free_test_is_identity() {
        let o = concrete(1, 8);
        assert_eq!(o.fixed_tests[1], "def test_plain():\n  assert True\n");
        assert!(!render::has_markers(&o.generator_source));
    }

    #[test]
    fn instantiate_rejects_bad_valuation() {
        let err = instantiate_oracle(
            &sum_even_template(),
            &sum_even_oracle(),
            0,
            &pair(9, 2),
            50,
            1,
            ResourceLimits::default(),
        );
        assert!(matches!(err, Err(TemplateError::ConstraintViolation { .. })));
    }

    fn ok(stage: Stage) -> StageOutcome {
        StageOutcome::ok(stage)
    }

    fn fail(stage: Stage, kind: Option<FailureKind>) -> StageOutcome {
        StageOutcome::failed(stage, kind, "x")
    }

    #[test]
    fn classify_examples() {
        let all_ok: Vec<_> = Stage::ALL.iter().map(|s| ok(*s)).collect();
        assert_eq!(classify_failure(&all_ok), Category::Passed);

        let lint = vec![
            ok(Stage::FunctionPresent),
            ok(Stage::FunctionName),
            ok(Stage::Arity),
            ok(Stage::Parse),
            fail(Stage::Lint, None),
        ];
        assert_eq!(classify_failure(&lint), Category::StaticTypeError);

        let mut timeout = lint.clone();
        timeout[4] = ok(Stage::Lint);
        timeout.push(fail(Stage::FixedTest, Some(FailureKind::Timeout)));
        assert_eq!(classify_failure(&timeout), Category::ResourceExhaustion);

        let mut exc = timeout.clone();
        exc[5] = fail(Stage::FixedTest, Some(FailureKind::Exception));
        assert_eq!(classify_failure(&exc), Category::RuntimeError);

        let mut fuzz = timeout.clone();
        fuzz[5] = ok(Stage::FixedTest);
        fuzz.push(fail(Stage::Differential, Some(FailureKind::Mismatch)));
        assert_eq!(classify_failure(&fuzz), Category::FuzzingFailure);
    }

    fn arb_outcome() -> impl Strategy<Value = StageOutcome> {
        let stage = prop::sample::select(Stage::ALL.to_vec());
        let kind = prop::option::of(prop::sample::select(vec![
            FailureKind::Assertion,
            FailureKind::Exception,
            FailureKind::Timeout,
            FailureKind::Memory,
            FailureKind::Mismatch,
            FailureKind::Syntax,
        ]));
        (stage, any::<bool>(), kind).prop_map(|(stage, failed, kind)| {
            if failed {
                StageOutcome::failed(stage, kind, "")
            } else {
                StageOutcome::ok(stage)
            }
        })
    }

    fn expected_for(s: &StageOutcome) -> Category {
        // Independent table of the precedence rule.
        use FailureKind::*;
        match (s.stage, s.failure) {
            (Stage::FunctionPresent, _) => Category::NoFunction,
            (Stage::FunctionName, _) => Category::WrongFunctionName,
            (Stage::Arity, _) => Category::WrongArgCount,
            (Stage::Parse, _) => Category::SyntaxError,
            (Stage::Lint, _) => Category::StaticTypeError,
            (Stage::FixedTest | Stage::Differential, Some(Timeout | Memory)) => {
                Category::ResourceExhaustion
            }
            (Stage::FixedTest, Some(Exception)) => Category::RuntimeError,
            (Stage::FixedTest, _) => Category::AssertionError,
            (Stage::Differential, _) => Category::FuzzingFailure,
        }
    }

    proptest! {
        #[test]
        fn classification_is_total_and_earliest_failure_wins(
            mut log in prop::collection::vec(arb_outcome(), 1..12)
        ) {
            log.sort_by_key(|s| s.stage);
            let got = classify_failure(&log);
            prop_assert!(Category::ALL.contains(&got));
            match log.iter().position(|s| s.status == StageStatus::Failed) {
                None => prop_assert_eq!(got, Category::Passed),
                Some(k) => {
                    prop_assert_eq!(got, expected_for(&log[k]));
                    // Later stages never influence the category.
                    let mut tail_flipped = log.clone();
                    for s in tail_flipped.iter_mut().skip(k + 1) {
                        *s = StageOutcome::failed(Stage::FunctionPresent, None, "");
                    }
                    prop_assert_eq!(classify_failure(&tail_flipped[..=k]), got);
                }
            }
        }
    }

    #[test]
    fn evaluate_with_stub_replays() {
        let o = concrete(1, 8);
        let passing = StubBackend::new(StubScript::all_ok());
        let v = evaluate_response(Some(&o.model_solution), &o, &passing, "r0").unwrap();
        assert_eq!(v.category, Category::Passed);
        assert_eq!(v.stages.len(), 5 + o.fixed_tests.len() + 1);

        let syntax = StubBackend::new(StubScript::default_run(ScriptedRun::failing_at(
            Stage::Parse,
            None,
        )));
        let v = evaluate_response(Some("def f(:"), &o, &syntax, "r1").unwrap();
        assert_eq!(v.category, Category::SyntaxError);
        assert_eq!(v.stages.last().unwrap().stage, Stage::Parse);
    }

    #[test]
    fn evaluate_rejects_incomplete_passing_log() {
        struct Short;
        impl ExecutionBackend for Short {
            fn check_well_formedness(&self, _: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
                Ok(vec![StageOutcome::ok(Stage::FunctionPresent)])
            }
            fn run_fixed_tests(&self, _: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
                Ok(vec![])
            }
            fn run_differential(&self, _: &ExecutionJob) -> Result<StageOutcome, BackendError> {
                Ok(StageOutcome::ok(Stage::Differential))
            }
        }
        let o = concrete(1, 8);
        assert!(matches!(
            evaluate_response(Some("def f(x): pass"), &o, &Short, "r"),
            Err(BackendError::Protocol(_))
        ));
    }
}
