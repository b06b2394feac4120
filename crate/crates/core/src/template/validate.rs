use serde::Serialize;
use thiserror::Error;

use super::{ParameterValuation, QuestionTemplate, TemplateError};
use crate::exec::{BackendError, ExecutionBackend};
use crate::hash;
use crate::oracle::{evaluate_response, instantiate_oracle, Category, OracleTemplate, ResourceLimits};
use crate::par::Executor;

/// A valuation whose own model solution does not pass its oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationDefect {
    pub instance_index: usize,
    pub valuation: ParameterValuation,
    pub category: Category,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub template_id: String,
    pub checked: usize,
    pub defects: Vec<ValidationDefect>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.defects.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum BundleValidationError {
    #[error("backend failed on valuation ({valuation}): {source}")]
    Backend {
        valuation: ParameterValuation,
        #[source]
        source: BackendError,
    },
    #[error("cannot instantiate valuation ({valuation}): {source}")]
    Template {
        valuation: ParameterValuation,
        #[source]
        source: TemplateError,
    },
}

/// Run each valuation's model solution through the full verdict pipeline and
/// report every valuation where it does not earn `passed`.
pub fn validate_bundle(
    template: &QuestionTemplate,
    oracle: &OracleTemplate,
    sample_valuations: &[ParameterValuation],
    backend: &dyn ExecutionBackend,
    limits: ResourceLimits,
    executor: &Executor,
) -> Result<ValidationReport, BundleValidationError> {
    let indexed: Vec<(usize, &ParameterValuation)> = sample_valuations.iter().enumerate().collect();
    let outcomes = executor.map(&indexed, |&(index, valuation)| {
        let concrete = instantiate_oracle(
            template,
            oracle,
            index,
            valuation,
            oracle.default_fuzz_trials,
            hash::fuzz_seed(0, &template.id, index),
            limits,
        )
        .map_err(|source| BundleValidationError::Template {
            valuation: valuation.clone(),
            source,
        })?;
        let verdict = evaluate_response(
            Some(&concrete.model_solution),
            &concrete,
            backend,
            format!("{}#model", concrete.oracle_id()),
        )
        .map_err(|source| BundleValidationError::Backend {
            valuation: valuation.clone(),
            source,
        })?;
        Ok::<_, BundleValidationError>((index, valuation, verdict))
    });

    let mut report = ValidationReport {
        template_id: template.id.clone(),
        checked: sample_valuations.len(),
        defects: Vec::new(),
    };
    for outcome in outcomes {
        let (index, valuation, verdict) = outcome?;
        if verdict.category != Category::Passed {
            let detail = verdict
                .stages
                .iter()
                .find(|s| s.is_failed())
                .map(|s| s.detail.clone())
                .unwrap_or_default();
            report.defects.push(ValidationDefect {
                instance_index: index,
                valuation: valuation.clone(),
                category: verdict.category,
                detail,
            });
        }
    }
    Ok(report)
}
