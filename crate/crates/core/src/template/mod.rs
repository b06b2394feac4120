//! Question templates, parameter sets, and instantiation.

mod bundle;
mod params;
pub mod relation;
pub mod render;
mod validate;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bundle::{parse_template_bundle, BundleMeta, ParamsFile};
pub use params::{
    generate_parameter_set, ParamKind, ParameterSpace, ParameterSpec, ParameterValuation, Value,
    SAMPLING_BUDGET_PER_ITEM,
};
pub use relation::Relation;
pub use validate::{validate_bundle, BundleValidationError, ValidationDefect, ValidationReport};

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("missing bundle file {path}")]
    MissingFile { path: PathBuf },
    #[error("malformed {location}: {reason}")]
    MalformedSpec { location: String, reason: String },
    #[error("placeholder {{{{{name}}}}} in {location} names no declared parameter")]
    UndeclaredPlaceholder { name: String, location: String },
    #[error("parameter `{name}` is declared but never used")]
    UnusedParameter { name: String },
    #[error("constraint violation: {reason}")]
    ConstraintViolation { reason: String },
    #[error(
        "constraints admit too few valuations: wanted {requested}, found {found} in {attempts} draws"
    )]
    InfeasibleConstraints {
        requested: usize,
        found: usize,
        attempts: usize,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A natural-language programming problem with `{{name}}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionTemplate {
    pub id: String,
    pub prompt_template: String,
    pub space: ParameterSpace,
    /// Problem-group tags, e.g. `list_manipulation`.
    #[serde(default)]
    pub groups: Vec<String>,
    #[serde(default)]
    pub data_types: Vec<String>,
    /// Size of the shipped parameter set (100 for the bundled corpus).
    pub parameter_set_size: usize,
}

impl QuestionTemplate {
    pub fn parameter_set(&self, seed: u64) -> Result<Vec<ParameterValuation>, TemplateError> {
        generate_parameter_set(&self.space, self.parameter_set_size, seed)
    }
}

/// A template with every placeholder substituted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionInstance {
    pub template_id: String,
    pub instance_index: usize,
    pub valuation: ParameterValuation,
    pub rendered_prompt: String,
}

/// Render `template` for one valuation of its parameter set.
pub fn instantiate_question(
    template: &QuestionTemplate,
    instance_index: usize,
    valuation: &ParameterValuation,
) -> Result<QuestionInstance, TemplateError> {
    template.space.check(valuation)?;
    let rendered_prompt = render::render(&template.prompt_template, valuation)?;
    Ok(QuestionInstance {
        template_id: template.id.clone(),
        instance_index,
        valuation: valuation.clone(),
        rendered_prompt,
    })
}
