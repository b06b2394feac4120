//! Deterministic stand-in model built from the bundle's model solution.
//!
//! Every profile answers with a fenced Python block; the defective profiles
//! apply a fixed textual mutation so that each reaches a predictable verdict
//! category.

use serde::{Deserialize, Serialize};

use crate::exec::pyscan;
use crate::hash::{hash64, unit_interval, HashPart};
use crate::oracle::OracleTemplate;
use crate::template::render::render;
use crate::template::{ParameterValuation, QuestionInstance, Relation, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DefectKind {
    Perfect,
    /// Defines the function under a different name.
    WrongName,
    /// Adds a required parameter.
    WrongArity,
    /// Appends an assignment to a call expression.
    SyntaxCorrupt,
    /// Renders the solution with `param` lowered by one whenever `predicate`
    /// holds for the instance's valuation. `param` defaults to the first
    /// integer parameter in name order.
    RangeOffByOne {
        predicate: Relation,
        #[serde(default)]
        param: Option<String>,
    },
    /// Syntax-corrupt with probability `probability` per (instance, round).
    BernoulliFail { probability: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectProfile {
    #[serde(flatten)]
    pub kind: DefectKind,
    #[serde(default)]
    pub seed: u64,
}

impl DefectProfile {
    pub fn new(kind: DefectKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn perfect() -> Self {
        Self::new(DefectKind::Perfect, 0)
    }
}

pub const SYNTAX_CORRUPTION: &str = "len(result) -= 1";

/// Response text for one (instance, round); a pure function of its inputs.
pub fn mock_generate(
    profile: &DefectProfile,
    instance: &QuestionInstance,
    oracle: &OracleTemplate,
    round: usize,
) -> String {
    let solution = || solution_for(oracle, &instance.valuation);
    let code = match &profile.kind {
        DefectKind::Perfect => solution(),
        DefectKind::WrongName => rename(&solution(), &oracle.function_name),
        DefectKind::WrongArity => add_parameter(&solution(), &oracle.function_name),
        DefectKind::SyntaxCorrupt => corrupt(&solution()),
        DefectKind::RangeOffByOne { predicate, param } => {
            if predicate.holds(&instance.valuation).unwrap_or(false) {
                let target = param.clone().or_else(|| {
                    instance
                        .valuation
                        .iter()
                        .find(|(_, v)| matches!(v, Value::Int(_)))
                        .map(|(k, _)| k.clone())
                });
                match target.and_then(|p| instance.valuation.int(&p).map(|v| (p, v))) {
                    Some((p, v)) => {
                        let mut lowered = instance.valuation.clone();
                        lowered.insert(p, v - 1);
                        solution_for(oracle, &lowered)
                    }
                    None => solution(),
                }
            } else {
                solution()
            }
        }
        DefectKind::BernoulliFail { probability } => {
            let draw = unit_interval(hash64(&[
                HashPart::U64(profile.seed),
                HashPart::Str(&instance.template_id),
                HashPart::U64(instance.instance_index as u64),
                HashPart::U64(round as u64),
            ]));
            if draw < *probability {
                corrupt(&solution())
            } else {
                solution()
            }
        }
    };
    format!("```python\n{code}\n```\n")
}

fn solution_for(oracle: &OracleTemplate, valuation: &ParameterValuation) -> String {
    render(&oracle.model_solution_template, valuation)
        .unwrap_or_else(|_| oracle.model_solution_template.clone())
        .trim_end()
        .to_string()
}

/// Byte offsets of `(` and its matching `)` in the first `def name(` header.
fn header_parens(source: &str, name: &str) -> Option<(usize, usize)> {
    let masked = pyscan::mask(source);
    let needle = format!("def {name}(");
    let open = masked.find(&needle)? + needle.len() - 1;
    let mut depth = 0usize;
    for (i, b) in masked.bytes().enumerate().skip(open) {
        match b {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((open, i));
                }
            }
            _ => {}
        }
    }
    None
}

fn rename(source: &str, name: &str) -> String {
    match header_parens(source, name) {
        Some((open, _)) => {
            let name_end = open;
            format!("{}_v2{}", &source[..name_end], &source[name_end..])
        }
        None => source.to_string(),
    }
}

fn add_parameter(source: &str, name: &str) -> String {
    match header_parens(source, name) {
        Some((open, close)) => {
            let inner = source[open + 1..close].trim_end();
            let insert = if inner.trim().is_empty() {
                "extra"
            } else if inner.ends_with(',') {
                " extra"
            } else {
                ", extra"
            };
            let at = open + 1 + inner.len();
            format!("{}{insert}{}", &source[..at], &source[at..])
        }
        None => source.to_string(),
    }
}

fn corrupt(source: &str) -> String {
    format!("{source}\n\n{SYNTAX_CORRUPTION}")
}
