use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::relation::Relation;
use super::TemplateError;

/// Attempts allowed per requested valuation before declaring infeasibility.
pub const SAMPLING_BUDGET_PER_ITEM: usize = 1000;

/// A concrete parameter value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

/// Assignment of a value to every parameter of a template.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterValuation(BTreeMap<String, Value>);

impl ParameterValuation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn int(&self, name: &str) -> Option<i64> {
        match self.0.get(name) {
            Some(Value::Int(n)) => Some(*n),
            _ => None,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<Value>) {
        self.0.insert(name.into(), value.into());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(String, Value)> for ParameterValuation {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl fmt::Display for ParameterValuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match v {
                Value::Int(n) => write!(f, "{k}={n}")?,
                Value::Str(s) => write!(f, "{k}={s:?}")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Integer {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<i64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<i64>,
    },
    String {
        alphabet: String,
        min_len: usize,
        max_len: usize,
    },
}

/// One declared template parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
    /// Absolute cap on integer values (the "reasonable upper limit" of a
    /// template, e.g. list sizes). No global default exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_magnitude: Option<u64>,
}

impl ParameterSpec {
    pub fn integer(name: &str, min: i64, max: i64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Integer {
                min: Some(min),
                max: Some(max),
            },
            max_magnitude: None,
        }
    }

    /// Effective inclusive integer range after applying `max_magnitude`.
    fn int_range(&self) -> Option<(i64, i64)> {
        let ParamKind::Integer { min, max } = &self.kind else {
            return None;
        };
        let cap = self.max_magnitude.map(|k| k.min(i64::MAX as u64) as i64);
        let lo = match (min, cap) {
            (Some(m), Some(k)) => Some((*m).max(-k)),
            (Some(m), None) => Some(*m),
            (None, Some(k)) => Some(-k),
            (None, None) => None,
        }?;
        let hi = match (max, cap) {
            (Some(m), Some(k)) => Some((*m).min(k)),
            (Some(m), None) => Some(*m),
            (None, Some(k)) => Some(k),
            (None, None) => None,
        }?;
        Some((lo, hi))
    }

    fn validate(&self) -> Result<(), String> {
        if !super::is_identifier(&self.name) {
            return Err(format!("`{}` is not a valid parameter name", self.name));
        }
        match &self.kind {
            ParamKind::Integer { .. } => match self.int_range() {
                None => Err(format!(
                    "integer parameter `{}` needs min/max or max_magnitude",
                    self.name
                )),
                Some((lo, hi)) if lo > hi => {
                    Err(format!("parameter `{}` has an empty range", self.name))
                }
                Some(_) => Ok(()),
            },
            ParamKind::String {
                alphabet,
                min_len,
                max_len,
            } => {
                if alphabet.is_empty() && *max_len > 0 {
                    Err(format!("string parameter `{}` has an empty alphabet", self.name))
                } else if min_len > max_len {
                    Err(format!("string parameter `{}` has min_len > max_len", self.name))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn admits(&self, value: &Value) -> Result<(), String> {
        match (&self.kind, value) {
            (ParamKind::Integer { .. }, Value::Int(n)) => {
                let (lo, hi) = self.int_range().expect("validated integer spec");
                if *n < lo || *n > hi {
                    Err(format!("{}={n} outside [{lo}, {hi}]", self.name))
                } else {
                    Ok(())
                }
            }
            (
                ParamKind::String {
                    alphabet,
                    min_len,
                    max_len,
                },
                Value::Str(s),
            ) => {
                let len = s.chars().count();
                if len < *min_len || len > *max_len {
                    Err(format!(
                        "{}={s:?} length {len} outside [{min_len}, {max_len}]",
                        self.name
                    ))
                } else if let Some(c) = s.chars().find(|c| !alphabet.contains(*c)) {
                    Err(format!("{}={s:?} uses `{c}` outside its alphabet", self.name))
                } else {
                    Ok(())
                }
            }
            (ParamKind::Integer { .. }, Value::Str(_)) => {
                Err(format!("{} expects an integer", self.name))
            }
            (ParamKind::String { .. }, Value::Int(_)) => {
                Err(format!("{} expects a string", self.name))
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Value {
        match &self.kind {
            ParamKind::Integer { .. } => {
                let (lo, hi) = self.int_range().expect("validated integer spec");
                Value::Int(rng.gen_range(lo..=hi))
            }
            ParamKind::String {
                alphabet,
                min_len,
                max_len,
            } => {
                let chars: Vec<char> = alphabet.chars().collect();
                let len = rng.gen_range(*min_len..=*max_len);
                Value::Str(
                    (0..len)
                        .map(|_| chars[rng.gen_range(0..chars.len())])
                        .collect(),
                )
            }
        }
    }
}

/// The declared parameters of a template together with the constraints that
/// span them and the edge-case valuations every parameter set must contain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub parameters: Vec<ParameterSpec>,
    #[serde(default)]
    pub relations: Vec<Relation>,
    #[serde(default)]
    pub edge_seeds: Vec<ParameterValuation>,
}

impl ParameterSpace {
    pub fn new(parameters: Vec<ParameterSpec>, relations: Vec<Relation>) -> Self {
        Self {
            parameters,
            relations,
            edge_seeds: Vec::new(),
        }
    }

    pub fn with_edge_seeds(mut self, seeds: Vec<ParameterValuation>) -> Self {
        self.edge_seeds = seeds;
        self
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.parameters.iter().map(|p| p.name.clone()).collect()
    }

    /// Structural validation: unique names, usable domains, relations over
    /// declared names only, and admissible edge seeds.
    pub fn validate(&self) -> Result<(), TemplateError> {
        let malformed = |reason: String| TemplateError::MalformedSpec {
            location: "params".into(),
            reason,
        };
        let mut seen = BTreeSet::new();
        for p in &self.parameters {
            p.validate().map_err(malformed)?;
            if !seen.insert(p.name.as_str()) {
                return Err(malformed(format!("parameter `{}` declared twice", p.name)));
            }
        }
        for r in &self.relations {
            if let Some(unknown) = r.names().into_iter().find(|n| !seen.contains(n.as_str())) {
                return Err(malformed(format!(
                    "relation `{r}` references undeclared parameter `{unknown}`"
                )));
            }
        }
        let mut distinct = HashSet::new();
        for seed in &self.edge_seeds {
            self.check(seed).map_err(|e| {
                malformed(format!("edge seed ({seed}) is not admissible: {e}"))
            })?;
            if !distinct.insert(seed) {
                return Err(malformed(format!("edge seed ({seed}) listed twice")));
            }
        }
        Ok(())
    }

    /// Check that `v` assigns every parameter exactly once and satisfies all
    /// bounds and relations.
    pub fn check(&self, v: &ParameterValuation) -> Result<(), TemplateError> {
        let violation = |reason: String| TemplateError::ConstraintViolation { reason };
        for p in &self.parameters {
            let value = v
                .get(&p.name)
                .ok_or_else(|| violation(format!("no value for `{}`", p.name)))?;
            p.admits(value).map_err(violation)?;
        }
        if let Some((extra, _)) = v.iter().find(|(k, _)| !self.parameters.iter().any(|p| &p.name == *k)) {
            return Err(violation(format!("`{extra}` is not a declared parameter")));
        }
        for r in &self.relations {
            match r.holds(v) {
                Ok(true) => {}
                Ok(false) => return Err(violation(format!("({v}) violates `{r}`"))),
                Err(e) => return Err(violation(format!("`{r}`: {e}"))),
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> ParameterValuation {
        self.parameters
            .iter()
            .map(|p| (p.name.clone(), p.sample(rng)))
            .collect()
    }
}

/// Build a parameter set of exactly `size` pairwise-distinct valuations.
///
/// Edge seeds come first in declaration order; the rest are drawn by seeded
/// rejection sampling with a budget of `1000 * size` draws. The result is a
/// pure function of `(space, size, seed)`.
pub fn generate_parameter_set(
    space: &ParameterSpace,
    size: usize,
    seed: u64,
) -> Result<Vec<ParameterValuation>, TemplateError> {
    space.validate()?;
    if size == 0 {
        return Err(TemplateError::MalformedSpec {
            location: "params".into(),
            reason: "parameter set size must be positive".into(),
        });
    }
    if size < space.edge_seeds.len() {
        return Err(TemplateError::MalformedSpec {
            location: "params".into(),
            reason: format!(
                "set size {size} is smaller than the {} declared edge seeds",
                space.edge_seeds.len()
            ),
        });
    }

    let mut out: Vec<ParameterValuation> = space.edge_seeds.clone();
    let mut seen: HashSet<ParameterValuation> = out.iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = SAMPLING_BUDGET_PER_ITEM.saturating_mul(size);
    let mut attempts = 0;
    while out.len() < size {
        if attempts >= budget {
            return Err(TemplateError::InfeasibleConstraints {
                requested: size,
                found: out.len(),
                attempts,
            });
        }
        attempts += 1;
        let candidate = space.sample(&mut rng);
        if seen.contains(&candidate) || space.check(&candidate).is_err() {
            continue;
        }
        seen.insert(candidate.clone());
        out.push(candidate);
    }
    Ok(out)
}
