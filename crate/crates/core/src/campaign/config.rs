use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::CampaignError;
use crate::exec::wire::parse_lint_rules;
use crate::exec::{
    ExecutionBackend, FailureKind, ScriptedRun, Stage, StubBackend, StubScript, SubprocessBackend,
    SubprocessConfig,
};
use crate::gateway::{Adapter, ModelConfig, RetryPolicy, Temperature};
use crate::oracle::ResourceLimits;

/// A campaign description, normally read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub campaign_seed: u64,
    /// Question instances per template (M).
    pub instances: usize,
    /// Rounds per question instance (N).
    pub rounds: usize,
    /// Differential trials per instance; `None` keeps each bundle's default.
    #[serde(default)]
    pub fuzz_trials: Option<u32>,
    /// Zero fuzz trials skips differential testing and is refused unless set.
    #[serde(default)]
    pub allow_zero_fuzz: bool,
    /// Worker threads; 0 means one per core.
    #[serde(default)]
    pub parallelism: usize,
    pub output_dir: PathBuf,
    pub corpus: CorpusSelector,
    #[serde(default)]
    pub limits: ResourceLimits,
    pub backend: BackendConfig,
    pub models: Vec<ModelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSelector {
    pub root: PathBuf,
    /// Template ids to include; all bundles under the root when absent.
    #[serde(default)]
    pub templates: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Subprocess {
        command: Vec<String>,
        /// Concurrent runner processes; 0 follows `parallelism`.
        #[serde(default)]
        max_concurrent: usize,
        #[serde(default)]
        lint_rules: Option<PathBuf>,
        #[serde(default = "default_grace")]
        startup_grace_seconds: f64,
    },
    Stub {
        #[serde(default)]
        script: StubConfig,
    },
}

fn default_grace() -> f64 {
    30.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StubConfig {
    AllOk,
    #[default]
    ReferenceMatch,
    FailAt {
        stage: Stage,
        #[serde(default)]
        failure: Option<FailureKind>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    pub temperatures: Vec<Temperature>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub retry: RetryPolicy,
    pub adapter: Adapter,
}

fn default_max_tokens() -> u32 {
    1024
}

impl ModelEntry {
    /// One model configuration per temperature, keyed `<name>@t=<temperature>`.
    pub fn configurations(&self) -> Vec<(String, ModelConfig)> {
        self.temperatures
            .iter()
            .map(|&temperature| {
                (
                    format!("{}@t={temperature}", self.name),
                    ModelConfig {
                        model_name: self.name.clone(),
                        adapter: self.adapter.clone(),
                        temperature,
                        max_tokens: self.max_tokens,
                        retry: self.retry.clone(),
                    },
                )
            })
            .collect()
    }
}

impl CampaignConfig {
    /// Parse a TOML config; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path).map_err(|source| CampaignError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: CampaignConfig = toml::from_str(&text).map_err(|e| CampaignError::Config(format!(
            "{}: {}",
            path.display(),
            e.message()
        )))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, CampaignError> {
        let config: CampaignConfig =
            toml::from_str(text).map_err(|e| CampaignError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.corpus.root);
        if let BackendConfig::Subprocess { lint_rules: Some(p), .. } = &mut self.backend {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: String| Err(CampaignError::Config(m));
        if self.instances == 0 || self.rounds == 0 {
            return bad(format!(
                "instances and rounds must be >= 1, got {} and {}",
                self.instances, self.rounds
            ));
        }
        if self.fuzz_trials == Some(0) && !self.allow_zero_fuzz {
            return bad("fuzz_trials = 0 disables differential testing; set allow_zero_fuzz = true to permit it".into());
        }
        self.limits.validate().map_err(CampaignError::Config)?;
        if self.models.is_empty() {
            return bad("at least one [[models]] entry is required".into());
        }
        let mut keys = BTreeSet::new();
        for m in &self.models {
            if m.temperatures.is_empty() {
                return bad(format!("model {} lists no temperatures", m.name));
            }
            if m.retry.max_attempts == 0 {
                return bad(format!("model {}: retry.max_attempts must be >= 1", m.name));
            }
            for (key, _) in m.configurations() {
                if !keys.insert(key.clone()) {
                    return bad(format!("configuration {key} appears twice"));
                }
            }
        }
        if let BackendConfig::Subprocess { command, startup_grace_seconds, .. } = &self.backend {
            if command.is_empty() {
                return bad("backend.command must not be empty".into());
            }
            if !(startup_grace_seconds.is_finite() && *startup_grace_seconds >= 0.0) {
                return bad("backend.startup_grace_seconds must be >= 0".into());
            }
        }
        Ok(())
    }

    /// Model configurations in declaration order.
    pub fn configurations(&self) -> Vec<(String, ModelConfig)> {
        self.models.iter().flat_map(ModelEntry::configurations).collect()
    }

    pub fn build_backend(&self) -> Result<Box<dyn ExecutionBackend>, CampaignError> {
        Ok(match &self.backend {
            BackendConfig::Stub { script } => Box::new(StubBackend::new(match script {
                StubConfig::AllOk => StubScript::all_ok(),
                StubConfig::ReferenceMatch => StubScript::reference_match(),
                StubConfig::FailAt { stage, failure } => {
                    StubScript::default_run(ScriptedRun::failing_at(*stage, *failure))
                }
            })),
            BackendConfig::Subprocess {
                command,
                max_concurrent,
                lint_rules,
                startup_grace_seconds,
            } => {
                let lint_rules = match lint_rules {
                    Some(path) => parse_lint_rules(&std::fs::read_to_string(path).map_err(|source| {
                        CampaignError::Io {
                            path: path.clone(),
                            source,
                        }
                    })?),
                    None => Vec::new(),
                };
                let workers = crate::par::Executor::new(self.parallelism).workers();
                let mut config = SubprocessConfig::new(command.clone());
                config.max_concurrent = if *max_concurrent == 0 { workers } else { *max_concurrent };
                config.lint_rules = lint_rules;
                config.startup_grace = Duration::from_secs_f64(*startup_grace_seconds);
                Box::new(SubprocessBackend::new(config).map_err(|e| CampaignError::Config(e.to_string()))?)
            }
        })
    }
}
