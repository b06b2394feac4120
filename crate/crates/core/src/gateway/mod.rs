//! Prompt assembly, model adapters, and candidate-code extraction.
//!
//! Three adapters sit behind one [`ModelClient`]: an HTTP chat-completion
//! client, a local command (prompt on stdin, completion on stdout), and a
//! deterministic mock that derives its answers from the bundle's model
//! solution. Response text is returned untouched; extraction is a separate
//! step so that the raw text can be persisted byte-for-byte.

mod extract;
mod http;
mod limit;
mod local;
pub mod mock;

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::oracle::OracleTemplate;
use crate::template::QuestionInstance;

pub use extract::{extract_code, fenced_blocks};
pub use limit::TokenBucket;
pub use mock::{mock_generate, DefectKind, DefectProfile};

/// Prefix shipped with the framework; asks for fenced Python code.
pub const DEFAULT_PROMPT_PREFIX: &str = include_str!("../../../../config/prompt_prefix.txt");

/// Prompt for one question instance: a fixed prefix followed by the rendered
/// question. Never carries sample solutions, hints, or earlier answers.
pub fn build_prompt(instance: &QuestionInstance) -> String {
    build_prompt_with(DEFAULT_PROMPT_PREFIX, instance)
}

pub fn build_prompt_with(prefix: &str, instance: &QuestionInstance) -> String {
    let mut prompt = String::with_capacity(prefix.len() + instance.rendered_prompt.len());
    prompt.push_str(prefix);
    prompt.push_str(&instance.rendered_prompt);
    prompt
}

/// Sampling temperature; `Default` omits the field from requests so the
/// provider's own default applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperature {
    Value(f64),
    Default,
}

impl Temperature {
    pub fn value(self) -> Option<f64> {
        match self {
            Temperature::Value(t) => Some(t),
            Temperature::Default => None,
        }
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Temperature::Value(t) => write!(f, "{t}"),
            Temperature::Default => f.write_str("default"),
        }
    }
}

impl Serialize for Temperature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Temperature::Value(t) => s.serialize_f64(*t),
            Temperature::Default => s.serialize_str("default"),
        }
    }
}

impl<'de> Deserialize<'de> for Temperature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) if t >= 0.0 && t.is_finite() => Ok(Temperature::Value(t)),
            Raw::Num(t) => Err(serde::de::Error::custom(format!(
                "temperature must be a finite number >= 0, got {t}"
            ))),
            Raw::Text(s) if s == "default" => Ok(Temperature::Default),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "temperature must be a number or \"default\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    #[serde(default = "RetryPolicy::default_attempts")]
    pub max_attempts: u32,
    /// Delay before attempt `k + 1` is `backoff_ms[min(k - 1, len - 1)]`.
    #[serde(default = "RetryPolicy::default_backoff")]
    pub backoff_ms: Vec<u64>,
}

impl RetryPolicy {
    fn default_attempts() -> u32 {
        4
    }

    fn default_backoff() -> Vec<u64> {
        vec![1_000, 4_000, 16_000]
    }

    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt <= 1 || self.backoff_ms.is_empty() {
            return Duration::ZERO;
        }
        let k = (attempt as usize - 2).min(self.backoff_ms.len() - 1);
        Duration::from_millis(self.backoff_ms[k])
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: Self::default_attempts(),
            backoff_ms: Self::default_backoff(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Adapter {
    HttpChat {
        endpoint: String,
        /// Name of the environment variable holding the bearer token.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
        /// Token-bucket refill rate; absent means unpaced.
        #[serde(default)]
        requests_per_second: Option<f64>,
        #[serde(default = "default_request_timeout")]
        timeout_seconds: u64,
    },
    LocalCommand {
        command: Vec<String>,
    },
    Mock {
        profile: DefectProfile,
    },
}

fn default_in_flight() -> usize {
    1
}

fn default_request_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_name: String,
    pub adapter: Adapter,
    pub temperature: Temperature,
    pub max_tokens: u32,
    #[serde(default)]
    pub retry: RetryPolicy,
}

/// Full model output plus transport bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct RawResponse {
    pub text: String,
    pub latency: Duration,
    pub attempt_count: u32,
    pub transport_metadata: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("{adapter} request failed after {attempts} attempt(s): {message}")]
    Exhausted {
        adapter: &'static str,
        attempts: u32,
        message: String,
    },
    #[error("{adapter} request rejected: {message}")]
    Rejected {
        adapter: &'static str,
        message: String,
    },
    #[error("adapter misconfigured: {0}")]
    Config(String),
}

/// What the mock adapter needs beyond the prompt text.
#[derive(Debug, Clone, Copy)]
pub struct QueryContext<'a> {
    pub instance: &'a QuestionInstance,
    pub oracle: &'a OracleTemplate,
    pub round: usize,
}

pub(crate) enum Attempt {
    Done(String, serde_json::Map<String, serde_json::Value>),
    Retry(String),
    Fail(String),
}

enum Transport {
    Http(http::HttpChat),
    Local(local::LocalCommand),
    Mock(DefectProfile),
}

/// Thread-safe handle for one model configuration.
pub struct ModelClient {
    config: ModelConfig,
    transport: Transport,
}

impl fmt::Debug for ModelClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelClient").field("config", &self.config).finish()
    }
}

impl ModelClient {
    pub fn new(config: ModelConfig) -> Result<Self, TransportError> {
        if config.retry.max_attempts == 0 {
            return Err(TransportError::Config("retry.max_attempts must be >= 1".into()));
        }
        let transport = match &config.adapter {
            Adapter::HttpChat {
                endpoint,
                api_key_env,
                max_in_flight,
                requests_per_second,
                timeout_seconds,
            } => Transport::Http(http::HttpChat::new(
                endpoint,
                api_key_env.as_deref(),
                *max_in_flight,
                *requests_per_second,
                Duration::from_secs(*timeout_seconds),
            )?),
            Adapter::LocalCommand { command } => Transport::Local(local::LocalCommand::new(command.clone())?),
            Adapter::Mock { profile } => Transport::Mock(profile.clone()),
        };
        Ok(Self { config, transport })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Send one prompt, retrying transient failures per the retry policy.
    pub fn query(&self, prompt: &str, ctx: QueryContext<'_>) -> Result<RawResponse, TransportError> {
        let started = Instant::now();
        let adapter = self.adapter_name();
        if let Transport::Mock(profile) = &self.transport {
            return Ok(RawResponse {
                text: mock_generate(profile, ctx.instance, ctx.oracle, ctx.round),
                latency: started.elapsed(),
                attempt_count: 1,
                transport_metadata: serde_json::Map::new(),
            });
        }
        let mut last = String::new();
        for attempt in 1..=self.config.retry.max_attempts {
            std::thread::sleep(self.config.retry.delay_before(attempt));
            let outcome = match &self.transport {
                Transport::Http(h) => h.send(&self.config, prompt),
                Transport::Local(l) => l.send(prompt),
                Transport::Mock(_) => unreachable!(),
            };
            match outcome {
                Attempt::Done(text, transport_metadata) => {
                    return Ok(RawResponse {
                        text,
                        latency: started.elapsed(),
                        attempt_count: attempt,
                        transport_metadata,
                    })
                }
                Attempt::Retry(message) => {
                    tracing::warn!(model = %self.config.model_name, attempt, %message, "transient model failure");
                    last = message;
                }
                Attempt::Fail(message) => return Err(TransportError::Rejected { adapter, message }),
            }
        }
        Err(TransportError::Exhausted {
            adapter,
            attempts: self.config.retry.max_attempts,
            message: last,
        })
    }

    fn adapter_name(&self) -> &'static str {
        match self.transport {
            Transport::Http(_) => "http_chat",
            Transport::Local(_) => "local_command",
            Transport::Mock(_) => "mock",
        }
    }
}

/// One-shot form of [`ModelClient::query`].
pub fn query_model(config: &ModelConfig, prompt: &str, ctx: QueryContext<'_>) -> Result<RawResponse, TransportError> {
    ModelClient::new(config.clone())?.query(prompt, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::fixtures::{sum_even_template, pair};
    use crate::template::instantiate_question;

    #[test]
    fn sum_even_prompt_is_prefix_plus_question() {
        let t = sum_even_template();
        let q = instantiate_question(&t, 0, &pair(1, 8)).unwrap();
        let prompt = build_prompt(&q);
        assert!(prompt.starts_with(DEFAULT_PROMPT_PREFIX));
        assert!(prompt.ends_with("from index 1 to index 8, both inclusive. If no even integers exist in the specified range, the function should return 0."));
        assert!(DEFAULT_PROMPT_PREFIX.contains("```"));
        assert_eq!(build_prompt_with("", &q), q.rendered_prompt);
    }

    #[test]
    fn prompts_differ_only_in_substituted_values() {
        let t = sum_even_template();
        let a = build_prompt(&instantiate_question(&t, 0, &pair(1, 8)).unwrap());
        let b = build_prompt(&instantiate_question(&t, 1, &pair(3, 9)).unwrap());
        let diff: Vec<(char, char)> = a.chars().zip(b.chars()).filter(|(x, y)| x != y).collect();
        assert_eq!(a.len(), b.len());
        assert_eq!(diff, vec![('1', '3'), ('8', '9')]);
    }

    #[test]
    fn temperature_serde() {
        #[derive(Deserialize)]
        struct W {
            t: Temperature,
        }
        let w: W = toml::from_str("t = 0").unwrap();
        assert_eq!(w.t, Temperature::Value(0.0));
        let w: W = toml::from_str("t = \"default\"").unwrap();
        assert_eq!(w.t, Temperature::Default);
        assert!(toml::from_str::<W>("t = -1.0").is_err());
        assert!(toml::from_str::<W>("t = \"hot\"").is_err());
        assert_eq!(Temperature::Default.value(), None);
    }

    #[test]
    fn retry_schedule() {
        let r = RetryPolicy {
            max_attempts: 5,
            backoff_ms: vec![10, 20],
        };
        assert_eq!(r.delay_before(1), Duration::ZERO);
        assert_eq!(r.delay_before(2), Duration::from_millis(10));
        assert_eq!(r.delay_before(3), Duration::from_millis(20));
        assert_eq!(r.delay_before(5), Duration::from_millis(20));
    }
}
