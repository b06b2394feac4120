//! Planning, running, persisting and resuming evaluation campaigns.
//!
//! A campaign crosses model configurations (model x temperature) with
//! templates, question instances and rounds. Every job is: build prompt,
//! query the model, extract code, judge it, persist one [`RunRecord`]. Jobs
//! run on an [`Executor`] in batches; a single writer appends each batch's
//! records in plan order, so a run that is interrupted and resumed leaves the
//! same files as an uninterrupted one.

mod config;
mod plan;
mod store;

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

pub use config::{BackendConfig, CampaignConfig, CorpusSelector, ModelEntry, StubConfig};
pub use plan::{config_fingerprint, plan_campaign, CampaignPlan, Job, JobKey, PlannedConfiguration, PlannedInstance, PlannedTemplate};
pub use store::{load_output, read_records, CampaignStore, IndexFile, RunRecord, TimingRecord, UnansweredRecord};

use crate::corpus::{load_corpus, CorpusError};
use crate::exec::ExecutionBackend;
use crate::gateway::{extract_code, ModelClient, QueryContext};
use crate::oracle::{evaluate_response, Category};
use crate::par::Executor;
use crate::report::{ConfigurationResults, TemplateResults};
use crate::scoring::VerdictMatrix;
use crate::template::{ParameterValuation, TemplateError};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("template {id}: {source}")]
    Bundle {
        id: String,
        #[source]
        source: TemplateError,
    },
    #[error("output directory belongs to a different campaign (fingerprint {found}, this config is {expected})")]
    ConfigMismatch { expected: String, found: String },
    #[error("output directory {} already holds records; use resume", path.display())]
    AlreadyStarted { path: PathBuf },
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {reason}", path.display())]
    Corrupt { path: PathBuf, reason: String },
    #[error("campaign incomplete: {missing} job(s) without a record")]
    Incomplete { missing: usize },
}

/// Jobs of `plan` that have no record in `completed`, in plan order.
pub fn resume_campaign(plan: &CampaignPlan, completed: &HashSet<JobKey>) -> Vec<Job> {
    if completed.is_empty() {
        return plan.jobs().collect();
    }
    plan.jobs().filter(|&job| !completed.contains(&plan.key(job))).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub attempted: usize,
    pub recorded: usize,
    pub unanswered: usize,
}

enum JobResult {
    Answered(Box<RunRecord>, TimingRecord),
    Unanswered(UnansweredRecord),
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

fn run_job(plan: &CampaignPlan, clients: &[ModelClient], backend: &dyn ExecutionBackend, job: Job) -> JobResult {
    let key = plan.key(job);
    let instance = plan.instance(job);
    let bundle = plan.bundle(job);
    let started = now_ms();
    let ctx = QueryContext {
        instance: &instance.question,
        oracle: &bundle.oracle,
        round: job.round as usize,
    };
    let response = match clients[job.configuration as usize].query(&instance.prompt, ctx) {
        Ok(r) => r,
        Err(e) => {
            return JobResult::Unanswered(UnansweredRecord {
                key,
                reason: e.to_string(),
                at_unix_ms: now_ms(),
            })
        }
    };
    let extracted = extract_code(&response.text, Some(&instance.oracle.function_name));
    let response_ref = format!(
        "{}/{}/{}/{}",
        key.configuration, key.template_id, key.instance_index, key.round
    );
    let verdict = match evaluate_response(extracted, &instance.oracle, backend, response_ref) {
        Ok(v) => v,
        Err(e) => {
            return JobResult::Unanswered(UnansweredRecord {
                key,
                reason: format!("evaluation failed: {e}"),
                at_unix_ms: now_ms(),
            })
        }
    };
    let timing = TimingRecord {
        key: key.clone(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        latency_ms: response.latency.as_millis(),
    };
    JobResult::Answered(
        Box::new(RunRecord {
            key,
            valuation: instance.question.valuation.clone(),
            extracted_source: extracted.map(str::to_string),
            response: response.text,
            verdict,
            attempts: response.attempt_count,
            transport: response.transport_metadata,
        }),
        timing,
    )
}

/// Execute `jobs` and persist their outcomes. Transport and evaluation
/// failures are logged as unanswered and left for a later resume.
pub fn run_campaign(
    plan: &CampaignPlan,
    jobs: &[Job],
    clients: &[ModelClient],
    backend: &dyn ExecutionBackend,
    executor: &Executor,
    store: &mut CampaignStore,
) -> Result<RunSummary, CampaignError> {
    assert_eq!(clients.len(), plan.configurations.len(), "one client per configuration");
    let batch = (executor.workers() * 16).max(64);
    let mut summary = RunSummary::default();
    for chunk in jobs.chunks(batch) {
        let results = executor.map(chunk, |&job| run_job(plan, clients, backend, job));
        for (job, result) in chunk.iter().zip(results) {
            summary.attempted += 1;
            let c = job.configuration as usize;
            match result {
                JobResult::Answered(record, timing) => {
                    store.append(c, &record, &timing)?;
                    summary.recorded += 1;
                }
                JobResult::Unanswered(u) => {
                    tracing::warn!(configuration = %u.key.configuration, template = %u.key.template_id,
                        instance = u.key.instance_index, round = u.key.round, reason = %u.reason, "job unanswered");
                    store.append_unanswered(c, &u)?;
                    summary.unanswered += 1;
                }
            }
        }
        store.flush()?;
        tracing::info!(done = summary.attempted, of = jobs.len(), "batch persisted");
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartMode {
    /// Refuse an output directory that already holds records.
    Fresh,
    /// Continue whatever the output directory holds.
    Resume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CampaignOutcome {
    pub planned: usize,
    pub previously_recorded: usize,
    pub run: RunSummary,
}

impl CampaignOutcome {
    pub fn is_complete(&self) -> bool {
        self.previously_recorded + self.run.recorded == self.planned
    }
}

/// Load the corpus, plan, and run (or resume) a campaign end to end.
pub fn execute(config: &CampaignConfig, mode: StartMode) -> Result<CampaignOutcome, CampaignError> {
    let executor = Executor::new(config.parallelism);
    let bundles = load_corpus(&config.corpus.root, config.corpus.templates.as_deref())?;
    let plan = plan_campaign(config, bundles, &executor)?;
    if mode == StartMode::Fresh {
        if let Some(index) = IndexFile::read(&config.output_dir)? {
            let any = index
                .configurations
                .iter()
                .any(|c| std::fs::metadata(config.output_dir.join(&c.records)).is_ok_and(|m| m.len() > 0));
            if any {
                return Err(CampaignError::AlreadyStarted {
                    path: config.output_dir.clone(),
                });
            }
        }
    }
    let mut store = CampaignStore::open(&config.output_dir, &plan, config.campaign_seed)?;
    let completed = store.completed()?;
    let jobs = resume_campaign(&plan, &completed);
    let clients = plan
        .configurations
        .iter()
        .map(|c| ModelClient::new(c.model.clone()).map_err(|e| CampaignError::Config(format!("{}: {e}", c.key))))
        .collect::<Result<Vec<_>, _>>()?;
    let backend = config.build_backend()?;
    tracing::info!(planned = plan.len(), remaining = jobs.len(), "starting campaign");
    let run = run_campaign(&plan, &jobs, &clients, backend.as_ref(), &executor, &mut store)?;
    Ok(CampaignOutcome {
        planned: plan.len(),
        previously_recorded: plan.len() - jobs.len(),
        run,
    })
}

/// Verdict matrices per configuration from a complete output directory.
///
/// A missing cell makes the whole campaign unscoreable
/// ([`CampaignError::Incomplete`]).
pub fn collect_results(output_dir: &std::path::Path) -> Result<Vec<ConfigurationResults>, CampaignError> {
    let (index, mut records) = load_output(output_dir)?;
    let (m, n) = (index.instances, index.rounds);
    let mut missing = 0;
    let mut out = Vec::new();
    for c in &index.configurations {
        let mut grid: BTreeMap<&str, (Vec<Option<Category>>, Vec<ParameterValuation>)> = index
            .template_ids
            .iter()
            .map(|t| (t.as_str(), (vec![None; m * n], vec![ParameterValuation::new(); m])))
            .collect();
        for r in records.remove(&c.key).unwrap_or_default() {
            let Some((cells, vals)) = grid.get_mut(r.key.template_id.as_str()) else {
                continue;
            };
            if r.key.instance_index < m && r.key.round < n {
                cells[r.key.instance_index * n + r.key.round] = Some(r.verdict.category);
                vals[r.key.instance_index] = r.valuation;
            }
        }
        let unanswered_path = output_dir.join(&c.records).with_extension("unanswered.ndjson");
        let unanswered = std::fs::read_to_string(&unanswered_path)
            .map(|s| s.lines().count() as u64)
            .unwrap_or(0);
        let mut templates = Vec::new();
        for id in &index.template_ids {
            let (cells, valuations) = grid.remove(id.as_str()).expect("grid has every template");
            missing += cells.iter().filter(|c| c.is_none()).count();
            let cells: Vec<Category> = cells.into_iter().flatten().collect();
            if cells.len() == m * n {
                let matrix = VerdictMatrix::new(id.clone(), m, n, cells).map_err(|e| CampaignError::Corrupt {
                    path: output_dir.to_path_buf(),
                    reason: e.to_string(),
                })?;
                templates.push(TemplateResults { matrix, valuations });
            }
        }
        out.push(ConfigurationResults {
            configuration: c.key.clone(),
            templates,
            unanswered,
        });
    }
    if missing > 0 {
        return Err(CampaignError::Incomplete { missing });
    }
    Ok(out)
}
