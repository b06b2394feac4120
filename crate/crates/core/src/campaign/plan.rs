use std::sync::Arc;

use serde::Serialize;

use super::{CampaignConfig, CampaignError};
use crate::corpus::TemplateBundle;
use crate::gateway::{build_prompt, ModelConfig};
use crate::hash::{self, hash64, HashPart};
use crate::oracle::{instantiate_oracle, ConcreteOracle};
use crate::par::Executor;
use crate::template::{generate_parameter_set, instantiate_question, QuestionInstance};

/// One model at one temperature.
#[derive(Debug, Clone)]
pub struct PlannedConfiguration {
    pub key: String,
    pub model: ModelConfig,
}

#[derive(Debug)]
pub struct PlannedInstance {
    pub question: QuestionInstance,
    pub prompt: Arc<str>,
    pub oracle: ConcreteOracle,
}

#[derive(Debug)]
pub struct PlannedTemplate {
    pub bundle: TemplateBundle,
    pub instances: Vec<PlannedInstance>,
}

/// Indices into the plan's configurations, templates, instances and rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Job {
    pub configuration: u32,
    pub template: u32,
    pub instance: u32,
    pub round: u32,
}

/// Stable identity of a job, as persisted in run records.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, serde::Deserialize)]
pub struct JobKey {
    pub configuration: String,
    pub template_id: String,
    pub instance_index: usize,
    pub round: usize,
}

/// Every job of a campaign with the shared material it needs.
///
/// Jobs are ordered configuration-major, then template, instance and round;
/// prompts and oracles are built once per question instance and shared by
/// all configurations and rounds.
#[derive(Debug)]
pub struct CampaignPlan {
    pub configurations: Vec<PlannedConfiguration>,
    pub templates: Vec<PlannedTemplate>,
    pub instances: usize,
    pub rounds: usize,
    pub fingerprint: u64,
}

impl CampaignPlan {
    pub fn len(&self) -> usize {
        self.configurations.len() * self.templates.len() * self.instances * self.rounds
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn jobs(&self) -> impl Iterator<Item = Job> + '_ {
        let (c, t, m, n) = (
            self.configurations.len() as u32,
            self.templates.len() as u32,
            self.instances as u32,
            self.rounds as u32,
        );
        (0..c).flat_map(move |configuration| {
            (0..t).flat_map(move |template| {
                (0..m).flat_map(move |instance| {
                    (0..n).map(move |round| Job {
                        configuration,
                        template,
                        instance,
                        round,
                    })
                })
            })
        })
    }

    pub fn instance(&self, job: Job) -> &PlannedInstance {
        &self.templates[job.template as usize].instances[job.instance as usize]
    }

    pub fn bundle(&self, job: Job) -> &TemplateBundle {
        &self.templates[job.template as usize].bundle
    }

    pub fn configuration(&self, job: Job) -> &PlannedConfiguration {
        &self.configurations[job.configuration as usize]
    }

    pub fn key(&self, job: Job) -> JobKey {
        JobKey {
            configuration: self.configuration(job).key.clone(),
            template_id: self.bundle(job).question.id.clone(),
            instance_index: job.instance as usize,
            round: job.round as usize,
        }
    }

    pub fn template_ids(&self) -> Vec<String> {
        self.templates.iter().map(|t| t.bundle.question.id.clone()).collect()
    }
}

/// Hash over everything that determines job identities and verdicts.
/// Worker count and output location are deliberately excluded.
pub fn config_fingerprint(config: &CampaignConfig, bundles: &[TemplateBundle]) -> u64 {
    let mut semantic = config.clone();
    semantic.parallelism = 0;
    semantic.output_dir = Default::default();
    semantic.corpus.root = Default::default();
    let config_json = serde_json::to_string(&semantic).expect("config serialises");
    let mut parts = vec![HashPart::Str(&config_json)];
    let bundle_json: Vec<String> = bundles
        .iter()
        .map(|b| {
            serde_json::to_string(&(
                &b.question.id,
                &b.question.prompt_template,
                &b.question.space,
                &b.oracle,
            ))
            .expect("bundle serialises")
        })
        .collect();
    parts.extend(bundle_json.iter().map(|s| HashPart::Str(s)));
    hash64(&parts)
}

/// Expand a config over loaded bundles.
///
/// Each template's M valuations come from `hash64(campaign_seed, id)`, so
/// every configuration sees the same question instances.
pub fn plan_campaign(
    config: &CampaignConfig,
    bundles: Vec<TemplateBundle>,
    executor: &Executor,
) -> Result<CampaignPlan, CampaignError> {
    config.validate()?;
    if bundles.is_empty() {
        return Err(CampaignError::Config("the corpus selection contains no templates".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for b in &bundles {
        if !seen.insert(b.id()) {
            return Err(CampaignError::Config(format!("template {} selected twice", b.id())));
        }
    }
    let fingerprint = config_fingerprint(config, &bundles);
    let configurations = config
        .configurations()
        .into_iter()
        .map(|(key, model)| PlannedConfiguration { key, model })
        .collect();

    let instances = executor.map(&bundles, |b| plan_template(config, b));
    let templates = bundles
        .into_iter()
        .zip(instances)
        .map(|(bundle, instances)| Ok(PlannedTemplate { bundle, instances: instances? }))
        .collect::<Result<Vec<_>, CampaignError>>()?;

    Ok(CampaignPlan {
        configurations,
        templates,
        instances: config.instances,
        rounds: config.rounds,
        fingerprint,
    })
}

fn plan_template(config: &CampaignConfig, b: &TemplateBundle) -> Result<Vec<PlannedInstance>, CampaignError> {
    let template = &b.question;
    let bundle_error = |source| CampaignError::Bundle {
        id: template.id.clone(),
        source,
    };
    let seed = hash::template_seed(config.campaign_seed, &template.id);
    let valuations = generate_parameter_set(&template.space, config.instances, seed).map_err(bundle_error)?;
    valuations
        .iter()
        .enumerate()
        .map(|(index, valuation)| {
            let question = instantiate_question(template, index, valuation).map_err(bundle_error)?;
            let oracle = instantiate_oracle(
                template,
                &b.oracle,
                index,
                valuation,
                config.fuzz_trials.unwrap_or(b.oracle.default_fuzz_trials),
                hash::fuzz_seed(config.campaign_seed, &template.id, index),
                config.limits,
            )
            .map_err(bundle_error)?;
            Ok(PlannedInstance {
                prompt: build_prompt(&question).into(),
                question,
                oracle,
            })
        })
        .collect()
}
