use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use nbeval::campaign::{self, CampaignConfig, CampaignError, StartMode};
use nbeval::corpus::{self, CorpusError};
use nbeval::exec::wire::parse_lint_rules;
use nbeval::exec::{ExecutionBackend, StubBackend, StubScript, SubprocessBackend, SubprocessConfig};
use nbeval::oracle::ResourceLimits;
use nbeval::report::emit_reports;
use nbeval::scoring::{score, to_decimal};
use nbeval::template::validate_bundle;
use nbeval::Executor;

const EXIT_INCOMPLETE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "nbeval", version, about = "Neighbourhood-based evaluation of code-generating models")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a campaign in an empty output directory.
    Run { config: PathBuf },
    /// Continue a campaign, running only jobs without a record.
    Resume { config: PathBuf },
    /// Print per-template scores of a finished campaign.
    Score { output_dir: PathBuf },
    /// Write report files for a finished campaign.
    Report {
        output_dir: PathBuf,
        /// Where to write; defaults to `<output_dir>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundles of a corpus.
    List {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Check that every bundle's model solution passes its own oracle.
    Validate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Restrict to these template ids.
        #[arg(long = "template")]
        templates: Vec<String>,
        #[arg(long, value_enum, default_value_t = BackendKind::Stub)]
        backend: BackendKind,
        /// Runner command line for `--backend subprocess`, after `--`.
        #[arg(last = true)]
        runner: Vec<String>,
        #[arg(long)]
        lint_rules: Option<PathBuf>,
        /// Check only the first N valuations of each parameter set.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Stub,
    Subprocess,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| filter.into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            let config_like = e.chain().any(|c| {
                c.downcast_ref::<CorpusError>().is_some()
                    || matches!(
                        c.downcast_ref::<CampaignError>(),
                        Some(
                            CampaignError::Config(_)
                                | CampaignError::Corpus(_)
                                | CampaignError::Bundle { .. }
                                | CampaignError::ConfigMismatch { .. }
                                | CampaignError::AlreadyStarted { .. }
                        )
                    )
            });
            if matches!(e.downcast_ref::<CampaignError>(), Some(CampaignError::Incomplete { .. })) {
                ExitCode::from(EXIT_INCOMPLETE)
            } else if config_like {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config } => run(&config, StartMode::Fresh),
        Command::Resume { config } => run(&config, StartMode::Resume),
        Command::Score { output_dir } => score_cmd(&output_dir),
        Command::Report { output_dir, out } => {
            let results = campaign::collect_results(&output_dir)?;
            let out = out.unwrap_or_else(|| output_dir.join("report"));
            for path in emit_reports(&results, &out)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::List { corpus } => {
            let root = corpus.unwrap_or_else(corpus::shipped_corpus_root);
            let manifest = corpus::list_templates(&root)?;
            for e in &manifest.entries {
                println!("{}\t{}", e.id, e.groups.join(","));
            }
            for d in &manifest.defects {
                eprintln!("unloadable bundle {}: {}", d.id, d.error);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate {
            corpus,
            templates,
            backend,
            runner,
            lint_rules,
            samples,
            parallelism,
        } => {
            let root = corpus.unwrap_or_else(corpus::shipped_corpus_root);
            let executor = Executor::new(parallelism);
            let backend: Box<dyn ExecutionBackend> = match backend {
                BackendKind::Stub => Box::new(StubBackend::new(StubScript::reference_match())),
                BackendKind::Subprocess => {
                    anyhow::ensure!(!runner.is_empty(), "--backend subprocess needs a runner command after `--`");
                    let mut config = SubprocessConfig::new(runner);
                    config.max_concurrent = executor.workers();
                    config.startup_grace = Duration::from_secs(30);
                    if let Some(path) = lint_rules {
                        let text = std::fs::read_to_string(&path)
                            .with_context(|| format!("reading {}", path.display()))?;
                        config.lint_rules = parse_lint_rules(&text);
                    }
                    Box::new(SubprocessBackend::new(config)?)
                }
            };
            let ids = (!templates.is_empty()).then_some(templates);
            validate(&root, ids.as_deref(), backend.as_ref(), samples, &executor)
        }
    }
}

fn run(path: &Path, mode: StartMode) -> Result<ExitCode> {
    let config = CampaignConfig::load(path)?;
    let outcome = campaign::execute(&config, mode)?;
    println!(
        "planned {} jobs; {} already recorded; {} attempted, {} recorded, {} unanswered",
        outcome.planned,
        outcome.previously_recorded,
        outcome.run.attempted,
        outcome.run.recorded,
        outcome.run.unanswered
    );
    if outcome.is_complete() {
        println!("campaign complete: {}", config.output_dir.display());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("campaign incomplete; run `nbeval resume {}` to retry", path.display());
        Ok(ExitCode::from(EXIT_INCOMPLETE))
    }
}

fn score_cmd(output_dir: &Path) -> Result<ExitCode> {
    let results = campaign::collect_results(output_dir)?;
    for c in &results {
        println!("{}", c.configuration);
        for t in &c.templates {
            let s = score(&t.matrix);
            println!("  {:<32} {}  {}", s.template_id, to_decimal(s.corr_sc, 4), s.category);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(
    root: &Path,
    ids: Option<&[String]>,
    backend: &dyn ExecutionBackend,
    samples: Option<usize>,
    executor: &Executor,
) -> Result<ExitCode> {
    let bundles = corpus::load_corpus(root, ids)?;
    let mut clean = true;
    for b in &bundles {
        let mut valuations = b
            .question
            .parameter_set(0)
            .with_context(|| format!("generating parameters for {}", b.id()))?;
        if let Some(n) = samples {
            valuations.truncate(n);
        }
        let report = validate_bundle(&b.question, &b.oracle, &valuations, backend, ResourceLimits::default(), executor)
            .with_context(|| format!("validating {}", b.id()))?;
        if report.is_clean() {
            println!("ok    {} ({} valuations)", report.template_id, report.checked);
        } else {
            clean = false;
            println!("FAIL  {} ({} of {} valuations)", report.template_id, report.defects.len(), report.checked);
            for d in report.defects.iter().take(5) {
                println!("      [{}] {}: {} {}", d.instance_index, d.valuation, d.category, d.detail);
            }
        }
    }
    Ok(if clean { ExitCode::SUCCESS } else { ExitCode::from(EXIT_INCOMPLETE) })
}

/// The error chain joined by `: `, skipping causes whose text the previous
/// message already includes.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    let mut last = out.clone();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !last.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
        last = text;
    }
    out
}
