use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use tracing::{debug, warn};

use super::wire::{self, JobDescriptor};
use super::{structural_stages, BackendError, ExecutionBackend, ExecutionJob, Stage, StageOutcome};
use crate::slots::Slots;

#[derive(Debug, Clone)]
pub struct SubprocessConfig {
    /// Runner command line, e.g. `["python3", "-m", "nbeval_runner"]`.
    pub command: Vec<String>,
    pub max_concurrent: usize,
    pub lint_rules: Vec<String>,
    /// Allowance for interpreter start-up and the lint stage.
    pub startup_grace: Duration,
}

impl SubprocessConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            max_concurrent: 1,
            lint_rules: Vec::new(),
            startup_grace: Duration::from_secs(30),
        }
    }
}

/// Runs each job in a fresh sandbox-runner process.
///
/// Stages 1-3 are decided here; the runner reports stages 4-7. Wall-clock
/// limits are enforced by killing the child.
#[derive(Debug)]
pub struct SubprocessBackend {
    config: SubprocessConfig,
    slots: Slots,
}

enum Line {
    Record(String),
    Eof,
    Err(std::io::Error),
}

impl SubprocessBackend {
    pub fn new(config: SubprocessConfig) -> Result<Self, BackendError> {
        if config.command.is_empty() {
            return Err(BackendError::Unavailable("empty runner command".into()));
        }
        let slots = Slots::new(config.max_concurrent);
        Ok(Self { config, slots })
    }

    fn deadline(&self, job: &ExecutionJob) -> Duration {
        let per_stage = Duration::from_secs_f64(job.limits.wall_seconds);
        per_stage * (job.fixed_tests.len() as u32 + 1) + self.config.startup_grace
    }

    /// Stages 4-7 from one runner process.
    fn run_child(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        let descriptor = JobDescriptor::from_job(job, &self.config.lint_rules)
            .ok_or_else(|| BackendError::Protocol("job without candidate sent to runner".into()))?;
        let _slot = self.slots.acquire();

        let mut command = Command::new(&self.config.command[0]);
        command
            .args(&self.config.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            command.process_group(0);
        }
        let mut child = command
            .spawn()
            .map_err(|e| {
                BackendError::Unavailable(format!("spawning {:?}: {e}", self.config.command))
            })?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let payload = descriptor.to_json();
        let writer = std::thread::spawn(move || {
            // A runner that exits early closes the pipe; that is reported via
            // its exit status, not here.
            let _ = stdin.write_all(payload.as_bytes());
            let _ = stdin.write_all(b"\n");
        });

        let mut stderr = child.stderr.take().expect("piped stderr");
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.by_ref().take(16 * 1024).read_to_end(&mut buf);
            String::from_utf8_lossy(&buf).into_owned()
        });

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        let reader = std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let msg = match line {
                    Ok(l) => Line::Record(l),
                    Err(e) => Line::Err(e),
                };
                if tx.send(msg).is_err() {
                    return;
                }
            }
            let _ = tx.send(Line::Eof);
        });

        let started = Instant::now();
        let deadline = started + self.deadline(job);
        let mut records = Vec::new();
        let mut killed = false;
        let mut protocol_error = None;
        loop {
            let now = Instant::now();
            if now >= deadline {
                killed = true;
                kill_tree(&mut child);
                break;
            }
            match rx.recv_timeout(deadline - now) {
                Ok(Line::Record(l)) if l.trim().is_empty() => {}
                Ok(Line::Record(l)) => match wire::parse_record(&l) {
                    Ok(rec) => records.push(rec),
                    Err(e) => {
                        protocol_error.get_or_insert(e);
                    }
                },
                Ok(Line::Eof) => break,
                Ok(Line::Err(e)) => {
                    protocol_error.get_or_insert(format!("reading runner output: {e}"));
                    break;
                }
                Err(mpsc::RecvTimeoutError::Timeout) => continue,
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
            }
        }

        let status = child
            .wait()
            .map_err(|e| BackendError::Unavailable(format!("waiting for runner: {e}")))?;
        let _ = writer.join();
        if killed {
            // Grandchildren may still hold the pipes; the reader threads end
            // when they die.
            return self.wall_kill_outcome(job, records);
        }
        let _ = reader.join();
        let stderr_text = err_reader.join().unwrap_or_default();
        debug!(job = %descriptor.job_id, elapsed = ?started.elapsed(), records = records.len(), "runner finished");

        match status.code() {
            Some(wire::EXIT_OK) => {}
            Some(wire::EXIT_MALFORMED) => {
                return Err(BackendError::Protocol(format!(
                    "runner rejected descriptor: {}",
                    stderr_text.trim()
                )))
            }
            Some(code) => {
                return Err(BackendError::Internal {
                    code,
                    message: stderr_text.trim().to_string(),
                })
            }
            None => {
                return Err(BackendError::Internal {
                    code: -1,
                    message: format!("runner terminated by signal; {}", stderr_text.trim()),
                })
            }
        }
        if let Some(e) = protocol_error {
            return Err(BackendError::Protocol(e));
        }
        validate_stream(&records, job)?;
        Ok(records)
    }

    fn wall_kill_outcome(
        &self,
        job: &ExecutionJob,
        mut records: Vec<StageOutcome>,
    ) -> Result<Vec<StageOutcome>, BackendError> {
        if records.iter().any(StageOutcome::is_failed) {
            // The verdict was already decided before the kill.
            records.truncate(records.iter().position(StageOutcome::is_failed).unwrap() + 1);
            return Ok(records);
        }
        let tests_done = records.iter().filter(|r| r.stage == Stage::FixedTest).count();
        let lint_done = records.iter().any(|r| r.stage == Stage::Lint);
        if !lint_done {
            return Err(BackendError::Internal {
                code: -1,
                message: "runner exceeded the wall-clock allowance before executing code".into(),
            });
        }
        warn!(job = %job.oracle_id, "runner killed at wall-clock limit");
        let detail = format!("wall-clock limit of {}s exceeded", job.limits.wall_seconds);
        let outcome = if tests_done < job.fixed_tests.len() {
            StageOutcome::failed(Stage::FixedTest, Some(super::FailureKind::Timeout), detail)
                .with_test_index(tests_done)
        } else {
            StageOutcome::failed(Stage::Differential, Some(super::FailureKind::Timeout), detail)
        };
        records.push(outcome);
        Ok(records)
    }

    fn full_log(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        let mut log = structural_stages(job);
        if log.iter().any(StageOutcome::is_failed) {
            return Ok(log);
        }
        log.extend(self.run_child(job)?);
        Ok(log)
    }
}

fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        // The child leads its own process group (see `process_group(0)`).
        let pgid = child.id() as libc::pid_t;
        // SAFETY: plain syscall on a pid we spawned; failure is harmless.
        unsafe {
            libc::killpg(pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
}

/// Runner streams carry stages 4-7 in pipeline order, nothing after a
/// failure, and are complete unless a failure ended them.
fn validate_stream(records: &[StageOutcome], job: &ExecutionJob) -> Result<(), BackendError> {
    let mut expected: Vec<Stage> = vec![Stage::Parse, Stage::Lint];
    expected.extend(std::iter::repeat_n(Stage::FixedTest, job.fixed_tests.len()));
    expected.push(Stage::Differential);
    for (i, rec) in records.iter().enumerate() {
        if expected.get(i) != Some(&rec.stage) {
            return Err(BackendError::Protocol(format!(
                "unexpected {:?} record at position {i}",
                rec.stage
            )));
        }
        if rec.is_failed() && i + 1 != records.len() {
            return Err(BackendError::Protocol(format!(
                "record after failed {:?} stage",
                rec.stage
            )));
        }
    }
    let ended_by_failure = records.last().is_some_and(StageOutcome::is_failed);
    if !ended_by_failure && records.len() != expected.len() {
        return Err(BackendError::Protocol(format!(
            "runner stream ended after {} of {} records",
            records.len(),
            expected.len()
        )));
    }
    Ok(())
}

impl ExecutionBackend for SubprocessBackend {
    fn check_well_formedness(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        Ok(self
            .full_log(job)?
            .into_iter()
            .filter(|s| s.stage < Stage::FixedTest)
            .collect())
    }

    fn run_fixed_tests(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        Ok(self
            .full_log(job)?
            .into_iter()
            .filter(|s| s.stage == Stage::FixedTest)
            .collect())
    }

    fn run_differential(&self, job: &ExecutionJob) -> Result<StageOutcome, BackendError> {
        self.full_log(job)?
            .into_iter()
            .find(|s| s.stage == Stage::Differential)
            .ok_or_else(|| BackendError::Protocol("differential stage did not run".into()))
    }

    fn run_pipeline(&self, job: &ExecutionJob) -> Result<Vec<StageOutcome>, BackendError> {
        self.full_log(job)
    }
}
