//! On-disk campaign state.
//!
//! ```text
//! <output_dir>/
//!   index.json                     fingerprint, shape, configuration files
//!   records/<nn>-<key>.ndjson      one RunRecord per line, append-only
//!   records/<nn>-<key>.timing.ndjson   wall-clock metadata per record
//!   records/<nn>-<key>.unanswered.ndjson   failed attempts, for diagnosis
//! ```
//!
//! Only the `.ndjson` record files decide completion. A torn final line (from
//! a crash mid-write) is cut off on load; any other malformed line is an error.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plan::{CampaignPlan, JobKey};
use super::CampaignError;
use crate::oracle::Verdict;
use crate::template::ParameterValuation;

/// Result of one completed job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(flatten)]
    pub key: JobKey,
    pub valuation: ParameterValuation,
    /// Model output exactly as received.
    pub response: String,
    pub extracted_source: Option<String>,
    pub verdict: Verdict,
    pub attempts: u32,
    #[serde(default)]
    pub transport: serde_json::Map<String, serde_json::Value>,
}

/// A job that produced no verdict this time; retried on resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnansweredRecord {
    #[serde(flatten)]
    pub key: JobKey,
    pub reason: String,
    pub at_unix_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    #[serde(flatten)]
    pub key: JobKey,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub latency_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexFile {
    pub fingerprint: String,
    pub campaign_seed: u64,
    pub instances: usize,
    pub rounds: usize,
    pub template_ids: Vec<String>,
    pub configurations: Vec<IndexedConfiguration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedConfiguration {
    pub key: String,
    pub records: String,
}

impl IndexFile {
    pub fn read(output_dir: &Path) -> Result<Option<Self>, CampaignError> {
        let path = output_dir.join("index.json");
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| CampaignError::Corrupt {
                path,
                reason: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(CampaignError::Io { path, source }),
        }
    }

    fn for_plan(plan: &CampaignPlan, campaign_seed: u64) -> Self {
        Self {
            fingerprint: format!("{:016x}", plan.fingerprint),
            campaign_seed,
            instances: plan.instances,
            rounds: plan.rounds,
            template_ids: plan.template_ids(),
            configurations: plan
                .configurations
                .iter()
                .enumerate()
                .map(|(i, c)| IndexedConfiguration {
                    key: c.key.clone(),
                    records: format!("records/{i:02}-{}.ndjson", sanitize(&c.key)),
                })
                .collect(),
        }
    }
}

fn sanitize(key: &str) -> String {
    key.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._@=-".contains(c) { c } else { '_' })
        .collect()
}

fn sidecar(records: &Path, kind: &str) -> PathBuf {
    records.with_extension(format!("{kind}.ndjson"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Read a record file, cutting off a torn final line.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, CampaignError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut records = Vec::new();
    for (n, line) in bytes[..complete].split_inclusive(|&b| b == b'\n').enumerate() {
        let record = serde_json::from_slice::<RunRecord>(line).map_err(|e| CampaignError::Corrupt {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", n + 1),
        })?;
        records.push(record);
    }
    let good_end = complete;
    if good_end < bytes.len() {
        tracing::warn!(path = %path.display(), dropped = bytes.len() - good_end, "truncating torn record");
        let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        f.set_len(good_end as u64).map_err(io_err(path))?;
    }
    Ok(records)
}

/// Append-only writer for one campaign's output directory.
pub struct CampaignStore {
    root: PathBuf,
    index: IndexFile,
    writers: Vec<(BufWriter<File>, BufWriter<File>, BufWriter<File>)>,
}

impl CampaignStore {
    /// Open (or initialise) `output_dir` for `plan`; a different fingerprint
    /// in an existing index is a [`CampaignError::ConfigMismatch`].
    pub fn open(output_dir: &Path, plan: &CampaignPlan, campaign_seed: u64) -> Result<Self, CampaignError> {
        let fresh = IndexFile::for_plan(plan, campaign_seed);
        match IndexFile::read(output_dir)? {
            Some(existing) if existing.fingerprint != fresh.fingerprint => {
                return Err(CampaignError::ConfigMismatch {
                    expected: fresh.fingerprint,
                    found: existing.fingerprint,
                })
            }
            Some(_) => {}
            None => {
                std::fs::create_dir_all(output_dir.join("records")).map_err(io_err(output_dir))?;
                let path = output_dir.join("index.json");
                let text = serde_json::to_string_pretty(&fresh).expect("index serialises") + "\n";
                std::fs::write(&path, text).map_err(io_err(&path))?;
            }
        }
        std::fs::create_dir_all(output_dir.join("records")).map_err(io_err(output_dir))?;
        let open = |p: &Path| -> Result<BufWriter<File>, CampaignError> {
            Ok(BufWriter::new(
                OpenOptions::new().create(true).append(true).open(p).map_err(io_err(p))?,
            ))
        };
        let mut writers = Vec::new();
        for c in &fresh.configurations {
            let path = output_dir.join(&c.records);
            // Repair a torn tail before appending after it.
            read_records(&path)?;
            writers.push((
                open(&path)?,
                open(&sidecar(&path, "timing"))?,
                open(&sidecar(&path, "unanswered"))?,
            ));
        }
        Ok(Self {
            root: output_dir.to_path_buf(),
            index: fresh,
            writers,
        })
    }

    pub fn index(&self) -> &IndexFile {
        &self.index
    }

    /// Every record already on disk, per configuration in index order.
    pub fn load(&self) -> Result<Vec<Vec<RunRecord>>, CampaignError> {
        self.index
            .configurations
            .iter()
            .map(|c| read_records(&self.root.join(&c.records)))
            .collect()
    }

    pub fn completed(&self) -> Result<HashSet<JobKey>, CampaignError> {
        Ok(self.load()?.into_iter().flatten().map(|r| r.key).collect())
    }

    pub fn append(&mut self, configuration: usize, record: &RunRecord, timing: &TimingRecord) -> Result<(), CampaignError> {
        let (records, timings, _) = &mut self.writers[configuration];
        let path = &self.index.configurations[configuration].records;
        let mut line = serde_json::to_string(record).expect("record serialises");
        line.push('\n');
        records.write_all(line.as_bytes()).map_err(io_err(Path::new(path)))?;
        let mut line = serde_json::to_string(timing).expect("timing serialises");
        line.push('\n');
        timings.write_all(line.as_bytes()).map_err(io_err(Path::new(path)))?;
        Ok(())
    }

    pub fn append_unanswered(&mut self, configuration: usize, record: &UnansweredRecord) -> Result<(), CampaignError> {
        let (_, _, unanswered) = &mut self.writers[configuration];
        let mut line = serde_json::to_string(record).expect("record serialises");
        line.push('\n');
        unanswered
            .write_all(line.as_bytes())
            .map_err(io_err(Path::new(&self.index.configurations[configuration].records)))
    }

    /// Flush all buffered lines to the OS.
    pub fn flush(&mut self) -> Result<(), CampaignError> {
        for (c, (a, b, u)) in self.writers.iter_mut().enumerate() {
            let path = self.root.join(&self.index.configurations[c].records);
            a.flush().map_err(io_err(&path))?;
            b.flush().map_err(io_err(&path))?;
            u.flush().map_err(io_err(&path))?;
        }
        Ok(())
    }
}

/// Records of a finished output directory, grouped by configuration key.
pub fn load_output(output_dir: &Path) -> Result<(IndexFile, BTreeMap<String, Vec<RunRecord>>), CampaignError> {
    let index = IndexFile::read(output_dir)?.ok_or_else(|| CampaignError::Corrupt {
        path: output_dir.join("index.json"),
        reason: "missing campaign index".into(),
    })?;
    let mut by_config = BTreeMap::new();
    for c in &index.configurations {
        by_config.insert(c.key.clone(), read_records(&output_dir.join(&c.records))?);
    }
    Ok((index, by_config))
}
