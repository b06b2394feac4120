//! Discovery and loading of template bundles under `<root>/templates/<id>/`.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::oracle::OracleTemplate;
use crate::template::{parse_template_bundle, QuestionTemplate, TemplateError};

/// Problem-group vocabulary used in bundle metadata.
pub const PROBLEM_GROUPS: [&str; 6] = [
    "list_manipulation",
    "string_manipulation",
    "set_manipulation",
    "searching",
    "copying",
    "mathematical",
];

/// Data-type tags used in bundle metadata.
pub const DATA_TYPES: [&str; 6] = ["list", "integer", "boolean", "string", "set", "tuple"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus root {} does not exist", path.display())]
    MissingRoot { path: PathBuf },
    #[error("template `{id}` not found under {}", root.display())]
    NotFound { id: String, root: PathBuf },
    #[error("bundle `{id}` is invalid: {source}")]
    Bundle {
        id: String,
        #[source]
        source: TemplateError,
    },
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub id: String,
    pub groups: Vec<String>,
    pub data_types: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BundleDefect {
    pub id: String,
    pub error: String,
}

/// Valid bundles in id order, plus every bundle that failed to parse.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BundleManifest {
    pub entries: Vec<ManifestEntry>,
    pub defects: Vec<BundleDefect>,
}

impl BundleManifest {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// Distinct problem groups covered by the valid bundles.
    pub fn groups(&self) -> std::collections::BTreeSet<&str> {
        self.entries
            .iter()
            .flat_map(|e| e.groups.iter().map(String::as_str))
            .collect()
    }
}

/// A parsed question template together with its oracle template.
#[derive(Debug, Clone)]
pub struct TemplateBundle {
    pub question: QuestionTemplate,
    pub oracle: OracleTemplate,
}

impl TemplateBundle {
    pub fn id(&self) -> &str {
        &self.question.id
    }
}

/// Directory holding the bundles shipped with this repository.
pub fn shipped_corpus_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn bundle_dirs(corpus_root: &Path) -> Result<Vec<(String, PathBuf)>, CorpusError> {
    if !corpus_root.is_dir() {
        return Err(CorpusError::MissingRoot {
            path: corpus_root.to_path_buf(),
        });
    }
    let templates = corpus_root.join("templates");
    if !templates.is_dir() {
        return Ok(Vec::new());
    }
    let io = |source| CorpusError::Io {
        path: templates.clone(),
        source,
    };
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(&templates).map_err(io)? {
        let entry = entry.map_err(io)?;
        if entry.file_type().map_err(io)?.is_dir() {
            if let Some(id) = entry.file_name().to_str() {
                dirs.push((id.to_string(), entry.path()));
            }
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn list_templates(corpus_root: &Path) -> Result<BundleManifest, CorpusError> {
    let mut manifest = BundleManifest::default();
    for (id, dir) in bundle_dirs(corpus_root)? {
        match parse_template_bundle(&dir) {
            Ok((q, _)) => manifest.entries.push(ManifestEntry {
                id,
                groups: q.groups,
                data_types: q.data_types,
            }),
            Err(e) => manifest.defects.push(BundleDefect {
                id,
                error: e.to_string(),
            }),
        }
    }
    if manifest.entries.is_empty() && manifest.defects.is_empty() {
        tracing::warn!(root = %corpus_root.display(), "corpus contains no bundles");
    }
    for d in &manifest.defects {
        tracing::warn!(id = %d.id, error = %d.error, "invalid bundle");
    }
    Ok(manifest)
}

pub fn load_bundle(corpus_root: &Path, id: &str) -> Result<TemplateBundle, CorpusError> {
    let dir = corpus_root.join("templates").join(id);
    if id.contains(['/', '\\']) || !dir.is_dir() {
        return Err(CorpusError::NotFound {
            id: id.to_string(),
            root: corpus_root.to_path_buf(),
        });
    }
    let (question, oracle) = parse_template_bundle(&dir).map_err(|source| CorpusError::Bundle {
        id: id.to_string(),
        source,
    })?;
    Ok(TemplateBundle { question, oracle })
}

/// Load `ids` (or every bundle when `None`), failing on the first invalid one.
pub fn load_corpus(corpus_root: &Path, ids: Option<&[String]>) -> Result<Vec<TemplateBundle>, CorpusError> {
    let ids: Vec<String> = match ids {
        Some(ids) => ids.to_vec(),
        None => bundle_dirs(corpus_root)?.into_iter().map(|(id, _)| id).collect(),
    };
    ids.iter().map(|id| load_bundle(corpus_root, id)).collect()
}
