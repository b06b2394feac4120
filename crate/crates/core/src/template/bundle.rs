//! On-disk bundle layout:
//!
//! ```text
//! <corpus>/templates/<id>/
//!     question.txt     prompt template with {{name}} placeholders
//!     params.json      parameter specs, relations, edge seeds, set size
//!     tests/<k>.tmpl   one fixed test per file, run in numeric order of k
//!     solution.tmpl    model solution template
//!     generator        source defining generate(rng)
//!     meta.json        groups, data types, function name, arity, fuzz trials
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::render::{has_markers, placeholder_names, placeholders};
use super::{is_identifier, ParameterSpace, ParameterSpec, ParameterValuation, QuestionTemplate, Relation, TemplateError};
use crate::oracle::{OracleTemplate, DEFAULT_FUZZ_TRIALS};

/// `params.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub set_size: usize,
    pub parameters: Vec<ParameterSpec>,
    #[serde(default)]
    pub relations: Vec<Relation>,
    #[serde(default)]
    pub edge_seeds: Vec<ParameterValuation>,
}

/// `meta.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleMeta {
    pub groups: Vec<String>,
    #[serde(default)]
    pub data_types: Vec<String>,
    pub function_name: String,
    pub arity: usize,
    #[serde(default = "default_fuzz_trials")]
    pub default_fuzz_trials: u32,
}

fn default_fuzz_trials() -> u32 {
    DEFAULT_FUZZ_TRIALS
}

fn read(path: &Path) -> Result<String, TemplateError> {
    if !path.exists() {
        return Err(TemplateError::MissingFile {
            path: path.to_path_buf(),
        });
    }
    fs::read_to_string(path).map_err(|source| TemplateError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, TemplateError> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| TemplateError::MalformedSpec {
        location: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn test_files(dir: &Path) -> Result<Vec<PathBuf>, TemplateError> {
    if !dir.is_dir() {
        return Err(TemplateError::MissingFile {
            path: dir.to_path_buf(),
        });
    }
    let entries = fs::read_dir(dir).map_err(|source| TemplateError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<(Option<u64>, PathBuf)> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "tmpl"))
        .map(|p| {
            let k = p
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<u64>().ok());
            (k, p)
        })
        .collect();
    // Numeric stems first in numeric order, then anything else by name.
    files.sort_by(|a, b| match (a.0, b.0) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.1.cmp(&b.1),
    });
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

fn check_placeholders(
    text: &str,
    declared: &BTreeSet<String>,
    location: &str,
) -> Result<(), TemplateError> {
    for name in placeholder_names(text) {
        if !declared.contains(&name) {
            return Err(TemplateError::UndeclaredPlaceholder {
                name,
                location: location.to_string(),
            });
        }
    }
    Ok(())
}

/// Load and cross-validate the bundle in `bundle_dir`.
pub fn parse_template_bundle(
    bundle_dir: &Path,
) -> Result<(QuestionTemplate, OracleTemplate), TemplateError> {
    let id = bundle_dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| TemplateError::MalformedSpec {
            location: bundle_dir.display().to_string(),
            reason: "bundle directory has no usable name".into(),
        })?
        .to_string();

    let question = read(&bundle_dir.join("question.txt"))?.trim_end().to_string();
    let params: ParamsFile = read_json(&bundle_dir.join("params.json"))?;
    let meta: BundleMeta = read_json(&bundle_dir.join("meta.json"))?;
    let solution = read(&bundle_dir.join("solution.tmpl"))?;
    let generator = read(&bundle_dir.join("generator"))?;
    let tests = test_files(&bundle_dir.join("tests"))?
        .iter()
        .map(|p| read(p).map(|t| (p.clone(), t)))
        .collect::<Result<Vec<_>, _>>()?;

    let malformed = |location: &str, reason: String| TemplateError::MalformedSpec {
        location: format!("{id}/{location}"),
        reason,
    };
    if tests.is_empty() {
        return Err(malformed("tests", "an oracle needs at least one fixed test".into()));
    }
    if !is_identifier(&meta.function_name) {
        return Err(malformed(
            "meta.json",
            format!("`{}` is not a valid function name", meta.function_name),
        ));
    }
    if params.set_size == 0 {
        return Err(malformed("params.json", "set_size must be positive".into()));
    }

    let space = ParameterSpace {
        parameters: params.parameters,
        relations: params.relations,
        edge_seeds: params.edge_seeds,
    };
    space.validate().map_err(|e| match e {
        TemplateError::MalformedSpec { reason, .. } => malformed("params.json", reason),
        other => other,
    })?;
    let declared = space.names();

    check_placeholders(&question, &declared, "question.txt")?;
    let mut stripped = question.clone();
    for p in placeholders(&question).iter().rev() {
        stripped.replace_range(p.start..p.end, "");
    }
    if has_markers(&stripped) {
        return Err(malformed(
            "question.txt",
            "stray `{{` or `}}` outside a placeholder".into(),
        ));
    }
    for (path, text) in &tests {
        let name = path
            .strip_prefix(bundle_dir)
            .unwrap_or(path)
            .display()
            .to_string();
        check_placeholders(text, &declared, &name)?;
    }
    check_placeholders(&solution, &declared, "solution.tmpl")?;
    check_placeholders(&generator, &declared, "generator")?;

    let mut used = placeholder_names(&question);
    used.extend(placeholder_names(&solution));
    used.extend(placeholder_names(&generator));
    for (_, t) in &tests {
        used.extend(placeholder_names(t));
    }
    if let Some(unused) = declared.iter().find(|n| !used.contains(*n)) {
        return Err(TemplateError::UnusedParameter {
            name: unused.clone(),
        });
    }

    let template = QuestionTemplate {
        id,
        prompt_template: question,
        space,
        groups: meta.groups,
        data_types: meta.data_types,
        parameter_set_size: params.set_size,
    };
    let oracle = OracleTemplate {
        function_name: meta.function_name,
        arity: meta.arity,
        fixed_test_templates: tests.into_iter().map(|(_, t)| t).collect(),
        model_solution_template: solution,
        generator_source: generator,
        default_fuzz_trials: meta.default_fuzz_trials,
    };
    Ok((template, oracle))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::template::fixtures::SUM_EVEN_QUESTION;

    pub fn write_sum_even_bundle(root: &Path) -> PathBuf {
        let dir = root.join("sum_even_ints_inclusive");
        fs::create_dir_all(dir.join("tests")).unwrap();
        fs::write(dir.join("question.txt"), format!("{SUM_EVEN_QUESTION}\n")).unwrap();
        fs::write(
            dir.join("params.json"),
            r#"{"set_size": 100,
                "parameters": [
                  {"name": "p1", "kind": "integer", "min": 0, "max": 100},
                  {"name": "p2", "kind": "integer", "min": 0, "max": 100}],
                "relations": ["p1 <= p2"],
                "edge_seeds": [{"p1": 0, "p2": 0}]}"#,
        )
        .unwrap();
        fs::write(
            dir.join("meta.json"),
            r#"{"groups": ["list_manipulation"], "data_types": ["list", "integer"],
                "function_name": "sum_even_ints_inclusive", "arity": 1}"#,
        )
        .unwrap();
        fs::write(
            dir.join("tests/1.tmpl"),
            "def test_odd_range():\n  odd_list = [i for i in range(-10001, {{p2}}*10, 2)]\n  assert sum_even_ints_inclusive(odd_list) == 0\n",
        )
        .unwrap();
        fs::write(
            dir.join("solution.tmpl"),
            "def sum_even_ints_inclusive(lst):\n  lst = lst[{{p1}} : {{p2}} + 1]\n  return sum([i for i in lst if i % 2 == 0])\n",
        )
        .unwrap();
        fs::write(
            dir.join("generator"),
            "def generate(rng):\n    return ([rng.randint(-50, 50) for _ in range(rng.randint(0, 120))],)\n",
        )
        .unwrap();
        dir
    }

    #[test]
    fn parses_sum_even_bundle() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = write_sum_even_bundle(tmp.path());
        let (q, o) = parse_template_bundle(&dir).unwrap();
        assert_eq!(q.id, "sum_even_ints_inclusive");
        assert_eq!(q.space.parameters.len(), 2);
        assert_eq!(q.prompt_template, SUM_EVEN_QUESTION);
        assert_eq!(q.parameter_set_size, 100);
        assert_eq!(o.fixed_test_templates.len(), 1);
        assert_eq!(o.arity, 1);
        assert_eq!(o.default_fuzz_trials, DEFAULT_FUZZ_TRIALS);
    }

    #[test]
    fn undeclared_placeholder() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = write_sum_even_bundle(tmp.path());
        fs::write(dir.join("question.txt"), "from {{p1}} to {{p2}} and {{p3}}").unwrap();
        match parse_template_bundle(&dir) {
            Err(TemplateError::UndeclaredPlaceholder { name, location }) => {
                assert_eq!(name, "p3");
                assert_eq!(location, "question.txt");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn no_tests_is_malformed() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = write_sum_even_bundle(tmp.path());
        fs::remove_file(dir.join("tests/1.tmpl")).unwrap();
        assert!(matches!(
            parse_template_bundle(&dir),
            Err(TemplateError::MalformedSpec { .. })
        ));
    }

    #[test]
    fn missing_file() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = write_sum_even_bundle(tmp.path());
        fs::remove_file(dir.join("generator")).unwrap();
        assert!(matches!(
            parse_template_bundle(&dir),
            Err(TemplateError::MissingFile { .. })
        ));
    }

    #[test]
    fn unused_parameter() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = write_sum_even_bundle(tmp.path());
        fs::write(
            dir.join("params.json"),
            r#"{"set_size": 10, "parameters": [
                {"name": "p1", "kind": "integer", "min": 0, "max": 9},
                {"name": "p2", "kind": "integer", "min": 0, "max": 9},
                {"name": "k", "kind": "integer", "min": 0, "max": 9}]}"#,
        )
        .unwrap();
        match parse_template_bundle(&dir) {
            Err(TemplateError::UnusedParameter { name }) => assert_eq!(name, "k"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parameter_used_only_by_oracle_is_fine() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = write_sum_even_bundle(tmp.path());
        fs::write(dir.join("question.txt"), "from {{p1}} onwards").unwrap();
        assert!(parse_template_bundle(&dir).is_ok());
    }

    #[test]
    fn stray_braces_in_question() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = write_sum_even_bundle(tmp.path());
        fs::write(dir.join("question.txt"), "{{p1}} {{p2}} and {{ 3 }}").unwrap();
        assert!(matches!(
            parse_template_bundle(&dir),
            Err(TemplateError::MalformedSpec { .. })
        ));
    }

    #[test]
    fn tests_sorted_numerically() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = write_sum_even_bundle(tmp.path());
        fs::write(dir.join("tests/10.tmpl"), "def test_ten():\n  pass\n").unwrap();
        fs::write(dir.join("tests/2.tmpl"), "def test_two():\n  pass\n").unwrap();
        let (_, o) = parse_template_bundle(&dir).unwrap();
        assert!(o.fixed_test_templates[1].contains("test_two"));
        assert!(o.fixed_test_templates[2].contains("test_ten"));
    }

    #[test]
    fn unknown_meta_field_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = write_sum_even_bundle(tmp.path());
        fs::write(
            dir.join("meta.json"),
            r#"{"groups": [], "function_name": "f", "arity": 1, "colour": "red"}"#,
        )
        .unwrap();
        assert!(matches!(
            parse_template_bundle(&dir),
            Err(TemplateError::MalformedSpec { .. })
        ));
    }
}
