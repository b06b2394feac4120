//! Report shapes: CorrSc histogram, neighbourhood-category distribution,
//! failure-category table, and near-miss valuations.
//!
//! [`emit_reports`] writes them as data files. Everything except
//! `metadata.json` is a pure function of its input, so identical campaigns
//! yield byte-identical reports.
//!
//! | file            | content                                                |
//! |-----------------|--------------------------------------------------------|
//! | `scores.csv`    | `configuration,template_id,corr_sc,category`           |
//! | `failures.csv`  | `configuration,category,count,percent`                 |
//! | `histogram.dat` | whitespace-separated bins x configurations (gnuplot)   |
//! | `report.json`   | all of the above plus pass counts and near misses      |
//! | `summary.txt`   | plain-text tables                                      |
//! | `metadata.json` | generation timestamp and tool version                  |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

use crate::oracle::Category;
use crate::scoring::{
    aggregate_failure_table, score, to_decimal, NeighbourhoodCategory, NeighbourhoodResult, Score,
    VerdictMatrix,
};
use crate::template::ParameterValuation;

pub const HISTOGRAM_BINS: usize = 12;

/// Counts over `{0}, (0,0.1], ..., (0.8,0.9], (0.9,1), {1}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct HistogramBins {
    pub counts: [u64; HISTOGRAM_BINS],
}

impl HistogramBins {
    pub fn label(bin: usize) -> String {
        match bin {
            0 => "0".into(),
            11 => "1".into(),
            10 => "(0.9,1.0)".into(),
            k => format!("(0.{},0.{}]", k - 1, k),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Bin for a score in `[0, 1]`, by exact rational comparison.
pub fn bin_index(score: Score) -> usize {
    let (n, d) = (*score.numer(), *score.denom());
    assert!(n <= d, "score {n}/{d} outside [0, 1]");
    if n == 0 {
        0
    } else if n == d {
        11
    } else {
        let k = (10 * n).div_ceil(d) as usize;
        k.min(10)
    }
}

pub fn corr_sc_histogram(scores: impl IntoIterator<Item = Score>) -> HistogramBins {
    let mut bins = HistogramBins::default();
    for s in scores {
        bins.counts[bin_index(s)] += 1;
    }
    bins
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CategoryDistribution {
    counts: [u64; 4],
}

impl CategoryDistribution {
    pub fn count(&self, category: NeighbourhoodCategory) -> u64 {
        self.counts[category as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn category_distribution<'a>(
    results: impl IntoIterator<Item = &'a NeighbourhoodResult>,
) -> CategoryDistribution {
    let mut d = CategoryDistribution::default();
    for r in results {
        d.counts[r.category as usize] += 1;
    }
    d
}

/// One template's verdict grid together with the valuation of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateResults {
    pub matrix: VerdictMatrix,
    pub valuations: Vec<ParameterValuation>,
}

/// Everything reported for one model configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigurationResults {
    pub configuration: String,
    pub templates: Vec<TemplateResults>,
    pub unanswered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailingInstance {
    pub instance_index: usize,
    pub valuation: ParameterValuation,
    pub failed_rounds: usize,
    pub categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearMiss {
    pub template_id: String,
    pub corr_sc: String,
    pub failing: Vec<FailingInstance>,
}

/// Templates with `0.9 <= CorrSc < 1`, each listing the instances that
/// failed at least one round.
pub fn near_miss_report<'a>(results: impl IntoIterator<Item = &'a TemplateResults>) -> Vec<NearMiss> {
    let threshold = Ratio::new(9u64, 10);
    let mut out = Vec::new();
    for t in results {
        let s = crate::scoring::corr_sc(&t.matrix);
        if s < threshold || s == Ratio::from_integer(1) {
            continue;
        }
        let failing = (0..t.matrix.instances())
            .filter_map(|i| {
                let row = t.matrix.row(i);
                let failed: Vec<Category> = row.iter().copied().filter(|c| !c.is_pass()).collect();
                (!failed.is_empty()).then(|| FailingInstance {
                    instance_index: i,
                    valuation: t.valuations.get(i).cloned().unwrap_or_default(),
                    failed_rounds: failed.len(),
                    categories: failed,
                })
            })
            .collect();
        out.push(NearMiss {
            template_id: t.matrix.template_id.clone(),
            corr_sc: to_decimal(s, 4),
            failing,
        });
    }
    out
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration {0} has no verdicts")]
    Empty(String),
}

#[derive(Serialize)]
struct TemplateRow {
    template_id: String,
    corr_sc: String,
    corr_sc_exact: [u64; 2],
    category: NeighbourhoodCategory,
    per_instance_pass_counts: Vec<usize>,
}

#[derive(Serialize)]
struct FailureRow {
    category: Category,
    label: &'static str,
    count: u64,
    percent: String,
}

#[derive(Serialize)]
struct HistogramRow {
    bin: String,
    count: u64,
}

#[derive(Serialize)]
struct CategoryCount {
    category: NeighbourhoodCategory,
    count: u64,
}

#[derive(Serialize)]
struct ConfigurationReport {
    configuration: String,
    responses: u64,
    unanswered: u64,
    templates: Vec<TemplateRow>,
    histogram: Vec<HistogramRow>,
    categories: Vec<CategoryCount>,
    failure_table: Vec<FailureRow>,
    near_misses: Vec<NearMiss>,
}

struct Rendered {
    report: ConfigurationReport,
    bins: HistogramBins,
}

fn render_configuration(c: &ConfigurationResults) -> Result<Rendered, ReportError> {
    let scored: Vec<NeighbourhoodResult> = c.templates.iter().map(|t| score(&t.matrix)).collect();
    let table = aggregate_failure_table(c.templates.iter().flat_map(|t| t.matrix.cells().iter().copied()))
        .map_err(|_| ReportError::Empty(c.configuration.clone()))?;
    let bins = corr_sc_histogram(scored.iter().map(|r| r.corr_sc));
    let dist = category_distribution(&scored);
    let report = ConfigurationReport {
        configuration: c.configuration.clone(),
        responses: table.total(),
        unanswered: c.unanswered,
        templates: scored
            .iter()
            .map(|r| TemplateRow {
                template_id: r.template_id.clone(),
                corr_sc: to_decimal(r.corr_sc, 4),
                corr_sc_exact: [*r.corr_sc.numer(), *r.corr_sc.denom()],
                category: r.category,
                per_instance_pass_counts: r.per_instance_pass_counts.clone(),
            })
            .collect(),
        histogram: (0..HISTOGRAM_BINS)
            .map(|b| HistogramRow {
                bin: HistogramBins::label(b),
                count: bins.counts[b],
            })
            .collect(),
        categories: NeighbourhoodCategory::ALL
            .iter()
            .map(|&category| CategoryCount {
                category,
                count: dist.count(category),
            })
            .collect(),
        failure_table: table
            .rows()
            .map(|(category, count, pct)| FailureRow {
                category,
                label: category.label(),
                count,
                percent: to_decimal(pct, 2),
            })
            .collect(),
        near_misses: near_miss_report(&c.templates),
    };
    Ok(Rendered { report, bins })
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<PathBuf, ReportError> {
    std::fs::write(&path, contents).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// Write every report file into `out_dir`; returns the written paths.
pub fn emit_reports(results: &[ConfigurationResults], out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let rendered = results.iter().map(render_configuration).collect::<Result<Vec<_>, _>>()?;
    let mut written = Vec::new();

    let scores = csv_bytes(
        &["configuration", "template_id", "corr_sc", "category"],
        rendered.iter().flat_map(|r| {
            r.report.templates.iter().map(|t| {
                vec![
                    r.report.configuration.clone(),
                    t.template_id.clone(),
                    t.corr_sc.clone(),
                    t.category.key().to_string(),
                ]
            })
        }),
    );
    written.push(write(out_dir.join("scores.csv"), scores)?);

    let failures = csv_bytes(
        &["configuration", "category", "count", "percent"],
        rendered.iter().flat_map(|r| {
            r.report.failure_table.iter().map(|f| {
                vec![
                    r.report.configuration.clone(),
                    f.category.key().to_string(),
                    f.count.to_string(),
                    f.percent.clone(),
                ]
            })
        }),
    );
    written.push(write(out_dir.join("failures.csv"), failures)?);

    let mut dat = String::from("# bin label");
    for r in &rendered {
        write!(dat, " \"{}\"", r.report.configuration).unwrap();
    }
    dat.push('\n');
    for b in 0..HISTOGRAM_BINS {
        write!(dat, "{b} \"{}\"", HistogramBins::label(b)).unwrap();
        for r in &rendered {
            write!(dat, " {}", r.bins.counts[b]).unwrap();
        }
        dat.push('\n');
    }
    written.push(write(out_dir.join("histogram.dat"), dat)?);

    let reports: Vec<&ConfigurationReport> = rendered.iter().map(|r| &r.report).collect();
    let mut json = serde_json::to_string_pretty(&serde_json::json!({ "configurations": reports }))
        .expect("report serialises");
    json.push('\n');
    written.push(write(out_dir.join("report.json"), json)?);

    written.push(write(out_dir.join("summary.txt"), summary(&rendered))?);

    let generated = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = serde_json::json!({
        "generated_at_unix": generated,
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
    });
    written.push(write(out_dir.join("metadata.json"), format!("{meta:#}\n"))?);
    Ok(written)
}

fn summary(rendered: &[Rendered]) -> String {
    let mut s = String::new();
    for r in rendered {
        let c = &r.report;
        writeln!(s, "== {} ==", c.configuration).unwrap();
        writeln!(s, "responses: {}  unanswered: {}", c.responses, c.unanswered).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "{:<40} {:>8}  category", "template", "CorrSc").unwrap();
        for t in &c.templates {
            writeln!(s, "{:<40} {:>8}  {}", t.template_id, t.corr_sc, t.category).unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "CorrSc histogram").unwrap();
        for h in &c.histogram {
            writeln!(s, "  {:<10} {}", h.bin, h.count).unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "Result categories").unwrap();
        for k in &c.categories {
            writeln!(s, "  {:<20} {}", k.category.key(), k.count).unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "Failure categories").unwrap();
        for f in &c.failure_table {
            writeln!(s, "  {:<26} {:>7} {:>7}%", f.label, f.count, f.percent).unwrap();
        }
        if !c.near_misses.is_empty() {
            writeln!(s).unwrap();
            writeln!(s, "Near misses (0.9 <= CorrSc < 1)").unwrap();
            for n in &c.near_misses {
                writeln!(s, "  {} ({})", n.template_id, n.corr_sc).unwrap();
                for f in &n.failing {
                    writeln!(s, "    #{} {}: {} failed round(s)", f.instance_index, f.valuation, f.failed_rounds).unwrap();
                }
            }
        }
        writeln!(s).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::fixtures::pair;

    fn r(n: u64, d: u64) -> Score {
        Ratio::new(n, d)
    }

    #[test]
    fn bin_examples() {
        let h = corr_sc_histogram([r(0, 1), r(1, 20), r(1, 1)]);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[11], 1);
        assert_eq!(h.total(), 3);
        assert_eq!(bin_index(r(1, 10)), 1);
        assert_eq!(bin_index(r(59, 60)), 10);
        assert_eq!(bin_index(r(9, 10)), 9);
        assert_eq!(bin_index(r(91, 100)), 10);
    }

    #[test]
    fn labels() {
        let labels: Vec<String> = (0..HISTOGRAM_BINS).map(HistogramBins::label).collect();
        assert_eq!(labels[0], "0");
        assert_eq!(labels[1], "(0.0,0.1]");
        assert_eq!(labels[9], "(0.8,0.9]");
        assert_eq!(labels[10], "(0.9,1.0)");
        assert_eq!(labels[11], "1");
    }

    fn results(id: &str, rows: &[Vec<bool>], valuations: Vec<ParameterValuation>) -> TemplateResults {
        TemplateResults {
            matrix: VerdictMatrix::from_passes(id, rows).unwrap(),
            valuations,
        }
    }

    #[test]
    fn near_miss_thresholds() {
        let mut rows = vec![vec![true; 5]; 9];
        rows.push(vec![true, false, true, true, true]);
        let mut vals: Vec<ParameterValuation> = (0..9).map(|i| pair(i, i + 5)).collect();
        vals.push(pair(3, 4));
        let near = results("near", &rows, vals.clone());
        let perfect = results("perfect", &vec![vec![true; 5]; 10], vals.clone());
        let half = results("half", &[vec![true, false]], vec![pair(0, 0)]);
        let report = near_miss_report([&near, &perfect, &half]);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].template_id, "near");
        assert_eq!(report[0].corr_sc, "0.9800");
        assert_eq!(report[0].failing.len(), 1);
        assert_eq!(report[0].failing[0].valuation, pair(3, 4));
    }

    #[test]
    fn distribution_counts() {
        assert_eq!(category_distribution(&[]).total(), 0);
        let res: Vec<NeighbourhoodResult> = [vec![vec![true; 2]], vec![vec![false; 2]], vec![vec![true, false]]]
            .iter()
            .map(|rows| score(&VerdictMatrix::from_passes("t", rows).unwrap()))
            .collect();
        let d = category_distribution(&res);
        assert_eq!(d.count(NeighbourhoodCategory::PerfectSuccess), 1);
        assert_eq!(d.count(NeighbourhoodCategory::PerfectFailure), 1);
        assert_eq!(d.count(NeighbourhoodCategory::RandomFailure), 1);
        assert_eq!(d.total(), 3);
    }

    #[test]
    fn emitted_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = ConfigurationResults {
            configuration: "mock@t=0".into(),
            templates: vec![results("q", &[vec![false, true, false, true, false]], vec![pair(1, 8)])],
            unanswered: 0,
        };
        emit_reports(std::slice::from_ref(&c), dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("scores.csv")).unwrap();
        assert_eq!(csv, "configuration,template_id,corr_sc,category\nmock@t=0,q,0.4000,random_failure\n");
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        let table = json["configurations"][0]["failure_table"].as_array().unwrap();
        let total: f64 = table.iter().map(|f| f["percent"].as_str().unwrap().parse::<f64>().unwrap()).sum();
        assert!((total - 100.0).abs() < 1e-9);
        let first: Vec<Vec<u8>> = ["scores.csv", "failures.csv", "histogram.dat", "report.json", "summary.txt"]
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)).unwrap())
            .collect();
        emit_reports(&[c], dir.path()).unwrap();
        let second: Vec<Vec<u8>> = ["scores.csv", "failures.csv", "histogram.dat", "report.json", "summary.txt"]
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)).unwrap())
            .collect();
        assert_eq!(first, second);
    }
}
