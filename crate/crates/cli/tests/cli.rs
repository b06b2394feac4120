use std::path::Path;
use std::process::{Command, Output};

fn nbeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nbeval")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn corpus() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").display().to_string()
}

fn write_config(dir: &Path, extra_model: &str) -> String {
    let path = dir.join("campaign.toml");
    std::fs::write(
        &path,
        format!(
            r#"
campaign_seed = 3
instances = 5
rounds = 2
output_dir = "out"

[corpus]
root = "{}"
templates = ["sum_even_ints_inclusive", "sum_of_multiples", "rotate_left"]

[backend]
kind = "stub"

[[models]]
name = "obo"
temperatures = [0, "default"]
[models.adapter]
kind = "mock"
profile = {{ kind = "range_off_by_one", predicate = "p2 - p1 == 1" }}
{extra_model}"#,
            corpus()
        ),
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn list_shows_the_shipped_corpus() {
    let o = nbeval(&["list"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.lines().count() >= 12);
    assert!(out.contains("sum_even_ints_inclusive\tlist_manipulation"));
}

#[test]
fn run_score_report_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let o = nbeval(&["run", &config]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("planned 60 jobs"));

    // A second fresh start is refused as a configuration error.
    assert_eq!(nbeval(&["run", &config]).status.code(), Some(2));
    let o = nbeval(&["resume", &config]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("60 already recorded; 0 attempted"));

    let out_dir = dir.path().join("out");
    let o = nbeval(&["score", out_dir.to_str().unwrap()]);
    assert!(o.status.success());
    let scores = stdout(&o);
    assert!(scores.contains("obo@t=0\n") && scores.contains("obo@t=default\n"), "{scores}");
    assert!(scores.contains("rotate_left                      1.0000  perfect_success"), "{scores}");

    let o = nbeval(&["report", out_dir.to_str().unwrap()]);
    assert!(o.status.success());
    for f in ["scores.csv", "failures.csv", "histogram.dat", "report.json", "summary.txt", "metadata.json"] {
        assert!(out_dir.join("report").join(f).is_file(), "{f}");
    }

    // Changing the campaign makes the existing output unusable.
    let changed = std::fs::read_to_string(&config).unwrap().replace("campaign_seed = 3", "campaign_seed = 4");
    std::fs::write(&config, changed).unwrap();
    let o = nbeval(&["resume", &config]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("different campaign"));
}

#[test]
fn unanswered_jobs_leave_the_campaign_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let failing = "\n[[models]]\nname = \"down\"\ntemperatures = [0]\nretry = { max_attempts = 1, backoff_ms = [] }\n[models.adapter]\nkind = \"local_command\"\ncommand = [\"false\"]\n";
    let config = write_config(dir.path(), failing);
    let o = nbeval(&["run", &config]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("30 unanswered"));
    let o = nbeval(&["score", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_config_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "campaign_seed = 1\n").unwrap();
    assert_eq!(nbeval(&["run", path.to_str().unwrap()]).status.code(), Some(2));

    let o = nbeval(&["validate", "--template", "sum_of_multiples", "--samples", "10"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "ok    sum_of_multiples (10 valuations)");
    assert_eq!(nbeval(&["validate", "--template", "no_such_template"]).status.code(), Some(2));
    assert_eq!(nbeval(&["validate", "--backend", "subprocess"]).status.code(), Some(1));
}
