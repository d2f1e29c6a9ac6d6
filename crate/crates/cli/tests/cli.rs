use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap();
        if name == "runs" {
            continue;
        }
        if path.is_dir() {
            copy_dir(&path, &to.join(name));
        } else {
            fs::copy(&path, to.join(name)).unwrap();
        }
    }
}

/// A private copy of the fixture project.
fn project() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    copy_dir(&fixtures(), dir.path());
    let config = dir.path().join("fixture.toml");
    (dir, config)
}

fn topicrefine(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topicrefine"))
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_dir(project: &Path) -> PathBuf {
    let runs: Vec<PathBuf> = fs::read_dir(project.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(runs.len(), 1, "{runs:?}");
    runs[0].clone()
}

#[test]
fn run_reports_composites_and_selection() {
    let (dir, config) = project();
    let o = topicrefine(&["run", "--ablation", "original"], &config);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    for m in ["coherence", "centroid", "connectivity"] {
        assert!(out.lines().any(|l| l.starts_with("refined") && l.contains(m)), "{out}");
        assert!(out.lines().any(|l| l.starts_with("original") && l.contains(m)), "{out}");
    }
    let selected = out.lines().find_map(|l| l.strip_prefix("selected method: ")).unwrap();
    let best = out
        .lines()
        .filter(|l| l.starts_with("refined"))
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            (f[3].parse::<f64>().unwrap(), f[1].to_string())
        })
        .fold((f64::NEG_INFINITY, String::new()), |a, b| if b.0 > a.0 { b } else { a });
    assert_eq!(selected, best.1);
    assert!(run_dir(dir.path()).join("ablation.csv").is_file());
}

#[test]
fn stage_commands_and_staleness_exit_codes() {
    let (dir, config) = project();
    for stage in ["generate-topics", "embed", "similarity", "build-graph", "train", "extract", "evaluate"] {
        let o = topicrefine(&[stage], &config);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let run = run_dir(dir.path());
    for m in ["coherence", "centroid", "connectivity"] {
        assert!(run.join(format!("extract.refined.{m}.json")).is_file());
        assert!(run.join(format!("extract.refined.{m}.txt")).is_file());
    }

    let graph = run.join("build-graph.json");
    let mut bytes = fs::read(&graph).unwrap();
    bytes.push(b'\n');
    fs::write(&graph, bytes).unwrap();
    let o = topicrefine(&["train"], &config);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(stderr(&o).contains("build-graph.json"));
    let o = topicrefine(&["train", "--force"], &config);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    // a different k hashes to a run directory with no upstream artifacts
    let o = topicrefine(&["extract", "--k", "3"], &config);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn validate_and_sensitivity_write_tables() {
    let (dir, config) = project();
    assert!(topicrefine(&["run"], &config).status.success());
    let o = topicrefine(&["validate", "--replications", "2"], &config);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 6);
    let o = topicrefine(&["sensitivity", "--deltas", "0.01..0.03"], &config);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "30 rows, 0 skipped");
    let run = run_dir(dir.path());
    for f in ["validate.descriptive.csv", "validate.ttests.csv", "validate.anova.csv", "sensitivity.csv"] {
        assert!(run.join(f).is_file(), "{f}");
    }
}

#[test]
fn configuration_errors_exit_with_2() {
    let (dir, config) = project();
    let o = topicrefine(&["run"], &dir.path().join("absent.toml"));
    assert_eq!(o.status.code(), Some(2));
    let o = topicrefine(&["generate-topics", "--backend", "http"], &config);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("llm_endpoint"));
    let o = topicrefine(&["sensitivity", "--deltas", "abc"], &config);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_embedding_exits_with_3_and_names_the_text() {
    let (dir, config) = project();
    let embed_text = dir.path().join("embed/text");
    let mut removed = None;
    for entry in fs::read_dir(&embed_text).unwrap() {
        let path = entry.unwrap().path();
        let raw = fs::read_to_string(&path).unwrap();
        if raw.contains("\"text\":\"hospital meals\"") {
            fs::remove_file(&path).unwrap();
            removed = Some(path);
        }
    }
    assert!(removed.is_some());
    let o = topicrefine(&["run"], &config);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("hospital meals"), "{}", stderr(&o));
}
