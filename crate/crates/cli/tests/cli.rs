use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mlfdr::simulate::{generate, ScenarioKind, SimScenario, DENSE};
use mlfdr::{run_pipeline, EmConfig, PipelineConfig};
use mlfdr_cli::ingest::{ingest, IngestOptions, InputPaths};
use mlfdr_cli::report::{read_hypotheses, reselect, write_dataset};
use nalgebra::{DMatrix, DVector};
use tempfile::TempDir;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn mlfdr(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mlfdr"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn data_args(data: &Path) -> Vec<String> {
    let mut args = vec![];
    for (flag, file) in [("--exposure", "exposure.csv"), ("--mediators", "mediators.csv"), ("--outcomes", "outcomes.csv")] {
        args.push(flag.to_string());
        args.push(data.join(file).display().to_string());
    }
    args
}

fn analyze(data: &Path, out: &Path, extra: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut args: Vec<String> = vec!["--mode".into(), "analyze".into()];
    args.extend(data_args(data));
    args.extend(["--out-dir".to_string(), out.display().to_string()]);
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    mlfdr(&refs, envs)
}

/// Simulated Case 1 data written as analyze inputs.
fn simulated(dir: &Path, m: usize, c: f64) -> PathBuf {
    let ds = generate(&SimScenario::with_scaled_tau(ScenarioKind::Case1, DENSE, 100, m, c, 31)).unwrap();
    let data = dir.join("data");
    write_dataset(&data, &ds).unwrap();
    data
}

fn paths(dir: &Path) -> InputPaths {
    InputPaths {
        exposure: dir.join("exposure.csv"),
        mediators: dir.join("mediators.csv"),
        outcomes: dir.join("outcomes.csv"),
        confounders: None,
    }
}

#[test]
fn three_row_csv_parses_exactly() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "exposure.csv", "x\n1\n2.5\n-3\n");
    write(dir.path(), "mediators.csv", "g1,g2\n0.5,1\n1.5,2\n2.5,3e-1\n");
    write(dir.path(), "outcomes.csv", "y1,y2\n4,5\n6,7\n8,9.25\n");
    let got = ingest(&paths(dir.path()), &IngestOptions::default()).unwrap();
    let d = &got.dataset;
    assert_eq!(d.exposure_for(0).clone_owned(), DVector::from_vec(vec![1.0, 2.5, -3.0]));
    assert_eq!(d.mediators(), &DMatrix::from_row_slice(3, 2, &[0.5, 1.0, 1.5, 2.0, 2.5, 0.3]));
    assert_eq!(d.outcomes(), &DMatrix::from_row_slice(3, 2, &[4.0, 5.0, 6.0, 7.0, 8.0, 9.25]));
    assert_eq!(got.ids, vec!["g1", "g2"]);
    assert_eq!(got.manifest.rows_kept, 3);
}

#[test]
fn rare_mediator_is_dropped_and_listed() {
    let dir = TempDir::new().unwrap();
    let n = 20;
    let exposure: String = (0..n).map(|r| format!("{}\n", r as f64 * 0.1)).collect();
    let mediators: String = (0..n).map(|r| format!("{},{},{}\n", r + 1, (r == 3) as u8, (r % 2) + 1)).collect();
    let outcomes: String = (0..n).map(|r| format!("{},{},{}\n", r * 2, r % 3, r % 5)).collect();
    write(dir.path(), "exposure.csv", &format!("x\n{exposure}"));
    write(dir.path(), "mediators.csv", &format!("a,rare,b\n{mediators}"));
    write(dir.path(), "outcomes.csv", &format!("ya,yrare,yb\n{outcomes}"));
    let got = ingest(&paths(dir.path()), &IngestOptions::default()).unwrap();
    assert_eq!(got.ids, vec!["a", "b"]);
    assert_eq!(got.manifest.mediators_dropped.len(), 1);
    assert_eq!(got.manifest.mediators_dropped[0].name, "rare");
    assert!((got.manifest.mediators_dropped[0].prevalence - 0.05).abs() < 1e-12);
    assert_eq!(got.dataset.m(), 2);

    let kept = ingest(&paths(dir.path()), &IngestOptions { prevalence_threshold: 0.0, ..IngestOptions::default() }).unwrap();
    assert_eq!(kept.dataset.m(), 3);
}

#[test]
fn clr_of_constant_sample_is_zero() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "exposure.csv", "x\n1\n2\n3\n4\n");
    write(dir.path(), "mediators.csv", "a,b,c,d\n1,1,1,1\n0,1,2,3\n2,2,2,2\n5,0,1,1\n");
    write(dir.path(), "outcomes.csv", "p,q,r,s\n1,2,3,4\n2,3,4,5\n3,4,5,6\n4,5,6,7\n");
    let got = ingest(&paths(dir.path()), &IngestOptions { clr: true, ..IngestOptions::default() }).unwrap();
    let med = got.dataset.mediators();
    assert!(med.row(0).iter().all(|&v| v == 0.0));
    assert!(med.row(2).iter().all(|&v| v == 0.0));
    assert!(med.row(1).sum().abs() < 1e-12);
}

#[test]
fn missing_cells_drop_rows_and_are_reported() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "exposure.csv", "x\n1\n2\nNA\n4\n5\n");
    write(dir.path(), "mediators.csv", "a,b\n1,2\n,3\n4,5\n6,7\n8,9\n");
    write(dir.path(), "outcomes.csv", "ya,yb\n1,2\n3,4\n5,6\n7,8\n9,10\n");
    let got = ingest(&paths(dir.path()), &IngestOptions::default()).unwrap();
    assert_eq!(got.manifest.rows_dropped, vec![2, 3]);
    assert_eq!(got.manifest.rows_kept, 3);
    assert_eq!(got.dataset.exposure_for(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 4.0, 5.0]);
}

#[test]
fn ingestion_errors_are_distinct() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "exposure.csv", "x\n1\n2\n3\n4\n");
    write(dir.path(), "mediators.csv", "a\n1\n2\nabc\n4\n");
    write(dir.path(), "outcomes.csv", "y\n1\n2\n3\n4\n");
    let err = ingest(&paths(dir.path()), &IngestOptions::default()).unwrap_err();
    assert_eq!(err.code, "ingest.non_numeric");
    assert!(err.message.contains("line 4"), "{}", err.message);

    write(dir.path(), "mediators.csv", "a\n1\n2\n3\n");
    assert_eq!(ingest(&paths(dir.path()), &IngestOptions::default()).unwrap_err().code, "ingest.row_mismatch");

    write(dir.path(), "mediators.csv", "a,b\n1,1\n2,2\n3,3\n4,4\n");
    assert_eq!(ingest(&paths(dir.path()), &IngestOptions::default()).unwrap_err().code, "ingest.column_mismatch");
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let bad_alpha = mlfdr(&["--mode", "evaluate", "--alpha", "1.5", "--out-dir", out], &[]);
    assert_eq!(bad_alpha.status.code(), Some(2));
    let no_file = mlfdr(&["--mode", "analyze", "--exposure", "nope.csv", "--mediators", "a", "--outcomes", "b", "--out-dir", out], &[]);
    assert_eq!(no_file.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&no_file.stderr).contains("config.path"));

    write(dir.path(), "exposure.csv", "x\n1\n2\n3\n4\n5\n");
    write(dir.path(), "mediators.csv", "a,b,c\n1,2,3\n2,3,1\nfoo,1,1\n4,4,1\n1,2,2\n");
    write(dir.path(), "outcomes.csv", "p,q,r\n1,2,3\n3,1,2\n2,2,2\n5,1,4\n2,3,1\n");
    let data = analyze(dir.path(), Path::new(out), &[], &[]);
    assert_eq!(data.status.code(), Some(3));

    // Three mediators are too few for the mixture fit.
    write(dir.path(), "mediators.csv", "a,b,c\n1,2,3\n2,3,1\n3,1,1\n4,4,1\n1,2,2\n");
    let numeric = analyze(dir.path(), Path::new(out), &[], &[]);
    assert_eq!(numeric.status.code(), Some(4), "{}", String::from_utf8_lossy(&numeric.stderr));
    assert!(String::from_utf8_lossy(&numeric.stderr).contains("mixture.too_few_hypotheses"));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let data = simulated(dir.path(), 300, 10.0);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, threads) in [(&a, "1"), (&b, "1"), (&c, "4")] {
        let run = analyze(&data, out, &["--seed", "9"], &[("RAYON_NUM_THREADS", threads)]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    for file in ["hypotheses.csv", "model.json"] {
        let first = fs::read(a.join(file)).unwrap();
        assert_eq!(first, fs::read(b.join(file)).unwrap(), "{file}");
        assert_eq!(first, fs::read(c.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn permuted_exposure_gives_near_zero_rejections() {
    let dir = TempDir::new().unwrap();
    let data = simulated(dir.path(), 1000, 15.0);
    let real = dir.path().join("real");
    let null = dir.path().join("null");
    // Without intercepts the exposure mean alone links X and M, so center first.
    assert!(analyze(&data, &real, &["--center"], &[]).status.success());
    let run = analyze(&data, &null, &["--center", "--permute-exposure"], &[]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let count = |dir: &Path| read_hypotheses(&dir.join("hypotheses.csv")).unwrap().iter().filter(|r| r.rejected).count();
    let (signal, permuted) = (count(&real), count(&null));
    assert!(signal > 100, "{signal}");
    assert!(permuted <= 10, "{permuted} rejections after permuting the exposure");
}

#[test]
fn hypotheses_table_round_trips_to_the_same_selection() {
    let dir = TempDir::new().unwrap();
    let data = simulated(dir.path(), 400, 10.0);
    let out = dir.path().join("out");
    let run = analyze(&data, &out, &["--alpha", "0.1", "--seed", "4"], &[]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let rows = read_hypotheses(&out.join("hypotheses.csv")).unwrap();
    let again = reselect(&rows, 0.1).unwrap();
    assert_eq!(again.rejected, rows.iter().map(|r| r.rejected).collect::<Vec<_>>());

    let ds = ingest(&paths(&data), &IngestOptions::default()).unwrap().dataset;
    let config = PipelineConfig { alpha: 0.1, em: EmConfig { seed: 4, ..EmConfig::default() }, ..PipelineConfig::default() };
    let direct = run_pipeline(&ds, &config).unwrap();
    assert_eq!(again, direct.selection);
    assert!(direct.selection.k > 0);
}

#[test]
fn manifest_records_seed_and_defaults() {
    let dir = TempDir::new().unwrap();
    let data = simulated(dir.path(), 100, 10.0);
    let out = dir.path().join("out");
    assert!(analyze(&data, &out, &["--alpha", "0.1"], &[]).status.success());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["seed_source"], "default");
    let defaulted: Vec<&str> = manifest["defaulted"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for name in ["seed", "d1", "d2", "prevalence_filter", "pseudo_count", "clr", "tol", "restarts"] {
        assert!(defaulted.contains(&name), "{name} missing from {defaulted:?}");
    }
    assert!(!defaulted.contains(&"alpha"));
    assert_eq!(manifest["ingest"]["rows_kept"], 100);
    assert!(manifest["timings_ms"]["pipeline"].as_f64().unwrap() >= 0.0);
}

#[test]
fn simulate_mode_writes_labelled_data_and_reports() {
    let dir = TempDir::new().unwrap();
    let scenario = write(dir.path(), "scenario.toml", "kind = \"case2_confounded\"\npi_truth = [0.4, 0.2, 0.2, 0.2]\nn = 60\nm = 200\ntau = 1.5\nseed = 3\n");
    let out = dir.path().join("out");
    let run = mlfdr(
        &["--mode", "simulate", "--scenario-file", scenario.to_str().unwrap(), "--out-dir", out.to_str().unwrap()],
        &[],
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    for file in ["data/exposure.csv", "data/mediators.csv", "data/outcomes.csv", "data/confounders.csv", "data/labels.csv", "hypotheses.csv", "model.json", "report.json", "fdr_power.tsv", "manifest.json"] {
        assert!(out.join(file).is_file(), "{file}");
    }
    let labels = fs::read_to_string(out.join("data/labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 201);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["seed_source"], "scenario file");
    let tsv = fs::read_to_string(out.join("fdr_power.tsv")).unwrap();
    assert!(tsv.starts_with("alpha\tfdr\tfdr_se\tpower"));
    assert_eq!(tsv.lines().count(), 7);
}

#[test]
fn evaluate_mode_reports_controlled_fdr() {
    let dir = TempDir::new().unwrap();
    let tau = 15.0 / 10.0;
    let scenario = write(
        dir.path(),
        "scenario.toml",
        &format!("kind = \"case1\"\npi_truth = [0.4, 0.2, 0.2, 0.2]\nn = 100\nm = 1000\ntau = {tau}\nseed = 8\n"),
    );
    let out = dir.path().join("out");
    let run = mlfdr(
        &["--mode", "evaluate", "--scenario-file", scenario.to_str().unwrap(), "--reps", "30", "--out-dir", out.to_str().unwrap()],
        &[],
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let level = report["levels"].as_array().unwrap().iter().find(|l| l["alpha"] == 0.05).unwrap();
    let (fdr, se) = (level["fdr"]["mean"].as_f64().unwrap(), level["fdr"]["se"].as_f64().unwrap());
    assert!(fdr <= 0.05 + 2.0 * se, "{fdr} +- {se}");
    assert!(level["power"]["mean"].as_f64().unwrap() > 0.5);
    assert_eq!(report["replicates"].as_array().unwrap().len(), 30);
}
