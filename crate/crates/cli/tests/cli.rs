use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_molsearch"))
}

fn data(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"))
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

/// The single run directory under `out`.
fn run_dir(out: &Path) -> PathBuf {
    let dirs: Vec<_> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(run_dir(out).join("report.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn prediction_config(dataset: &str, iterations: usize) -> Value {
    json!({
        "schema_version": 1,
        "seed": 0,
        "task": {"objective": {"kind": "prediction", "metric": "rmse", "dataset": "solubility200.csv"}},
        "search": {"iterations": iterations},
        "provider": {"kind": "scripted", "script": data("replays/prediction.script.json")},
        "dataset": dataset,
        "corpus": data("corpus/solubility_rules.txt"),
    })
}

#[test]
fn logp_chain_config_reports_the_full_gain() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["optimize"], &shipped("logp_chain"), out.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(out.path());
    assert!((r["mean_delta"].as_f64().unwrap() - 3.60).abs() <= 0.3);
    assert_eq!(r["success_rate"], 100.0);
    let dir = run_dir(out.path());
    for f in ["config.json", "report.json", "results.csv", "trajectory.csv", "trace-01.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let traj = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 5);
}

#[test]
fn qed_backtrack_config_finds_the_other_branch() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["optimize"], &shipped("qed_backtrack"), out.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let best = report(out.path())["runs"][0]["best_value"].as_f64().unwrap();
    assert!((best - 0.831).abs() <= 0.1);

    let trace = run_dir(out.path()).join("trace-01.json");
    let o = bin().arg("trace").arg(&trace).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("4 iterations, 5 nodes"), "{text}");
    assert!(text.contains("#4"));
}

#[test]
fn predict_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = write_config(cfg_dir.path(), &prediction_config(&data("datasets/solubility200.csv"), 6));
    for out in [&a, &b] {
        let o = run(&["predict"], &cfg, out.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (da, db) = (run_dir(a.path()), run_dir(b.path()));
    let mut names: Vec<_> = std::fs::read_dir(&da).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for n in names {
        let x = std::fs::read(da.join(&n)).unwrap();
        let y = std::fs::read(db.join(&n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
    let r = report(a.path());
    assert!(r["valid_metric"].as_f64().unwrap() <= r["baseline_valid"].as_f64().unwrap());
    assert_eq!(r["test_reads"], 1);
    assert_eq!(r["early_test_reads"], 0);
}

#[test]
fn zero_iterations_report_the_baseline() {
    let out = tempfile::tempdir().unwrap();
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = write_config(cfg_dir.path(), &prediction_config(&data("datasets/solubility200.csv"), 0));
    let o = run(&["predict"], &cfg, out.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(out.path());
    assert_eq!(r["features"], json!(["molecular_weight"]));
    assert_eq!(r["valid_metric"], r["baseline_valid"]);
}

#[test]
fn missing_dataset_is_a_config_error() {
    let out = tempfile::tempdir().unwrap();
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = write_config(cfg_dir.path(), &prediction_config("missing.csv", 3));
    let o = run(&["predict"], &cfg, out.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not exist"));
    assert_eq!(std::fs::read_dir(out.path()).map(|d| d.count()).unwrap_or(0), 0);
}

#[test]
fn single_class_labels_fail_at_runtime() {
    let out = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("one_class.csv");
    let rows: String = std::fs::read_to_string(data("datasets/solubility200.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .take(40)
        .map(|l| format!("{},0\n", l.split(',').next().unwrap()))
        .collect();
    std::fs::write(&csv, format!("smiles,label\n{rows}")).unwrap();
    let mut v = prediction_config(csv.to_str().unwrap(), 3);
    v["task"]["objective"]["metric"] = "auc".into();
    let cfg = write_config(dir.path(), &v);
    let o = run(&["predict"], &cfg, out.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("AUC is undefined"), "{}", stderr(&o));
}

fn coldstart_config(dir: &Path, corpus: &str) -> PathBuf {
    let path = dir.join("corpus.txt");
    std::fs::write(&path, corpus).unwrap();
    write_config(
        dir,
        &json!({
            "schema_version": 1,
            "seed": 0,
            "task": {"objective": {"kind": "prediction", "metric": "rmse", "dataset": "x.csv"}},
            "provider": {"kind": "heuristic"},
            "corpus": path,
        }),
    )
}

#[test]
fn scripted_coldstart_grounds_every_sentence() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["coldstart"], &shipped("coldstart_scripted"), out.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(out.path());
    assert_eq!(r["accepted"], 20);
    assert_eq!(r["dropped"], json!([]));
    let rules: Value = serde_json::from_str(&std::fs::read_to_string(run_dir(out.path()).join("rules.json")).unwrap()).unwrap();
    assert_eq!(rules["rules"].as_array().unwrap().len(), 20);
    assert_eq!(rules["rules"][0]["provenance"]["provider"], "scripted:coldstart.script.json");
}

#[test]
fn coldstart_drops_an_unfixable_sentence() {
    let out = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut corpus: Vec<String> = std::fs::read_to_string(data("corpus/solubility_rules.txt"))
        .unwrap()
        .lines()
        .take(19)
        .map(String::from)
        .collect();
    corpus.push("Consider how the crystals look under moonlight.".into());
    let cfg = coldstart_config(dir.path(), &corpus.join("\n"));
    let o = run(&["coldstart"], &cfg, out.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(out.path());
    assert_eq!(r["accepted"], 19);
    assert_eq!(r["dropped"].as_array().unwrap().len(), 1);
    assert_eq!(r["rectifications"], 3);
}

#[test]
fn empty_corpus_fails() {
    let out = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = coldstart_config(dir.path(), "\n");
    let o = run(&["coldstart"], &cfg, out.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no rules"));
}

#[test]
fn cliff_demo_holds_and_bad_space_is_rejected() {
    let o = bin().args(["cliff", "--demo", "--instances", "4", "--seed", "2"]).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(!text.contains("false"), "{text}");
    assert!(text.contains("0.0000    0.0000  true"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("space.json");
    std::fs::write(&bad, "{\"points\": [\"a\"], \"neighbors\": [[3]], \"values\": [0.0]}").unwrap();
    let o = bin().arg("cliff").arg("--space").arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&bad, "not json").unwrap();
    let o = bin().arg("cliff").arg("--space").arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cliff_reads_a_space_file() {
    let dir = tempfile::tempdir().unwrap();
    let space = dir.path().join("space.json");
    let doc = json!({
        "points": ["a", "b", "c", "d"],
        "neighbors": [[1], [0, 2], [1, 3], [2]],
        "values": [0.0, 0.2, 3.0, 0.1]
    });
    std::fs::write(&space, doc.to_string()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = bin()
        .arg("cliff")
        .arg("--space")
        .arg(&space)
        .args(["--kappa", "0.5", "--threshold", "2"])
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(out.path());
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.iter().map(|x| x["point"].as_u64().unwrap()).collect::<Vec<_>>(), [1, 2, 3]);
    assert!(rows.iter().all(|x| x["holds"] == true));
}

#[test]
fn no_config_is_a_usage_error() {
    let o = bin().arg("optimize").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
