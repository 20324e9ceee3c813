use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fairscope(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairscope"))
        .args(args)
        .current_dir(cwd)
        .env_remove("FAIRSCOPE_SCHEMA")
        .output()
        .expect("spawn fairscope")
}

fn ok(args: &[&str], cwd: &Path) -> Value {
    let out = fairscope(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn tests_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests")
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn read_lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

// deterministic pseudo-score per id
fn score_for(id: &str) -> f64 {
    let h = id.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x100000001b3)
    });
    (h % 1000) as f64 / 1000.0
}

fn write_predictions(corpus: &Path, out: &Path) {
    let lines: Vec<String> = read_lines(corpus)
        .iter()
        .map(|d| {
            let id = d["id"].as_str().unwrap();
            serde_json::json!({"id": id, "score": score_for(id)}).to_string()
        })
        .collect();
    std::fs::write(out, lines.join("\n") + "\n").unwrap();
}

fn synth(dir: &Path) -> PathBuf {
    ok(&["synth", "--out", "corpus.jsonl", "--seed", "3"], dir);
    dir.join("corpus.jsonl")
}

#[test]
fn missing_input_exits_4_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairscope(&["metrics", "--in", "no-such-corpus.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-corpus.jsonl"));
}

#[test]
fn out_of_range_threshold_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = fairscope(&["metrics", "--in", "corpus.jsonl", "--threshold", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_exits_1() {
    let out = fairscope(&["metrics", "--bogus"], Path::new("."));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_corpus_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.jsonl"),
        "{\"id\": \"a\", \"text\": \"x\", \"label\": 7}\n",
    )
    .unwrap();
    let out = fairscope(&["metrics", "--in", "bad.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_matches_snapshots() {
    for (args, file) in [
        (&["--help"][..], "help.txt"),
        (&["report", "--help"][..], "report_help.txt"),
    ] {
        let out = fairscope(args, Path::new("."));
        assert!(out.status.success());
        let want = std::fs::read_to_string(tests_dir().join("snapshots").join(file)).unwrap();
        assert_eq!(String::from_utf8(out.stdout).unwrap(), want, "{file}");
    }
}

#[test]
fn audit_writes_bundle_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("bundle");
    let config = workspace_root().join("data/workflow.json");
    let out = fairscope(
        &[
            "audit",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["bundle.json", "report.md", "deltas.csv"] {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }
    let bundle: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("bundle.json")).unwrap()).unwrap();
    assert_eq!(bundle["treatments"].as_array().unwrap().len(), 5);
    assert!(bundle["selection"]["recommended"].is_string());
    // no staging directory left behind
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(".fairscope-"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn synth_reports_expected_bias_and_metrics_agree() {
    let dir = tempfile::tempdir().unwrap();
    let summary = ok(&["synth", "--out", "corpus.jsonl", "--seed", "3"], dir.path());
    let expected = summary["expected"].as_array().unwrap();
    let metrics = ok(&["metrics", "--in", "corpus.jsonl"], dir.path());
    let measured = metrics["dataset_bias"].as_array().unwrap();
    assert_eq!(expected.len(), measured.len());
    for (e, m) in expected.iter().zip(measured) {
        assert_eq!(e["attribute"], m["attribute"]);
        assert_eq!(e["overamplification_raw"], m["overamplification_raw"]);
        let diff = e["selection_bias"].as_f64().unwrap() - m["selection"].as_f64().unwrap();
        assert!(diff.abs() < 0.01, "{e} vs {m}");
    }
    assert!(metrics.get("fairness").is_none());
}

#[test]
fn metrics_with_predictions_reports_fairness_and_writes_out() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    write_predictions(&corpus, &dir.path().join("preds.jsonl"));
    let printed = ok(
        &[
            "metrics",
            "--in",
            "corpus.jsonl",
            "--predictions",
            "preds.jsonl",
            "--out",
            "m.json",
        ],
        dir.path(),
    );
    let written: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(printed, written);
    let fairness = written["fairness"].as_array().unwrap();
    assert_eq!(fairness.len(), 3);
    for f in fairness {
        assert!(f["fpr_gap"].as_f64().unwrap() >= 0.0);
    }

    let md = fairscope(
        &[
            "metrics",
            "--in",
            "corpus.jsonl",
            "--predictions",
            "preds.jsonl",
            "--format",
            "md",
        ],
        dir.path(),
    );
    assert!(String::from_utf8(md.stdout)
        .unwrap()
        .contains("| Attribute | AUC | FPR_gap | TPR_gap | AUC_gap |"));
}

#[test]
fn perturb_balances_groups_and_sensescore_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let summary = ok(
        &["perturb", "--in", "corpus.jsonl", "--out", "balanced.jsonl"],
        dir.path(),
    );
    let groups = summary["groups"].as_array().unwrap();
    for attr in ["gender", "race", "religion"] {
        let sizes: Vec<_> = groups
            .iter()
            .filter(|g| g["attribute"] == attr)
            .map(|g| (g["documents"].clone(), g["positives"].clone()))
            .collect();
        assert!(sizes.windows(2).all(|w| w[0] == w[1]), "{attr}: {sizes:?}");
    }
    let balanced = dir.path().join("balanced.jsonl");
    assert_eq!(
        read_lines(&balanced).len() as u64,
        summary["output_documents"].as_u64().unwrap()
    );

    write_predictions(&balanced, &dir.path().join("preds.jsonl"));
    let sense = ok(
        &["sensescore", "--in", "balanced.jsonl", "--predictions", "preds.jsonl"],
        dir.path(),
    );
    for s in sense["sense"].as_array().unwrap() {
        let v = s["sense_score"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    let training = ok(
        &[
            "perturb",
            "--in",
            "corpus.jsonl",
            "--out",
            "train.jsonl",
            "--mode",
            "training",
        ],
        dir.path(),
    );
    assert_eq!(training["mode"], "training");
}

#[test]
fn stratify_reaches_target_and_plan_only_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    ok(
        &[
            "stratify",
            "--in",
            "corpus.jsonl",
            "--out",
            "plan.jsonl",
            "--attribute",
            "gender",
            "--plan-only",
        ],
        dir.path(),
    );
    assert!(!dir.path().join("plan.jsonl").exists());

    ok(
        &[
            "stratify",
            "--in",
            "corpus.jsonl",
            "--out",
            "strat.jsonl",
            "--attribute",
            "gender",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    let docs = read_lines(&dir.path().join("strat.jsonl"));
    for group in ["Female", "Male"] {
        let members: Vec<_> = docs
            .iter()
            .filter(|d| {
                d["identities"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .any(|i| i["attribute"] == "gender" && i["group"] == group)
            })
            .collect();
        let pos = members.iter().filter(|d| d["label"] == 1).count();
        let ratio = pos as f64 / members.len() as f64;
        assert!((ratio - 0.5).abs() <= 1.0 / members.len() as f64, "{group}: {ratio}");
    }
    assert!(docs.iter().any(|d| d["id"].as_str().unwrap().contains("+aug")));
}

#[test]
fn stratify_accepts_a_provider_file() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    std::fs::write(
        dir.path().join("provider.json"),
        r#"{"movie": ["film"], "city": ["town"]}"#,
    )
    .unwrap();
    ok(
        &[
            "stratify",
            "--in",
            "corpus.jsonl",
            "--out",
            "strat.jsonl",
            "--attribute",
            "race",
            "--provider",
            "provider.json",
            "--rate",
            "1.0",
        ],
        dir.path(),
    );
    let docs = read_lines(&dir.path().join("strat.jsonl"));
    let augmented: Vec<_> = docs
        .iter()
        .filter(|d| d["id"].as_str().unwrap().contains("+aug"))
        .collect();
    assert!(!augmented.is_empty());
    assert!(augmented.iter().all(|d| {
        let text = d["text"].as_str().unwrap();
        !text.split(' ').any(|w| w == "movie" || w == "city")
    }));
}

fn write_embeddings(path: &Path, rows: &[Vec<f64>]) {
    let lines: Vec<String> = rows
        .iter()
        .enumerate()
        .map(|(i, v)| serde_json::json!({"id": format!("r{i}"), "vector": v}).to_string())
        .collect();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

#[test]
fn subspace_fit_and_apply_remove_the_bias_direction() {
    let dir = tempfile::tempdir().unwrap();
    // counterfactuals shift along the first axis by varying amounts
    let factual: Vec<Vec<f64>> = (0..8)
        .map(|i| vec![0.1 * i as f64, 1.0 - 0.05 * i as f64, 0.3])
        .collect();
    let counter: Vec<Vec<f64>> = factual
        .iter()
        .enumerate()
        .map(|(i, v)| vec![v[0] + 1.0 + 0.2 * i as f64, v[1], v[2]])
        .collect();
    write_embeddings(&dir.path().join("f.jsonl"), &factual);
    write_embeddings(&dir.path().join("c.jsonl"), &counter);

    ok(
        &[
            "subspace",
            "fit",
            "--in",
            "f.jsonl",
            "--counterfactual",
            "c.jsonl",
            "--attribute",
            "gender",
            "--out",
            "sub.json",
        ],
        dir.path(),
    );
    let sub: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sub.json")).unwrap()).unwrap();
    let c: Vec<f64> = sub["components"][0]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!((c[0].abs() - 1.0).abs() < 1e-9, "{c:?}");

    ok(
        &[
            "subspace",
            "apply",
            "--subspace",
            "sub.json",
            "--in",
            "f.jsonl",
            "--out",
            "d.jsonl",
        ],
        dir.path(),
    );
    for row in read_lines(&dir.path().join("d.jsonl")) {
        let v: Vec<f64> = row["vector"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        let along: f64 = v.iter().zip(&c).map(|(a, b)| a * b).sum();
        assert!(along.abs() < 1e-9);
    }

    ok(
        &[
            "subspace",
            "apply",
            "--subspace",
            "sub.json",
            "--in",
            "f.jsonl",
            "--out",
            "d.bin",
        ],
        dir.path(),
    );
    let bytes = std::fs::read(dir.path().join("d.bin")).unwrap();
    assert_eq!(&bytes[..4], b"FSEB");
    assert_eq!(bytes.len(), 12 + 8 * 3 * 4);
}

#[test]
fn subspace_rank_deficiency_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![vec![1.0, 2.0]; 4];
    write_embeddings(&dir.path().join("f.jsonl"), &rows);
    let out = fairscope(
        &[
            "subspace", "fit", "--in", "f.jsonl", "--mode", "pooled", "--out", "sub.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("sub.json").exists());
}

#[test]
fn correlate_reads_metrics_reports() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    write_predictions(&corpus, &dir.path().join("preds.jsonl"));
    ok(
        &[
            "metrics",
            "--in",
            "corpus.jsonl",
            "--predictions",
            "preds.jsonl",
            "--out",
            "m.json",
        ],
        dir.path(),
    );
    std::fs::write(
        dir.path().join("ext.json"),
        r#"{"gender": 0.5, "race": 0.6, "religion": 0.7}"#,
    )
    .unwrap();
    let out = ok(
        &[
            "correlate",
            "--bias",
            "m.json",
            "--fairness",
            "m.json",
            "--sources",
            "selection,overamplification,external",
            "--external",
            "ext.json",
        ],
        dir.path(),
    );
    let corr = &out["correlation"];
    assert_eq!(corr["row_names"].as_array().unwrap().len(), 3);
    assert_eq!(corr["col_names"].as_array().unwrap().len(), 3);
    assert_eq!(corr["small_sample"], true);
    for row in corr["values"].as_array().unwrap() {
        for v in row.as_array().unwrap() {
            if let Some(v) = v.as_f64() {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
    }
}

#[test]
fn report_json_and_csv_formats() {
    let fixtures = tests_dir().join("fixtures");
    let base = fixtures.join("bert_gender_baseline.json");
    let treated = fixtures.join("bert_gender_treated.json");
    let json = ok(
        &[
            "report",
            "--baseline",
            base.to_str().unwrap(),
            "--treated",
            treated.to_str().unwrap(),
        ],
        Path::new("."),
    );
    let deltas = json["tables"][0]["rows"][0]["deltas"].as_array().unwrap();
    let fpr = deltas.iter().find(|d| d["metric"] == "FPR_gap").unwrap();
    assert_eq!(fpr["direction"], "improved");
    assert_eq!(fpr["rendered"], "↓0.011");

    let csv = fairscope(
        &[
            "report",
            "--baseline",
            base.to_str().unwrap(),
            "--treated",
            treated.to_str().unwrap(),
            "--format",
            "csv",
        ],
        Path::new("."),
    );
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("attribute,model,metric,baseline,treated,direction,rendered"));
    assert!(text.contains("TPR_gap"));
}
