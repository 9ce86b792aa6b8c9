use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ctvl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctvl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
seed = 11
[synth]
n_pairs = 240
raw_dim = 16
proj_dim = 8
n_findings = 4
depth_D = 6
[train]
epochs = 2
batch_size = 32
proj_dim = 8
[eval]
retrieval_pool = 100
pooled_size = 16
pooled_trials = 5
[eval.bootstrap]
resamples = 50
"#;

const REPORT: &str = r#"{"report_id":"r1","patient_id":"p1","full_text":"Findings: Small nodule in the right upper lobe (series 4, image 38). No effusion.","sections":{"findings":"Small nodule in the right upper lobe (series 4, image 38). No effusion."},"series_geometries":[{"series":4,"num_slices":120,"slice_thickness_mm":2.0,"first_slice_offset_mm":0.0,"axial_length_mm":240.0}]}"#;

#[test]
fn mine_extracts_the_series_image_reference() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("r.jsonl"), format!("{REPORT}\n")).unwrap();
    let o = ctvl(&["mine", "r.jsonl", "--out", "s.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("1 snippets"));
    let line = fs::read_to_string(dir.path().join("s.jsonl")).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!((v["series"].as_u64(), v["image"].as_u64()), (Some(4), Some(38)));
    assert_eq!(v["snippet"], "Small nodule in the right upper lobe");
}

#[test]
fn mine_on_empty_input_succeeds_with_zero_snippets() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("r.jsonl"), "").unwrap();
    let o = ctvl(&["mine", "r.jsonl", "--out", "s.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("0 snippets"));
    assert_eq!(fs::read_to_string(dir.path().join("s.jsonl")).unwrap(), "");
}

#[test]
fn malformed_reports_exit_2_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("r.jsonl"), format!("{REPORT}\n{{\"report_id\": 3\n")).unwrap();
    let o = ctvl(&["mine", "r.jsonl", "--out", "s.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn missing_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = ctvl(&["mine", "absent.jsonl", "--out", "s.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_mining_reports_scores_and_rejects_unknown_reports() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("pred.jsonl"), "{\"report_id\":\"a\",\"series\":4,\"image\":38}\n").unwrap();
    fs::write(
        p.join("gold.jsonl"),
        "{\"report_id\":\"a\",\"references\":[[4,38],[4,40]]}\n{\"report_id\":\"b\",\"references\":[]}\n",
    )
    .unwrap();
    let o = ctvl(&["eval-mining", "pred.jsonl", "gold.jsonl", "--resamples", "100"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("precision    100.000"), "{out}");
    assert!(out.contains("recall        50.000"), "{out}");

    fs::write(p.join("stray.jsonl"), "{\"report_id\":\"zzz\",\"series\":1,\"image\":1}\n").unwrap();
    let o = ctvl(&["eval-mining", "stray.jsonl", "gold.jsonl"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("zzz"));
}

#[test]
fn empty_gold_warns_and_uses_the_convention() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("g.jsonl"), "").unwrap();
    let o = ctvl(&["eval-mining", "g.jsonl", "g.jsonl"], dir.path());
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));
    assert!(stdout(&o).contains("precision 100.0"));
}

#[test]
fn gradcheck_passes_and_an_injected_bug_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = ctvl(&["gradcheck", "--trials", "10"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
    for f in ["siglip", "prompt", "localization", "head-backward"] {
        let o = ctvl(&["gradcheck", "--trials", "5", "--inject-bug", f], dir.path());
        assert_eq!(o.status.code(), Some(1), "{f}");
        let out = stdout(&o);
        assert!(out.contains(&format!("FAIL {f} trial")), "{out}");
    }
    let o = ctvl(&["gradcheck", "--inject-bug", "softmax"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_config_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[train]\nepoch = 3\n").unwrap();
    let o = ctvl(&["gen-synth", "--config", "c.toml", "--out", "corpus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn generate_train_evaluate_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("c.toml"), SMALL).unwrap();
    let ok = |args: &[&str]| {
        let o = ctvl(args, p);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        o
    };
    ok(&["gen-synth", "--config", "c.toml", "--out", "corpus"]);
    ok(&["train", "--config", "c.toml", "--corpus", "corpus", "--out", "run"]);
    let first = ok(&[
        "eval", "--config", "c.toml", "--corpus", "corpus", "--checkpoint", "run/checkpoint.rfkt", "--out", "ev1",
    ]);
    assert!(stdout(&first).contains("R@10"));
    for f in ["corpus/manifest.json", "run/manifest.json", "run/train_log.jsonl", "ev1/manifest.json"] {
        assert!(p.join(f).exists(), "{f}");
    }
    let log = fs::read_to_string(p.join("run/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);

    // a second run with more threads reproduces every artifact byte for byte
    ok(&["--threads", "3", "train", "--config", "c.toml", "--corpus", "corpus", "--out", "run2"]);
    ok(&[
        "--threads", "1", "eval", "--config", "c.toml", "--corpus", "corpus", "--checkpoint", "run2/checkpoint.rfkt",
        "--out", "ev2",
    ]);
    let read = |f: &str| fs::read(p.join(f)).unwrap();
    assert_eq!(read("run/checkpoint.rfkt"), read("run2/checkpoint.rfkt"));
    assert_eq!(read("run/train_log.jsonl"), read("run2/train_log.jsonl"));
    assert_eq!(read("ev1/metrics.json"), read("ev2/metrics.json"));

    let manifest: serde_json::Value = serde_json::from_slice(&read("run/manifest.json")).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seeds"]["master"], 11);
    assert!(manifest["inputs"]["corpus"].is_string());
}

#[test]
fn evaluating_a_checkpoint_of_the_wrong_width_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("c.toml"), SMALL).unwrap();
    fs::write(p.join("wide.toml"), SMALL.replace("raw_dim = 16", "raw_dim = 24")).unwrap();
    for (cfg, out) in [("c.toml", "corpus"), ("wide.toml", "wide")] {
        assert!(ctvl(&["gen-synth", "--config", cfg, "--out", out], p).status.success());
    }
    assert!(ctvl(&["train", "--config", "wide.toml", "--corpus", "wide", "--out", "run"], p)
        .status
        .success());
    let o = ctvl(
        &["eval", "--config", "c.toml", "--corpus", "corpus", "--checkpoint", "run/checkpoint.rfkt", "--out", "ev"],
        p,
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("24") && err.contains("16"), "{err}");
}
