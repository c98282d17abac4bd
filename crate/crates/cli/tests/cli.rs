use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use twostage::corpus::read_jsonl;

const TINY: &[&str] = &[
    "--set", "windows=1-4",
    "--set", "epochs=2",
    "--set", "word_dim=6",
    "--set", "char_dim=4",
    "--set", "hidden_dim=8",
];

fn twostage<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twostage")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth_small(dir: &Path, seed: &str) {
    let cfg = dir.join("synth.cfg");
    fs::write(&cfg, "sentences = 30\nmin_len = 6\nmax_len = 10\nentity_lengths = 1, 2, 3, 4, 5\n").unwrap();
    let o = twostage(&["synth", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn train_small(dir: &Path) -> std::path::PathBuf {
    synth_small(dir, "1");
    let out = dir.join("run");
    let path = |p: &Path| p.to_str().unwrap().to_string();
    let mut args: Vec<String> = vec![
        "train".into(),
        "--quiet".into(),
        "--train".into(),
        path(&dir.join("train.jsonl")),
        "--dev".into(),
        path(&dir.join("dev.jsonl")),
        "--out".into(),
        path(&out),
    ];
    args.extend(TINY.iter().map(|s| s.to_string()));
    let o = twostage(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

#[test]
fn synth_writes_default_split_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = twostage(&["synth", "--seed", "9", "--set", "sentences=50", "--out", d.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let sizes: Vec<usize> = ["train", "dev", "test"]
        .iter()
        .map(|n| read_jsonl(a.path().join(format!("{n}.jsonl"))).unwrap().len())
        .collect();
    assert_eq!(sizes, vec![40, 5, 5]);
    for n in ["train", "dev", "test"] {
        let f = format!("{n}.jsonl");
        assert_eq!(fs::read(a.path().join(&f)).unwrap(), fs::read(b.path().join(&f)).unwrap());
    }
}

#[test]
fn infeasible_synth_config_fails() {
    let d = tempfile::tempdir().unwrap();
    let o = twostage(&["synth", "--set", "min_len=3", "--set", "max_len=4", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("infeasible"), "{}", stderr(&o));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(code(&twostage(&["train"])), 1);
    assert_eq!(code(&twostage(&["frobnicate"])), 1);
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.cfg");
    fs::write(&cfg, "alpha1 = 0.7\nbogus = 1\n").unwrap();
    let o = twostage(&["train", "--train", "x.jsonl", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 2") && stderr(&o).contains("bogus"), "{}", stderr(&o));
    let o = twostage(&["train", "--train", "x.jsonl", "--set", "alpha1=2"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&twostage(&["--help"])), 0);
}

#[test]
fn data_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.jsonl");
    fs::write(&bad, "{\"tokens\": [\"a\"], \"entities\": []}\n{\"tokens\": [\"a\"], \"entities\": [{\"start\": 0, \"end\": 3, \"label\": \"X\"}]}\n").unwrap();
    let o = twostage(&["train", "--train", bad.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    let missing = d.path().join("missing.jsonl");
    assert_eq!(code(&twostage(&["train", "--train", missing.to_str().unwrap()])), 2);
}

#[test]
fn divergent_training_exits_three() {
    let d = tempfile::tempdir().unwrap();
    synth_small(d.path(), "2");
    let train = d.path().join("train.jsonl");
    let mut args = vec!["train", "--quiet", "--train", train.to_str().unwrap(), "--out", d.path().to_str().unwrap()];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--set", "lr=1e300", "--set", "grad_clip=0", "--set", "warmup=0"]);
    let o = twostage(&args);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"), "{}", stderr(&o));
}

#[test]
fn train_eval_predict_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let run = train_small(d.path());
    let model = run.join("model.json");
    assert!(model.exists());
    let log = fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(log.lines().all(|l| l.contains("\"dev_f1\"") && l.contains("\"loss\"")));

    let test = d.path().join("test.jsonl");
    let (m, t) = (model.to_str().unwrap(), test.to_str().unwrap());
    let o = twostage(&["eval", "--model", m, "--data", t]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for section in ["overall", "by length", "bucket", "offsets"] {
        assert!(text.contains(section), "missing {section} in\n{text}");
    }
    let out = d.path().join("eval");
    let o = twostage(&["eval", "--json", "--model", m, "--data", t, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report: twostage::EvalReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report.proposal_ratio.is_finite());
    assert!(out.join("report.txt").exists() && out.join("offsets.csv").exists());

    let p1 = d.path().join("p1");
    let p2 = d.path().join("p2");
    for p in [&p1, &p2] {
        let o = twostage(&["predict", "--model", m, "--data", t, "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = fs::read(p1.join("predictions.jsonl")).unwrap();
    assert_eq!(a, fs::read(p2.join("predictions.jsonl")).unwrap());
    let parsed = read_jsonl(p1.join("predictions.jsonl")).unwrap();
    assert_eq!(parsed.len(), read_jsonl(&test).unwrap().len());
}

#[test]
fn eval_rejects_unknown_labels_and_empty_corpora() {
    let d = tempfile::tempdir().unwrap();
    let run = train_small(d.path());
    let model = run.join("model.json");
    let odd = d.path().join("odd.jsonl");
    fs::write(&odd, "{\"tokens\": [\"a\"], \"entities\": [{\"start\": 0, \"end\": 0, \"label\": \"PLANET\"}]}\n").unwrap();
    let o = twostage(&["eval", "--model", model.to_str().unwrap(), "--data", odd.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("PLANET"), "{}", stderr(&o));
    let empty = d.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = twostage(&["eval", "--model", model.to_str().unwrap(), "--data", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn predict_emits_a_line_per_sentence() {
    let d = tempfile::tempdir().unwrap();
    let run = train_small(d.path());
    let bare = d.path().join("bare.jsonl");
    fs::write(&bare, "{\"tokens\": [\"zzz\"]}\n{\"tokens\": [\"w1\", \"w2\"]}\n").unwrap();
    let o = twostage(&["predict", "--model", run.join("model.json").to_str().unwrap(), "--data", bare.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().count(), 2);
    assert!(out.lines().all(|l| l.contains("\"entities\"")));
}
