use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use slt_core::corpus::load_corpus;

fn slt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slt"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run slt")
}

fn ok(args: &[&str], cwd: &Path) {
    let o = slt(args, cwd);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// A small synthetic corpus in `dir/synth`.
fn synth(dir: &Path, samples: usize) -> PathBuf {
    ok(
        &["synth", "--samples", &samples.to_string(), "--height", "32", "--width", "32", "--out", "synth"],
        dir,
    );
    dir.join("synth/manifest.jsonl")
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn prepare_baseline_keeps_frames() {
    let t = tempfile::tempdir().unwrap();
    let m = synth(t.path(), 12);
    ok(&["prepare", "--manifest", m.to_str().unwrap(), "--variant", "baseline", "--out", "base"], t.path());
    let a = load_corpus(&m).unwrap();
    let b = load_corpus(t.path().join("base/manifest.jsonl")).unwrap();
    assert_eq!(a, b);
    assert!(!t.path().join("base/.tmp").exists());
    assert!(t.path().join("base/run_config.json").exists());
}

#[test]
fn prepare_keeps_cardinality() {
    let t = tempfile::tempdir().unwrap();
    let m = synth(t.path(), 20);
    ok(&["prepare", "--manifest", m.to_str().unwrap(), "--variant", "mouth_hands_full", "--out", "mh"], t.path());
    assert_eq!(load_corpus(t.path().join("mh/manifest.jsonl")).unwrap().len(), 20);
}

#[test]
fn invalid_inputs_exit_with_two() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("bad.jsonl"), "{not json\n").unwrap();
    assert_eq!(code(&slt(&["prepare", "--manifest", "bad.jsonl", "--out", "o"], t.path())), 2);
    assert_eq!(code(&slt(&["prepare", "--manifest", "missing.jsonl", "--out", "o"], t.path())), 2);
    assert_eq!(code(&slt(&["prepare", "--out", "o"], t.path())), 2);
    assert_eq!(code(&slt(&["synth", "--no-such-flag", "--out", "o"], t.path())), 2);
    let m = synth(t.path(), 10);
    let m = m.to_str().unwrap();
    assert_eq!(code(&slt(&["prepare", "--manifest", m, "--variant", "ears", "--out", "o"], t.path())), 2);
}

#[test]
fn help_lists_every_flag() {
    let t = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 8] = [
        ("synth", &["--samples", "--pairs", "--height", "--width", "--noise", "--frames-per-gloss", "--signers"]),
        ("prepare", &["--manifest", "--variant", "--box-width", "--box-height", "--mouth-offset"]),
        ("augment", &["--manifest", "--split-first", "--contrast-factor"]),
        ("align", &["--glosses", "--candidates", "--method", "--subst"]),
        (
            "train",
            &["--manifest", "--dev", "--epochs", "--hidden", "--batch", "--lr", "--layers", "--heads", "--dropout",
              "--lambda-rec", "--lambda-trans", "--allow-offgrid", "--record-timing", "--freeze"],
        ),
        ("finetune", &["--checkpoint", "--reinit", "--manifest", "--epochs", "--allow-offgrid"]),
        ("evaluate", &["--checkpoint", "--manifest", "--beam", "--max-len"]),
        ("homonyms", &["--manifest", "--lexicon"]),
    ];
    for (cmd, flags) in cases {
        let o = slt(&[cmd, "--help"], t.path());
        assert!(o.status.success());
        let text = String::from_utf8_lossy(&o.stdout);
        for f in flags.iter().chain(&["--config", "--seed", "--out"]) {
            assert!(text.contains(f), "`{cmd} --help` lacks {f}");
        }
    }
}

#[test]
fn augment_triples_and_is_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let m = synth(t.path(), 10);
    let m = m.to_str().unwrap();
    ok(&["augment", "--manifest", m, "--out", "a1"], t.path());
    ok(&["augment", "--manifest", m, "--out", "a2"], t.path());
    assert_eq!(load_corpus(t.path().join("a1/manifest.jsonl")).unwrap().len(), 30);
    let a1 = read_tree(&t.path().join("a1"));
    let a2 = read_tree(&t.path().join("a2"));
    let strip = |v: Vec<(PathBuf, Vec<u8>)>| v.into_iter().filter(|(p, _)| p != Path::new("run_config.json")).collect::<Vec<_>>();
    assert_eq!(strip(a1), strip(a2));

    ok(&["augment", "--manifest", m, "--split-first", "--out", "s"], t.path());
    let n = |s: &str| load_corpus(t.path().join(format!("s/{s}/manifest.jsonl"))).unwrap().len();
    assert_eq!((n("train"), n("test"), n("dev")), (21, 2, 1));
}

#[test]
fn align_methods_and_substitutions() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("g.txt"), "A B C\n").unwrap();
    fs::write(t.path().join("c.tsv"), "A D\tx y\nA B C E\t__NAME__ regnet\n").unwrap();
    fs::write(t.path().join("s.tsv"), "__NAME__\tberlin\n").unwrap();
    ok(&["align", "--glosses", "g.txt", "--candidates", "c.tsv", "--method", "wordset", "--subst", "s.tsv", "--out", "w"], t.path());
    let line: serde_json::Value =
        serde_json::from_str(fs::read_to_string(t.path().join("w/aligned.jsonl")).unwrap().trim()).unwrap();
    assert_eq!(line["index"], 1);
    assert_eq!(line["text"], serde_json::json!(["berlin", "regnet"]));

    fs::write(t.path().join("c2.tsv"), "C B A\tp\nA B C\tq\n").unwrap();
    ok(&["align", "--glosses", "g.txt", "--candidates", "c2.tsv", "--method", "bleu", "--out", "b"], t.path());
    let line: serde_json::Value =
        serde_json::from_str(fs::read_to_string(t.path().join("b/aligned.jsonl")).unwrap().trim()).unwrap();
    assert_eq!(line["index"], 1);
    assert_eq!(code(&slt(&["align", "--glosses", "g.txt", "--candidates", "c2.tsv", "--method", "x", "--out", "b"], t.path())), 2);
}

#[test]
fn training_grid_is_enforced() {
    let t = tempfile::tempdir().unwrap();
    let m = synth(t.path(), 10);
    let m = m.to_str().unwrap();
    let o = slt(&["train", "--manifest", m, "--hidden", "300", "--out", "t"], t.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--allow-offgrid"));
    assert!(!t.path().join("t/model.sltc").exists());
    ok(&["train", "--manifest", m, "--epochs", "5", "--hidden", "512", "--batch", "32", "--lr", "1e-3", "--out", "grid"], t.path());
    assert!(t.path().join("grid/model.sltc").exists());
}

#[test]
fn config_file_and_flag_precedence() {
    let t = tempfile::tempdir().unwrap();
    let m = synth(t.path(), 10);
    fs::write(
        t.path().join("cfg.json"),
        format!(
            r#"{{"seed": 5, "train": {{"manifest": "{}", "epochs": 3, "hidden": 16, "heads": 2, "allow_offgrid": true}}}}"#,
            m.display()
        ),
    )
    .unwrap();
    ok(&["train", "--config", "cfg.json", "--epochs", "2", "--out", "c"], t.path());
    let rc: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("c/run_config.json")).unwrap()).unwrap();
    assert_eq!(rc["train.epochs"], 2);
    assert_eq!(rc["train.hidden"], 16);
    assert_eq!(rc["seed"], 5);
    assert_eq!(fs::read_to_string(t.path().join("c/train_log.jsonl")).unwrap().lines().count(), 2);

    fs::write(t.path().join("bad.json"), r#"{"train.epochz": 3}"#).unwrap();
    assert_eq!(code(&slt(&["train", "--config", "bad.json", "--manifest", m.to_str().unwrap(), "--out", "c"], t.path())), 2);
    fs::write(t.path().join("bad2.json"), r#"{"trian.epochs": 3}"#).unwrap();
    assert_eq!(code(&slt(&["synth", "--config", "bad2.json", "--out", "c"], t.path())), 2);
}

#[test]
fn evaluate_writes_all_metrics_and_finetune_reports() {
    let t = tempfile::tempdir().unwrap();
    let m = synth(t.path(), 12);
    let m = m.to_str().unwrap();
    let tiny = ["--epochs", "2", "--hidden", "16", "--heads", "2", "--allow-offgrid"];
    let mut args = vec!["train", "--manifest", m, "--out", "t"];
    args.extend(tiny);
    ok(&args, t.path());
    ok(&["evaluate", "--checkpoint", "t/model.sltc", "--manifest", m, "--beam", "2", "--out", "e"], t.path());
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("e/metrics.json")).unwrap()).unwrap();
    let keys: Vec<&String> = rep.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["bleu1", "bleu2", "bleu3", "bleu4", "chrf", "ppl", "rouge_l_f1"]);
    assert_eq!(fs::read_to_string(t.path().join("e/hypotheses.jsonl")).unwrap().lines().count(), 12);

    let mut args = vec!["finetune", "--checkpoint", "t/model.sltc", "--manifest", m, "--reinit", "recognition_head", "--out", "f"];
    args.extend(tiny);
    ok(&args, t.path());
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(t.path().join("f/finetune_report.json")).unwrap()).unwrap();
    assert_eq!(rep["reinitialized"], serde_json::json!(["recognition_head.weight", "recognition_head.bias"]));
    assert_eq!(code(&slt(&["evaluate", "--checkpoint", m, "--manifest", m, "--out", "e"], t.path())), 2);
}

#[test]
fn homonym_counts() {
    let t = tempfile::tempdir().unwrap();
    let m = synth(t.path(), 20);
    fs::write(t.path().join("lex.tsv"), "MORGEN\tmorgen|tag\n").unwrap();
    ok(&["homonyms", "--manifest", m.to_str().unwrap(), "--lexicon", "lex.tsv", "--out", "h"], t.path());
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("h/homonyms.json")).unwrap()).unwrap();
    assert_eq!(rep["records"], 20);
}
