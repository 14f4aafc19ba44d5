//! End-to-end checks of the command-line interface: the synth -> train ->
//! evaluate -> translate path on a small synthetic family, manifest
//! re-runs, and the exit-code contract.

use std::io::Write as _;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn lexmap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lexmap"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn assert_status(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Tiny but non-trivial training arguments shared by the CLI tests.
fn train_args(dir: &Path, out: &str, extra: &[&str]) -> Vec<String> {
    let mut args = vec![
        "train".to_string(),
        "--langs".into(),
        format!(
            "s0={},s1={}",
            dir.join("s0.vec").display(),
            dir.join("s1.vec").display()
        ),
        "--target".into(),
        "s0".into(),
        "--out-dir".into(),
        dir.join(out).display().to_string(),
        "--seed".into(),
        "9".into(),
    ];
    for (k, v) in [
        ("mat.epochs", "2"),
        ("mat.steps_per_epoch", "200"),
        ("mat.batch_size", "64"),
        ("mat.dis_hidden", "64"),
        ("mat.dis_lr", "1.0"),
        ("mat.map_lr", "2.0"),
        ("mat.beta", "0.5"),
        ("mat.map_update_clip", "0.008"),
        ("mat.dis_steps", "2"),
        ("mat.val_top_k", "400"),
        ("mpsr.epochs", "4"),
        ("mpsr.steps_per_epoch", "120"),
        ("mpsr.batch_size", "128"),
        ("mpsr.lr", "20"),
        ("mpsr.beta", "0.5"),
        ("mpsr.update_clip", "0.008"),
        ("mpsr.lexicon_cutoff", "400"),
        ("mpsr.val_top_k", "400"),
        ("mpsr.min_lexicon_size", "10"),
    ] {
        args.push("--set".into());
        args.push(format!("{k}={v}"));
    }
    args.extend(extra.iter().map(|s| s.to_string()));
    args
}

#[test]
fn synth_train_evaluate_translate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(lexmap().args([
        "synth",
        "--n-langs",
        "2",
        "--vocab",
        "400",
        "--dim",
        "16",
        "--sigma",
        "0.005",
        "--seed",
        "3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]));
    assert_status(&out, 0);
    assert!(dir.path().join("s0.vec").exists());
    assert!(dir.path().join("s0-s1.dict").exists());

    let out = run(lexmap().args(train_args(dir.path(), "run", &["--dump-lexica"])));
    assert_status(&out, 0);
    let ckpt = dir.path().join("run/best.ckpt");
    assert!(ckpt.exists());
    assert!(dir.path().join("run/manifest.cfg").exists());
    assert!(dir.path().join("run/mat_log.csv").exists());
    assert!(dir.path().join("run/mpsr_log.csv").exists());
    let lexicon = std::fs::read_to_string(dir.path().join("run/lexicon_s0_s1.tsv")).unwrap();
    assert!(lexicon.lines().count() > 10);
    assert!(lexicon.lines().all(|l| l.split('\t').count() == 2));

    // The log has the promised columns.
    let log = std::fs::read_to_string(dir.path().join("run/mat_log.csv")).unwrap();
    assert!(log.starts_with("epoch,step,d_loss,m_loss,d_acc,val_score"));

    // Evaluation on the gold dictionaries prints per-pair and summary rows.
    let out = run(lexmap().args([
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--langs",
        &format!(
            "s0={},s1={}",
            dir.path().join("s0.vec").display(),
            dir.path().join("s1.vec").display()
        ),
        "--dict",
        &format!("s0-s1={}", dir.path().join("s0-s1.dict").display()),
        "--dict",
        &format!("s1-s0={}", dir.path().join("s1-s0.dict").display()),
        "--k",
        "1,5",
        "--out-dir",
        dir.path().join("eval").to_str().unwrap(),
    ]));
    assert_status(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("s0-s1"));
    assert!(stdout.contains("Overall"));
    assert!(dir.path().join("eval/word_translation.csv").exists());

    // The trained pair model translates; w0 should be recovered exactly on
    // this easy family. OOV words are marked.
    let mut child = lexmap()
        .args([
            "translate",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--src",
            "s0",
            "--tgt",
            "s1",
            "--src-embeddings",
            dir.path().join("s0.vec").to_str().unwrap(),
            "--tgt-embeddings",
            dir.path().join("s1.vec").to_str().unwrap(),
            "--k",
            "1",
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"w0\nnot-a-word\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    // k = 1: exactly word, candidate, score.
    assert_eq!(lines[0].split('\t').count(), 3);
    assert!(lines[0].starts_with("w0\t"));
    assert_eq!(lines[1], "not-a-word\t<OOV>");
}

#[test]
fn manifest_alone_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    assert_status(
        &run(lexmap().args([
            "synth",
            "--n-langs",
            "2",
            "--vocab",
            "300",
            "--dim",
            "8",
            "--sigma",
            "0.01",
            "--seed",
            "4",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])),
        0,
    );
    let out = run(lexmap().args(train_args(dir.path(), "first", &[])));
    assert_status(&out, 0);

    // Re-run purely from the manifest, redirecting only the output dir.
    let manifest = dir.path().join("first/manifest.cfg");
    let out = run(lexmap().args([
        "train",
        "--config",
        manifest.to_str().unwrap(),
        "--out-dir",
        dir.path().join("second").to_str().unwrap(),
    ]));
    assert_status(&out, 0);

    let first = std::fs::read(dir.path().join("first/best.ckpt")).unwrap();
    let second = std::fs::read(dir.path().join("second/best.ckpt")).unwrap();
    assert_eq!(first, second, "manifest re-run must be bit-identical");
}

#[test]
fn supervised_procrustes_mode_solves_in_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    assert_status(
        &run(lexmap().args([
            "synth",
            "--n-langs",
            "2",
            "--vocab",
            "300",
            "--dim",
            "8",
            "--sigma",
            "0",
            "--seed",
            "6",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])),
        0,
    );
    let out = run(lexmap().args([
        "train",
        "--mode",
        "supervised-procrustes",
        "--langs",
        &format!(
            "s0={},s1={}",
            dir.path().join("s0.vec").display(),
            dir.path().join("s1.vec").display()
        ),
        "--target",
        "s1",
        "--train-dict",
        &format!("s0={}", dir.path().join("s0-s1.dict").display()),
        "--out-dir",
        dir.path().join("proc").to_str().unwrap(),
    ]));
    assert_status(&out, 0);

    // Exact data: the solved mapping translates perfectly.
    let out = run(lexmap().args([
        "evaluate",
        "--checkpoint",
        dir.path().join("proc/best.ckpt").to_str().unwrap(),
        "--langs",
        &format!(
            "s0={},s1={}",
            dir.path().join("s0.vec").display(),
            dir.path().join("s1.vec").display()
        ),
        "--dict",
        &format!("s0-s1={}", dir.path().join("s0-s1.dict").display()),
        "--k",
        "1",
    ]));
    assert_status(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("1.0000"),
        "expected perfect precision, got:\n{stdout}"
    );
}

#[test]
fn exit_codes_distinguish_usage_from_runtime() {
    let dir = tempfile::tempdir().unwrap();

    // Unknown mode: usage error.
    let out = run(lexmap().args([
        "train",
        "--langs",
        "a=/nonexistent/a.vec,b=/nonexistent/b.vec",
        "--target",
        "a",
        "--mode",
        "nonsense",
    ]));
    assert_status(&out, 2);

    // Missing embedding files: usage error.
    let out = run(lexmap().args([
        "train",
        "--langs",
        "a=/nonexistent/a.vec,b=/nonexistent/b.vec",
        "--target",
        "a",
    ]));
    assert_status(&out, 2);

    // Malformed dictionary: usage error naming file and line.
    assert_status(
        &run(lexmap().args([
            "synth",
            "--n-langs",
            "2",
            "--vocab",
            "64",
            "--dim",
            "8",
            "--seed",
            "1",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])),
        0,
    );
    let out = run(lexmap().args(train_args(
        dir.path(),
        "tiny",
        &["--set", "mat.epochs=1", "--set", "mat.steps_per_epoch=10", "--set", "mpsr.epochs=1", "--set", "mpsr.steps_per_epoch=5", "--set", "mat.val_top_k=64", "--set", "mpsr.val_top_k=64", "--set", "mpsr.lexicon_cutoff=64"],
    )));
    assert_status(&out, 0);
    let bad_dict = dir.path().join("bad.dict");
    std::fs::write(&bad_dict, "one two three\n").unwrap();
    let out = run(lexmap().args([
        "evaluate",
        "--checkpoint",
        dir.path().join("tiny/best.ckpt").to_str().unwrap(),
        "--langs",
        &format!(
            "s0={},s1={}",
            dir.path().join("s0.vec").display(),
            dir.path().join("s1.vec").display()
        ),
        "--dict",
        &format!("s0-s1={}", bad_dict.display()),
    ]));
    assert_status(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.dict"), "stderr: {stderr}");
    assert!(stderr.contains(":1"), "stderr should name the line: {stderr}");
}

#[test]
fn synth_is_deterministic_per_seed() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        assert_status(
            &run(lexmap().args([
                "synth",
                "--n-langs",
                "2",
                "--vocab",
                "100",
                "--dim",
                "8",
                "--sigma",
                "0.02",
                "--seed",
                "7",
                "--out-dir",
                d.path().to_str().unwrap(),
            ])),
            0,
        );
    }
    assert_eq!(
        std::fs::read(d1.path().join("s0.vec")).unwrap(),
        std::fs::read(d2.path().join("s0.vec")).unwrap()
    );
    assert_eq!(
        std::fs::read(d1.path().join("s1.vec")).unwrap(),
        std::fs::read(d2.path().join("s1.vec")).unwrap()
    );
}
