//! Exit-code contract and file outputs of the `patchaudit` binary.

use std::path::Path;
use std::process::{Command, Output};

fn patchaudit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchaudit")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn small_corpus(dir: &Path) -> String {
    let root = dir.join("corpus");
    let out = patchaudit(&[
        "synth",
        "--preset",
        "color-signatures",
        "--train-per-class",
        "6",
        "--test-per-class",
        "3",
        "--size",
        "32",
        "--out",
        &s(&root),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    s(&root)
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["frobnicate"],
        vec!["scan", "--root", "x"],
        vec!["featurize", "--manifest", "m", "--out", "o", "--bins", "0"],
        vec!["perturb", "--model", "m", "--manifest", "m", "--out", "o", "--jpeg", "101"],
        vec!["--threads", "0", "scan", "--root", "x", "--out", "y"],
        vec!["--seed", "-1", "scan", "--root", "x", "--out", "y"],
        vec!["train", "--features", "f", "--out", "o", "--kind", "svm"],
        vec!["synth", "--out", "x"],
        vec!["audit", "--train", "t", "--out", "o", "--saturation-threshold", "0"],
    ] {
        let out = patchaudit(&args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
    }
    assert_eq!(code(&patchaudit(&["--help"])), 0);
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = s(&dir.path().join("missing"));
    let out = patchaudit(&["scan", "--root", &missing, "--out", &s(&dir.path().join("m.csv"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("missing"));

    let out = patchaudit(&["eval", "--model", &missing, "--features", &missing]);
    assert_eq!(code(&out), 1);

    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{not json").unwrap();
    let out = patchaudit(&["synth", "--spec", &s(&garbage), "--out", &s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn eval_with_mismatched_schema_names_both() {
    let dir = tempfile::tempdir().unwrap();
    let root = small_corpus(dir.path());
    let manifest = format!("{root}/manifest.csv");
    let rgb = s(&dir.path().join("rgb.csv"));
    let hist = s(&dir.path().join("hist.csv"));
    let model = s(&dir.path().join("model.json"));
    for (ex, out) in [("mean-rgb", &rgb), ("histogram", &hist)] {
        let o = patchaudit(&["featurize", "--manifest", &manifest, "--extractor", ex, "--out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let o = patchaudit(&["train", "--features", &rgb, "--trees", "10", "--out", &model]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = patchaudit(&["eval", "--model", &model, "--features", &hist]);
    assert_eq!(code(&o), 1);
    let msg = stderr(&o);
    assert!(msg.contains("mean-rgb-3") && msg.contains("hist-3x16"), "{msg}");

    let per_class = dir.path().join("eval.csv");
    let confusion = dir.path().join("confusion.csv");
    let o = patchaudit(&[
        "eval",
        "--model",
        &model,
        "--features",
        &rgb,
        "--out",
        &s(&per_class),
        "--confusion",
        &s(&confusion),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("Adipose tissue (ADI)"), "{stdout}");
    let text = std::fs::read_to_string(per_class).unwrap();
    assert!(text.starts_with("class,support,correct,recall\nADI,3,"));
    assert_eq!(std::fs::read_to_string(confusion).unwrap().lines().count(), 82);
}

#[test]
fn synth_then_repro_prints_two_accuracy_lines() {
    let dir = tempfile::tempdir().unwrap();
    let root = small_corpus(dir.path());
    let o = patchaudit(&["repro", "--root", &root, "--trees", "20"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.contains("accuracy")).count(), 2, "{stdout}");
}

#[test]
fn repro_without_layout_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = patchaudit(&["repro", "--root", &s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("CRC-VAL-HE-7K"));
}

#[test]
fn subcommands_are_repeatable_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let root = small_corpus(dir.path());
    let manifest = format!("{root}/manifest.csv");
    let run = |tag: &str| {
        let d = dir.path().join(tag);
        let f = s(&d.join("f.csv"));
        let m = s(&d.join("m.json"));
        let soft = s(&d.join("soft.json"));
        let sweep = s(&d.join("sweep.csv"));
        let audit = s(&d.join("audit.json"));
        let plots = s(&d.join("plots"));
        let scan = s(&d.join("scan.csv"));
        for args in [
            vec!["scan", "--root", &format!("{root}/train"), "--out", &scan],
            vec!["featurize", "--manifest", &manifest, "--out", &f],
            vec!["--seed", "5", "train", "--features", &f, "--trees", "15", "--out", &m],
            vec!["train", "--features", &f, "--kind", "softmax", "--epochs", "50", "--out", &soft],
            vec!["perturb", "--model", &m, "--manifest", &manifest, "--jpeg", "50", "--hue=-15", "--out", &sweep],
            vec!["audit", "--train", &manifest, "--out", &audit, "--csv-dir", &plots],
        ] {
            let o = patchaudit(&args);
            assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
        }
        d
    };
    let (a, b) = (run("a"), run("b"));
    for f in [
        "scan.csv",
        "f.csv",
        "m.json",
        "soft.json",
        "sweep.csv",
        "audit.json",
        "plots/histograms_train.csv",
        "plots/histograms_test.csv",
        "plots/mean_rgb_train.csv",
        "plots/blockiness.csv",
    ] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let sweep = std::fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("perturbation,accuracy,balanced_accuracy,delta_accuracy\nbase,"));
    assert!(sweep.contains("\njpeg-q50,") && sweep.contains("\nhue-15,"));
    let hist = std::fs::read_to_string(a.join("plots/histograms_train.csv")).unwrap();
    assert!(hist.starts_with("class,channel,bin,frequency\nADI,R,0,"));
}
