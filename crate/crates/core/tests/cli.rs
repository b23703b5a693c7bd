use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn elitist(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elitist"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL_SPEC: &str = "utterance_count = 30\nheldout_count = 10\nseed = 3\n";

fn synth(dir: &Path) -> PathBuf {
    fs::write(dir.join("spec.toml"), SMALL_SPEC).unwrap();
    ok(&elitist(&["synth", "--spec", "spec.toml", "--out", "syn"], dir));
    dir.join("syn")
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
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
fn synth_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = synth(tmp.path());
    ok(&elitist(
        &["synth", "--spec", "spec.toml", "--out", "again"],
        tmp.path(),
    ));
    let first = tree(&a);
    assert!(first.iter().any(|(p, _)| p.ends_with("train/manifest.jsonl")));
    assert!(first.iter().any(|(p, _)| p.ends_with("heldout/manifest.jsonl")));
    assert_eq!(first, tree(&tmp.path().join("again")));

    ok(&elitist(
        &["synth", "--spec", "spec.toml", "--seed", "4", "--out", "other"],
        tmp.path(),
    ));
    assert_ne!(first, tree(&tmp.path().join("other")));
}

#[test]
fn missing_spec_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = elitist(&["synth", "--spec", "absent.toml", "--out", "x"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(elitist(&["bogus"], tmp.path()).status.code(), Some(1));
    assert_eq!(elitist(&["elitist", "--out", "x"], tmp.path()).status.code(), Some(1));
    fs::write(tmp.path().join("bad.toml"), "[elitist]\nmax_iterations = 0\n").unwrap();
    let syn = synth(tmp.path());
    let manifest = syn.join("train/manifest.jsonl");
    let out = elitist(
        &[
            "--config",
            "bad.toml",
            "elitist",
            "--corpus",
            manifest.to_str().unwrap(),
            "--out",
            "r",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    let train = "syn/train/manifest.jsonl";
    let heldout = "syn/heldout/manifest.jsonl";

    ok(&elitist(
        &[
            "elitist",
            "--corpus",
            train,
            "--out",
            "run",
            "--no-early-stop",
            "--mixtures",
            "2",
        ],
        dir,
    ));
    let csv = fs::read_to_string(dir.join("run/trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("iteration,accuracy_all,accuracy_subset,retained_all,retained_subset"));
    for n in 0..=5 {
        assert!(dir.join(format!("run/models_iter{n}.json")).exists());
    }
    assert!(dir.join("run/config.toml").exists());

    // Flags win over the config file.
    fs::write(
        dir.join("cfg.toml"),
        "[elitist]\nmax_iterations = 4\nearly_stop = false\n",
    )
    .unwrap();
    ok(&elitist(
        &[
            "--config",
            "cfg.toml",
            "elitist",
            "--corpus",
            train,
            "--out",
            "run3",
            "--iterations",
            "2",
        ],
        dir,
    ));
    assert_eq!(
        fs::read_to_string(dir.join("run3/trace.csv")).unwrap().lines().count(),
        3
    );

    let out = Command::new(env!("CARGO_BIN_EXE_elitist"))
        .args([
            "elitist",
            "--corpus",
            train,
            "--out",
            "ctx",
            "--mode",
            "contextual",
            "--iterations",
            "1",
        ])
        .current_dir(dir)
        .env("RUST_LOG", "info")
        .output()
        .unwrap();
    ok(&out);
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("contextualized"), "{log}");
    let models = fs::read_to_string(dir.join("ctx/models_iter0.json")).unwrap();
    assert!(models.contains("\"p+c"));

    ok(&elitist(
        &[
            "eval",
            "--models",
            "run/models_iter5.json",
            "--corpus",
            heldout,
            "--out",
            "ev",
            "--threshold",
            "0.5",
        ],
        dir,
    ));
    ok(&elitist(
        &[
            "eval",
            "--models",
            "run/models_iter5.json",
            "--corpus",
            heldout,
            "--out",
            "ev2",
        ],
        dir,
    ));
    let json = fs::read_to_string(dir.join("ev/report.json")).unwrap();
    assert_eq!(json, fs::read_to_string(dir.join("ev2/report.json")).unwrap());
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    let g = report["global_correct"].as_f64().unwrap();
    let w = report["correct_as_wellrealized"].as_f64().unwrap();
    let n = report["correct_as_notsowell"].as_f64().unwrap();
    assert!((g - w - n).abs() < 0.01);
    for f in [
        "matrix_wellrealized.csv",
        "matrix_notsowell.csv",
        "report.txt",
        "hypotheses.jsonl",
    ] {
        assert!(dir.join("ev").join(f).exists(), "{f}");
    }

    // Identical files score 1.0; decoded hypotheses score below that.
    let line = ok(&elitist(&["score", "--refs", heldout, "--hyps", heldout], dir));
    assert!(line.contains("Accuracy 1"), "{line}");
    let line = ok(&elitist(
        &[
            "score",
            "--refs",
            heldout,
            "--hyps",
            "ev/hypotheses.jsonl",
            "--subset",
            "p,t,k,f,s,ʃ",
            "--class-equivalence",
        ],
        dir,
    ));
    assert!(line.starts_with("Ok "), "{line}");

    let plot = ok(&elitist(&["report", "run/trace.csv"], dir));
    let rows: Vec<&str> = plot.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("0 "));
    assert_eq!(rows[0].split_whitespace().count(), 5);
}

#[test]
fn eval_rejects_dimension_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    fs::write(
        dir.join("wide.toml"),
        "dim = 4\nutterance_count = 5\nheldout_count = 0\n",
    )
    .unwrap();
    ok(&elitist(&["synth", "--spec", "wide.toml", "--out", "wide"], dir));
    let out = elitist(
        &[
            "eval",
            "--models",
            "syn/truth.json",
            "--corpus",
            "wide/train/manifest.jsonl",
            "--out",
            "ev",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));
}

#[test]
fn features_from_wav() {
    let tmp = tempfile::tempdir().unwrap();
    let wav = tmp.path().join("tone.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&wav, spec).unwrap();
    for i in 0..16_000 {
        let t = i as f64 / 16_000.0;
        w.write_sample(((2.0 * std::f64::consts::PI * 440.0 * t).sin() * 8000.0) as i16)
            .unwrap();
    }
    w.finalize().unwrap();
    ok(&elitist(&["features", "tone.wav", "--out", "feats"], tmp.path()));
    let feats = elitist_core::frontend::load_features(tmp.path().join("feats/tone.feat"), Some(39)).unwrap();
    assert_eq!(feats.len(), 98);
}
