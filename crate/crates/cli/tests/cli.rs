use std::fs;
use std::path::Path;
use std::process::Command;

fn convasr(args: &[&str], cwd: &Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_convasr"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "convasr {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn every_subcommand_runs_on_a_small_synthetic_set() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    convasr(
        &["synth-data", "--out", "data", "--train", "16", "--dev", "4", "--test", "4", "--lm-text", "200"],
        d,
    );
    for f in ["train.jsonl", "dev.jsonl", "test.jsonl", "lexicon.txt", "lm_train.txt", "lm_valid.txt"] {
        assert!(d.join("data").join(f).exists(), "{f} missing");
    }

    fs::write(d.join("am.cfg"), "# tiny run\nepochs = 1\nbatch_size = 4\nbeam_size = 50\n").unwrap();
    let log = convasr(
        &["--config", "am.cfg", "train-am", "--train", "data/train.jsonl", "--valid", "data/dev.jsonl", "--out", "am.json"],
        d,
    );
    assert_eq!(log.lines().count(), 2, "{log}");

    convasr(&["train-lm", "--text", "data/lm_train.txt", "--out", "lm.arpa", "--order", "2"], d);
    convasr(
        &[
            "train-lm", "--kind", "gcnn", "--text", "data/lm_train.txt", "--valid", "data/lm_valid.txt",
            "--out", "gcnn.json", "--epochs", "2", "--keep-epochs",
        ],
        d,
    );
    for f in ["gcnn.json", "gcnn.epoch0.json", "gcnn.epoch1.json", "gcnn.epoch2.json"] {
        assert!(d.join(f).exists(), "{f} missing");
    }

    let common = ["--lexicon", "data/lexicon.txt", "--lm", "lm.arpa"];
    let wav = fs::read_dir(d.join("data/test")).unwrap().next().unwrap().unwrap().path();
    let wav = wav.to_str().unwrap();
    let mut args = vec!["decode", "--am", "am.json", "--audio", wav, "--dump-emissions", "em.bin"];
    args.extend(common);
    let direct = convasr(&args, d);
    let mut args = vec!["decode", "--emissions", "em.bin"];
    args.extend(common);
    assert_eq!(convasr(&args, d), direct);

    let mut args = vec!["evaluate", "--am", "am.json", "--manifest", "data/test.jsonl", "--report", "report.csv"];
    args.extend(common);
    assert!(convasr(&args, d).starts_with("WER "));
    assert_eq!(fs::read_to_string(d.join("report.csv")).unwrap().lines().count(), 5);

    let mut args = vec!["--config", "am.cfg", "tune", "--am", "am.json", "--manifest", "data/dev.jsonl", "--alphas", "0,1", "--betas", "0,1"];
    args.extend(common);
    let tune = convasr(&args, d);
    assert_eq!(tune.lines().filter(|l| !l.starts_with('#')).count(), 5, "{tune}");

    convasr(&["analyze-frontend", "--am", "am.json", "--out", "analysis"], d);
    let centers = fs::read_to_string(d.join("analysis/center_frequencies.csv")).unwrap();
    assert_eq!(centers.lines().count(), 17);
    assert!(d.join("analysis/filter_heatmap.csv").exists());

    let ppl = convasr(
        &[
            "--config", "am.cfg", "ppl-wer", "--am", "am.json", "--manifest", "data/dev.jsonl", "--text",
            "data/lm_valid.txt", "--lexicon", "data/lexicon.txt", "--lms",
            "gcnn.epoch0.json,gcnn.epoch1.json,gcnn.epoch2.json",
        ],
        d,
    );
    assert_eq!(ppl.lines().count(), 4, "{ppl}");

    let mut args = vec!["--config", "am.cfg", "context-wer", "--am", "am.json", "--manifest", "data/dev.jsonl", "--limits", "1,2"];
    args.extend(["--lexicon", "data/lexicon.txt", "--lm", "gcnn.json"]);
    assert_eq!(convasr(&args, d).lines().count(), 3);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "learning_rate = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_convasr"))
        .args(["--config", "bad.cfg", "synth-data", "--out", "x"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}
