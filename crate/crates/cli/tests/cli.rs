use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use cleegn::data::load_recording;

fn cleegn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cleegn"))
        .args(args)
        .env_remove("CLEEGN_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> (String, String) {
    let out = cleegn(args);
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(out.status.success(), "cleegn {args:?} failed:\n{stderr}");
    (stdout, stderr)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_data(dir: &Path, subjects: &str) {
    ok(&[
        "synth", "--out", s(dir), "--subjects", subjects, "--duration", "40", "--channels", "4", "--fs", "64",
    ]);
}

#[test]
fn info_reports_parameter_counts() {
    let (out, _) = ok(&["info"]);
    assert!(out.contains("learnable params  220755"), "{out}");
    assert!(out.contains("T = 512"));
    let (out, _) = ok(&["info", "--channels", "20", "--fs", "125"]);
    assert!(out.contains("learnable params  14043"), "{out}");
}

#[test]
fn synth_is_deterministic_and_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    small_data(&a, "3");
    small_data(&b, "3");
    let mut names: Vec<String> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(
        names,
        ["s01_clean.eegr", "s01_noisy.eegr", "s02_clean.eegr", "s02_noisy.eegr", "s03_clean.eegr", "s03_noisy.eegr"]
    );
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn zero_artifact_rates_leave_noisy_equal_to_clean() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "synth", "-o", s(tmp.path()), "--subjects", "1", "--duration", "10", "--channels", "3", "--fs", "64",
        "--blinks-per-min", "0", "--emg-per-min", "0",
    ]);
    let noisy = load_recording(tmp.path().join("s01_noisy.eegr")).unwrap();
    let clean = load_recording(tmp.path().join("s01_clean.eegr")).unwrap();
    assert_eq!(noisy.as_channel_major(), clean.as_channel_major());
}

#[test]
fn train_writes_one_checkpoint_per_fold_and_logs_the_recipe() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, run) = (tmp.path().join("data"), tmp.path().join("run"));
    small_data(&data, "4");
    let (stdout, stderr) = ok(&["train", "-d", s(&data), "-o", s(&run), "--folds", "2", "--epochs", "2"]);
    assert!(stderr.contains("batch=64 epochs=2 lr=0.001 gamma=0.8"), "{stderr}");
    assert!(stderr.contains("train.batch_size=64"));
    assert!(stdout.contains("over 4 subjects"));
    for k in 0..2 {
        assert!(run.join(format!("models/fold{k}-best.clgn")).is_file());
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["train.folds"], "2");
    assert_eq!(report["folds"].as_array().unwrap().len(), 2);

    let (out, _) = ok(&["info", "--model", s(&run.join("models/fold0-best.clgn"))]);
    assert!(out.contains("channels C        4"), "{out}");
}

#[test]
fn zero_epochs_saves_the_initial_model() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, run) = (tmp.path().join("data"), tmp.path().join("run"));
    small_data(&data, "4");
    ok(&["train", "-d", s(&data), "-o", s(&run), "--folds", "2", "--epochs", "0"]);
    let (out, _) = ok(&["info", "--model", s(&run.join("models/fold1-best.clgn"))]);
    assert!(out.contains("checkpoint        epoch 0"), "{out}");
}

#[test]
fn too_many_folds_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_data(&data, "3");
    let out = cleegn(&["train", "-d", s(&data), "-o", s(&tmp.path().join("run")), "--folds", "4"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot form 4 folds"));
}

#[test]
fn evaluating_a_file_against_itself_scores_zero() {
    let tmp = tempfile::tempdir().unwrap();
    small_data(tmp.path(), "1");
    let clean = tmp.path().join("s01_clean.eegr");
    let json = tmp.path().join("e.json");
    let (out, _) = ok(&["eval", "-r", s(&clean), "--recon", s(&clean), "--json", s(&json)]);
    assert!(out.contains("overall MSE 0.000000"), "{out}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(report["fitness"]["overall_mse"], 0.0);
}

#[test]
fn unknown_config_key_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "train.epochs = 3\ntrain.learning_rate = 0.1\n").unwrap();
    let out = cleegn(&["--config", s(&cfg), "info"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key `train.learning_rate`"));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "model.channels = 20\nmodel.fs = 256\n").unwrap();
    let (out, err) = ok(&["--config", s(&cfg), "info", "--fs", "125"]);
    assert!(out.contains("learnable params  14043"), "{out}");
    assert!(err.contains("model.fs=125"));
}

#[test]
fn help_shows_defaults() {
    let (out, _) = ok(&["train", "--help"]);
    assert!(out.contains("[default: 64]"));
    assert!(out.contains("[default: 0.8]"));
}

#[test]
fn raw_streaming_matches_file_reconstruction() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, run) = (tmp.path().join("data"), tmp.path().join("run"));
    small_data(&data, "4");
    ok(&["train", "-d", s(&data), "-o", s(&run), "--folds", "2", "--epochs", "1"]);
    let model = run.join("models/fold0-best.clgn");
    let noisy_path = data.join("s01_noisy.eegr");
    let recon_path = tmp.path().join("recon.eegr");
    ok(&["reconstruct", "-m", s(&model), "-i", s(&noisy_path), "-o", s(&recon_path)]);

    let noisy = load_recording(&noisy_path).unwrap();
    let (c, n) = (noisy.n_channels(), noisy.n_samples());
    let mut bytes = Vec::with_capacity(4 * c * n);
    for t in 0..n {
        for ch in 0..c {
            bytes.extend_from_slice(&(noisy.get(ch, t) as f32).to_le_bytes());
        }
    }
    let mut child = Command::new(env!("CARGO_BIN_EXE_cleegn"))
        .args(["reconstruct", "-m", s(&model), "--raw"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let feeder = std::thread::spawn(move || stdin.write_all(&bytes).unwrap());
    let out = child.wait_with_output().unwrap();
    feeder.join().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let streamed: Vec<f32> = out.stdout.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    assert_eq!(streamed.len() % c, 0);
    assert!(!streamed.is_empty());

    // Emission starts at stream position T - hop: 4 s windows at 64 Hz with a 32-sample hop.
    let recon = load_recording(&recon_path).unwrap();
    let lag = 4 * 64 - 32;
    assert!(streamed.len() / c + lag <= n);
    for (i, v) in streamed.iter().enumerate() {
        let (t, ch) = (lag + i / c, i % c);
        let want = recon.get(ch, t) as f32;
        assert!((v - want).abs() <= 1e-4 * want.abs().max(1.0), "frame {t} channel {ch}: {v} vs {want}");
    }
}

#[test]
fn torn_frame_on_stdin_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, run) = (tmp.path().join("data"), tmp.path().join("run"));
    small_data(&data, "4");
    ok(&["train", "-d", s(&data), "-o", s(&run), "--folds", "2", "--epochs", "0"]);
    let mut child = Command::new(env!("CARGO_BIN_EXE_cleegn"))
        .args(["reconstruct", "-m", s(&run.join("models/fold0-best.clgn")), "--raw"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&[0u8; 10]).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("inside a frame"));
}

#[test]
fn psd_and_pca_write_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, run) = (tmp.path().join("data"), tmp.path().join("run"));
    small_data(&data, "4");
    ok(&["train", "-d", s(&data), "-o", s(&run), "--folds", "2", "--epochs", "0"]);
    let noisy = data.join("s01_noisy.eegr");

    let psd = tmp.path().join("psd.csv");
    ok(&["psd", "-i", s(&noisy), "-o", s(&psd)]);
    let text = fs::read_to_string(&psd).unwrap();
    assert!(text.starts_with("freq_hz,"));
    assert_eq!(text.lines().count(), 1 + 65);

    let pca = tmp.path().join("pca.csv");
    ok(&["pca", "-m", s(&run.join("models/fold0-best.clgn")), "-i", s(&noisy), "-o", s(&pca)]);
    let text = fs::read_to_string(&pca).unwrap();
    assert!(text.starts_with("x,y,layer,row"));
    let layers: std::collections::BTreeSet<&str> =
        text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(layers.len(), 6);
}
