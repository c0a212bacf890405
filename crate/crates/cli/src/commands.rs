use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde_json::json;

use cleegn::analysis::{
    epoched_mse, fit_pca_basis, fitness_json, latent_points_csv, mse_fitness, project_latents, welch_psd,
    WelchConfig, LATENT_LAYERS,
};
use cleegn::data::{
    bandpass_fir, car_reference, downsample, load_csv, load_events, load_recording, save_recording, synth_subject,
    Recording, SynthSpec,
};
use cleegn::harness::{
    ablation_csv, ablation_driver, evaluate_fold, evaluate_fold_epoched, make_folds, mean_stderr, train_folds, AblationAxis, AblationSpec,
    Dataset, FoldSpec, TrainConfig,
};
use cleegn::model::{param_count, read_checkpoint, write_checkpoint, CheckpointMeta, CleegnConfig};
use cleegn::streaming::{hop_len, offline_reconstruct, stream_init, stream_push, MergePolicy};

use crate::config::RunConfig;
use crate::{EvalArgs, InfoArgs, PcaArgs, PreprocessArgs, PsdArgs, ReconstructArgs, SynthArgs, TrainArgs};

fn log_config(cfg: &RunConfig, group: &str) {
    eprint!("resolved config:\n{}", cfg.resolved(group));
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn synth(cfg: &RunConfig, a: &SynthArgs) -> Result<()> {
    log_config(cfg, "synth");
    let subjects: usize = cfg.get("synth.subjects")?;
    let seed: u64 = cfg.get("synth.seed")?;
    let mut spec = SynthSpec::new(cfg.get("synth.channels")?, cfg.get("synth.fs")?, cfg.get("synth.duration")?, seed);
    spec.blink_rate_per_min = cfg.get("synth.blinks_per_min")?;
    spec.emg_rate_per_min = cfg.get("synth.emg_per_min")?;
    spec.background_uv = cfg.get("synth.background_uv")?;
    spec.blink_uv = cfg.get("synth.blink_uv")?;
    spec.emg_uv = cfg.get("synth.emg_uv")?;
    spec.line_noise = cfg.get("synth.line_noise")?;
    spec.line_uv = cfg.get("synth.line_uv")?;
    if subjects == 0 {
        bail!("--subjects must be at least 1");
    }
    ensure_dir(&a.out)?;
    for i in 0..subjects {
        let id = format!("s{:02}", i + 1);
        let mut s = spec.clone().with_subject(id.clone());
        s.seed = seed.wrapping_add(i as u64);
        let (noisy, clean) = synth_subject(&s)?;
        save_recording(&noisy, a.out.join(format!("{id}_noisy.eegr")))?;
        save_recording(&clean, a.out.join(format!("{id}_clean.eegr")))?;
    }
    eprintln!("wrote {subjects} subject pairs to {}", a.out.display());
    Ok(())
}

pub fn preprocess(cfg: &RunConfig, a: &PreprocessArgs) -> Result<()> {
    log_config(cfg, "preprocess");
    let fs: Option<f32> = cfg.get_opt("preprocess.fs")?;
    let mut rec = match fs {
        Some(fs) => load_csv(&a.input, Some(fs))?,
        None => load_recording(&a.input)?,
    };
    if cfg.get("preprocess.car")? {
        rec = car_reference(&rec);
    }
    if cfg.get("preprocess.filter")? {
        rec = bandpass_fir(&rec, cfg.get("preprocess.lo_hz")?, cfg.get("preprocess.hi_hz")?, cfg.get("preprocess.taps")?)?;
    }
    let factor: usize = cfg.get("preprocess.decimate")?;
    if factor > 1 {
        rec = downsample(&rec, factor)?;
    }
    save_recording(&rec, &a.out)?;
    eprintln!(
        "wrote {} channels x {} samples at {} Hz to {}",
        rec.n_channels(),
        rec.n_samples(),
        rec.fs(),
        a.out.display()
    );
    Ok(())
}

fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        batch_size: cfg.get("train.batch_size")?,
        epochs: cfg.get("train.epochs")?,
        lr0: cfg.get("train.lr")?,
        gamma: cfg.get("train.gamma")?,
        window_sec: cfg.get("train.window_sec")?,
        stride_fraction: cfg.get("train.stride")?,
        val_fraction: cfg.get("train.val_fraction")?,
        minutes_per_subject: cfg.get_opt("train.minutes")?,
        seed: cfg.get("train.seed")?,
        n_filters: cfg.get_opt("train.filters")?,
        scale: cfg.get("train.scale")?,
        ..TrainConfig::default()
    })
}

fn parse_values(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| match v {
            "full" => Ok(f64::INFINITY),
            _ => v.parse::<f64>().with_context(|| format!("ablation value {v:?}")),
        })
        .collect()
}

pub fn train(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    log_config(cfg, "train");
    let tc = train_config(cfg)?;
    tc.validate()?;
    eprintln!(
        "training: batch={} epochs={} lr={} gamma={} window={}s stride={} val_fraction={} seed={}",
        tc.batch_size, tc.epochs, tc.lr0, tc.gamma, tc.window_sec, tc.stride_fraction, tc.val_fraction, tc.seed
    );
    let ds = Dataset::load_dir(&a.data)?;
    eprintln!("dataset: {} subjects, C = {}, fs = {} Hz", ds.len(), ds.channels(), ds.fs());
    ensure_dir(&a.out)?;

    let ablate = cfg.raw("train.ablate");
    if ablate != "none" {
        let spec = AblationSpec {
            axis: ablate.parse::<AblationAxis>()?,
            values: parse_values(cfg.raw("train.values"))?,
            folds: cfg.get("train.folds")?,
            draws: cfg.get("train.draws")?,
        };
        let rows = ablation_driver(&ds, &spec, &tc)?;
        let csv = ablation_csv(spec.axis, &rows);
        write_text(&a.out.join("ablation.csv"), &csv)?;
        let report = json!({ "config": cfg.to_json("train"), "axis": spec.axis, "rows": rows });
        write_text(&a.out.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
        print!("{csv}");
        return Ok(());
    }

    let k: usize = cfg.get("train.folds")?;
    let folds = make_folds(&ds.subject_ids(), k, tc.seed)
        .with_context(|| format!("{} subjects cannot form {k} folds", ds.len()))?;
    let jobs: usize = cfg.get("train.jobs")?;
    let runs = train_folds(&ds, &folds, &tc, jobs, |fold, e| {
        eprintln!(
            "fold {fold} epoch {:>3} lr {:.3e} train {:.4} val {:.4}",
            e.epoch, e.lr, e.train_loss, e.val_loss
        );
    })?;

    let models = a.out.join("models");
    ensure_dir(&models)?;
    let mut reports = Vec::new();
    for (model, report) in &runs {
        let meta = CheckpointMeta {
            epoch: report.best_epoch.map_or(0, |e| e as u32 + 1),
            val_loss: report.best_val_loss as f32,
            seed: tc.seed,
        };
        let path = models.join(format!("fold{}-best.clgn", report.fold_id));
        write_checkpoint(&path, model, &meta)?;
        eprintln!(
            "fold {}: kept epoch {} (val {:.4}), test mean MSE {:.4} -> {}",
            report.fold_id,
            meta.epoch,
            report.best_val_loss,
            report.test.mean_mse,
            path.display()
        );
        reports.push(report);
    }
    let scores: Vec<f64> = reports.iter().flat_map(|r| r.test.subjects.iter().map(|s| s.mse)).collect();
    let (mean, stderr) = mean_stderr(&scores);
    let report = json!({
        "config": cfg.to_json("train"),
        "folds": reports,
        "test_mse_mean": mean,
        "test_mse_stderr": stderr,
    });
    write_text(&a.out.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    println!("held-out MSE {mean:.4} +/- {stderr:.4} over {} subjects", scores.len());
    Ok(())
}

fn read_frames(input: &mut impl Read, buf: &mut Vec<u8>, want: usize) -> Result<usize> {
    buf.resize(want, 0);
    let mut filled = 0;
    while filled < want {
        let n = input.read(&mut buf[filled..]).context("reading stdin")?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    Ok(filled)
}

pub fn reconstruct(cfg: &RunConfig, a: &ReconstructArgs) -> Result<()> {
    log_config(cfg, "reconstruct");
    let policy: MergePolicy = cfg.get("reconstruct.policy")?;
    let (model, _) = read_checkpoint(&a.model)?;
    if !a.raw {
        let (input, out) = (a.input.as_ref().unwrap(), a.out.as_ref().unwrap());
        let rec = load_recording(input)?;
        let recon = offline_reconstruct(&model, &rec, policy)?;
        save_recording(&recon, out)?;
        eprintln!("wrote {} samples to {}", recon.n_samples(), out.display());
        return Ok(());
    }
    let c = model.config().channels;
    let fs = model.config().fs;
    let mut state = stream_init(Arc::new(model), fs, policy)?;
    let frame_bytes = 4 * c;
    let chunk_bytes = hop_len(fs) * frame_bytes;
    let mut stdin = BufReader::new(std::io::stdin().lock());
    let mut stdout = BufWriter::new(std::io::stdout().lock());
    let mut buf = Vec::new();
    loop {
        let n = read_frames(&mut stdin, &mut buf, chunk_bytes)?;
        if n % frame_bytes != 0 {
            bail!("stdin ended inside a frame: {} trailing bytes (frames are {c} little-endian f32)", n % frame_bytes);
        }
        let chunk: Vec<f32> = buf[..n].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        for v in stream_push(&mut state, &chunk)? {
            stdout.write_all(&v.to_le_bytes()).context("writing stdout")?;
        }
        stdout.flush().context("writing stdout")?;
        if n < chunk_bytes {
            break;
        }
    }
    eprintln!("streamed {} frames in, {} frames out", state.received(), state.emitted());
    Ok(())
}

fn parse_bound(cfg: &RunConfig, key: &str) -> Result<Option<f64>> {
    cfg.get_opt(key)
}

pub fn eval(cfg: &RunConfig, a: &EvalArgs) -> Result<()> {
    log_config(cfg, "eval");
    let window = match (parse_bound(cfg, "eval.t0")?, parse_bound(cfg, "eval.t1")?) {
        (Some(t0), Some(t1)) => Some((t0, t1)),
        (None, None) => None,
        _ => bail!("--t0 and --t1 must be given together"),
    };
    let events = a.events.as_ref().map(load_events).transpose()?;
    if window.is_some() && events.is_none() && a.data.is_none() {
        bail!("--t0/--t1 need --events, or --data with per-subject event files");
    }

    let report = if let Some(dir) = &a.data {
        let (model, _) = read_checkpoint(a.model.as_ref().unwrap())?;
        let ds = Dataset::load_dir(dir)?;
        let subjects = match &a.subjects {
            Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
            None => ds.subject_ids(),
        };
        let fold = FoldSpec { fold_id: 0, train_subjects: Vec::new(), test_subjects: subjects };
        let result = match window {
            Some((t0, t1)) => evaluate_fold_epoched(&model, &ds, &fold, t0, t1)?,
            None => evaluate_fold(&model, &ds, &fold)?,
        };
        println!("mean MSE {:.6} +/- {:.6} over {} subjects", result.mean_mse, result.stderr_mse, result.subjects.len());
        for s in &result.subjects {
            println!("  {} MSE {:.6} (noisy {:.6})", s.subject_id, s.mse, s.noisy_mse);
        }
        json!({ "config": cfg.to_json("eval"), "evaluation": result })
    } else {
        let reference = load_recording(a.reference.as_ref().unwrap())?;
        let noisy = a.noisy.as_ref().map(load_recording).transpose()?;
        let recon = match (&a.recon, &a.model) {
            (Some(path), _) => load_recording(path)?,
            (None, Some(model_path)) => {
                let noisy = noisy.as_ref().context("--model needs --noisy to reconstruct")?;
                let (model, _) = read_checkpoint(model_path)?;
                offline_reconstruct(&model, noisy, MergePolicy::LatestHop)?
            }
            (None, None) => bail!("give --recon, or --model with --noisy"),
        };
        let score = |r: &Recording| match (&events, window) {
            (Some(ev), Some((t0, t1))) => epoched_mse(r, &reference, ev, t0, t1),
            _ => mse_fitness(r, &reference),
        };
        let fit = score(&recon)?;
        println!("overall MSE {:.6}", fit.overall);
        for (name, v) in reference.channel_names().iter().zip(&fit.per_channel) {
            println!("  {name} {v:.6}");
        }
        let mut report = json!({
            "config": cfg.to_json("eval"),
            "fitness": serde_json::from_str::<serde_json::Value>(&fitness_json(&fit, reference.channel_names()))?,
        });
        if let Some(n) = &noisy {
            let base = score(n)?;
            println!("noisy baseline MSE {:.6} (ratio {:.4})", base.overall, fit.overall / base.overall);
            report["noisy_mse"] = json!(base.overall);
        }
        report
    };
    if let Some(path) = &a.json {
        write_text(path, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

pub fn psd(cfg: &RunConfig, a: &PsdArgs) -> Result<()> {
    log_config(cfg, "psd");
    let rec = load_recording(&a.input)?;
    let wc = WelchConfig {
        segment_sec: cfg.get("psd.segment_sec")?,
        overlap: cfg.get("psd.overlap")?,
        window: cfg.get("psd.window")?,
    };
    let est = welch_psd(&rec, &wc)?;
    write_text(&a.out, &est.to_csv())?;
    eprintln!(
        "{} segments of {} samples, {} bins of {:.4} Hz -> {}",
        est.n_segments,
        est.segment_len,
        est.freqs.len(),
        est.bin_width(),
        a.out.display()
    );
    Ok(())
}

pub fn pca(cfg: &RunConfig, a: &PcaArgs) -> Result<()> {
    log_config(cfg, "pca");
    let (model, _) = read_checkpoint(&a.model)?;
    let noisy = load_recording(&a.input)?;
    let start: usize = cfg.get("pca.start")?;
    let len = cfg.get_opt::<usize>("pca.len")?.unwrap_or(model.config().window_len());
    let basis = fit_pca_basis(&noisy, start..start + len)?;
    let mut points = Vec::new();
    for layer in LATENT_LAYERS {
        points.extend(project_latents(&model, &noisy, &basis, layer)?);
    }
    write_text(&a.out, &latent_points_csv(&points))?;
    eprintln!(
        "axes explain {:.1}% and {:.1}% of the input variance; {} points -> {}",
        100.0 * basis.explained[0],
        100.0 * basis.explained[1],
        points.len(),
        a.out.display()
    );
    Ok(())
}

pub fn info(cfg: &RunConfig, a: &InfoArgs) -> Result<()> {
    let (config, meta) = match &a.model {
        Some(path) => {
            let (m, meta) = read_checkpoint(path)?;
            (*m.config(), Some(meta))
        }
        None => {
            log_config(cfg, "model");
            let c: usize = cfg.get("model.channels")?;
            let config = CleegnConfig::new(c, cfg.get("model.fs")?)
                .with_filters(cfg.get_opt("model.filters")?.unwrap_or(c))
                .with_window_sec(cfg.get("model.window_sec")?);
            config.validate()?;
            (config, None)
        }
    };
    println!("channels C        {}", config.channels);
    println!("sampling rate     {} Hz", config.fs);
    println!("temporal filters  N_F = {}", config.n_filters);
    println!("kernel width      k = {}", config.kernel_width());
    println!("window            T = {} samples ({} s)", config.window_len(), config.window_sec);
    println!("hop               {} samples", hop_len(config.fs));
    println!("learnable params  {}", param_count(&config));
    if let Some(meta) = meta {
        println!("checkpoint        epoch {} val_loss {} seed {}", meta.epoch, meta.val_loss, meta.seed);
    }
    Ok(())
}
