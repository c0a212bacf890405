#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use config::{default_of, RunConfig};

/// Convolutional EEG artifact removal: synthesize data, preprocess, train,
/// reconstruct and analyse.
///
/// Every tunable flag is also a dotted config key (`train --batch-size`
/// is `train.batch_size`). Values come from built-in defaults, then the
/// CLEEGN_SEED environment variable for seeds, then `--config`, then flags.
#[derive(Parser, Debug)]
#[command(name = "cleegn", version)]
pub struct Cli {
    /// Key-value config file (`key = value` per line, `#` comments).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic subjects as `<id>_noisy.eegr` / `<id>_clean.eegr` pairs.
    Synth(SynthArgs),
    /// Common-average reference, band-pass and decimate one recording.
    Preprocess(PreprocessArgs),
    /// Cross-validated training with one checkpoint per fold, or a data-size ablation.
    Train(TrainArgs),
    /// Clean a recording with a trained model (file or raw stdin/stdout stream).
    Reconstruct(ReconstructArgs),
    /// Mean squared error of a reconstruction against its reference.
    Eval(EvalArgs),
    /// Welch power spectral density per channel as CSV.
    Psd(PsdArgs),
    /// Project every layer's activations onto the input's two principal axes.
    Pca(PcaArgs),
    /// Show architecture sizes and the learnable-parameter count.
    Info(InfoArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value = "8")]
    subjects: usize,
    /// Seconds per subject.
    #[arg(long, default_value = "300")]
    duration: f64,
    #[arg(long, default_value = "8")]
    channels: usize,
    /// Sampling rate in Hz.
    #[arg(long, default_value = "128")]
    fs: f32,
    /// Base seed; subject i uses seed + i.
    #[arg(long, default_value = "0")]
    seed: u64,
    #[arg(long, default_value = "20")]
    blinks_per_min: f64,
    #[arg(long, default_value = "10")]
    emg_per_min: f64,
    /// RMS of the clean signal in microvolts.
    #[arg(long, default_value = "5")]
    background_uv: f64,
    /// Median blink peak in microvolts.
    #[arg(long, default_value = "100")]
    blink_uv: f64,
    /// Median EMG burst RMS in microvolts.
    #[arg(long, default_value = "40")]
    emg_uv: f64,
    /// Add a 50 Hz line tone.
    #[arg(long, default_value = "false", action = ArgAction::Set)]
    line_noise: bool,
    #[arg(long, default_value = "5")]
    line_uv: f64,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Input recording (EEGR, or CSV by extension).
    #[arg(long, short)]
    pub input: PathBuf,
    /// Output recording (EEGR, or CSV by extension).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Subtract the cross-channel mean.
    #[arg(long, default_value = "true", action = ArgAction::Set)]
    car: bool,
    /// Apply the zero-phase band-pass.
    #[arg(long, default_value = "true", action = ArgAction::Set)]
    filter: bool,
    #[arg(long, default_value = "1")]
    lo_hz: f64,
    #[arg(long, default_value = "40")]
    hi_hz: f64,
    /// FIR length (odd).
    #[arg(long, default_value = "513")]
    taps: usize,
    /// Keep every n-th sample after anti-alias filtering.
    #[arg(long, default_value = "1")]
    decimate: usize,
    /// Sampling rate of a CSV input; `auto` infers it from the time column.
    #[arg(long, default_value = "auto")]
    fs: String,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory of `<id>_noisy.eegr` + `<id>_clean.eegr` pairs.
    #[arg(long, short)]
    pub data: PathBuf,
    /// Output directory for `models/fold<k>-best.clgn` and `report.json`.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value = "64")]
    batch_size: usize,
    #[arg(long, default_value = "40")]
    epochs: usize,
    /// Initial learning rate.
    #[arg(long, default_value = "0.001")]
    lr: f64,
    /// Per-epoch learning-rate decay factor.
    #[arg(long, default_value = "0.8")]
    gamma: f64,
    #[arg(long, default_value = "4")]
    window_sec: f32,
    /// Window stride as a fraction of the window.
    #[arg(long, default_value = "0.5")]
    stride: f32,
    #[arg(long, default_value = "0.2")]
    val_fraction: f64,
    /// Minutes used from the start of each recording, or `full`.
    #[arg(long, default_value = "full")]
    minutes: String,
    #[arg(long, default_value = "0")]
    seed: u64,
    /// Temporal filters N_F, or `auto` for the channel count.
    #[arg(long, default_value = "auto")]
    filters: String,
    /// Training amplitude scale: `auto` (input RMS), `none` or a number.
    #[arg(long, default_value = "auto")]
    scale: String,
    /// Number of subject-disjoint folds.
    #[arg(long, default_value = "4")]
    folds: usize,
    /// Folds trained in parallel.
    #[arg(long, default_value = "1")]
    jobs: usize,
    /// Ablation axis instead of plain training: `minutes` or `subjects`.
    #[arg(long, default_value = "none")]
    ablate: String,
    /// Comma-separated ablation values (`full` allowed for minutes).
    #[arg(long, default_value = "")]
    values: String,
    /// Random subject subsets per value on the subjects axis.
    #[arg(long, default_value = "3")]
    draws: usize,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// Trained checkpoint.
    #[arg(long, short)]
    pub model: PathBuf,
    /// Noisy input recording; omit with `--raw`.
    #[arg(long, short, required_unless_present = "raw")]
    pub input: Option<PathBuf>,
    /// Output recording; omit with `--raw`.
    #[arg(long, short, required_unless_present = "raw")]
    pub out: Option<PathBuf>,
    /// Stream little-endian f32 frames of C values from stdin to stdout.
    #[arg(long, conflicts_with_all = ["input", "out"])]
    pub raw: bool,
    /// `latest_hop` (causal) or `overlap_average` (files only).
    #[arg(long, default_value = "latest_hop")]
    policy: String,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Reference (clean) recording.
    #[arg(long, short, required_unless_present = "data")]
    pub reference: Option<PathBuf>,
    /// Reconstructed recording to score.
    #[arg(long, required_unless_present_any = ["model", "data"])]
    pub recon: Option<PathBuf>,
    /// Noisy recording, scored as a do-nothing baseline (and reconstructed with `--model`).
    #[arg(long)]
    pub noisy: Option<PathBuf>,
    /// Checkpoint used to reconstruct `--noisy` or a dataset.
    #[arg(long, short)]
    pub model: Option<PathBuf>,
    /// Dataset directory; every subject (or `--subjects`) is reconstructed and scored.
    #[arg(long, requires = "model", conflicts_with_all = ["reference", "recon", "noisy", "events"])]
    pub data: Option<PathBuf>,
    /// Comma-separated subject ids within `--data`.
    #[arg(long, requires = "data")]
    pub subjects: Option<String>,
    /// Event CSV; restricts scoring to epochs `[t0, t1)` seconds around each event.
    #[arg(long, requires_all = ["t0", "t1"])]
    pub events: Option<PathBuf>,
    #[arg(long, default_value = "none", allow_hyphen_values = true)]
    t0: String,
    #[arg(long, default_value = "none", allow_hyphen_values = true)]
    t1: String,
    /// Also write the scores as a JSON report.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PsdArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// CSV output: `freq_hz,<channel>...`.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value = "2")]
    segment_sec: f64,
    /// Fraction of a segment shared with the next.
    #[arg(long, default_value = "0.5")]
    overlap: f64,
    /// `hann` or `rectangular`.
    #[arg(long, default_value = "hann")]
    window: String,
}

#[derive(Args, Debug)]
pub struct PcaArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// Noisy recording whose channels define the principal axes.
    #[arg(long, short)]
    pub input: PathBuf,
    /// CSV output: `x,y,layer,row`.
    #[arg(long, short)]
    pub out: PathBuf,
    /// First sample of the segment.
    #[arg(long, default_value = "0")]
    start: usize,
    /// Segment length in samples, or `window` for the model's T.
    #[arg(long, default_value = "window")]
    len: String,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    /// Describe a checkpoint instead of a configuration.
    #[arg(long, short)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "56")]
    channels: usize,
    #[arg(long, default_value = "128")]
    fs: f32,
    /// N_F, or `auto` for the channel count.
    #[arg(long, default_value = "auto")]
    filters: String,
    #[arg(long, default_value = "4")]
    window_sec: f32,
}

/// Config group addressed by a subcommand's flags.
fn group_of(subcommand: &str) -> &str {
    match subcommand {
        "info" => "model",
        other => other,
    }
}

/// Copy every flag given on the command line onto its config key.
fn apply_flags(cfg: &mut RunConfig, group: &str, m: &clap::ArgMatches) -> anyhow::Result<()> {
    for id in m.ids() {
        let id = id.as_str();
        if m.value_source(id) != Some(ValueSource::CommandLine) {
            continue;
        }
        let key = format!("{group}.{id}");
        if default_of(&key).is_none() {
            continue;
        }
        let raw: Vec<String> = m
            .get_raw(id)
            .into_iter()
            .flatten()
            .map(|v| v.to_string_lossy().into_owned())
            .collect();
        cfg.set(&key, &raw.join(","))?;
    }
    Ok(())
}

fn run() -> anyhow::Result<()> {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches)?;
    let mut cfg = RunConfig::from_env()?;
    if let Some(path) = &cli.config {
        cfg.merge_file(path)?;
    }
    if let Some((name, sub)) = matches.subcommand() {
        apply_flags(&mut cfg, group_of(name), sub)?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(&cfg, &a),
        Command::Preprocess(a) => commands::preprocess(&cfg, &a),
        Command::Train(a) => commands::train(&cfg, &a),
        Command::Reconstruct(a) => commands::reconstruct(&cfg, &a),
        Command::Eval(a) => commands::eval(&cfg, &a),
        Command::Psd(a) => commands::psd(&cfg, &a),
        Command::Pca(a) => commands::pca(&cfg, &a),
        Command::Info(a) => commands::info(&cfg, &a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
