//! Subject-disjoint folds, the training loop, evaluation and data-size
//! ablations.
//!
//! Training follows the published recipe: MSE loss, Adam, batches of 64,
//! 40 epochs and a learning rate decayed by `gamma` once per epoch. The model
//! kept is the one with the lowest validation loss.
//!
//! Inputs and targets are divided by one amplitude scale (by default the RMS
//! of the training inputs) while optimizing. The network is affine, so the
//! scale is folded back into the first and last convolutions afterwards and
//! the returned model works on raw microvolts. Every loss reported here is
//! in raw units.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{epoched_mse, mse_fitness};
use crate::data::{
    load_events, load_recording, segment_windows, synth_subject, EventList, Recording, SynthSpec, WindowPair,
};
use crate::error::{Error, Result};
use crate::model::{CleegnConfig, CleegnModel, ModelOptimizer};
use crate::neuralcore::{lr_schedule, mse_loss, AdamConfig, Tensor4};
use crate::streaming::{offline_reconstruct, MergePolicy};

/// Aligned noisy and reference recordings of one subject.
#[derive(Clone, Debug)]
pub struct Subject {
    pub id: String,
    pub noisy: Recording,
    pub reference: Recording,
    pub events: Option<EventList>,
}

/// A set of subjects sharing one montage and sampling rate.
#[derive(Clone, Debug)]
pub struct Dataset {
    subjects: Vec<Subject>,
}

impl Dataset {
    pub fn new(mut subjects: Vec<Subject>) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::InvalidArgument("dataset has no subjects".into()));
        }
        subjects.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = subjects.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidArgument(format!("subject {} appears twice", w[0].id)));
        }
        let first = &subjects[0].noisy;
        for s in &subjects {
            s.noisy.expect_aligned(&s.reference, "dataset reference")?;
            if s.noisy.n_channels() != first.n_channels() || s.noisy.fs() != first.fs() {
                return Err(Error::InvalidArgument(format!(
                    "subject {} has {} channels at {} Hz, expected {} at {} Hz",
                    s.id,
                    s.noisy.n_channels(),
                    s.noisy.fs(),
                    first.n_channels(),
                    first.fs()
                )));
            }
        }
        Ok(Dataset { subjects })
    }

    /// Reads `<id>_noisy.eegr` with `<id>_clean.eegr` (or
    /// `<id>_reference.eegr`) for every subject in `dir`, plus
    /// `<id>_events.csv` when present.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut ids = BTreeSet::new();
        for entry in entries {
            let name = entry.map_err(|e| Error::io(dir, e))?.file_name();
            if let Some(id) = name.to_str().and_then(|n| n.strip_suffix("_noisy.eegr")) {
                ids.insert(id.to_string());
            }
        }
        let mut subjects = Vec::new();
        for id in ids {
            let noisy = load_recording(dir.join(format!("{id}_noisy.eegr")))?;
            let reference = ["clean", "reference"]
                .iter()
                .map(|tag| dir.join(format!("{id}_{tag}.eegr")))
                .find(|p| p.exists())
                .ok_or_else(|| Error::InvalidArgument(format!("subject {id} has no _clean.eegr or _reference.eegr")))?;
            let reference = load_recording(reference)?;
            let events_path = dir.join(format!("{id}_events.csv"));
            let events = if events_path.exists() { Some(load_events(events_path)?) } else { None };
            subjects.push(Subject {
                id,
                noisy,
                reference,
                events,
            });
        }
        if subjects.is_empty() {
            return Err(Error::InvalidArgument(format!("no *_noisy.eegr files in {}", dir.display())));
        }
        Self::new(subjects)
    }

    /// `n` synthetic subjects `s01, s02, ...`, each generated from `template`
    /// with its seed offset by the subject index.
    pub fn synthetic(n: usize, template: &SynthSpec) -> Result<Self> {
        let subjects = (0..n)
            .map(|i| {
                let id = format!("s{:02}", i + 1);
                let mut spec = template.clone().with_subject(id.clone());
                spec.seed = template.seed.wrapping_add(i as u64);
                let (noisy, reference) = synth_subject(&spec)?;
                Ok(Subject {
                    id,
                    noisy,
                    reference,
                    events: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(subjects)
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.id.clone()).collect()
    }

    pub fn subject(&self, id: &str) -> Result<&Subject> {
        self.subjects
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown subject {id}")))
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.subjects[0].noisy.n_channels()
    }

    pub fn fs(&self) -> f32 {
        self.subjects[0].noisy.fs()
    }

    /// Length of the shortest recording, in minutes.
    pub fn shortest_minutes(&self) -> f64 {
        self.subjects.iter().map(|s| s.noisy.duration_sec() / 60.0).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FoldSpec {
    pub fold_id: usize,
    pub train_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
}

/// Shuffle the subjects with `seed` and deal them into `k` test sets whose
/// sizes differ by at most one; each fold trains on everyone else.
pub fn make_folds(subjects: &[String], k: usize, seed: u64) -> Result<Vec<FoldSpec>> {
    let unique: BTreeSet<&String> = subjects.iter().collect();
    if unique.len() != subjects.len() {
        return Err(Error::InvalidArgument("subject list contains duplicates".into()));
    }
    if k < 2 || k > subjects.len() {
        return Err(Error::InvalidArgument(format!(
            "fold count must lie in 2..={}, got {k}",
            subjects.len()
        )));
    }
    let mut order: Vec<String> = subjects.to_vec();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let folds = (0..k)
        .map(|f| {
            let mut test: Vec<String> = order.iter().skip(f).step_by(k).cloned().collect();
            test.sort();
            let mut train: Vec<String> = order.iter().filter(|s| !test.contains(s)).cloned().collect();
            train.sort();
            FoldSpec {
                fold_id: f,
                train_subjects: train,
                test_subjects: test,
            }
        })
        .collect();
    Ok(folds)
}

/// Amplitude normalization applied while optimizing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub enum AmplitudeScale {
    /// RMS of the training inputs.
    #[default]
    Auto,
    Fixed(f32),
    /// Train on raw values.
    None,
}

impl std::str::FromStr for AmplitudeScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(AmplitudeScale::Auto),
            "none" | "raw" => Ok(AmplitudeScale::None),
            v => match v.parse::<f32>() {
                Ok(x) if x.is_finite() && x > 0.0 => Ok(AmplitudeScale::Fixed(x)),
                _ => Err(Error::InvalidArgument(format!(
                    "amplitude scale must be auto, none or a positive number, got {v:?}"
                ))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub gamma: f64,
    pub window_sec: f32,
    pub stride_fraction: f32,
    pub val_fraction: f64,
    pub minutes_per_subject: Option<f64>,
    pub seed: u64,
    /// Temporal filter count; the channel count when unset.
    pub n_filters: Option<usize>,
    pub scale: AmplitudeScale,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 40,
            lr0: 1e-3,
            gamma: 0.8,
            window_sec: 4.0,
            stride_fraction: 0.5,
            val_fraction: 0.2,
            minutes_per_subject: None,
            seed: 0,
            n_filters: None,
            scale: AmplitudeScale::Auto,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) || !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("need lr0 >= 0 and gamma > 0, got {} and {}", self.lr0, self.gamma));
        }
        if !(self.window_sec > 0.0) || !(self.stride_fraction > 0.0 && self.stride_fraction <= 1.0) {
            return bad(format!(
                "window {} s with stride fraction {} is invalid",
                self.window_sec, self.stride_fraction
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("validation fraction must lie in (0, 1), got {}", self.val_fraction));
        }
        if let Some(m) = self.minutes_per_subject {
            if !(m > 0.0) {
                return bad(format!("minutes per subject must be positive, got {m}"));
            }
        }
        if self.n_filters == Some(0) {
            return bad("need at least one temporal filter".into());
        }
        Ok(())
    }

    pub fn model_config(&self, channels: usize, fs: f32) -> CleegnConfig {
        CleegnConfig::new(channels, fs)
            .with_filters(self.n_filters.unwrap_or(channels))
            .with_window_sec(self.window_sec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubjectScore {
    pub subject_id: String,
    /// MSE(reconstruction, reference).
    pub mse: f64,
    /// MSE(noisy, reference), the do-nothing baseline.
    pub noisy_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldEvaluation {
    pub fold_id: usize,
    pub subjects: Vec<SubjectScore>,
    pub mean_mse: f64,
    pub stderr_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub fold_id: usize,
    pub train_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
    pub seed: u64,
    pub n_train_windows: usize,
    pub n_val_windows: usize,
    pub amplitude_scale: f64,
    pub epochs: Vec<EpochRecord>,
    /// `None` when no epoch ran and the initial model was kept.
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub wall_time_sec: f64,
    pub test: FoldEvaluation,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn capped(rec: &Recording, minutes: Option<f64>) -> Result<Recording> {
    let Some(m) = minutes else { return Ok(rec.clone()) };
    let n = (m * 60.0 * rec.fs() as f64).floor() as usize;
    if n > rec.n_samples() {
        return Err(Error::InvalidArgument(format!(
            "subject {} has {:.2} min of data, fewer than the requested {m}",
            rec.subject_id,
            rec.duration_sec() / 60.0
        )));
    }
    rec.slice(0, n)
}

/// Training windows of `subjects`, each tagged with its subject id.
pub fn collect_windows(dataset: &Dataset, subjects: &[String], cfg: &TrainConfig) -> Result<Vec<WindowPair>> {
    let mut out = Vec::new();
    for id in subjects {
        let s = dataset.subject(id)?;
        let mut noisy = capped(&s.noisy, cfg.minutes_per_subject)?;
        let mut reference = capped(&s.reference, cfg.minutes_per_subject)?;
        noisy.subject_id = s.id.clone();
        reference.subject_id = s.id.clone();
        out.extend(segment_windows(&noisy, &reference, cfg.window_sec, cfg.stride_fraction)?);
    }
    Ok(out)
}

/// Stack windows into `(B, C, T, 1)` input and target tensors.
fn batch_tensors(windows: &[&WindowPair], scale: f32) -> (Tensor4<f32>, Tensor4<f32>) {
    let (c, t) = (windows[0].channels, windows[0].len);
    let gather = |pick: fn(&WindowPair) -> &[f32]| {
        let data = windows.iter().flat_map(|w| pick(w).iter().map(|v| v / scale)).collect();
        Tensor4::from_vec((windows.len(), c, t, 1), data).expect("windows share one shape")
    };
    (gather(|w| &w.noisy), gather(|w| &w.reference))
}

/// Mean squared error of `model` over `windows` in inference mode.
pub fn windows_mse(model: &CleegnModel<f32>, windows: &[&WindowPair], batch: usize) -> Result<f64> {
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for chunk in windows.chunks(batch.max(1)) {
        let (x, y) = batch_tensors(chunk, 1.0);
        let pred = model.infer(&x)?;
        sum += pred
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(p, t)| ((p - t) as f64).powi(2))
            .sum::<f64>();
        count += pred.len();
    }
    Ok(sum / count.max(1) as f64)
}

fn rms(windows: &[&WindowPair]) -> f64 {
    let (sum, n) = windows.iter().fold((0.0f64, 0usize), |(s, n), w| {
        (s + w.noisy.iter().map(|v| (*v as f64).powi(2)).sum::<f64>(), n + w.noisy.len())
    });
    (sum / n.max(1) as f64).sqrt()
}

/// Train one fold; see [`train_fold_with`].
pub fn train_fold(dataset: &Dataset, fold: &FoldSpec, cfg: &TrainConfig) -> Result<(CleegnModel<f32>, TrainReport)> {
    train_fold_with(dataset, fold, cfg, |_| {})
}

/// Train on the fold's training subjects, keep the best-validation model,
/// then score it on the held-out subjects. `on_epoch` sees every epoch record
/// as it is produced.
pub fn train_fold_with(
    dataset: &Dataset,
    fold: &FoldSpec,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(CleegnModel<f32>, TrainReport)> {
    cfg.validate()?;
    let started = Instant::now();
    if let Some(s) = fold.train_subjects.iter().find(|s| fold.test_subjects.contains(s)) {
        return Err(Error::InvalidArgument(format!("subject {s} is in both the train and test sets")));
    }
    let windows = collect_windows(dataset, &fold.train_subjects, cfg)?;
    if let Some(w) = windows.iter().find(|w| fold.test_subjects.contains(&w.subject_id)) {
        return Err(Error::Training(format!("window from test subject {} reached training", w.subject_id)));
    }
    if windows.len() < 2 {
        return Err(Error::Training(format!(
            "{} training window(s) from subjects {:?}; need at least 2 to split off validation",
            windows.len(),
            fold.train_subjects
        )));
    }

    let mut split_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    split_rng.set_stream(1);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.shuffle(&mut split_rng);
    let n_val = ((cfg.val_fraction * windows.len() as f64).round() as usize).clamp(1, windows.len() - 1);
    let val: Vec<&WindowPair> = order[..n_val].iter().map(|i| &windows[*i]).collect();
    let train: Vec<&WindowPair> = order[n_val..].iter().map(|i| &windows[*i]).collect();

    let scale = match cfg.scale {
        AmplitudeScale::Auto => rms(&train).max(f64::MIN_POSITIVE),
        AmplitudeScale::Fixed(s) => s as f64,
        AmplitudeScale::None => 1.0,
    };
    let s32 = scale as f32;
    let model_cfg = cfg.model_config(dataset.channels(), dataset.fs());
    model_cfg.validate()?;
    let mut model = CleegnModel::<f32>::build(model_cfg, cfg.seed)?;
    let mut opt = ModelOptimizer::new(&model, cfg.adam);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(2);

    // a training set smaller than one batch still yields one step per epoch
    let batch = cfg.batch_size.min(train.len());
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, CleegnModel<f32>)> = None;
    let mut idx: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg.lr0, cfg.gamma);
        idx.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let n_batches = train.len() / batch;
        for b in 0..n_batches {
            let members: Vec<&WindowPair> = idx[b * batch..(b + 1) * batch].iter().map(|i| train[*i]).collect();
            let (x, y) = batch_tensors(&members, s32);
            let (pred, mut cache) = model.forward_train(&x)?;
            let (loss, grad) = mse_loss(&pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite training loss at epoch {epoch}, batch {b} (lr {lr:e})"
                )));
            }
            let grads = model.backward(&mut cache, &grad)?;
            opt.step(&mut model, &grads, lr)
                .map_err(|e| Error::Training(format!("epoch {epoch}, batch {b}: {e}")))?;
            loss_sum += loss;
        }
        let mut folded = model.clone();
        folded.fold_amplitude_scale(s32);
        let val_loss = windows_mse(&folded, &val, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / n_batches as f64 * scale * scale,
            val_loss,
        };
        on_epoch(&record);
        epochs.push(record);
        if best.as_ref().is_none_or(|(_, v, _)| val_loss < *v) {
            best = Some((epoch, val_loss, folded));
        }
    }

    let (best_epoch, best_val_loss, best_model) = match best {
        Some((e, v, m)) => (Some(e), v, m),
        None => {
            model.fold_amplitude_scale(s32);
            let v = windows_mse(&model, &val, cfg.batch_size)?;
            (None, v, model)
        }
    };
    let test = evaluate_fold(&best_model, dataset, fold)?;
    let report = TrainReport {
        fold_id: fold.fold_id,
        train_subjects: fold.train_subjects.clone(),
        test_subjects: fold.test_subjects.clone(),
        seed: cfg.seed,
        n_train_windows: train.len(),
        n_val_windows: val.len(),
        amplitude_scale: scale,
        epochs,
        best_epoch,
        best_val_loss,
        wall_time_sec: started.elapsed().as_secs_f64(),
        test,
    };
    Ok((best_model, report))
}

/// Validation windows for a fold, recomputed exactly as training drew them.
pub fn validation_windows(dataset: &Dataset, fold: &FoldSpec, cfg: &TrainConfig) -> Result<Vec<WindowPair>> {
    let windows = collect_windows(dataset, &fold.train_subjects, cfg)?;
    let mut split_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    split_rng.set_stream(1);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.shuffle(&mut split_rng);
    let n_val = ((cfg.val_fraction * windows.len() as f64).round() as usize).clamp(1, windows.len().max(2) - 1);
    Ok(order[..n_val].iter().map(|i| windows[*i].clone()).collect())
}

fn score_fold(
    model: &CleegnModel<f32>,
    dataset: &Dataset,
    fold: &FoldSpec,
    mut mse: impl FnMut(&Subject, &Recording) -> Result<(f64, f64)>,
) -> Result<FoldEvaluation> {
    let mut subjects = Vec::new();
    for id in &fold.test_subjects {
        let s = dataset.subject(id)?;
        let recon = offline_reconstruct(model, &s.noisy, MergePolicy::LatestHop)?;
        let (mse, noisy_mse) = mse(s, &recon)?;
        subjects.push(SubjectScore {
            subject_id: id.clone(),
            mse,
            noisy_mse,
        });
    }
    let (mean_mse, stderr_mse) = mean_stderr(&subjects.iter().map(|s| s.mse).collect::<Vec<_>>());
    Ok(FoldEvaluation {
        fold_id: fold.fold_id,
        subjects,
        mean_mse,
        stderr_mse,
    })
}

/// Reconstruct every test recording with the offline streaming path and
/// score it against its reference over the whole recording.
pub fn evaluate_fold(model: &CleegnModel<f32>, dataset: &Dataset, fold: &FoldSpec) -> Result<FoldEvaluation> {
    score_fold(model, dataset, fold, |s, recon| {
        Ok((mse_fitness(recon, &s.reference)?.overall, mse_fitness(&s.noisy, &s.reference)?.overall))
    })
}

/// Like [`evaluate_fold`] but scored only inside `[t0, t1)` s epochs around
/// each subject's events.
pub fn evaluate_fold_epoched(
    model: &CleegnModel<f32>,
    dataset: &Dataset,
    fold: &FoldSpec,
    t0_sec: f64,
    t1_sec: f64,
) -> Result<FoldEvaluation> {
    score_fold(model, dataset, fold, |s, recon| {
        let events = s
            .events
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("subject {} has no event file", s.id)))?;
        Ok((
            epoched_mse(recon, &s.reference, events, t0_sec, t1_sec)?.overall,
            epoched_mse(&s.noisy, &s.reference, events, t0_sec, t1_sec)?.overall,
        ))
    })
}

/// Train several folds on up to `jobs` threads. Results keep fold order;
/// each fold is fully determined by its inputs, so `jobs` never changes them.
pub fn train_folds(
    dataset: &Dataset,
    folds: &[FoldSpec],
    cfg: &TrainConfig,
    jobs: usize,
    on_epoch: impl Fn(usize, &EpochRecord) + Sync,
) -> Result<Vec<(CleegnModel<f32>, TrainReport)>> {
    let next = AtomicUsize::new(0);
    type FoldResult = Result<(CleegnModel<f32>, TrainReport)>;
    let results: Mutex<BTreeMap<usize, FoldResult>> = Mutex::new(BTreeMap::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, folds.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(fold) = folds.get(i) else { break };
                let out = train_fold_with(dataset, fold, cfg, |r| on_epoch(fold.fold_id, r));
                results.lock().expect("no thread panicked holding the lock").insert(i, out);
            });
        }
    });
    results.into_inner().expect("threads joined").into_values().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    MinutesPerSubject,
    NSubjects,
}

impl AblationAxis {
    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::MinutesPerSubject => "minutes_per_subject",
            AblationAxis::NSubjects => "n_subjects",
        }
    }
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minutes" | "minutes_per_subject" => Ok(AblationAxis::MinutesPerSubject),
            "subjects" | "n_subjects" => Ok(AblationAxis::NSubjects),
            other => Err(Error::InvalidArgument(format!(
                "unknown ablation axis {other:?} (expected minutes_per_subject or n_subjects)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationSpec {
    pub axis: AblationAxis,
    /// Minutes per subject (`f64::INFINITY` = everything) or subject counts.
    pub values: Vec<f64>,
    /// Folds per value on the minutes axis.
    pub folds: usize,
    /// Random subject subsets per value on the subject-count axis.
    pub draws: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub value: f64,
    pub mean_mse: f64,
    pub stderr_mse: f64,
    /// Scores averaged: held-out subjects on the minutes axis, subset draws
    /// on the subject-count axis.
    pub n_scores: usize,
}

/// Sweep one data-size axis.
///
/// On the minutes axis every value runs a full k-fold cross-validation with
/// recordings cut to their first minutes; the row aggregates every held-out
/// subject. On the subject-count axis each draw trains on a seeded random
/// subset of that many subjects and tests on all the others; the row
/// aggregates the per-draw mean scores.
pub fn ablation_driver(dataset: &Dataset, spec: &AblationSpec, cfg: &TrainConfig) -> Result<Vec<AblationRow>> {
    if spec.values.is_empty() {
        return Err(Error::InvalidArgument("ablation needs at least one value".into()));
    }
    let ids = dataset.subject_ids();
    match spec.axis {
        AblationAxis::MinutesPerSubject => {
            let available = dataset.shortest_minutes();
            if let Some(v) = spec.values.iter().find(|v| !(**v > 0.0) || (v.is_finite() && **v > available)) {
                return Err(Error::InvalidArgument(format!(
                    "{v} minutes per subject is outside (0, {available:.2}] available"
                )));
            }
            let folds = make_folds(&ids, spec.folds, cfg.seed)?;
            spec.values
                .iter()
                .map(|&v| {
                    let run = TrainConfig {
                        minutes_per_subject: v.is_finite().then_some(v),
                        ..cfg.clone()
                    };
                    let mut scores = Vec::new();
                    for fold in &folds {
                        let (_, report) = train_fold(dataset, fold, &run)?;
                        scores.extend(report.test.subjects.iter().map(|s| s.mse));
                    }
                    let (mean_mse, stderr_mse) = mean_stderr(&scores);
                    Ok(AblationRow {
                        value: v,
                        mean_mse,
                        stderr_mse,
                        n_scores: scores.len(),
                    })
                })
                .collect()
        }
        AblationAxis::NSubjects => {
            if spec.draws < 3 {
                return Err(Error::InvalidArgument(format!("need at least 3 subset draws, got {}", spec.draws)));
            }
            if let Some(v) = spec
                .values
                .iter()
                .find(|v| v.fract() != 0.0 || **v < 1.0 || **v as usize >= ids.len())
            {
                return Err(Error::InvalidArgument(format!(
                    "{v} training subjects is outside 1..={} (one subject must stay out for testing)",
                    ids.len() - 1
                )));
            }
            spec.values
                .iter()
                .map(|&v| {
                    let n = v as usize;
                    let mut scores = Vec::new();
                    for d in 0..spec.draws {
                        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                        rng.set_stream(100 + d as u64);
                        let mut order = ids.clone();
                        order.shuffle(&mut rng);
                        let (mut train, mut test) = (order[..n].to_vec(), order[n..].to_vec());
                        train.sort();
                        test.sort();
                        let fold = FoldSpec {
                            fold_id: d,
                            train_subjects: train,
                            test_subjects: test,
                        };
                        let (_, report) = train_fold(dataset, &fold, cfg)?;
                        scores.push(report.test.mean_mse);
                    }
                    let (mean_mse, stderr_mse) = mean_stderr(&scores);
                    Ok(AblationRow {
                        value: v,
                        mean_mse,
                        stderr_mse,
                        n_scores: scores.len(),
                    })
                })
                .collect()
        }
    }
}

/// `<axis>,mean_mse,stderr_mse,n` with `full` for an uncapped minutes value.
pub fn ablation_csv(axis: AblationAxis, rows: &[AblationRow]) -> String {
    let mut out = format!("{},mean_mse,stderr_mse,n\n", axis.name());
    for r in rows {
        let value = if r.value.is_finite() { r.value.to_string() } else { "full".to_string() };
        out.push_str(&format!("{value},{},{},{}\n", r.mean_mse, r.stderr_mse, r.n_scores));
    }
    out
}
