//! Sliding-window reconstruction, online and offline.
//!
//! A stream keeps the last `T` frames in a ring buffer. Once `T` frames have
//! arrived, and after every further `H_s = floor(0.5 fs)` frames, the model
//! runs on the newest window and the final `H_s` output samples are emitted.
//! The first emitted sample therefore sits at stream position `T - H_s`.
//!
//! The network only mixes time through its two temporal convolutions, so the
//! last `H_s` outputs of a window depend on no more than the last
//! `H_s + 2(k - 1)` inputs. The online path runs on that crop, which keeps
//! each hop well inside its time budget even for large montages. The offline
//! path always runs full windows.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Recording, RecordingKind};
use crate::error::{Error, Result};
use crate::model::CleegnModel;
use crate::neuralcore::Tensor4;

/// How overlapping window outputs are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MergePolicy {
    /// Causal: each window contributes only its newest hop.
    #[default]
    LatestHop,
    /// Offline only: mean of every window output covering a sample.
    OverlapAverage,
}

impl std::str::FromStr for MergePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latest_hop" | "latest-hop" => Ok(MergePolicy::LatestHop),
            "overlap_average" | "overlap-average" => Ok(MergePolicy::OverlapAverage),
            other => Err(Error::InvalidArgument(format!(
                "unknown merge policy {other:?} (expected latest_hop or overlap_average)"
            ))),
        }
    }
}

pub fn hop_len(fs: f32) -> usize {
    (0.5 * fs as f64).floor() as usize
}

/// Frames needed so the last `hop` outputs match a full-window pass.
pub fn receptive_crop(window: usize, hop: usize, kernel: usize) -> usize {
    (hop + 2 * kernel.saturating_sub(1)).min(window)
}

/// Online reconstruction state for one stream.
#[derive(Debug)]
pub struct StreamState {
    model: Arc<CleegnModel<f32>>,
    channels: usize,
    window: usize,
    hop: usize,
    crop: usize,
    policy: MergePolicy,
    /// `T` frames, frame-major, written circularly at `head`.
    ring: Vec<f32>,
    head: usize,
    received: u64,
    until_emit: usize,
    emitted: u64,
    scratch: Tensor4<f32>,
}

pub fn stream_init(model: Arc<CleegnModel<f32>>, fs: f32, policy: MergePolicy) -> Result<StreamState> {
    let cfg = *model.config();
    if cfg.fs != fs {
        return Err(Error::Config(format!("stream rate {fs} Hz does not match the model's {} Hz", cfg.fs)));
    }
    let window = cfg.window_len();
    let hop = hop_len(fs);
    if hop == 0 || hop > window {
        return Err(Error::Config(format!("hop of {hop} samples does not fit a {window}-sample window")));
    }
    let crop = receptive_crop(window, hop, cfg.kernel_width());
    Ok(StreamState {
        channels: cfg.channels,
        window,
        hop,
        crop,
        policy,
        ring: vec![0.0; window * cfg.channels],
        head: 0,
        received: 0,
        until_emit: window,
        emitted: 0,
        scratch: Tensor4::zeros((1, cfg.channels, crop, 1)),
        model,
    })
}

/// Feed interleaved frames (`C` values per frame); returns the interleaved
/// frames emitted by this call, a whole number of hops.
pub fn stream_push(state: &mut StreamState, chunk: &[f32]) -> Result<Vec<f32>> {
    state.push(chunk)
}

impl StreamState {
    pub fn window_len(&self) -> usize {
        self.window
    }

    pub fn hop_len(&self) -> usize {
        self.hop
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn policy(&self) -> MergePolicy {
        self.policy
    }

    /// Frames received so far.
    pub fn received(&self) -> u64 {
        self.received
    }

    /// Frames emitted so far.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    /// Stream position of the next frame to be emitted.
    pub fn output_position(&self) -> u64 {
        (self.window - self.hop) as u64 + self.emitted
    }

    pub fn push(&mut self, chunk: &[f32]) -> Result<Vec<f32>> {
        if self.policy == MergePolicy::OverlapAverage {
            return Err(Error::Unsupported(
                "overlap_average needs look-ahead and is only available offline".into(),
            ));
        }
        let c = self.channels;
        if !chunk.len().is_multiple_of(c) {
            return Err(Error::shape(
                "stream_push chunk",
                format!("a multiple of C = {c} values"),
                format!("{} values", chunk.len()),
            ));
        }
        if let Some(i) = chunk.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("stream input frame {}, channel {}", i / c, i % c)));
        }
        let mut out = Vec::new();
        let mut frames = chunk.chunks_exact(c);
        loop {
            let take = self.until_emit.min(frames.len());
            for frame in frames.by_ref().take(take) {
                self.ring[self.head * c..(self.head + 1) * c].copy_from_slice(frame);
                self.head = (self.head + 1) % self.window;
            }
            self.received += take as u64;
            self.until_emit -= take;
            if self.until_emit > 0 {
                break;
            }
            self.emit(&mut out)?;
            self.until_emit = self.hop;
        }
        Ok(out)
    }

    fn emit(&mut self, out: &mut Vec<f32>) -> Result<()> {
        let c = self.channels;
        let start = (self.head + self.window - self.crop) % self.window;
        let data = self.scratch.as_mut_slice();
        for t in 0..self.crop {
            let frame = (start + t) % self.window;
            for ch in 0..c {
                data[ch * self.crop + t] = self.ring[frame * c + ch];
            }
        }
        let y = self.model.infer(&self.scratch)?;
        let y = y.as_slice();
        out.reserve(self.hop * c);
        for t in self.crop - self.hop..self.crop {
            for ch in 0..c {
                out.push(y[ch * self.crop + t]);
            }
        }
        self.emitted += self.hop as u64;
        Ok(())
    }
}

const OFFLINE_BATCH: usize = 8;

/// Run full windows starting at `starts`, calling `sink(window_index, output)`
/// with each `C x T` channel-major output.
fn run_windows(
    model: &CleegnModel<f32>,
    rec: &Recording,
    starts: &[usize],
    mut sink: impl FnMut(usize, &[f32]),
) -> Result<()> {
    let c = rec.n_channels();
    let t = model.config().window_len();
    for (batch_idx, batch) in starts.chunks(OFFLINE_BATCH).enumerate() {
        let mut x = Tensor4::<f32>::zeros((batch.len(), c, t, 1));
        for (b, &s) in batch.iter().enumerate() {
            for ch in 0..c {
                let src = &rec.channel(ch)[s..s + t];
                for (dst, v) in x.row_mut(b, ch).iter_mut().zip(src) {
                    *dst = *v as f32;
                }
            }
        }
        let y = model.infer(&x)?;
        for b in 0..batch.len() {
            sink(batch_idx * OFFLINE_BATCH + b, &y.as_slice()[b * c * t..(b + 1) * c * t]);
        }
    }
    Ok(())
}

/// Reconstruct a whole recording. `LatestHop` reproduces the stream output
/// exactly on `[T - H_s, ...)`; the warm-up before it comes from the first
/// window and any tail shorter than a hop from a window aligned to the end.
pub fn offline_reconstruct(model: &CleegnModel<f32>, rec: &Recording, policy: MergePolicy) -> Result<Recording> {
    let cfg = model.config();
    if cfg.fs != rec.fs() {
        return Err(Error::Config(format!(
            "recording rate {} Hz does not match the model's {} Hz",
            rec.fs(),
            cfg.fs
        )));
    }
    if rec.n_channels() != cfg.channels {
        return Err(Error::shape(
            "offline_reconstruct channels",
            format!("C = {}", cfg.channels),
            format!("C = {}", rec.n_channels()),
        ));
    }
    let (n, t, hop, c) = (rec.n_samples(), cfg.window_len(), hop_len(cfg.fs), cfg.channels);
    if n < t {
        return Err(Error::InvalidArgument(format!(
            "recording has {n} samples, shorter than one {t}-sample window"
        )));
    }
    let mut starts: Vec<usize> = (0..=(n - t) / hop).map(|k| k * hop).collect();
    let covered = starts.last().unwrap() + t;
    if covered < n {
        starts.push(n - t);
    }
    let mut out = vec![0.0f64; c * n];
    match policy {
        MergePolicy::LatestHop => {
            let last_full = (n - t) / hop;
            run_windows(model, rec, &starts, |k, y| {
                let s = starts[k];
                let range = if k == 0 {
                    0..t
                } else if k <= last_full {
                    t - hop..t
                } else {
                    covered - s..t
                };
                for ch in 0..c {
                    for i in range.clone() {
                        out[ch * n + s + i] = y[ch * t + i] as f64;
                    }
                }
            })?;
        }
        MergePolicy::OverlapAverage => {
            let mut count = vec![0u32; n];
            run_windows(model, rec, &starts, |k, y| {
                let s = starts[k];
                for ch in 0..c {
                    for i in 0..t {
                        out[ch * n + s + i] += y[ch * t + i] as f64;
                    }
                }
                count[s..s + t].iter_mut().for_each(|v| *v += 1);
            })?;
            for ch in 0..c {
                for (v, k) in out[ch * n..(ch + 1) * n].iter_mut().zip(&count) {
                    *v /= *k as f64;
                }
            }
        }
    }
    rec.with_samples(out, rec.fs(), RecordingKind::Reconstructed)
}
