//! Reconstruction fitness, Welch power spectra and PCA projections of latent
//! features. Everything here returns plain data plus CSV/JSON renderings;
//! plotting is left to external tools.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::data::{extract_epochs, EventList, Recording};
use crate::error::{Error, Result};
use crate::model::CleegnModel;
use crate::neuralcore::Tensor4;

/// Mean squared error per channel and over the whole recording.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fitness {
    pub per_channel: Vec<f64>,
    pub overall: f64,
}

fn fitness_of(c: usize, pairs: impl Iterator<Item = (usize, f64)>, per_channel_count: usize) -> Fitness {
    let mut sums = vec![0.0f64; c];
    for (ch, sq) in pairs {
        sums[ch] += sq;
    }
    let overall = sums.iter().sum::<f64>() / (c * per_channel_count) as f64;
    Fitness {
        per_channel: sums.into_iter().map(|s| s / per_channel_count as f64).collect(),
        overall,
    }
}

pub fn mse_fitness(recon: &Recording, reference: &Recording) -> Result<Fitness> {
    recon.expect_aligned(reference, "mse_fitness")?;
    let t = recon.n_samples();
    let pairs = recon
        .as_channel_major()
        .iter()
        .zip(reference.as_channel_major())
        .enumerate()
        .map(|(i, (a, b))| (i / t, (a - b) * (a - b)));
    Ok(fitness_of(recon.n_channels(), pairs, t))
}

/// MSE restricted to event-locked epochs `[t0, t1)` seconds around each
/// event; epochs that leave the recording are skipped.
pub fn epoched_mse(
    recon: &Recording,
    reference: &Recording,
    events: &EventList,
    t0_sec: f64,
    t1_sec: f64,
) -> Result<Fitness> {
    recon.expect_aligned(reference, "epoched_mse")?;
    let a = extract_epochs(recon, events, t0_sec, t1_sec)?;
    let b = extract_epochs(reference, events, t0_sec, t1_sec)?;
    if a.epochs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "none of the {} events leaves a full [{t0_sec}, {t1_sec}) s epoch inside the recording",
            events.len()
        )));
    }
    let len = a.epochs[0].len;
    let pairs = a.epochs.iter().zip(&b.epochs).flat_map(|(ea, eb)| {
        ea.data
            .iter()
            .zip(&eb.data)
            .enumerate()
            .map(move |(i, (x, y))| (i / len, (x - y) * (x - y)))
    });
    Ok(fitness_of(recon.n_channels(), pairs, len * a.epochs.len()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hann,
    Rectangular,
}

impl WindowKind {
    /// Periodic window of length `n`.
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
            WindowKind::Rectangular => vec![1.0; n],
        }
    }
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(WindowKind::Hann),
            "rect" | "rectangular" => Ok(WindowKind::Rectangular),
            other => Err(Error::InvalidArgument(format!(
                "unknown window `{other}` (expected hann or rectangular)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WelchConfig {
    pub segment_sec: f64,
    /// Fraction of a segment shared with the next one.
    pub overlap: f64,
    pub window: WindowKind,
}

impl Default for WelchConfig {
    fn default() -> Self {
        WelchConfig {
            segment_sec: 2.0,
            overlap: 0.5,
            window: WindowKind::Hann,
        }
    }
}

/// One-sided power spectral density, in squared input units per Hz.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsdEstimate {
    pub freqs: Vec<f64>,
    /// `power[channel][bin]`.
    pub power: Vec<Vec<f64>>,
    pub channel_names: Vec<String>,
    pub segment_len: usize,
    pub overlap: f64,
    pub window: WindowKind,
    pub n_segments: usize,
}

impl PsdEstimate {
    pub fn bin_width(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0)
    }

    /// Sum of power times bin width; approximates the mean square.
    pub fn integrated_power(&self, channel: usize) -> f64 {
        self.power[channel].iter().sum::<f64>() * self.bin_width()
    }

    /// Frequency of the strongest bin.
    pub fn peak_freq(&self, channel: usize) -> f64 {
        let p = &self.power[channel];
        let i = (0..p.len()).max_by(|a, b| p[*a].total_cmp(&p[*b])).unwrap_or(0);
        self.freqs[i]
    }

    /// `freq_hz,<channel>...` with one row per bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz");
        for name in &self.channel_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, f) in self.freqs.iter().enumerate() {
            let _ = write!(out, "{f}");
            for ch in &self.power {
                let _ = write!(out, ",{}", ch[i]);
            }
            out.push('\n');
        }
        out
    }
}

/// Averaged periodogram over overlapping windowed segments.
///
/// Each segment's mean is taken out before windowing and credited to the
/// 0 Hz bin directly, so a constant signal puts all of its power there
/// instead of leaking into the first bins through the window.
pub fn welch_psd(rec: &Recording, cfg: &WelchConfig) -> Result<PsdEstimate> {
    let fs = rec.fs() as f64;
    let n = (cfg.segment_sec * fs).round() as usize;
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "a {} s segment holds fewer than 2 samples at {fs} Hz",
            cfg.segment_sec
        )));
    }
    if !(0.0..1.0).contains(&cfg.overlap) {
        return Err(Error::InvalidArgument(format!("overlap must lie in [0, 1), got {}", cfg.overlap)));
    }
    if rec.n_samples() < n {
        return Err(Error::InvalidArgument(format!(
            "recording of {} samples is shorter than one {n}-sample segment",
            rec.n_samples()
        )));
    }
    let step = (((1.0 - cfg.overlap) * n as f64).round() as usize).max(1);
    let starts: Vec<usize> = (0..=(rec.n_samples() - n) / step).map(|i| i * step).collect();
    let window = cfg.window.coefficients(n);
    let norm = fs * window.iter().map(|w| w * w).sum::<f64>();
    let bins = n / 2 + 1;
    let df = fs / n as f64;
    let fft = FftPlanner::new().plan_fft_forward(n);

    let mut power = Vec::with_capacity(rec.n_channels());
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for ch in rec.channels() {
        let mut acc = vec![0.0f64; bins];
        for &s in &starts {
            let seg = &ch[s..s + n];
            let mean = seg.iter().sum::<f64>() / n as f64;
            for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
                *b = Complex::new((x - mean) * w, 0.0);
            }
            fft.process(&mut buf);
            for (k, a) in acc.iter_mut().enumerate() {
                // interior bins carry the mirrored negative frequencies too
                let sides = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
                *a += sides * buf[k].norm_sqr() / norm;
            }
            acc[0] += mean * mean / df;
        }
        acc.iter_mut().for_each(|a| *a /= starts.len() as f64);
        power.push(acc);
    }
    Ok(PsdEstimate {
        freqs: (0..bins).map(|k| k as f64 * df).collect(),
        power,
        channel_names: rec.channel_names().to_vec(),
        segment_len: n,
        overlap: cfg.overlap,
        window: cfg.window,
        n_segments: starts.len(),
    })
}

/// Two leading principal axes of a set of channel time series, where each
/// channel is one observation and each time sample one variable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub axes: [Vec<f64>; 2],
    pub explained: [f64; 2],
    pub segment_start: usize,
    pub segment_len: usize,
}

impl PcaBasis {
    /// Coordinates of one series along the two axes.
    pub fn project(&self, series: &[f64]) -> Result<(f64, f64)> {
        if series.len() != self.mean.len() {
            return Err(Error::shape("PcaBasis::project", self.mean.len(), series.len()));
        }
        let along = |axis: &[f64]| {
            series
                .iter()
                .zip(&self.mean)
                .zip(axis)
                .map(|((x, m), a)| (x - m) * a)
                .sum::<f64>()
        };
        Ok((along(&self.axes[0]), along(&self.axes[1])))
    }

    pub fn segment(&self) -> Range<usize> {
        self.segment_start..self.segment_start + self.segment_len
    }
}

/// Second eigenvalues below this fraction of the first count as rank 1.
const RANK_TOL: f64 = 1e-10;

pub fn fit_pca_basis(noisy: &Recording, segment: Range<usize>) -> Result<PcaBasis> {
    let c = noisy.n_channels();
    if segment.end > noisy.n_samples() || segment.start >= segment.end {
        return Err(Error::InvalidArgument(format!(
            "segment {segment:?} is empty or outside a recording of {} samples",
            noisy.n_samples()
        )));
    }
    let t = segment.len();
    if c < 3 || t < c {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 3 channels and a segment at least as long as the channel count (C = {c}, segment = {t})"
        )));
    }
    let rows: Vec<&[f64]> = noisy.channels().map(|ch| &ch[segment.clone()]).collect();
    let mut mean = vec![0.0f64; t];
    for r in &rows {
        mean.iter_mut().zip(*r).for_each(|(m, v)| *m += v / c as f64);
    }
    let centered = DMatrix::from_fn(c, t, |i, j| rows[i][j] - mean[j]);

    // right singular vectors from the small C x C Gram matrix
    let gram = &centered * centered.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l1 > 0.0) || l2 <= RANK_TOL * l1 {
        return Err(Error::Degenerate(format!(
            "segment has rank below 2 (leading eigenvalues {l1:.3e}, {l2:.3e})"
        )));
    }

    let mut axes: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (slot, &idx) in axes.iter_mut().zip(&order[..2]) {
        let u = eig.eigenvectors.column(idx);
        let mut v: Vec<f64> = (0..t).map(|j| (0..c).map(|i| u[i] * centered[(i, j)]).sum()).collect();
        *slot = {
            v.iter_mut().for_each(|x| *x /= eig.eigenvalues[idx].sqrt());
            v
        };
    }
    // re-orthonormalize to remove eigen-solver round-off
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let n0 = dot(&axes[0], &axes[0]).sqrt();
    axes[0].iter_mut().for_each(|x| *x /= n0);
    let proj = dot(&axes[0], &axes[1]);
    let (a0, a1) = axes.split_at_mut(1);
    a1[0].iter_mut().zip(&a0[0]).for_each(|(x, y)| *x -= proj * y);
    let n1 = dot(&axes[1], &axes[1]).sqrt();
    axes[1].iter_mut().for_each(|x| *x /= n1);
    // sign convention: the largest-magnitude entry of each axis is positive
    for axis in &mut axes {
        let peak = axis.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
        if peak < 0.0 {
            axis.iter_mut().for_each(|x| *x = -*x);
        }
    }

    Ok(PcaBasis {
        mean,
        axes,
        explained: [l1 / total, l2.max(0.0) / total],
        segment_start: segment.start,
        segment_len: t,
    })
}

/// One projected series. `row` enumerates `(height, feature)` pairs of the
/// layer's tensor height-major: `row = h * features + f`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LatentPoint {
    pub layer: usize,
    pub row: usize,
    pub x: f64,
    pub y: f64,
}

/// Layers are numbered 0 (input channels), 1 to 4 (the hidden convolution
/// outputs) and 5 (reconstructed channels).
pub const LATENT_LAYERS: Range<usize> = 0..6;

fn tensor_rows(t: &Tensor4<f32>) -> Vec<Vec<f64>> {
    let d = t.dims();
    let mut rows = Vec::with_capacity(d.height * d.features);
    for h in 0..d.height {
        for f in 0..d.features {
            rows.push((0..d.width).map(|w| t.get([0, h, w, f]) as f64).collect());
        }
    }
    rows
}

/// Project every row of one layer's activations for the basis segment of
/// `noisy` onto the basis axes.
pub fn project_latents(
    model: &CleegnModel<f32>,
    noisy: &Recording,
    basis: &PcaBasis,
    layer: usize,
) -> Result<Vec<LatentPoint>> {
    if !LATENT_LAYERS.contains(&layer) {
        return Err(Error::InvalidArgument(format!("layer must be in 0..=5, got {layer}")));
    }
    let seg = basis.segment();
    if seg.end > noisy.n_samples() {
        return Err(Error::shape(
            "project_latents",
            format!("a recording covering samples {seg:?}"),
            format!("{} samples", noisy.n_samples()),
        ));
    }
    let c = noisy.n_channels();
    let rows: Vec<Vec<f64>> = if layer == 0 {
        noisy.channels().map(|ch| ch[seg.clone()].to_vec()).collect()
    } else {
        let x = Tensor4::from_fn((1, c, seg.len(), 1), |[_, h, w, _]| noisy.get(h, seg.start + w) as f32);
        let (y, taps) = model.infer_with_taps(&x)?;
        let picked = match layer {
            1 => &taps.enc_spatial,
            2 => &taps.enc_temporal,
            3 => &taps.dec_temporal,
            4 => &taps.dec_spatial,
            _ => &y,
        };
        tensor_rows(picked)
    };
    rows.iter()
        .enumerate()
        .map(|(row, series)| {
            let (x, y) = basis.project(series)?;
            Ok(LatentPoint { layer, row, x, y })
        })
        .collect()
}

/// `x,y,layer,row` CSV.
pub fn latent_points_csv(points: &[LatentPoint]) -> String {
    let mut out = String::from("x,y,layer,row\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.x, p.y, p.layer, p.row);
    }
    out
}

/// JSON report of a fitness comparison.
pub fn fitness_json(fitness: &Fitness, channel_names: &[String]) -> String {
    #[derive(Serialize)]
    struct Report<'a> {
        overall_mse: f64,
        channels: Vec<(&'a str, f64)>,
    }
    let report = Report {
        overall_mse: fitness.overall,
        channels: channel_names.iter().map(String::as_str).zip(fitness.per_channel.iter().copied()).collect(),
    };
    serde_json::to_string_pretty(&report).expect("plain data serializes")
}
