//! Ground-truth synthetic EEG with known artifacts.
//!
//! Channels sit on a golden-angle spiral over a unit disc seen from above,
//! nose at `(0, 1)`. The clean signal mixes narrow-band theta, alpha and beta
//! rhythms with spatially smooth 1/f background, all confined to 1-45 Hz.
//! Artifacts are added on top: frontal eye blinks, lateral EMG bursts and an
//! optional 50 Hz line tone. Every component draws from its own random stream
//! so toggling one artifact never perturbs the others.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::recording::{Recording, RecordingKind};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub channels: usize,
    pub fs: f32,
    pub duration_sec: f64,
    pub seed: u64,
    pub subject_id: String,
    pub blink_rate_per_min: f64,
    pub emg_rate_per_min: f64,
    /// RMS of the clean signal, averaged over channels.
    pub background_uv: f64,
    /// Median blink peak; individual blinks scale by U(0.5, 1.5).
    pub blink_uv: f64,
    /// Median EMG burst RMS at the most affected channel.
    pub emg_uv: f64,
    pub line_noise: bool,
    pub line_uv: f64,
}

impl SynthSpec {
    pub fn new(channels: usize, fs: f32, duration_sec: f64, seed: u64) -> Self {
        SynthSpec {
            channels,
            fs,
            duration_sec,
            seed,
            subject_id: "s01".into(),
            blink_rate_per_min: 20.0,
            emg_rate_per_min: 10.0,
            background_uv: 5.0,
            blink_uv: 100.0,
            emg_uv: 40.0,
            line_noise: false,
            line_uv: 5.0,
        }
    }

    pub fn with_subject(mut self, id: impl Into<String>) -> Self {
        self.subject_id = id.into();
        self
    }

    /// Clean data only: all artifact rates zero and no line tone.
    pub fn artifact_free(mut self) -> Self {
        self.blink_rate_per_min = 0.0;
        self.emg_rate_per_min = 0.0;
        self.line_noise = false;
        self
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_sec * self.fs as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.channels < 2 {
            return bad(format!("synthetic data needs at least 2 channels, got {}", self.channels));
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return bad(format!("sampling rate must be positive, got {}", self.fs));
        }
        if self.n_samples() == 0 {
            return bad(format!("duration {} s yields no samples", self.duration_sec));
        }
        let nonneg = [
            ("blink rate", self.blink_rate_per_min),
            ("EMG rate", self.emg_rate_per_min),
            ("background amplitude", self.background_uv),
            ("blink amplitude", self.blink_uv),
            ("EMG amplitude", self.emg_uv),
            ("line amplitude", self.line_uv),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Scalp positions of `c` channels: golden-angle spiral in the unit disc,
/// starting near the centre. `y` points towards the nose.
pub fn channel_positions(c: usize) -> Vec<(f64, f64)> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..c)
        .map(|i| {
            let r = ((i as f64 + 0.5) / c as f64).sqrt();
            let th = i as f64 * golden + PI / 2.0;
            (r * th.cos(), r * th.sin())
        })
        .collect()
}

fn blob(pos: &[(f64, f64)], centre: (f64, f64), width: f64) -> Vec<f64> {
    pos.iter()
        .map(|(x, y)| {
            let d2 = (x - centre.0).powi(2) + (y - centre.1).powi(2);
            (-d2 / (2.0 * width * width)).exp()
        })
        .collect()
}

/// Artifact topography: a blob rescaled so the nearest channel has weight 1.
fn topography(pos: &[(f64, f64)], centre: (f64, f64), width: f64) -> Vec<f64> {
    let mut w = blob(pos, centre, width);
    let max = w.iter().cloned().fold(0.0, f64::max);
    w.iter_mut().for_each(|v| *v /= max);
    w
}

const FRONT: (f64, f64) = (0.0, 1.1);
const FRONT_WIDTH: f64 = 0.6;
const LEFT: (f64, f64) = (-1.1, 0.0);
const RIGHT: (f64, f64) = (1.1, 0.0);
const LATERAL_WIDTH: f64 = 0.5;

/// Relative blink amplitude per channel, 1 at the most frontal channel.
pub fn frontal_weights(c: usize) -> Vec<f64> {
    topography(&channel_positions(c), FRONT, FRONT_WIDTH)
}

/// Relative EMG amplitude per channel for a burst on the left or right.
pub fn lateral_weights(c: usize, right: bool) -> Vec<f64> {
    topography(&channel_positions(c), if right { RIGHT } else { LEFT }, LATERAL_WIDTH)
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Real noise of length `n` whose amplitude spectrum is `shape(f)` with random
/// complex Gaussian coefficients, normalised to unit RMS. All zero when the
/// shape vanishes everywhere.
fn spectral_noise(rng: &mut ChaCha8Rng, n: usize, fs: f64, shape: impl Fn(f64) -> f64, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    for k in 1..=(n - 1) / 2 {
        let a = shape(k as f64 * fs / n as f64);
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        if a > 0.0 {
            spec[k] = Complex::new(a * re, a * im);
            spec[n - k] = spec[k].conj();
        }
    }
    planner.plan_fft_inverse(n).process(&mut spec);
    let mut x: Vec<f64> = spec.iter().map(|v| v.re).collect();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
    x
}

/// Start times (in samples) of a Poisson process of `per_min` events.
fn poisson_onsets(rng: &mut ChaCha8Rng, per_min: f64, n: usize, fs: f64) -> Vec<usize> {
    if per_min <= 0.0 {
        return Vec::new();
    }
    let gap = Exp::new(per_min / 60.0).expect("positive rate");
    let mut t = gap.sample(rng);
    let mut out = Vec::new();
    while t * fs < n as f64 {
        out.push((t * fs) as usize);
        t += gap.sample(rng);
    }
    out
}

/// Blink waveform: a sin^2 positive lobe over 70% of the duration followed
/// by a shallow negative rebound, peak 1.
pub fn blink_shape(n: usize) -> Vec<f64> {
    let up = ((0.7 * n as f64).round() as usize).clamp(1, n);
    let down = n - up;
    let mut w: Vec<f64> = (0..up).map(|i| (PI * (i as f64 + 0.5) / up as f64).sin().powi(2)).collect();
    w.extend((0..down).map(|i| -0.25 * (PI * (i as f64 + 0.5) / down as f64).sin().powi(2)));
    w
}

fn tukey(n: usize, alpha: f64) -> Vec<f64> {
    let edge = (alpha * n as f64 / 2.0).max(1.0);
    (0..n)
        .map(|i| {
            let d = (i.min(n - 1 - i)) as f64;
            if d >= edge {
                1.0
            } else {
                0.5 * (1.0 - (PI * d / edge).cos())
            }
        })
        .collect()
}

fn to_f32_grid(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = *x as f32 as f64);
}

/// Generate a `(noisy, clean)` pair. Both are rounded to `f32` precision so
/// they survive a binary save/load unchanged.
pub fn synth_subject(spec: &SynthSpec) -> Result<(Recording, Recording)> {
    spec.validate()?;
    let c = spec.channels;
    let n = spec.n_samples();
    let fs = spec.fs as f64;
    let pos = channel_positions(c);
    let hi = 45f64.min(0.45 * fs);
    let in_band = move |f: f64| f >= 1.0 && f <= hi;
    let mut planner = FftPlanner::new();

    // Per-subject anatomy: jittered source locations and overall gain.
    let mut anat = rng_stream(spec.seed, 0);
    let jitter = |rng: &mut ChaCha8Rng, p: (f64, f64), r: f64| (p.0 + rng.gen_range(-r..r), p.1 + rng.gen_range(-r..r));

    let mut clean = vec![0.0f64; c * n];
    let add_source = |clean: &mut [f64], weights: &[f64], wave: &[f64], gain: f64| {
        for (ch, w) in weights.iter().enumerate() {
            let row = &mut clean[ch * n..(ch + 1) * n];
            for (dst, v) in row.iter_mut().zip(wave) {
                *dst += gain * w * v;
            }
        }
    };

    let mut waves = rng_stream(spec.seed, 1);
    let rhythms = [(6.0, (0.0, 0.3), 0.5), (10.0, (0.0, -0.7), 1.0), (20.0, (0.4, 0.0), 0.4), (20.0, (-0.4, 0.0), 0.4)];
    for (freq, centre, gain) in rhythms {
        let centre = jitter(&mut anat, centre, 0.15);
        let weights = blob(&pos, centre, 0.5);
        let wave = spectral_noise(&mut waves, n, fs, |f| if in_band(f) { (-(f - freq).powi(2) / 2.0).exp() } else { 0.0 }, &mut planner);
        add_source(&mut clean, &weights, &wave, gain);
    }
    for _ in 0..4 {
        let centre = (anat.gen_range(-0.8..0.8), anat.gen_range(-0.8..0.8));
        let weights = blob(&pos, centre, 0.6);
        let wave = spectral_noise(&mut waves, n, fs, |f| if in_band(f) { 1.0 / f.sqrt() } else { 0.0 }, &mut planner);
        add_source(&mut clean, &weights, &wave, 1.0);
    }
    for ch in 0..c {
        let mut w = vec![0.0; c];
        w[ch] = 1.0;
        let wave = spectral_noise(&mut waves, n, fs, |f| if in_band(f) { 1.0 / f.sqrt() } else { 0.0 }, &mut planner);
        add_source(&mut clean, &w, &wave, 0.3);
    }
    let mean_var = clean.iter().map(|v| v * v).sum::<f64>() / (c * n) as f64;
    let subject_gain = anat.gen_range(0.8..1.2);
    let scale = if mean_var > 0.0 { spec.background_uv * subject_gain / mean_var.sqrt() } else { 0.0 };
    clean.iter_mut().for_each(|v| *v *= scale);
    to_f32_grid(&mut clean);

    let mut noisy = clean.clone();
    let front = topography(&pos, jitter(&mut anat, FRONT, 0.1), FRONT_WIDTH);
    let mut blinks = rng_stream(spec.seed, 2);
    for onset in poisson_onsets(&mut blinks, spec.blink_rate_per_min, n, fs) {
        let dur = ((blinks.gen_range(0.3..0.5) * fs).round() as usize).max(1);
        let amp = spec.blink_uv * blinks.gen_range(0.5..1.5);
        let shape = blink_shape(dur);
        for (ch, w) in front.iter().enumerate() {
            for (i, s) in shape.iter().enumerate().take(n.saturating_sub(onset)) {
                noisy[ch * n + onset + i] += amp * w * s;
            }
        }
    }

    let mut emg = rng_stream(spec.seed, 3);
    let sides = [
        topography(&pos, jitter(&mut anat, LEFT, 0.1), LATERAL_WIDTH),
        topography(&pos, jitter(&mut anat, RIGHT, 0.1), LATERAL_WIDTH),
    ];
    let emg_hi = 40f64.min(0.49 * fs);
    for onset in poisson_onsets(&mut emg, spec.emg_rate_per_min, n, fs) {
        let dur = ((emg.gen_range(0.5..2.0) * fs).round() as usize).max(4);
        let amp = spec.emg_uv * emg.gen_range(0.5..1.5);
        let side = &sides[emg.gen_range(0..2usize)];
        let burst = spectral_noise(&mut emg, dur, fs, |f| if (20.0..=emg_hi).contains(&f) { 1.0 } else { 0.0 }, &mut planner);
        let gate = tukey(dur, 0.25);
        for (ch, w) in side.iter().enumerate() {
            for i in 0..dur.min(n.saturating_sub(onset)) {
                noisy[ch * n + onset + i] += amp * w * gate[i] * burst[i];
            }
        }
    }

    if spec.line_noise && 50.0 < fs / 2.0 {
        let mut line = rng_stream(spec.seed, 4);
        let phase = line.gen_range(0.0..2.0 * PI);
        for ch in 0..c {
            let g = spec.line_uv * line.gen_range(0.5..1.5);
            for t in 0..n {
                noisy[ch * n + t] += g * (2.0 * PI * 50.0 * t as f64 / fs + phase).sin();
            }
        }
    }
    to_f32_grid(&mut noisy);

    let names = Recording::default_channel_names(c);
    let noisy = Recording::from_channel_major(names.clone(), spec.fs, noisy, spec.subject_id.clone(), RecordingKind::Raw)?;
    let clean = Recording::from_channel_major(names, spec.fs, clean, spec.subject_id.clone(), RecordingKind::CleanTruth)?;
    Ok((noisy, clean))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_outside_band(x: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
        let n = x.len();
        let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(*v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (mut inside, mut total) = (0.0, 0.0);
        for (k, v) in buf.iter().enumerate() {
            let f = k.min(n - k) as f64 * fs / n as f64;
            total += v.norm_sqr();
            if f >= lo && f <= hi {
                inside += v.norm_sqr();
            }
        }
        1.0 - inside / total
    }

    #[test]
    fn positions_cover_the_disc() {
        let p = channel_positions(16);
        assert!(p.iter().all(|(x, y)| x * x + y * y <= 1.0 + 1e-12));
        assert!(p.iter().any(|(_, y)| *y > 0.5) && p.iter().any(|(_, y)| *y < -0.5));
    }

    #[test]
    fn blink_is_biphasic() {
        let w = blink_shape(50);
        assert_eq!(w.len(), 50);
        let max = w.iter().cloned().fold(f64::MIN, f64::max);
        let min = w.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max > 0.99 && (min + 0.25).abs() < 0.01);
    }

    #[test]
    fn deterministic_and_artifact_free_equal() {
        let spec = SynthSpec::new(4, 128.0, 30.0, 11);
        let (a, b) = synth_subject(&spec).unwrap();
        let (a2, b2) = synth_subject(&spec).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        let (n, c) = synth_subject(&spec.clone().artifact_free()).unwrap();
        assert_eq!(n.as_channel_major(), c.as_channel_major());
        assert_eq!(c.as_channel_major(), b.as_channel_major());
    }

    #[test]
    fn clean_is_band_limited() {
        let spec = SynthSpec::new(6, 128.0, 60.0, 3);
        let (_, clean) = synth_subject(&spec).unwrap();
        for ch in clean.channels() {
            assert!(power_outside_band(ch, 128.0, 1.0, 45.0) < 0.01);
        }
        let rms = (clean.as_channel_major().iter().map(|v| v * v).sum::<f64>() / (6.0 * 7680.0)).sqrt();
        assert!(rms > 3.0 && rms < 7.0, "{rms}");
    }

    #[test]
    fn artifacts_dominate_where_designed() {
        let spec = SynthSpec::new(8, 128.0, 300.0, 5);
        let (noisy, clean) = synth_subject(&spec).unwrap();
        let n = noisy.n_samples() as f64;
        let per_channel: Vec<(f64, f64)> = (0..8)
            .map(|c| {
                let err = noisy.channel(c).iter().zip(clean.channel(c)).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
                let var = clean.channel(c).iter().map(|v| v * v).sum::<f64>() / n;
                (err, var)
            })
            .collect();
        let floor = per_channel.iter().map(|p| p.1).fold(f64::MAX, f64::min);
        let mse = per_channel.iter().map(|p| p.0).sum::<f64>() / 8.0;
        assert!(mse > 10.0 * floor, "mse {mse} floor {floor}");
        let fw = frontal_weights(8);
        let most_frontal = (0..8).max_by(|a, b| fw[*a].total_cmp(&fw[*b])).unwrap();
        let worst = (0..8).max_by(|a, b| per_channel[*a].0.total_cmp(&per_channel[*b].0)).unwrap();
        let lateral: Vec<usize> = (0..8)
            .filter(|c| lateral_weights(8, false)[*c] > 0.3 || lateral_weights(8, true)[*c] > 0.3)
            .collect();
        assert!(worst == most_frontal || lateral.contains(&worst));
        assert!(noisy.as_channel_major().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn line_noise_toggle() {
        let mut spec = SynthSpec::new(3, 256.0, 10.0, 1).artifact_free();
        spec.line_noise = true;
        let (noisy, clean) = synth_subject(&spec).unwrap();
        let diff: Vec<f64> = noisy.channel(0).iter().zip(clean.channel(0)).map(|(a, b)| a - b).collect();
        assert!(power_outside_band(&diff, 256.0, 49.5, 50.5) < 0.01);
    }

    #[test]
    fn invalid_specs() {
        assert!(synth_subject(&SynthSpec::new(1, 128.0, 1.0, 0)).is_err());
        let mut s = SynthSpec::new(4, 128.0, 1.0, 0);
        s.blink_rate_per_min = -1.0;
        assert!(synth_subject(&s).is_err());
    }
}
