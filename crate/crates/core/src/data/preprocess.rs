//! Common-average referencing, zero-phase FIR band-pass and decimation.

use std::f64::consts::PI;

use super::recording::Recording;
use crate::error::{Error, Result};

/// Subtract the cross-channel mean from every sample column.
pub fn car_reference(rec: &Recording) -> Recording {
    let c = rec.n_channels();
    let t = rec.n_samples();
    let src = rec.as_channel_major();
    let mut mean = vec![0.0f64; t];
    for ch in rec.channels() {
        for (m, v) in mean.iter_mut().zip(ch) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= c as f64);
    let out: Vec<f64> = src.iter().enumerate().map(|(i, v)| v - mean[i % t]).collect();
    rec.with_samples(out, rec.fs(), rec.kind).expect("CAR keeps a valid recording valid")
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn hamming(n: usize, taps: usize) -> f64 {
    if taps == 1 {
        return 1.0;
    }
    0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos()
}

/// Hamming-windowed sinc low-pass with cutoff `fc` (Hz), unit DC gain.
pub fn lowpass_taps(fc: f64, fs: f64, taps: usize) -> Vec<f64> {
    let m = (taps - 1) as f64 / 2.0;
    let f = fc / fs;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| 2.0 * f * sinc(2.0 * f * (n as f64 - m)) * hamming(n, taps))
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    h
}

/// Hamming-windowed sinc band-pass: difference of two low-passes, scaled to
/// unit gain at the band centre.
pub fn bandpass_taps(lo: f64, hi: f64, fs: f64, taps: usize) -> Vec<f64> {
    let m = (taps - 1) as f64 / 2.0;
    let (fl, fh) = (lo / fs, hi / fs);
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let x = n as f64 - m;
            (2.0 * fh * sinc(2.0 * fh * x) - 2.0 * fl * sinc(2.0 * fl * x)) * hamming(n, taps)
        })
        .collect();
    let w0 = PI * (lo + hi) / fs;
    let (re, im) = h.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, v)| {
        let ph = w0 * (n as f64 - m);
        (re + v * ph.cos(), im - v * ph.sin())
    });
    let gain = (re * re + im * im).sqrt();
    h.iter_mut().for_each(|v| *v /= gain);
    h
}

/// Index into `0..n` by mirror reflection without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let r = i.rem_euclid(period);
    if r < n as isize {
        r as usize
    } else {
        (period - r) as usize
    }
}

/// Centred convolution of `x` with symmetric `h`, reflecting at both edges.
fn centred_filter(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let half = (h.len() / 2) as isize;
    let pad = h.len() - 1;
    let padded: Vec<f64> = (-(pad as isize)..(n + pad) as isize).map(|i| x[reflect(i, n)]).collect();
    (0..n)
        .map(|t| {
            let centre = t + pad;
            let start = centre as isize - half;
            h.iter()
                .enumerate()
                .map(|(j, hv)| hv * padded[(start + j as isize) as usize])
                .sum()
        })
        .collect()
}

/// Zero-phase filtering: the filter is applied forward, then to the
/// time-reversed result. For a symmetric kernel both passes are centred
/// convolutions, so the combined response is `|H|^2` with no delay.
pub fn filtfilt(x: &[f64], h: &[f64]) -> Vec<f64> {
    let forward = centred_filter(x, h);
    let mut rev: Vec<f64> = forward.into_iter().rev().collect();
    rev = centred_filter(&rev, h);
    rev.reverse();
    rev
}

pub fn bandpass_fir(rec: &Recording, lo_hz: f64, hi_hz: f64, taps: usize) -> Result<Recording> {
    let nyq = rec.fs() as f64 / 2.0;
    if !(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < nyq) {
        return Err(Error::InvalidArgument(format!(
            "band {lo_hz}-{hi_hz} Hz must satisfy 0 < lo < hi < {nyq} Hz"
        )));
    }
    if taps.is_multiple_of(2) || taps < 3 {
        return Err(Error::InvalidArgument(format!("taps must be odd and at least 3, got {taps}")));
    }
    let h = bandpass_taps(lo_hz, hi_hz, rec.fs() as f64, taps);
    rec.map_channels(rec.kind, |ch| filtfilt(ch, &h))
}

/// Anti-alias (cutoff 0.45 of the new rate) then keep every `factor`-th sample.
pub fn downsample(rec: &Recording, factor: usize) -> Result<Recording> {
    if factor == 0 {
        return Err(Error::InvalidArgument("downsampling factor must be at least 1".into()));
    }
    if factor == 1 {
        return Ok(rec.clone());
    }
    let n_out = rec.n_samples() / factor;
    if n_out == 0 {
        return Err(Error::InvalidArgument(format!(
            "factor {factor} leaves no samples from {}",
            rec.n_samples()
        )));
    }
    let fs_new = rec.fs() as f64 / factor as f64;
    let h = lowpass_taps(0.45 * fs_new, rec.fs() as f64, 64 * factor + 1);
    let mut out = Vec::with_capacity(n_out * rec.n_channels());
    for ch in rec.channels() {
        let y = filtfilt(ch, &h);
        out.extend((0..n_out).map(|i| y[i * factor]));
    }
    rec.with_samples(out, rec.fs() / factor as f32, rec.kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::recording::RecordingKind;

    fn from_channels(fs: f32, chans: Vec<Vec<f64>>) -> Recording {
        let names = Recording::default_channel_names(chans.len());
        Recording::new(names, fs, chans, "t", RecordingKind::Raw).unwrap()
    }

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    fn central_rms(x: &[f64]) -> f64 {
        let q = x.len() / 4;
        let mid = &x[q..x.len() - q];
        (mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt()
    }

    #[test]
    fn car_columns() {
        let r = from_channels(1.0, vec![vec![1.0, 0.0], vec![3.0, 0.0]]);
        let out = car_reference(&r);
        assert_eq!(out.as_channel_major(), &[-1.0, 0.0, 1.0, 0.0]);
        let again = car_reference(&out);
        assert_eq!(again, out);
    }

    #[test]
    fn reflect_indexing() {
        let idx: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
    }

    #[test]
    fn passband_tone_kept() {
        let fs = 128.0;
        let x = sine(10.0, fs, 4096);
        let r = from_channels(fs as f32, vec![x.clone(), x]);
        let y = bandpass_fir(&r, 1.0, 40.0, 513).unwrap();
        let db = 20.0 * (central_rms(y.channel(0)) / (0.5f64).sqrt()).log10();
        assert!(db.abs() < 0.5, "{db} dB");
    }

    #[test]
    fn stopband_tone_and_dc_removed() {
        let fs = 128.0;
        let x = sine(55.0, fs, 4096);
        let r = from_channels(fs as f32, vec![x, vec![1.0; 4096]]);
        let y = bandpass_fir(&r, 1.0, 40.0, 513).unwrap();
        let db = 20.0 * (central_rms(y.channel(0)) / (0.5f64).sqrt()).log10();
        assert!(db < -30.0, "{db} dB");
        assert!(central_rms(y.channel(1)) < 0.01);
    }

    #[test]
    fn band_must_be_valid() {
        let r = from_channels(128.0, vec![vec![0.0; 100], vec![0.0; 100]]);
        assert!(bandpass_fir(&r, 0.0, 40.0, 33).is_err());
        assert!(bandpass_fir(&r, 30.0, 20.0, 33).is_err());
        assert!(bandpass_fir(&r, 1.0, 64.0, 33).is_err());
        assert!(bandpass_fir(&r, 1.0, 40.0, 32).is_err());
    }

    #[test]
    fn short_signals_still_filter() {
        let r = from_channels(128.0, vec![vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 1.0]]);
        let y = bandpass_fir(&r, 1.0, 40.0, 129).unwrap();
        assert_eq!(y.n_samples(), 3);
        assert!(y.as_channel_major().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn downsample_rate_and_length() {
        let fs = 256.0;
        let x = sine(5.0, fs, 2049);
        let r = from_channels(fs as f32, vec![x.clone(), x]);
        assert_eq!(downsample(&r, 1).unwrap(), r);
        let d = downsample(&r, 2).unwrap();
        assert_eq!((d.fs(), d.n_samples()), (128.0, 1024));
        let expect = sine(5.0, 128.0, 1024);
        let db = 20.0 * (central_rms(d.channel(0)) / central_rms(&expect)).log10();
        assert!(db.abs() < 1.0, "{db} dB");
        let q = 256;
        for i in q..1024 - q {
            assert!((d.get(0, i) - expect[i]).abs() < 0.02);
        }
        assert!(downsample(&r, 0).is_err());
        assert!(downsample(&r, 4096).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]
            #[test]
            fn filter_is_linear(
                x in proptest::collection::vec(-100.0f64..100.0, 300),
                y in proptest::collection::vec(-100.0f64..100.0, 300),
                a in -3.0f64..3.0, b in -3.0f64..3.0,
            ) {
                let h = bandpass_taps(1.0, 40.0, 128.0, 65);
                let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
                let lhs = filtfilt(&mix, &h);
                let fx = filtfilt(&x, &h);
                let fy = filtfilt(&y, &h);
                for i in 0..300 {
                    prop_assert!((lhs[i] - (a * fx[i] + b * fy[i])).abs() < 1e-6);
                }
            }

            #[test]
            fn car_is_a_projection(cols in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 4), 2..6)) {
                let r = from_channels(10.0, cols);
                let once = car_reference(&r);
                let twice = car_reference(&once);
                for (a, b) in once.as_channel_major().iter().zip(twice.as_channel_major()) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
                for t in 0..4 {
                    let before: f64 = (0..r.n_channels()).map(|c| r.get(c, t).powi(2)).sum();
                    let after: f64 = (0..r.n_channels()).map(|c| once.get(c, t).powi(2)).sum();
                    let mean: f64 = (0..r.n_channels()).map(|c| once.get(c, t)).sum::<f64>();
                    prop_assert!(after <= before + 1e-9);
                    prop_assert!(mean.abs() < 1e-9);
                }
            }
        }
    }
}
