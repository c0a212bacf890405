use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a recording represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecordingKind {
    Raw = 0,
    Reference = 1,
    Reconstructed = 2,
    CleanTruth = 3,
}

impl RecordingKind {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(RecordingKind::Raw),
            1 => Some(RecordingKind::Reference),
            2 => Some(RecordingKind::Reconstructed),
            3 => Some(RecordingKind::CleanTruth),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Multi-channel EEG in microvolts, stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    channel_names: Vec<String>,
    fs: f32,
    n_samples: usize,
    samples: Vec<f64>,
    pub subject_id: String,
    pub kind: RecordingKind,
}

impl Recording {
    /// Build from per-channel sample vectors.
    pub fn new(
        channel_names: Vec<String>,
        fs: f32,
        channels: Vec<Vec<f64>>,
        subject_id: impl Into<String>,
        kind: RecordingKind,
    ) -> Result<Self> {
        if channels.len() != channel_names.len() {
            return Err(Error::InvalidArgument(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                channels.len()
            )));
        }
        let n = channels.first().map_or(0, Vec::len);
        if let Some((c, ch)) = channels.iter().enumerate().find(|(_, ch)| ch.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "channel {c} has {} samples, expected {n}",
                ch.len()
            )));
        }
        Self::from_channel_major(channel_names, fs, channels.concat(), subject_id, kind)
    }

    pub fn from_channel_major(
        channel_names: Vec<String>,
        fs: f32,
        samples: Vec<f64>,
        subject_id: impl Into<String>,
        kind: RecordingKind,
    ) -> Result<Self> {
        let c = channel_names.len();
        if c < 2 {
            return Err(Error::InvalidArgument(format!("a recording needs at least 2 channels, got {c}")));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidArgument(format!("sampling rate must be positive, got {fs}")));
        }
        if samples.is_empty() || !samples.len().is_multiple_of(c) {
            return Err(Error::InvalidArgument(format!(
                "{} samples do not form a non-empty {c}-channel matrix",
                samples.len()
            )));
        }
        let n_samples = samples.len() / c;
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "recording sample at channel {} ({}), sample {}",
                i / n_samples,
                channel_names[i / n_samples],
                i % n_samples
            )));
        }
        Ok(Recording {
            channel_names,
            fs,
            n_samples,
            samples,
            subject_id: subject_id.into(),
            kind,
        })
    }

    /// Same metadata, new channel-major samples of possibly different length.
    pub fn with_samples(&self, samples: Vec<f64>, fs: f32, kind: RecordingKind) -> Result<Self> {
        Self::from_channel_major(self.channel_names.clone(), fs, samples, self.subject_id.clone(), kind)
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn fs(&self) -> f32 {
        self.fs
    }

    pub fn duration_sec(&self) -> f64 {
        self.n_samples as f64 / self.fs as f64
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.samples[c * self.n_samples..(c + 1) * self.n_samples]
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.n_samples)
    }

    pub fn as_channel_major(&self) -> &[f64] {
        &self.samples
    }

    pub fn get(&self, c: usize, t: usize) -> f64 {
        self.samples[c * self.n_samples + t]
    }

    /// Channel-major copy of samples `[start, end)`.
    pub fn slice_samples(&self, start: usize, end: usize) -> Vec<f64> {
        assert!(start <= end && end <= self.n_samples);
        self.channels().flat_map(|ch| ch[start..end].iter().copied()).collect()
    }

    /// New recording holding samples `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_samples {
            return Err(Error::InvalidArgument(format!(
                "sample range {start}..{end} is empty or exceeds {} samples",
                self.n_samples
            )));
        }
        self.with_samples(self.slice_samples(start, end), self.fs, self.kind)
    }

    /// Apply `f` to every channel, producing a recording of equal length.
    pub fn map_channels(&self, kind: RecordingKind, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut out = Vec::with_capacity(self.samples.len());
        for ch in self.channels() {
            let y = f(ch);
            if y.len() != self.n_samples {
                return Err(Error::InvalidArgument("channel map changed the length".into()));
            }
            out.extend(y);
        }
        self.with_samples(out, self.fs, kind)
    }

    /// True when `other` has the same channel count, rate and length.
    pub fn is_aligned_with(&self, other: &Recording) -> bool {
        self.n_channels() == other.n_channels() && self.fs == other.fs && self.n_samples == other.n_samples
    }

    pub fn expect_aligned(&self, other: &Recording, context: &'static str) -> Result<()> {
        if !self.is_aligned_with(other) {
            return Err(Error::shape(
                context,
                format!("{} channels x {} samples @ {} Hz", self.n_channels(), self.n_samples, self.fs),
                format!("{} channels x {} samples @ {} Hz", other.n_channels(), other.n_samples, other.fs),
            ));
        }
        Ok(())
    }

    /// Generic channel labels `Ch01 .. ChNN`.
    pub fn default_channel_names(c: usize) -> Vec<String> {
        (1..=c).map(|i| format!("Ch{i:02}")).collect()
    }
}
