//! Training-window segmentation and event-locked epochs.

use serde::Serialize;

use super::recording::Recording;
use crate::error::{Error, Result};

/// Time-aligned noisy/reference window, each `C x T` channel-major `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPair {
    pub noisy: Vec<f32>,
    pub reference: Vec<f32>,
    pub channels: usize,
    pub len: usize,
    pub subject_id: String,
    pub start_sample: usize,
}

pub fn window_len(fs: f32, window_sec: f32) -> usize {
    (fs as f64 * window_sec as f64).floor() as usize
}

/// Window start positions for a recording of `total` samples.
pub fn window_starts(total: usize, len: usize, stride: usize) -> Vec<usize> {
    if len == 0 || stride == 0 || total < len {
        return Vec::new();
    }
    (0..=(total - len) / stride).map(|i| i * stride).collect()
}

fn cut(rec: &Recording, start: usize, len: usize) -> Vec<f32> {
    rec.channels().flat_map(|ch| ch[start..start + len].iter().map(|v| *v as f32)).collect()
}

pub fn segment_windows(
    noisy: &Recording,
    reference: &Recording,
    window_sec: f32,
    stride_fraction: f32,
) -> Result<Vec<WindowPair>> {
    noisy.expect_aligned(reference, "segment_windows reference")?;
    let len = window_len(noisy.fs(), window_sec);
    let stride = (stride_fraction as f64 * len as f64).floor() as usize;
    if len == 0 || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "window of {window_sec} s with stride fraction {stride_fraction} is empty at {} Hz",
            noisy.fs()
        )));
    }
    Ok(window_starts(noisy.n_samples(), len, stride)
        .into_iter()
        .map(|start| WindowPair {
            noisy: cut(noisy, start, len),
            reference: cut(reference, start, len),
            channels: noisy.n_channels(),
            len,
            subject_id: noisy.subject_id.clone(),
            start_sample: start,
        })
        .collect())
}

/// Event markers with strictly increasing sample timestamps.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventList {
    events: Vec<(usize, i64)>,
}

impl EventList {
    pub fn new(events: Vec<(usize, i64)>) -> Result<Self> {
        if let Some(w) = events.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument(format!(
                "event timestamps must strictly increase ({} then {})",
                w[0].0, w[1].0
            )));
        }
        Ok(EventList { events })
    }

    /// Also checks every timestamp lies inside a recording of `total` samples.
    pub fn validate_within(&self, total: usize) -> Result<()> {
        match self.events.iter().find(|(t, _)| *t >= total) {
            Some((t, _)) => Err(Error::InvalidArgument(format!(
                "event at sample {t} is outside a recording of {total} samples"
            ))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, i64)> + '_ {
        self.events.iter().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Epoch {
    pub label: i64,
    pub event_sample: usize,
    pub start_sample: usize,
    /// `C x len` channel-major.
    pub data: Vec<f64>,
    pub len: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SkippedEpoch {
    pub event_index: usize,
    pub event_sample: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochSet {
    pub epochs: Vec<Epoch>,
    pub skipped: Vec<SkippedEpoch>,
}

/// Cut `[ts + floor(t0 fs), ts + floor(t1 fs))` around each event. Epochs
/// that would leave the recording are skipped and listed in the report.
pub fn extract_epochs(rec: &Recording, events: &EventList, t0_sec: f64, t1_sec: f64) -> Result<EpochSet> {
    if !(t0_sec < t1_sec) {
        return Err(Error::InvalidArgument(format!("epoch interval [{t0_sec}, {t1_sec}) is empty")));
    }
    let fs = rec.fs() as f64;
    let off0 = (t0_sec * fs).floor() as i64;
    let off1 = (t1_sec * fs).floor() as i64;
    let len = (off1 - off0) as usize;
    let total = rec.n_samples() as i64;
    let mut set = EpochSet::default();
    for (i, (ts, label)) in events.iter().enumerate() {
        let (a, b) = (ts as i64 + off0, ts as i64 + off1);
        if a < 0 || b > total {
            set.skipped.push(SkippedEpoch {
                event_index: i,
                event_sample: ts,
                reason: format!("samples {a}..{b} fall outside 0..{total}"),
            });
            continue;
        }
        let a = a as usize;
        set.epochs.push(Epoch {
            label,
            event_sample: ts,
            start_sample: a,
            data: rec.slice_samples(a, a + len),
            len,
        });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::recording::RecordingKind;

    fn ramp(c: usize, t: usize, fs: f32) -> Recording {
        let chans = (0..c).map(|ch| (0..t).map(|i| (ch * 10_000 + i) as f64).collect()).collect();
        Recording::new(Recording::default_channel_names(c), fs, chans, "s01", RecordingKind::Raw).unwrap()
    }

    #[test]
    fn four_second_windows_at_128_hz() {
        assert_eq!(window_len(128.0, 4.0), 512);
        let r = ramp(2, 1280, 128.0);
        let w = segment_windows(&r, &r, 4.0, 0.5).unwrap();
        let starts: Vec<usize> = w.iter().map(|p| p.start_sample).collect();
        assert_eq!(starts, vec![0, 256, 512, 768]);
        assert_eq!(w[1].noisy[0], 256.0);
        assert_eq!(w[1].noisy[512], 10_256.0);
    }

    #[test]
    fn edge_counts() {
        let r = ramp(2, 512, 128.0);
        assert_eq!(segment_windows(&r, &r, 4.0, 0.5).unwrap().len(), 1);
        let r = ramp(2, 511, 128.0);
        assert!(segment_windows(&r, &r, 4.0, 0.5).unwrap().is_empty());
        let a = ramp(2, 600, 128.0);
        let b = ramp(3, 600, 128.0);
        assert!(segment_windows(&a, &b, 4.0, 0.5).is_err());
    }

    #[test]
    fn consecutive_windows_share_half() {
        let r = ramp(2, 3000, 128.0);
        let w = segment_windows(&r, &r, 4.0, 0.5).unwrap();
        for pair in w.windows(2) {
            assert_eq!(pair[0].noisy[256..512], pair[1].noisy[..256]);
        }
    }

    #[test]
    fn epoch_lengths() {
        let r = ramp(2, 2000, 128.0);
        let ev = EventList::new(vec![(100, 1), (1999, 2)]).unwrap();
        let set = extract_epochs(&r, &ev, 0.0, 1.25).unwrap();
        assert_eq!(set.epochs.len(), 1);
        assert_eq!(set.epochs[0].len, 160);
        assert_eq!(set.epochs[0].data[0], 100.0);
        assert_eq!(set.skipped.len(), 1);
        assert_eq!(set.skipped[0].event_sample, 1999);

        let r = ramp(2, 2000, 125.0);
        let ev = EventList::new(vec![(10, 0)]).unwrap();
        let set = extract_epochs(&r, &ev, 1.0, 5.0).unwrap();
        assert_eq!(set.epochs[0].len, 500);
        assert_eq!(set.epochs[0].start_sample, 135);
    }

    #[test]
    fn events_must_increase() {
        assert!(EventList::new(vec![(5, 0), (5, 1)]).is_err());
        let ev = EventList::new(vec![(5, 0), (50, 1)]).unwrap();
        assert!(ev.validate_within(50).is_err());
        assert!(ev.validate_within(51).is_ok());
    }
}
