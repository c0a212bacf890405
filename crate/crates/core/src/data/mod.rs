//! Recordings, file formats, preprocessing, segmentation and synthetic data.

mod io;
mod preprocess;
mod recording;
mod segment;
mod synth;

pub use io::{
    decode_eegr, encode_eegr, load_csv, load_events, load_recording, save_csv, save_events, save_recording,
    subject_from_path, EEGR_MAGIC, EEGR_VERSION,
};
pub use preprocess::{bandpass_fir, bandpass_taps, car_reference, downsample, filtfilt, lowpass_taps};
pub use recording::{Recording, RecordingKind};
pub use segment::{
    extract_epochs, segment_windows, window_len, window_starts, Epoch, EpochSet, EventList, SkippedEpoch, WindowPair,
};
pub use synth::{blink_shape, channel_positions, frontal_weights, lateral_weights, synth_subject, SynthSpec};
