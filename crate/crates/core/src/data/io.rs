//! Recording and event file formats.
//!
//! EEGR (little-endian):
//!
//! ```text
//! "EEGR" | u16 version=1 | u32 C | f32 fs | u64 T_total | u8 kind
//! C x (u16 name_len | UTF-8 name)
//! T_total frames of C x f32
//! ```
//!
//! Samples are stored as `f32`, so saving rounds each value to single
//! precision; anything loaded from EEGR survives further round trips exactly.
//!
//! CSV: header `t,<ch1>,<ch2>,...`, time in seconds in the first column.
//! Event CSV: header `sample,label`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::recording::{Recording, RecordingKind};
use super::segment::EventList;
use crate::error::{Error, Result};

pub const EEGR_MAGIC: &[u8; 4] = b"EEGR";
pub const EEGR_VERSION: u16 = 1;

pub fn encode_eegr(rec: &Recording) -> Vec<u8> {
    let c = rec.n_channels();
    let t = rec.n_samples();
    let mut out = Vec::with_capacity(32 + 16 * c + 4 * c * t);
    out.extend_from_slice(EEGR_MAGIC);
    out.extend_from_slice(&EEGR_VERSION.to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&rec.fs().to_le_bytes());
    out.extend_from_slice(&(t as u64).to_le_bytes());
    out.push(rec.kind.code());
    for name in rec.channel_names() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    let data = rec.as_channel_major();
    for i in 0..t {
        for ch in 0..c {
            out.extend_from_slice(&(data[ch * t + i] as f32).to_le_bytes());
        }
    }
    out
}

fn fmt_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        offset,
        msg: msg.into(),
    }
}

pub fn decode_eegr(bytes: &[u8], subject_id: &str) -> Result<Recording> {
    let mut pos = 0usize;
    let mut take = |n: usize, what: &str| -> Result<(usize, &[u8])> {
        if bytes.len() - pos < n {
            return Err(fmt_err(pos, format!("truncated while reading {what}")));
        }
        let at = pos;
        pos += n;
        Ok((at, &bytes[at..at + n]))
    };
    let (_, magic) = take(4, "magic")?;
    if magic != EEGR_MAGIC {
        return Err(fmt_err(0, "bad magic, expected \"EEGR\""));
    }
    let version = u16::from_le_bytes(take(2, "version")?.1.try_into().unwrap());
    if version != EEGR_VERSION {
        return Err(fmt_err(4, format!("unsupported version {version}")));
    }
    let (c_at, raw) = take(4, "channel count")?;
    let c = u32::from_le_bytes(raw.try_into().unwrap()) as usize;
    if c < 2 {
        return Err(fmt_err(c_at, format!("need at least 2 channels, header says {c}")));
    }
    let (fs_at, raw) = take(4, "sampling rate")?;
    let fs = f32::from_le_bytes(raw.try_into().unwrap());
    if !(fs.is_finite() && fs > 0.0) {
        return Err(fmt_err(fs_at, format!("invalid sampling rate {fs}")));
    }
    let (t_at, raw) = take(8, "sample count")?;
    let t = u64::from_le_bytes(raw.try_into().unwrap()) as usize;
    if t == 0 {
        return Err(fmt_err(t_at, "recording has no samples"));
    }
    let (k_at, raw) = take(1, "kind")?;
    let kind = RecordingKind::from_code(raw[0]).ok_or_else(|| fmt_err(k_at, format!("unknown kind {}", raw[0])))?;
    let mut names = Vec::with_capacity(c);
    for i in 0..c {
        let len = u16::from_le_bytes(take(2, "channel name length")?.1.try_into().unwrap()) as usize;
        let (at, raw) = take(len, "channel name")?;
        let name = std::str::from_utf8(raw).map_err(|_| fmt_err(at, format!("channel {i} name is not UTF-8")))?;
        names.push(name.to_string());
    }
    let need = c.checked_mul(t).and_then(|n| n.checked_mul(4)).ok_or_else(|| fmt_err(t_at, "sample count overflows"))?;
    let (data_at, payload) = take(need, "sample frames")?;
    if pos != bytes.len() {
        return Err(fmt_err(pos, format!("{} trailing bytes", bytes.len() - pos)));
    }
    let mut samples = vec![0.0f64; c * t];
    for (idx, raw) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(raw.try_into().unwrap());
        let (frame, ch) = (idx / c, idx % c);
        if !v.is_finite() {
            return Err(fmt_err(
                data_at + 4 * idx,
                format!("non-finite sample at frame {frame}, channel {ch} ({})", names[ch]),
            ));
        }
        samples[ch * t + frame] = v as f64;
    }
    Recording::from_channel_major(names, fs, samples, subject_id, kind)
}

/// Subject id derived from a file name: the stem without a trailing
/// `_noisy`, `_clean`, `_reference` or `_recon` tag.
pub fn subject_from_path(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    for suffix in ["_noisy", "_clean", "_reference", "_recon"] {
        if let Some(s) = stem.strip_suffix(suffix) {
            return s.to_string();
        }
    }
    stem.to_string()
}

fn is_csv(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Load EEGR or (by `.csv` extension) CSV.
pub fn load_recording(path: impl AsRef<Path>) -> Result<Recording> {
    let path = path.as_ref();
    if is_csv(path) {
        return load_csv(path, None);
    }
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_eegr(&bytes, &subject_from_path(path))
}

/// Save EEGR or (by `.csv` extension) CSV.
pub fn save_recording(rec: &Recording, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_csv(path) {
        return save_csv(rec, path);
    }
    std::fs::write(path, encode_eegr(rec)).map_err(|e| Error::io(path, e))
}

pub fn save_csv(rec: &Recording, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "t").map_err(io)?;
    for name in rec.channel_names() {
        write!(w, ",{name}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    let fs = rec.fs() as f64;
    for t in 0..rec.n_samples() {
        write!(w, "{}", t as f64 / fs).map_err(io)?;
        for c in 0..rec.n_channels() {
            write!(w, ",{}", rec.get(c, t)).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Load a CSV recording. Without `fs`, the rate is taken from the mean time
/// step and rounded to 1 mHz.
pub fn load_csv(path: &Path, fs: Option<f32>) -> Result<Recording> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let parse_err = |line: usize, col: Option<usize>, msg: String| Error::Parse {
        location: match col {
            Some(c) => format!("{}:{} column {}", path.display(), line, c + 1),
            None => format!("{}:{}", path.display(), line),
        },
        msg,
    };
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(1, None, "missing header row".into())),
    };
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0].parse::<f64>().is_ok() {
        return Err(parse_err(
            1,
            None,
            "header must be `t,<channel>,<channel>,...` with at least two channels".into(),
        ));
    }
    let names: Vec<String> = cols[1..].iter().map(|s| s.to_string()).collect();
    let c = names.len();
    let mut times = Vec::new();
    let mut channels = vec![Vec::new(); c];
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != c + 1 {
            return Err(parse_err(line_no, None, format!("expected {} fields, found {}", c + 1, fields.len())));
        }
        for (j, field) in fields.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line_no, Some(j), format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, Some(j), format!("non-finite value {field}")));
            }
            if j == 0 {
                times.push(v);
            } else {
                channels[j - 1].push(v);
            }
        }
    }
    if times.is_empty() {
        return Err(parse_err(2, None, "no data rows".into()));
    }
    let fs = match fs {
        Some(fs) => fs,
        None => {
            if times.len() < 2 {
                return Err(parse_err(2, None, "cannot infer sampling rate from a single row".into()));
            }
            let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
            if !(dt > 0.0) {
                return Err(parse_err(2, Some(0), "time column is not increasing".into()));
            }
            ((1.0 / dt) * 1000.0).round() as f32 / 1000.0
        }
    };
    Recording::new(names, fs, channels, subject_from_path(path), RecordingKind::Raw)
}

pub fn load_events(path: impl AsRef<Path>) -> Result<EventList> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if i == 0 {
            if line.replace(' ', "") != "sample,label" {
                return Err(Error::Parse {
                    location: format!("{}:1", path.display()),
                    msg: "expected header `sample,label`".into(),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            location: format!("{}:{}", path.display(), i + 1),
            msg: msg.to_string(),
        };
        let (s, l) = line.split_once(',').ok_or_else(|| bad("expected `sample,label`"))?;
        let sample = s.trim().parse::<usize>().map_err(|_| bad("sample is not a non-negative integer"))?;
        let label = l.trim().parse::<i64>().map_err(|_| bad("label is not an integer"))?;
        events.push((sample, label));
    }
    EventList::new(events)
}

pub fn save_events(events: &EventList, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("sample,label\n");
    for (t, l) in events.iter() {
        s.push_str(&format!("{t},{l}\n"));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
