//! BioSemi 24-bit export of finalized signal logs.
//!
//! Layout: a 256-byte main header, 256 bytes per channel of signal header,
//! then data records of one second each. Within a record samples are
//! channel-sequential, 3 bytes little-endian two's complement per sample.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::signal_log::{self, LogReader, LogState};
use super::PersistError;
use crate::domain::{EntityId, Timestamp};

pub const DIGITAL_MIN: i32 = -8_388_608;
pub const DIGITAL_MAX: i32 = 8_388_607;
const FIELD: usize = 8;

#[derive(Debug, Clone)]
pub struct BdfOptions {
    pub pad_last_record: bool,
}

impl Default for BdfOptions {
    fn default() -> Self {
        BdfOptions { pad_last_record: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BdfSummary {
    pub records: u64,
    pub channels: u16,
    pub samples_per_record: u32,
    pub file_bytes: u64,
}

pub fn bdf_dir(data_dir: &Path) -> PathBuf {
    data_dir.join("bdf")
}

/// Expected file size for the given shape.
pub fn file_size(channels: u64, records: u64, samples_per_record: u64) -> u64 {
    256 * (channels + 1) + records * channels * samples_per_record * 3
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub physical_min: f64,
    pub physical_max: f64,
}

impl Calibration {
    /// Observed extrema padded by 1% of the range, widened outward so that the
    /// 8-character header text encloses them.
    pub fn from_extrema(min: f64, max: f64) -> Calibration {
        let (lo, hi) = if !(min.is_finite() && max.is_finite()) || min > max {
            (0.0, 1.0)
        } else if min == max {
            (min, min + 1.0)
        } else {
            let pad = (max - min) * 0.01;
            (min - pad, max + pad)
        };
        let physical_min = format_field(lo, false).1;
        let mut physical_max = format_field(hi, true).1;
        if physical_max <= physical_min {
            physical_max = format_field(physical_min + (hi - lo).abs().max(1e-6), true).1;
        }
        Calibration {
            physical_min,
            physical_max,
        }
    }

    fn scale(&self) -> f64 {
        (DIGITAL_MAX - DIGITAL_MIN) as f64 / (self.physical_max - self.physical_min)
    }

    pub fn quantize(&self, x: f64) -> i32 {
        let d = ((x - self.physical_min) * self.scale()).round() + DIGITAL_MIN as f64;
        d.clamp(DIGITAL_MIN as f64, DIGITAL_MAX as f64) as i32
    }

    pub fn dequantize(&self, d: i32) -> f64 {
        self.physical_min + (d - DIGITAL_MIN) as f64 / self.scale()
    }
}

/// Shortest-loss text for `x` in 8 characters, rounded toward -inf (`up` false)
/// or +inf (`up` true). Returns the text and the value it denotes.
fn format_field(x: f64, up: bool) -> (String, f64) {
    for decimals in (0..=7).rev() {
        let m = 10f64.powi(decimals);
        let mut scaled = x * m;
        if (scaled - scaled.round()).abs() < 1e-6 {
            scaled = scaled.round();
        }
        let r = if up { scaled.ceil() } else { scaled.floor() };
        let v = r / m;
        let text = format!("{:.*}", decimals as usize, v);
        if text.len() <= FIELD {
            let parsed: f64 = text.parse().unwrap();
            return (text, parsed);
        }
    }
    let v = if up { 99_999_999.0 } else { -9_999_999.0 };
    (format!("{v}"), v)
}

fn field(out: &mut Vec<u8>, text: &str, width: usize) {
    let mut b: Vec<u8> = text.bytes().take(width).collect();
    b.resize(width, b' ');
    out.extend_from_slice(&b);
}

pub struct HeaderInfo<'a> {
    pub patient: &'a str,
    pub recording: &'a str,
    pub start: Timestamp,
    pub records: u64,
    pub samples_per_record: u32,
    pub calibrations: &'a [Calibration],
}

pub fn header_bytes(h: &HeaderInfo) -> Vec<u8> {
    let n = h.calibrations.len();
    let mut out = Vec::with_capacity(256 * (n + 1));
    out.push(0xFF);
    out.extend_from_slice(b"BIOSEMI");
    field(&mut out, h.patient, 80);
    field(&mut out, h.recording, 80);
    let start = chrono::DateTime::from_timestamp_micros(h.start.micros()).unwrap_or_default();
    field(&mut out, &start.format("%d.%m.%y").to_string(), 8);
    field(&mut out, &start.format("%H.%M.%S").to_string(), 8);
    field(&mut out, &(256 * (n + 1)).to_string(), 8);
    field(&mut out, "24BIT", 44);
    field(&mut out, &h.records.to_string(), 8);
    field(&mut out, "1", 8);
    field(&mut out, &n.to_string(), 4);
    let per = |out: &mut Vec<u8>, width: usize, f: &dyn Fn(usize) -> String| {
        for i in 0..n {
            field(out, &f(i), width);
        }
    };
    per(&mut out, 16, &|i| format!("ch{}", i + 1));
    per(&mut out, 80, &|_| String::new());
    per(&mut out, 8, &|_| "uV".to_string());
    per(&mut out, 8, &|i| format_field(h.calibrations[i].physical_min, false).0);
    per(&mut out, 8, &|i| format_field(h.calibrations[i].physical_max, true).0);
    per(&mut out, 8, &|_| DIGITAL_MIN.to_string());
    per(&mut out, 8, &|_| DIGITAL_MAX.to_string());
    per(&mut out, 80, &|_| String::new());
    per(&mut out, 8, &|_| h.samples_per_record.to_string());
    per(&mut out, 32, &|_| String::new());
    out
}

fn put_i24(out: &mut Vec<u8>, d: i32) {
    out.extend_from_slice(&d.to_le_bytes()[..3]);
}

/// Writes frame-major samples read lazily from `frames` into `out`.
/// `calibrations` must have been computed over the same samples.
fn write_records<W: Write>(
    out: &mut W,
    channels: usize,
    samples_per_record: usize,
    records: u64,
    calibrations: &[Calibration],
    mut next_frames: impl FnMut(&mut Vec<f64>) -> io::Result<bool>,
) -> io::Result<()> {
    let mut buf: Vec<f64> = Vec::new();
    let mut pos = 0;
    let mut record = Vec::with_capacity(channels * samples_per_record * 3);
    let mut block = vec![0i32; channels * samples_per_record];
    for _ in 0..records {
        let mut filled = 0;
        while filled < samples_per_record {
            if pos * channels >= buf.len() {
                buf.clear();
                pos = 0;
                if !next_frames(&mut buf)? {
                    break;
                }
                continue;
            }
            for c in 0..channels {
                block[c * samples_per_record + filled] = calibrations[c].quantize(buf[pos * channels + c]);
            }
            pos += 1;
            filled += 1;
        }
        for c in 0..channels {
            for s in filled..samples_per_record {
                block[c * samples_per_record + s] = 0;
            }
        }
        record.clear();
        for &d in &block {
            put_i24(&mut record, d);
        }
        out.write_all(&record)?;
    }
    Ok(())
}

/// Exports a finalized stream to `out_path`.
pub fn export_stream(
    data_dir: &Path,
    stream_id: EntityId,
    out_path: &Path,
    opts: &BdfOptions,
) -> Result<BdfSummary, PersistError> {
    let info = signal_log::stream_info(data_dir, &stream_id)?;
    if info.state != LogState::Finalized {
        return Err(PersistError::StreamNotFinalized(stream_id));
    }
    let spr = info.sampling_rate_hz.round();
    if !(spr >= 1.0 && spr <= u32::MAX as f64) {
        return Err(PersistError::UnknownSamplingRate(stream_id));
    }
    let spr = spr as u64;
    let channels = info.channel_count.unwrap_or(0) as usize;
    let path = signal_log::log_path(data_dir, &stream_id);

    let mut lo = vec![f64::INFINITY; channels];
    let mut hi = vec![f64::NEG_INFINITY; channels];
    let mut reader = LogReader::open(&path)?;
    while let Some((_, samples)) = reader.next_chunk()? {
        for frame in samples.chunks_exact(channels.max(1)) {
            for (c, &x) in frame.iter().enumerate() {
                lo[c] = lo[c].min(x);
                hi[c] = hi[c].max(x);
            }
        }
    }
    let calibrations: Vec<Calibration> = lo
        .iter()
        .zip(&hi)
        .map(|(&a, &b)| Calibration::from_extrema(a, b))
        .collect();
    let records = if opts.pad_last_record {
        info.frames.div_ceil(spr)
    } else {
        info.frames / spr
    };

    if let Some(parent) = out_path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = out_path.with_extension("bdf.tmp");
    let mut out = BufWriter::with_capacity(1 << 20, File::create(&tmp)?);
    let id = stream_id.to_string();
    out.write_all(&header_bytes(&HeaderInfo {
        patient: &id,
        recording: &id,
        start: info.created_at,
        records,
        samples_per_record: spr as u32,
        calibrations: &calibrations,
    }))?;
    let mut reader = LogReader::open(&path)?;
    write_records(&mut out, channels, spr as usize, records, &calibrations, |buf| {
        Ok(match reader.next_chunk()? {
            Some((_, samples)) => {
                *buf = samples;
                true
            }
            None => false,
        })
    })?;
    let file = out.into_inner().map_err(|e| e.into_error())?;
    file.sync_all()?;
    fs::rename(&tmp, out_path)?;
    let summary = BdfSummary {
        records,
        channels: channels as u16,
        samples_per_record: spr as u32,
        file_bytes: fs::metadata(out_path)?.len(),
    };
    tracing::info!(stream = %stream_id, records, file_bytes = summary.file_bytes, "bdf exported");
    Ok(summary)
}
