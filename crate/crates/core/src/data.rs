//! Recordings, windowing into segments, and the on-disk dataset format.
//!
//! A dataset is a JSON manifest next to raw signal files:
//!
//! ```json
//! {
//!   "entries": [
//!     {
//!       "subject_id": "s01",
//!       "label": "MDD",
//!       "sampling_rate": 256.0,
//!       "channels": ["Fp1", "Fp2", "..."],
//!       "n_samples": 76800,
//!       "data_file": "s01.bin",
//!       "condition": "eyes_open"
//!     }
//!   ]
//! }
//! ```
//!
//! `label` is `"MDD"` or `"HC"`. `data_file` is resolved relative to the
//! manifest and holds `channels.len() × n_samples` little-endian `f64`
//! values in row-major order (all samples of channel 0 first). `n_samples`
//! may be omitted, in which case it is inferred from the file size.
//! `condition` is optional; a subject may appear once per condition (for
//! example eyes-open and eyes-closed sessions), and its entries are merged
//! by `subject_id` when building cross-validation folds.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{path}: expected {expected} bytes, found {found}")]
    SizeMismatch { path: PathBuf, expected: u64, found: u64 },
    #[error("duplicate manifest entry for subject '{subject_id}'{}", condition.as_ref().map(|c| format!(" condition '{c}'")).unwrap_or_default())]
    DuplicateSubject {
        subject_id: String,
        condition: Option<String>,
    },
    #[error("subject '{0}' has entries with different labels")]
    InconsistentLabel(String),
    #[error("unknown label '{0}' (expected MDD or HC)")]
    UnknownLabel(String),
    #[error("window of {window_s} s at {sampling_rate} Hz is not a whole number of samples")]
    NonIntegralWindow { sampling_rate: f64, window_s: f64 },
    #[error("overlap fraction {0} outside [0, 1)")]
    InvalidOverlap(f64),
    #[error("invalid recording '{subject_id}': {message}")]
    InvalidRecording { subject_id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "HC")]
    Hc,
    #[serde(rename = "MDD")]
    Mdd,
}

impl Label {
    /// Class index; depression is the positive class 1.
    pub fn index(self) -> usize {
        match self {
            Label::Hc => 0,
            Label::Mdd => 1,
        }
    }

    pub fn parse(s: &str) -> Result<Self, DataError> {
        match s {
            "HC" | "hc" => Ok(Label::Hc),
            "MDD" | "mdd" => Ok(Label::Mdd),
            other => Err(DataError::UnknownLabel(other.to_string())),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Hc => "HC",
            Label::Mdd => "MDD",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub label: Label,
    pub sampling_rate: f64,
    pub channel_names: Vec<String>,
    /// `N × total_samples`.
    pub signal: Tensor,
    pub condition: Option<String>,
}

impl Recording {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |message: String| DataError::InvalidRecording {
            subject_id: self.subject_id.clone(),
            message,
        };
        if !(self.sampling_rate > 0.0 && self.sampling_rate.is_finite()) {
            return Err(bad(format!("sampling rate {} must be positive", self.sampling_rate)));
        }
        if self.signal.rank() != 2 || self.signal.shape()[0] != self.channel_names.len() {
            return Err(bad(format!(
                "signal shape {:?} does not match {} channel names",
                self.signal.shape(),
                self.channel_names.len()
            )));
        }
        if !self.signal.is_finite() {
            return Err(bad("signal contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.signal.shape()[1]
    }
}

/// One fixed-length window of a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct EegSegment {
    /// `N × T_s`.
    pub data: Tensor,
    pub label: Label,
    pub subject_id: String,
    /// First sample of the window within its recording.
    pub offset: usize,
}

fn whole_samples(seconds: f64, sampling_rate: f64) -> Option<usize> {
    let n = seconds * sampling_rate;
    let r = n.round();
    ((n - r).abs() < 1e-9 * r.max(1.0) && r >= 1.0).then_some(r as usize)
}

/// Window length and stride in samples.
pub fn window_geometry(sampling_rate: f64, window_s: f64, overlap_frac: f64) -> Result<(usize, usize), DataError> {
    if !(0.0..1.0).contains(&overlap_frac) {
        return Err(DataError::InvalidOverlap(overlap_frac));
    }
    let err = || DataError::NonIntegralWindow {
        sampling_rate,
        window_s,
    };
    let window = whole_samples(window_s, sampling_rate).ok_or_else(err)?;
    let stride = whole_samples(window_s * (1.0 - overlap_frac), sampling_rate).ok_or_else(err)?;
    Ok((window, stride))
}

/// Number of windows: `floor((total − window) / stride) + 1`, or 0 if the window does not fit.
pub fn segment_count(total: usize, window: usize, stride: usize) -> usize {
    if total < window {
        0
    } else {
        (total - window) / stride + 1
    }
}

pub fn segment_recording(rec: &Recording, window_s: f64, overlap_frac: f64) -> Result<Vec<EegSegment>, DataError> {
    rec.validate()?;
    let (window, stride) = window_geometry(rec.sampling_rate, window_s, overlap_frac)?;
    let (n, total) = rec.signal.dims2();
    let count = segment_count(total, window, stride);
    Ok((0..count)
        .map(|k| {
            let offset = k * stride;
            let mut data = Vec::with_capacity(n * window);
            for c in 0..n {
                data.extend_from_slice(&rec.signal.row(c)[offset..offset + window]);
            }
            EegSegment {
                data: Tensor::new(vec![n, window], data).expect("window shape"),
                label: rec.label,
                subject_id: rec.subject_id.clone(),
                offset,
            }
        })
        .collect())
}

/// Segments from all recordings, grouped by subject for cross-validation.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub segments: Vec<EegSegment>,
}

impl Dataset {
    pub fn from_recordings(recordings: &[Recording], window_s: f64, overlap_frac: f64) -> Result<Self, DataError> {
        let mut segments = Vec::new();
        for rec in recordings {
            segments.extend(segment_recording(rec, window_s, overlap_frac)?);
        }
        Ok(Self { segments })
    }

    /// Sorted unique subject ids.
    pub fn subjects(&self) -> Vec<String> {
        self.segments
            .iter()
            .map(|s| s.subject_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn subject_labels(&self) -> BTreeMap<String, Label> {
        self.segments.iter().map(|s| (s.subject_id.clone(), s.label)).collect()
    }

    pub fn segments_of<'a>(&'a self, subjects: &[String]) -> Vec<&'a EegSegment> {
        let wanted: HashSet<&str> = subjects.iter().map(String::as_str).collect();
        self.segments
            .iter()
            .filter(|s| wanted.contains(s.subject_id.as_str()))
            .collect()
    }

    pub fn channels(&self) -> Option<usize> {
        self.segments.first().map(|s| s.data.shape()[0])
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    subject_id: String,
    label: String,
    sampling_rate: f64,
    channels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_samples: Option<u64>,
    data_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    condition: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    entries: Vec<ManifestEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_dataset(manifest_path: &Path) -> Result<Vec<Recording>, DataError> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DataError::Manifest {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut seen = HashSet::new();
    let mut labels: BTreeMap<String, Label> = BTreeMap::new();
    let mut recordings = Vec::with_capacity(manifest.entries.len());
    for entry in manifest.entries {
        let label = Label::parse(&entry.label)?;
        if !seen.insert((entry.subject_id.clone(), entry.condition.clone())) {
            return Err(DataError::DuplicateSubject {
                subject_id: entry.subject_id,
                condition: entry.condition,
            });
        }
        if *labels.entry(entry.subject_id.clone()).or_insert(label) != label {
            return Err(DataError::InconsistentLabel(entry.subject_id));
        }
        if entry.channels.is_empty() {
            return Err(DataError::Manifest {
                path: manifest_path.to_path_buf(),
                message: format!("entry '{}' lists no channels", entry.subject_id),
            });
        }
        let path = base.join(&entry.data_file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let n = entry.channels.len() as u64;
        let found = bytes.len() as u64;
        let n_samples = match entry.n_samples {
            Some(t) => t,
            None => found / (8 * n),
        };
        let expected = 8 * n * n_samples;
        if expected != found || n_samples == 0 {
            return Err(DataError::SizeMismatch { path, expected, found });
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let rec = Recording {
            subject_id: entry.subject_id,
            label,
            sampling_rate: entry.sampling_rate,
            signal: Tensor::new(vec![entry.channels.len(), n_samples as usize], values).expect("size checked"),
            channel_names: entry.channels,
            condition: entry.condition,
        };
        rec.validate()?;
        recordings.push(rec);
    }
    Ok(recordings)
}

/// Writes `manifest.json` and one `.bin` file per recording into `dir`.
pub fn save_dataset(dir: &Path, recordings: &[Recording]) -> Result<PathBuf, DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(recordings.len());
    for rec in recordings {
        rec.validate()?;
        let file = match &rec.condition {
            Some(c) => format!("{}_{}.bin", rec.subject_id, c),
            None => format!("{}.bin", rec.subject_id),
        };
        let path = dir.join(&file);
        let bytes: Vec<u8> = rec.signal.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&path, bytes).map_err(io_err(&path))?;
        entries.push(ManifestEntry {
            subject_id: rec.subject_id.clone(),
            label: rec.label.to_string(),
            sampling_rate: rec.sampling_rate,
            channels: rec.channel_names.clone(),
            n_samples: Some(rec.n_samples() as u64),
            data_file: file,
            condition: rec.condition.clone(),
        });
    }
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&Manifest { entries }).expect("manifest serializes");
    fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;
    Ok(manifest_path)
}
