//! Dataset and catalog files.
//!
//! A dataset is line-delimited JSON, one sequence per line, with fields
//! `subject_id`, `window_end`, `static` (active profile feature indices), and
//! `events` (array of `{time, state, duration, features}`). A sidecar catalog
//! file lists class label names and the feature vocabulary by block
//! (profile/treatment/medication/nursing); feature indices in the dataset
//! refer to positions in those lists (event features index the concatenation
//! treatment ++ medication ++ nursing).

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Event, EventSequence};

/// Class label names and the feature vocabulary. The catalog fixes every
/// dimension of the model: `C`, `D`, the static block length, and the event
/// block length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub states: Vec<String>,
    pub durations: Vec<String>,
    pub profile: Vec<String>,
    pub treatment: Vec<String>,
    pub medication: Vec<String>,
    pub nursing: Vec<String>,
}

impl Catalog {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_durations(&self) -> usize {
        self.durations.len()
    }

    pub fn static_dim(&self) -> usize {
        self.profile.len()
    }

    pub fn event_dim(&self) -> usize {
        self.treatment.len() + self.medication.len() + self.nursing.len()
    }

    pub fn feature_len(&self) -> usize {
        self.static_dim() + self.event_dim()
    }

    /// Stable content hash used to refuse model/dataset mismatches.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("catalog serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Index of a named event feature in the concatenated event block, or
    /// `None` for unknown names (unknown service codes are dropped, not errors).
    pub fn event_feature_index(&self, name: &str) -> Option<usize> {
        if let Some(i) = self.treatment.iter().position(|n| n == name) {
            return Some(i);
        }
        if let Some(i) = self.medication.iter().position(|n| n == name) {
            return Some(self.treatment.len() + i);
        }
        self.nursing
            .iter()
            .position(|n| n == name)
            .map(|i| self.treatment.len() + self.medication.len() + i)
    }

    /// Index of a named profile feature, or `None` for unknown names.
    pub fn profile_feature_index(&self, name: &str) -> Option<usize> {
        self.profile.iter().position(|n| n == name)
    }

    /// Checks a sequence against the catalog: dimensions and label bounds.
    pub fn validate_sequence(&self, seq: &EventSequence) -> Result<()> {
        if seq.static_dim != self.static_dim() || seq.event_dim != self.event_dim() {
            return Err(Error::invalid(format!(
                "sequence {}: dims ({}, {}) do not match catalog ({}, {})",
                seq.subject_id,
                seq.static_dim,
                seq.event_dim,
                self.static_dim(),
                self.event_dim()
            )));
        }
        for (idx, event) in seq.events.iter().enumerate() {
            if event.state > self.num_states() {
                return Err(Error::invalid(format!(
                    "sequence {}: event {idx} state {} outside catalog of {} states",
                    seq.subject_id,
                    event.state,
                    self.num_states()
                )));
            }
            if let Some(d) = event.duration {
                if d > self.num_durations() {
                    return Err(Error::invalid(format!(
                        "sequence {}: event {idx} duration {} outside catalog of {} buckets",
                        seq.subject_id,
                        d,
                        self.num_durations()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Synthetic catalog with generic names, used by the generator.
    pub fn synthetic(num_states: usize, num_durations: usize, static_dim: usize, event_dim: usize) -> Catalog {
        let third = event_dim / 3;
        let treatment = event_dim - 2 * third;
        Catalog {
            states: (1..=num_states).map(|i| format!("S{i}")).collect(),
            durations: (1..=num_durations)
                .map(|i| {
                    if i == num_durations && num_durations > 1 {
                        format!(">{}d", num_durations - 1)
                    } else {
                        format!("{i}d")
                    }
                })
                .collect(),
            profile: (0..static_dim).map(|i| format!("p{i}")).collect(),
            treatment: (0..treatment).map(|i| format!("t{i}")).collect(),
            medication: (0..third).map(|i| format!("m{i}")).collect(),
            nursing: (0..third).map(|i| format!("n{i}")).collect(),
        }
    }
}

/// One dataset line. `synthetic` marks records produced by the balancing
/// preprocessor rather than observed sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SequenceRecord {
    subject_id: String,
    window_end: f64,
    #[serde(rename = "static")]
    static_features: Vec<usize>,
    events: Vec<EventRecord>,
    #[serde(default, skip_serializing_if = "is_false")]
    synthetic: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EventRecord {
    time: f64,
    state: usize,
    duration: Option<usize>,
    features: Vec<usize>,
}

/// A loaded dataset: validated sequences plus per-record provenance flags.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub sequences: Vec<EventSequence>,
    pub synthetic_flags: Vec<bool>,
}

pub fn write_catalog(path: &Path, catalog: &Catalog) -> Result<()> {
    let json = serde_json::to_string_pretty(catalog).expect("catalog serializes");
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_catalog(path: &Path) -> Result<Catalog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes sequences as line-delimited JSON. `synthetic_flags`, when given,
/// must be parallel to `sequences`.
pub fn write_dataset(
    path: &Path,
    sequences: &[EventSequence],
    synthetic_flags: Option<&[bool]>,
) -> Result<()> {
    if let Some(flags) = synthetic_flags {
        if flags.len() != sequences.len() {
            return Err(Error::invalid("provenance flags must match the sequence count"));
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (i, seq) in sequences.iter().enumerate() {
        let record = SequenceRecord {
            subject_id: seq.subject_id.clone(),
            window_end: seq.window_end,
            static_features: seq.static_features.clone(),
            events: seq
                .events
                .iter()
                .map(|e| EventRecord {
                    time: e.time,
                    state: e.state,
                    duration: e.duration,
                    features: e.features.clone(),
                })
                .collect(),
            synthetic: synthetic_flags.map(|f| f[i]).unwrap_or(false),
        };
        let line = serde_json::to_string(&record).expect("record serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads and validates a dataset against its catalog.
pub fn read_dataset(path: &Path, catalog: &Catalog) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut sequences = Vec::new();
    let mut synthetic_flags = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SequenceRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", line_no + 1)))?;
        let events = record
            .events
            .into_iter()
            .map(|e| Event {
                time: e.time,
                state: e.state,
                duration: e.duration,
                features: e.features,
            })
            .collect();
        let seq = EventSequence::new(
            record.subject_id,
            catalog.static_dim(),
            catalog.event_dim(),
            record.static_features,
            events,
            record.window_end,
        )?;
        catalog.validate_sequence(&seq)?;
        sequences.push(seq);
        synthetic_flags.push(record.synthetic);
    }
    Ok(Dataset {
        sequences,
        synthetic_flags,
    })
}

/// Content hash of an arbitrary file, hex-encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Reads a line-delimited dataset without a catalog, inferring nothing:
/// dimensions must be supplied. Used by tests and tooling.
pub fn sibling_catalog_path(data_path: &Path) -> std::path::PathBuf {
    let stem = data_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    data_path.with_file_name(format!("{stem}.catalog.json"))
}
