//! Domain types for transition-event sequences and construction of the
//! time-dependent feature vector.
//!
//! A subject's record is an [`EventSequence`]: a static binary profile plus an
//! ordered list of transition events, each carrying a destination state, a
//! discretized dwell duration, and the binary service features observed while
//! in that state. At any evaluation time `t` the model consumes a composed
//! [`FeatureVector`] with two blocks: the static profile scaled by a
//! variant-specific time function `g(t)`, and the kernel-weighted sum of the
//! visible events' feature vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel family selecting the `g`/`h` time functions of the intensity model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelVariant {
    /// Mutually-correcting: `g(t) = t - t_last`, `h(t, t') = exp(-(t-t')^2 / sigma^2)`.
    Mcp,
    /// Self-correcting: `g(t) = t`, `h = 1`.
    Scp,
    /// Modulated Poisson: `g = 1`, `h = 1`.
    Mpp,
    /// History-free regression: `g = 1`, `h` picks out the most recent event only.
    Lr,
}

impl KernelVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelVariant::Mcp => "mcp",
            KernelVariant::Scp => "scp",
            KernelVariant::Mpp => "mpp",
            KernelVariant::Lr => "lr",
        }
    }
}

impl std::str::FromStr for KernelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcp" => Ok(KernelVariant::Mcp),
            "scp" => Ok(KernelVariant::Scp),
            "mpp" => Ok(KernelVariant::Mpp),
            "lr" => Ok(KernelVariant::Lr),
            other => Err(Error::invalid(format!(
                "unknown kernel variant '{other}' (expected mcp, scp, mpp, or lr)"
            ))),
        }
    }
}

/// Kernel variant plus the Gaussian bandwidth used by the MCP variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub variant: KernelVariant,
    /// Bandwidth in days. Only the MCP variant reads it.
    pub sigma: f64,
}

impl KernelConfig {
    pub fn new(variant: KernelVariant, sigma: f64) -> Result<Self> {
        let config = KernelConfig { variant, sigma };
        config.validate()?;
        Ok(config)
    }

    pub fn mcp(sigma: f64) -> Result<Self> {
        Self::new(KernelVariant::Mcp, sigma)
    }

    pub fn scp() -> Self {
        KernelConfig {
            variant: KernelVariant::Scp,
            sigma: 1.0,
        }
    }

    pub fn mpp() -> Self {
        KernelConfig {
            variant: KernelVariant::Mpp,
            sigma: 1.0,
        }
    }

    pub fn lr() -> Self {
        KernelConfig {
            variant: KernelVariant::Lr,
            sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant == KernelVariant::Mcp && !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "mcp kernel requires sigma > 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// One transition event: the subject entered `state` at `time`, after dwelling
/// `duration` bucketed days in the previous state. `features` lists the indices
/// of the binary service features that were on for this stay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Days since the sequence origin.
    pub time: f64,
    /// Destination state label, 1-based.
    pub state: usize,
    /// Dwell-time bucket, 1-based; `None` only for the first event of a sequence.
    pub duration: Option<usize>,
    /// Sorted indices of the active binary event features.
    pub features: Vec<usize>,
}

/// One subject's ordered transition record with its static profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    pub subject_id: String,
    /// Length of the static (profile) feature block.
    pub static_dim: usize,
    /// Length of each event's feature block.
    pub event_dim: usize,
    /// Sorted indices of the active static features.
    pub static_features: Vec<usize>,
    pub events: Vec<Event>,
    /// End of the observation window, days.
    pub window_end: f64,
}

impl EventSequence {
    /// Builds a sequence and checks the structural invariants: strictly
    /// increasing event times inside `(0, window_end]`, feature indices within
    /// the declared dimensions, and the null duration exactly on the first event.
    /// Label upper bounds are checked against a catalog at dataset level.
    pub fn new(
        subject_id: impl Into<String>,
        static_dim: usize,
        event_dim: usize,
        mut static_features: Vec<usize>,
        events: Vec<Event>,
        window_end: f64,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if !(window_end.is_finite() && window_end > 0.0) {
            return Err(Error::invalid(format!(
                "sequence {subject_id}: window_end must be positive and finite, got {window_end}"
            )));
        }
        static_features.sort_unstable();
        static_features.dedup();
        if let Some(&bad) = static_features.iter().find(|&&i| i >= static_dim) {
            return Err(Error::invalid(format!(
                "sequence {subject_id}: static feature index {bad} out of range (dim {static_dim})"
            )));
        }
        let mut prev = 0.0;
        let mut events = events;
        for (idx, event) in events.iter_mut().enumerate() {
            if !(event.time.is_finite() && event.time > prev) {
                return Err(Error::invalid(format!(
                    "sequence {subject_id}: event {idx} time {} not strictly after {prev}",
                    event.time
                )));
            }
            if event.time > window_end {
                return Err(Error::invalid(format!(
                    "sequence {subject_id}: event {idx} time {} beyond window_end {window_end}",
                    event.time
                )));
            }
            prev = event.time;
            if event.state == 0 {
                return Err(Error::invalid(format!(
                    "sequence {subject_id}: event {idx} state label must be 1-based"
                )));
            }
            match (idx, event.duration) {
                (0, Some(_)) => {
                    return Err(Error::invalid(format!(
                        "sequence {subject_id}: first event must carry the null duration marker"
                    )))
                }
                (_, Some(0)) => {
                    return Err(Error::invalid(format!(
                        "sequence {subject_id}: event {idx} duration label must be 1-based"
                    )))
                }
                (i, None) if i > 0 => {
                    return Err(Error::invalid(format!(
                        "sequence {subject_id}: event {idx} missing duration label (null is only valid on the first event)"
                    )))
                }
                _ => {}
            }
            event.features.sort_unstable();
            event.features.dedup();
            if let Some(&bad) = event.features.iter().find(|&&i| i >= event_dim) {
                return Err(Error::invalid(format!(
                    "sequence {subject_id}: event {idx} feature index {bad} out of range (dim {event_dim})"
                )));
            }
        }
        Ok(EventSequence {
            subject_id,
            static_dim,
            event_dim,
            static_features,
            events,
            window_end,
        })
    }

    /// Total composed feature length: static block plus event block.
    pub fn feature_len(&self) -> usize {
        self.static_dim + self.event_dim
    }

    /// Time of the most recent event strictly before `t` among the first
    /// `history_len` events; 0 when there is none.
    pub fn last_event_before(&self, history_len: usize, t: f64) -> f64 {
        self.events[..history_len]
            .iter()
            .rev()
            .find(|e| e.time < t)
            .map(|e| e.time)
            .unwrap_or(0.0)
    }
}

/// Dense composed feature vector of length `static_dim + event_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "feature vector contains non-finite entry {bad}"
            )));
        }
        Ok(FeatureVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// History weight `h(t, t_event)` of an event at `t_event` when evaluating at
/// `t`. `t_latest` is the time of the most recent event in the visible
/// history; only the LR variant reads it (its `h` is an indicator selecting
/// that event).
pub fn kernel_weight(t: f64, t_event: f64, t_latest: f64, config: &KernelConfig) -> Result<f64> {
    config.validate()?;
    if t < t_event {
        return Err(Error::invalid(format!(
            "kernel weight requires t >= t_event, got t = {t}, t_event = {t_event}"
        )));
    }
    Ok(match config.variant {
        KernelVariant::Mcp => {
            let lag = t - t_event;
            (-(lag * lag) / (config.sigma * config.sigma)).exp()
        }
        KernelVariant::Scp | KernelVariant::Mpp => 1.0,
        KernelVariant::Lr => {
            if t_event == t_latest {
                1.0
            } else {
                0.0
            }
        }
    })
}

/// Static-block time scale `g(t)`. `t_last` is the time of the most recent
/// event strictly before `t`, or 0 when the visible history is empty.
pub fn time_scale(t: f64, t_last: f64, config: &KernelConfig) -> Result<f64> {
    config.validate()?;
    if t < t_last {
        return Err(Error::invalid(format!(
            "time scale requires t >= t_last, got t = {t}, t_last = {t_last}"
        )));
    }
    Ok(match config.variant {
        KernelVariant::Mcp => t - t_last,
        KernelVariant::Scp => t,
        KernelVariant::Mpp | KernelVariant::Lr => 1.0,
    })
}

/// Composes the feature vector at time `t` with the first `history_len` events
/// visible: `[static_features * g(t) ; sum_i h(t, t_i) * f_i]`.
pub fn build_feature(
    seq: &EventSequence,
    history_len: usize,
    t: f64,
    config: &KernelConfig,
) -> Result<FeatureVector> {
    config.validate()?;
    if history_len > seq.events.len() {
        return Err(Error::invalid(format!(
            "history_len {history_len} out of range for sequence {} with {} events",
            seq.subject_id,
            seq.events.len()
        )));
    }
    let floor = if history_len == 0 {
        0.0
    } else {
        seq.events[history_len - 1].time
    };
    if t < floor {
        return Err(Error::invalid(format!(
            "evaluation time {t} precedes the last visible event at {floor}"
        )));
    }

    let mut values = vec![0.0; seq.feature_len()];
    let t_last = seq.last_event_before(history_len, t);
    let scale = time_scale(t, t_last, config)?;
    for &idx in &seq.static_features {
        values[idx] = scale;
    }

    if history_len > 0 {
        let t_latest = seq.events[history_len - 1].time;
        for event in &seq.events[..history_len] {
            let weight = kernel_weight(t, event.time, t_latest, config)?;
            if weight == 0.0 {
                continue;
            }
            for &idx in &event.features {
                values[seq.static_dim + idx] += weight;
            }
        }
    }
    FeatureVector::new(values)
}
