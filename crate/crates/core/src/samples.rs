//! Extraction of training samples from event sequences.
//!
//! Each event with a predecessor yields one sample: the feature vector is
//! composed at the predecessor's time (with the predecessor included in the
//! visible history) and the labels are the event's destination state and
//! dwell-duration bucket. The first event of a sequence is never a prediction
//! target. Samples keep their raw ingredients (static bits, the most recent
//! event's bits, and the static-block time scale) so the balancing
//! preprocessor can resample in the raw binary space.

use crate::error::{Error, Result};
use crate::learner::TrainSample;
use crate::model::{build_feature, time_scale, EventSequence, FeatureVector, KernelConfig};

/// One training point together with the raw ingredients it was composed from.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    /// Composed feature at the evaluation time.
    pub feature: FeatureVector,
    /// Active static feature indices.
    pub static_features: Vec<usize>,
    /// Active feature indices of the most recent event at the evaluation time.
    pub recent_features: Vec<usize>,
    /// Static-block time scale at the evaluation time.
    pub elapsed: f64,
    /// 1-based state label of the predicted event.
    pub state: usize,
    /// 1-based duration label of the predicted event.
    pub duration: Option<usize>,
    /// True for records produced by the balancing preprocessor.
    pub synthetic: bool,
}

impl RawSample {
    pub fn labels(&self) -> (usize, Option<usize>) {
        (self.state, self.duration)
    }

    pub fn to_train(&self, weight: f64) -> TrainSample {
        TrainSample::new(self.feature.clone(), self.state, self.duration).with_weight(weight)
    }
}

/// Samples plus the context needed to compose more of them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub kernel: KernelConfig,
    pub static_dim: usize,
    pub event_dim: usize,
    pub samples: Vec<RawSample>,
}

impl TrainingSet {
    /// Converts to solver inputs. `weights`, when given, must be parallel to
    /// the samples; all weights default to 1.
    pub fn to_train_samples(&self, weights: Option<&[f64]>) -> Result<Vec<TrainSample>> {
        if let Some(w) = weights {
            if w.len() != self.samples.len() {
                return Err(Error::invalid(format!(
                    "{} weights for {} samples",
                    w.len(),
                    self.samples.len()
                )));
            }
        }
        Ok(self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| s.to_train(weights.map(|w| w[i]).unwrap_or(1.0)))
            .collect())
    }
}

/// Builds the training set for a kernel configuration. Every sequence must
/// share the same feature dimensions.
pub fn extract_samples(sequences: &[EventSequence], kernel: &KernelConfig) -> Result<TrainingSet> {
    kernel.validate()?;
    let (static_dim, event_dim) = match sequences.first() {
        Some(seq) => (seq.static_dim, seq.event_dim),
        None => return Err(Error::invalid("cannot extract samples from an empty dataset")),
    };
    let mut samples = Vec::new();
    for seq in sequences {
        if seq.static_dim != static_dim || seq.event_dim != event_dim {
            return Err(Error::invalid(format!(
                "sequence {} has dims ({}, {}), expected ({static_dim}, {event_dim})",
                seq.subject_id, seq.static_dim, seq.event_dim
            )));
        }
        for i in 1..seq.events.len() {
            let t = seq.events[i - 1].time;
            let feature = build_feature(seq, i, t, kernel)?;
            let elapsed = time_scale(t, seq.last_event_before(i, t), kernel)?;
            samples.push(RawSample {
                feature,
                static_features: seq.static_features.clone(),
                recent_features: seq.events[i - 1].features.clone(),
                elapsed,
                state: seq.events[i].state,
                duration: seq.events[i].duration,
                synthetic: false,
            });
        }
    }
    Ok(TrainingSet {
        kernel: *kernel,
        static_dim,
        event_dim,
        samples,
    })
}

/// Mean dwell time in days over all labeled durations, the default bandwidth
/// for the MCP kernel. Bucket `d` counts as `d` days (the open-ended last
/// bucket as its ordinal).
pub fn mean_duration_days(sequences: &[EventSequence]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for seq in sequences {
        for event in &seq.events {
            if let Some(d) = event.duration {
                sum += d as f64;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::invalid(
            "cannot compute the mean duration of a dataset without labeled durations",
        ));
    }
    Ok(sum / count as f64)
}
