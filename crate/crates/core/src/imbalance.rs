//! Pre-processing for imbalanced training sets: per-sample weighting and
//! synthetic balanced oversampling.
//!
//! Weighting scales each sample by `1 / ln(1 + n)` where `n` is the size of
//! its joint (state, duration) class. Synthesis draws auxiliary samples for
//! every under-represented class by resampling each raw binary feature
//! dimension independently from the class's empirical frequencies (with
//! add-one smoothing) and re-composing the feature vector at the class's mean
//! elapsed time, so that after augmentation all observed class counts equal
//! the largest one.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{build_feature, Event, EventSequence};
use crate::samples::{RawSample, TrainingSet};
use crate::seeding::derive_seed2;

/// Joint label used for imbalance accounting. Samples with a null duration
/// are keyed by `(state, None)`.
pub type JointLabel = (usize, Option<usize>);

/// Counts per joint class plus the marginal totals.
#[derive(Debug, Clone, Default)]
pub struct ClassCounts {
    joint: BTreeMap<JointLabel, usize>,
}

impl ClassCounts {
    pub fn from_labels<I: IntoIterator<Item = JointLabel>>(labels: I) -> ClassCounts {
        let mut joint = BTreeMap::new();
        for label in labels {
            *joint.entry(label).or_insert(0) += 1;
        }
        ClassCounts { joint }
    }

    pub fn joint_count(&self, label: JointLabel) -> usize {
        self.joint.get(&label).copied().unwrap_or(0)
    }

    pub fn state_total(&self, state: usize) -> usize {
        self.joint
            .iter()
            .filter(|((c, _), _)| *c == state)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn duration_total(&self, duration: Option<usize>) -> usize {
        self.joint
            .iter()
            .filter(|((_, d), _)| *d == duration)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn max_count(&self) -> usize {
        self.joint.values().copied().max().unwrap_or(0)
    }

    pub fn min_count(&self) -> usize {
        self.joint.values().copied().min().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&JointLabel, &usize)> {
        self.joint.iter()
    }

    pub fn len(&self) -> usize {
        self.joint.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joint.is_empty()
    }
}

/// `w_i = 1 / ln(1 + n)` with `n` the training count of the sample's joint class.
pub fn sample_weights(samples: &[RawSample]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot weight an empty sample list"));
    }
    let counts = ClassCounts::from_labels(samples.iter().map(|s| s.labels()));
    Ok(samples
        .iter()
        .map(|s| 1.0 / (1.0 + counts.joint_count(s.labels()) as f64).ln())
        .collect())
}

/// Which label defines a class for balancing purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceMode {
    /// Balance the joint (state, duration) classes; the default.
    Joint,
    /// Balance the marginal state classes, drawing each synthetic sample's
    /// duration from the class's empirical duration distribution.
    MarginalState,
}

struct ClassProfile {
    static_probs: Vec<f64>,
    event_probs: Vec<f64>,
    mean_elapsed: f64,
    durations: Vec<(Option<usize>, usize)>,
}

fn class_profile(members: &[&RawSample], static_dim: usize, event_dim: usize) -> ClassProfile {
    let n = members.len() as f64;
    let mut static_counts = vec![0usize; static_dim];
    let mut event_counts = vec![0usize; event_dim];
    let mut elapsed = 0.0;
    let mut durations: BTreeMap<Option<usize>, usize> = BTreeMap::new();
    for s in members {
        for &i in &s.static_features {
            static_counts[i] += 1;
        }
        for &i in &s.recent_features {
            event_counts[i] += 1;
        }
        elapsed += s.elapsed;
        *durations.entry(s.duration).or_insert(0) += 1;
    }
    // Add-one smoothing keeps tiny classes from freezing dimensions at 0/1.
    let smooth = |k: usize| (k as f64 + 1.0) / (n + 2.0);
    ClassProfile {
        static_probs: static_counts.into_iter().map(smooth).collect(),
        event_probs: event_counts.into_iter().map(smooth).collect(),
        mean_elapsed: elapsed / n,
        durations: durations.into_iter().collect(),
    }
}

fn draw_indices(probs: &[f64], rng: &mut ChaCha8Rng) -> Vec<usize> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| rng.random::<f64>() < p)
        .map(|(i, _)| i)
        .collect()
}

fn compose_synthetic(
    ts: &TrainingSet,
    state: usize,
    duration: Option<usize>,
    static_features: Vec<usize>,
    recent_features: Vec<usize>,
    elapsed: f64,
) -> Result<RawSample> {
    // A single-event pseudo-history at the representative elapsed time gives
    // the event block unit kernel weight and the static block the class's
    // mean time scale under every kernel variant.
    let seq = EventSequence::new(
        "synthetic",
        ts.static_dim,
        ts.event_dim,
        static_features.clone(),
        vec![Event {
            time: elapsed,
            state,
            duration: None,
            features: recent_features.clone(),
        }],
        elapsed,
    )?;
    let feature = build_feature(&seq, 1, elapsed, &ts.kernel)?;
    Ok(RawSample {
        feature,
        static_features,
        recent_features,
        elapsed,
        state,
        duration,
        synthetic: true,
    })
}

/// Oversamples every under-represented class up to the largest class's count.
/// Original samples pass through unchanged and come first in the output;
/// synthetic samples follow in class order. Classes absent from the input are
/// not invented. Deterministic given `seed`.
pub fn synthesize_balanced(ts: &TrainingSet, seed: u64, mode: BalanceMode) -> Result<TrainingSet> {
    if ts.samples.is_empty() {
        return Err(Error::invalid("cannot balance an empty sample list"));
    }
    let mut groups: BTreeMap<JointLabel, Vec<&RawSample>> = BTreeMap::new();
    for s in &ts.samples {
        let key = match mode {
            BalanceMode::Joint => s.labels(),
            BalanceMode::MarginalState => (s.state, None),
        };
        groups.entry(key).or_default().push(s);
    }
    let target = groups.values().map(|g| g.len()).max().unwrap_or(0);
    let mut augmented = ts.samples.clone();
    for (&(state, duration), members) in &groups {
        if members.is_empty() {
            return Err(Error::invalid(format!(
                "class ({state}, {duration:?}) has no samples to resample from"
            )));
        }
        let missing = target - members.len();
        if missing == 0 {
            continue;
        }
        let profile = class_profile(members, ts.static_dim, ts.event_dim);
        let stream = duration.map(|d| d as u64).unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed2(seed, state as u64, stream));
        for _ in 0..missing {
            let static_features = draw_indices(&profile.static_probs, &mut rng);
            let recent_features = draw_indices(&profile.event_probs, &mut rng);
            let duration = match mode {
                BalanceMode::Joint => duration,
                BalanceMode::MarginalState => {
                    let total: usize = profile.durations.iter().map(|(_, n)| n).sum();
                    let mut pick = rng.random_range(0..total);
                    let mut chosen = profile.durations[0].0;
                    for &(d, n) in &profile.durations {
                        if pick < n {
                            chosen = d;
                            break;
                        }
                        pick -= n;
                    }
                    chosen
                }
            };
            augmented.push(compose_synthetic(
                ts,
                state,
                duration,
                static_features,
                recent_features,
                profile.mean_elapsed,
            )?);
        }
    }
    Ok(TrainingSet {
        kernel: ts.kernel,
        static_dim: ts.static_dim,
        event_dim: ts.event_dim,
        samples: augmented,
    })
}

/// Renders an augmented training set back into dataset records: the original
/// sequences unchanged, then one pseudo-sequence per synthetic sample (a
/// single history event at the representative time plus, when the duration is
/// known, the labeled target event). Returns the sequences and their
/// per-record provenance flags.
pub fn augmented_sequences(
    original: &[EventSequence],
    augmented: &TrainingSet,
) -> Result<(Vec<EventSequence>, Vec<bool>)> {
    let mut sequences: Vec<EventSequence> = original.to_vec();
    let mut flags = vec![false; original.len()];
    for (ordinal, sample) in augmented.samples.iter().filter(|s| s.synthetic).enumerate() {
        let mut events = vec![Event {
            time: sample.elapsed,
            state: sample.state,
            duration: None,
            features: sample.recent_features.clone(),
        }];
        let mut window_end = sample.elapsed;
        if let Some(d) = sample.duration {
            // Re-ingesting this record reproduces the synthetic sample: the
            // target event sits one dwell past the history event.
            window_end = sample.elapsed + d as f64;
            events.push(Event {
                time: window_end,
                state: sample.state,
                duration: Some(d),
                features: sample.recent_features.clone(),
            });
        }
        let seq = EventSequence::new(
            format!("syn-{ordinal}"),
            augmented.static_dim,
            augmented.event_dim,
            sample.static_features.clone(),
            events,
            window_end,
        )?;
        sequences.push(seq);
        flags.push(true);
    }
    Ok((sequences, flags))
}
