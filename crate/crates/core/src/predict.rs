//! Prediction, accuracy metrics, and cohort occupancy simulation.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::MarkovModel;
use crate::error::{Error, Result};
use crate::learner::{class_probabilities, hierarchical_predict, HierarchicalChain, ParameterMatrix};
use crate::model::{build_feature, Event, EventSequence, KernelConfig};
use crate::seeding::derive_seed2;

/// A fitted model that can score the next transition of a sequence.
pub trait TransitionModel {
    fn num_states(&self) -> usize;
    fn num_durations(&self) -> usize;
    /// Distribution over destination states given the visible history at `t`.
    fn state_probs(&self, seq: &EventSequence, history_len: usize, t: f64) -> Result<Vec<f64>>;
    /// Distribution over dwell-duration buckets given the visible history at `t`.
    fn duration_probs(&self, seq: &EventSequence, history_len: usize, t: f64) -> Result<Vec<f64>>;

    /// 1-based state prediction; argmax with ties to the smallest index.
    fn predict_state(&self, seq: &EventSequence, history_len: usize, t: f64) -> Result<usize> {
        Ok(argmax(&self.state_probs(seq, history_len, t)?) + 1)
    }

    /// 1-based duration prediction; argmax with ties to the smallest index.
    fn predict_duration(&self, seq: &EventSequence, history_len: usize, t: f64) -> Result<usize> {
        Ok(argmax(&self.duration_probs(seq, history_len, t)?) + 1)
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn visible_history(seq: &EventSequence, history_len: usize) -> Result<&[Event]> {
    seq.events.get(..history_len).ok_or_else(|| {
        Error::invalid(format!(
            "history_len {history_len} out of range for sequence {} with {} events",
            seq.subject_id,
            seq.events.len()
        ))
    })
}

/// The intensity-based model: a coefficient matrix plus its kernel.
#[derive(Debug, Clone)]
pub struct PointProcessModel {
    pub params: ParameterMatrix,
    pub kernel: KernelConfig,
}

impl TransitionModel for PointProcessModel {
    fn num_states(&self) -> usize {
        self.params.num_states()
    }

    fn num_durations(&self) -> usize {
        self.params.num_durations()
    }

    fn state_probs(&self, seq: &EventSequence, history_len: usize, t: f64) -> Result<Vec<f64>> {
        let f = build_feature(seq, history_len, t, &self.kernel)?;
        class_probabilities(self.params.state_head(), &f)
    }

    fn duration_probs(&self, seq: &EventSequence, history_len: usize, t: f64) -> Result<Vec<f64>> {
        let f = build_feature(seq, history_len, t, &self.kernel)?;
        class_probabilities(self.params.duration_head(), &f)
    }
}

/// Two hierarchical chains sharing one kernel.
#[derive(Debug, Clone)]
pub struct HierarchicalModel {
    pub state_chain: HierarchicalChain,
    pub duration_chain: HierarchicalChain,
    pub kernel: KernelConfig,
    pub num_states: usize,
    pub num_durations: usize,
}

impl TransitionModel for HierarchicalModel {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_durations(&self) -> usize {
        self.num_durations
    }

    fn state_probs(&self, seq: &EventSequence, history_len: usize, t: f64) -> Result<Vec<f64>> {
        let f = build_feature(seq, history_len, t, &self.kernel)?;
        self.state_chain.class_distribution(&f, self.num_states)
    }

    fn duration_probs(&self, seq: &EventSequence, history_len: usize, t: f64) -> Result<Vec<f64>> {
        let f = build_feature(seq, history_len, t, &self.kernel)?;
        self.duration_chain.class_distribution(&f, self.num_durations)
    }

    fn predict_state(&self, seq: &EventSequence, history_len: usize, t: f64) -> Result<usize> {
        let f = build_feature(seq, history_len, t, &self.kernel)?;
        hierarchical_predict(&self.state_chain, &f)
    }

    fn predict_duration(&self, seq: &EventSequence, history_len: usize, t: f64) -> Result<usize> {
        let f = build_feature(seq, history_len, t, &self.kernel)?;
        hierarchical_predict(&self.duration_chain, &f)
    }
}

impl TransitionModel for MarkovModel {
    fn num_states(&self) -> usize {
        self.states.num_labels()
    }

    fn num_durations(&self) -> usize {
        self.durations.num_labels()
    }

    fn state_probs(&self, seq: &EventSequence, history_len: usize, _t: f64) -> Result<Vec<f64>> {
        let visible = visible_history(seq, history_len)?;
        match visible.last() {
            Some(event) => Ok(self.states.row(event.state)?.to_vec()),
            None => Ok(self.states.initial().to_vec()),
        }
    }

    fn duration_probs(&self, seq: &EventSequence, history_len: usize, _t: f64) -> Result<Vec<f64>> {
        // Conditioned on the previous duration label; sequences whose visible
        // history carries no labeled duration fall back to the chain's initial
        // distribution.
        let visible = visible_history(seq, history_len)?;
        let last_duration = visible.iter().rev().find_map(|e| e.duration);
        match last_duration {
            Some(d) => Ok(self.durations.row(d)?.to_vec()),
            None => Ok(self.durations.initial().to_vec()),
        }
    }
}

/// Predicts the next transition: independent argmax over states and durations.
pub fn predict_next(
    model: &dyn TransitionModel,
    seq: &EventSequence,
    history_len: usize,
    t: f64,
) -> Result<(usize, usize)> {
    Ok((
        model.predict_state(seq, history_len, t)?,
        model.predict_duration(seq, history_len, t)?,
    ))
}

/// Per-class and overall accuracy. Classes absent from the truths are
/// undefined rather than zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    /// `per_class[k]` is the accuracy of 1-based class `k + 1`, `None` when the
    /// class never occurs in the truths.
    pub per_class: Vec<Option<f64>>,
    /// Micro accuracy: total correct over total.
    pub overall: f64,
    pub total: usize,
}

pub fn accuracy_report(
    predictions: &[usize],
    truths: &[usize],
    num_classes: usize,
) -> Result<AccuracyReport> {
    if predictions.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} predictions against {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::invalid("accuracy needs at least one prediction"));
    }
    let mut totals = vec![0usize; num_classes];
    let mut corrects = vec![0usize; num_classes];
    let mut correct = 0usize;
    for (&p, &y) in predictions.iter().zip(truths) {
        if y == 0 || y > num_classes {
            return Err(Error::invalid(format!(
                "truth label {y} outside catalog of {num_classes}"
            )));
        }
        totals[y - 1] += 1;
        if p == y {
            corrects[y - 1] += 1;
            correct += 1;
        }
    }
    let per_class = totals
        .iter()
        .zip(&corrects)
        .map(|(&t, &c)| if t == 0 { None } else { Some(c as f64 / t as f64) })
        .collect();
    Ok(AccuracyReport {
        per_class,
        overall: correct as f64 / truths.len() as f64,
        total: truths.len(),
    })
}

/// Daily per-state subject counts over a horizon. Day indices are 1-based and
/// relative to each subject's anchor time.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMatrix {
    counts: Array2<f64>,
}

impl OccupancyMatrix {
    pub fn new(counts: Array2<f64>) -> Result<OccupancyMatrix> {
        if counts.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("occupancy counts must be non-negative and finite"));
        }
        Ok(OccupancyMatrix { counts })
    }

    pub fn num_states(&self) -> usize {
        self.counts.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.counts.ncols()
    }

    /// Count for a 1-based state on a 1-based day.
    pub fn get(&self, state: usize, day: usize) -> f64 {
        self.counts[[state - 1, day - 1]]
    }

    /// Total subjects per day, summed over states.
    pub fn daily_totals(&self) -> Vec<f64> {
        (0..self.horizon())
            .map(|d| (0..self.num_states()).map(|c| self.counts[[c, d]]).sum())
            .collect()
    }

    pub fn counts(&self) -> &Array2<f64> {
        &self.counts
    }
}

/// The sequence truncated to events at or before `cutoff`; `None` when no
/// event falls inside.
pub fn prefix_at(seq: &EventSequence, cutoff: f64) -> Option<EventSequence> {
    let events: Vec<Event> = seq.events.iter().filter(|e| e.time <= cutoff).cloned().collect();
    if events.is_empty() {
        return None;
    }
    Some(
        EventSequence::new(
            seq.subject_id.clone(),
            seq.static_dim,
            seq.event_dim,
            seq.static_features.clone(),
            events,
            seq.window_end,
        )
        .expect("a prefix of a valid sequence is valid"),
    )
}

/// Rolls every subject forward `horizon` days from their last event and counts
/// daily unit occupancy, averaged over `rounds` independent rounds.
///
/// Per round and subject: sample a dwell bucket from the duration model (the
/// bucket's ordinal is its day count, so the open-ended last bucket rolls
/// forward as `D` days), hold the current unit for that many days, then sample
/// a destination from the state model evaluated at the transition time with
/// the simulated event appended to the history; simulated events reuse the
/// subject's last observed feature vector. Subjects are conserved: each
/// occupies exactly one unit every day.
pub fn simulate_cohort(
    state_model: &dyn TransitionModel,
    duration_model: &dyn TransitionModel,
    cohort: &[EventSequence],
    horizon: usize,
    rounds: usize,
    seed: u64,
) -> Result<OccupancyMatrix> {
    if cohort.is_empty() {
        return Err(Error::invalid("simulation needs a non-empty cohort"));
    }
    if horizon == 0 || rounds == 0 {
        return Err(Error::invalid("horizon and rounds must be at least 1"));
    }
    let num_states = state_model.num_states();
    let mut counts = Array2::<f64>::zeros((num_states, horizon));
    for round in 0..rounds {
        for (subject, prefix) in cohort.iter().enumerate() {
            if prefix.events.is_empty() {
                return Err(Error::invalid(format!(
                    "subject {} has no events to anchor the simulation",
                    prefix.subject_id
                )));
            }
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed2(seed, round as u64, subject as u64));
            let mut seq = prefix.clone();
            let recent = seq.events.last().unwrap().features.clone();
            let mut unit = seq.events.last().unwrap().state;
            let mut t = seq.events.last().unwrap().time;
            let mut day = 0usize;
            while day < horizon {
                let history = seq.events.len();
                let dp = duration_model.duration_probs(&seq, history, t)?;
                let bucket = sample_categorical(&dp, &mut rng) + 1;
                let dwell = bucket;
                for d in day..(day + dwell).min(horizon) {
                    counts[[unit - 1, d]] += 1.0;
                }
                day += dwell;
                if day >= horizon {
                    break;
                }
                let t_next = t + dwell as f64;
                seq.events.push(Event {
                    time: t_next,
                    state: unit,
                    duration: Some(bucket),
                    features: recent.clone(),
                });
                seq.window_end = seq.window_end.max(t_next);
                let sp = state_model.state_probs(&seq, seq.events.len(), t_next)?;
                let next_unit = sample_categorical(&sp, &mut rng) + 1;
                seq.events.last_mut().unwrap().state = next_unit;
                unit = next_unit;
                t = t_next;
            }
        }
    }
    counts /= rounds as f64;
    OccupancyMatrix::new(counts)
}

fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    probs.len() - 1
}

/// Observed occupancy over the same per-subject day grid the simulator uses:
/// on day `k` a subject occupies the state of its last event at or before
/// `anchor + (k - 1)`.
pub fn observed_occupancy(
    sequences: &[EventSequence],
    anchors: &[f64],
    num_states: usize,
    horizon: usize,
) -> Result<OccupancyMatrix> {
    if sequences.len() != anchors.len() {
        return Err(Error::invalid("one anchor time per sequence is required"));
    }
    if sequences.is_empty() || horizon == 0 {
        return Err(Error::invalid("observed occupancy needs sequences and a horizon"));
    }
    let mut counts = Array2::<f64>::zeros((num_states, horizon));
    for (seq, &anchor) in sequences.iter().zip(anchors) {
        for day in 1..=horizon {
            let at = anchor + (day - 1) as f64;
            let unit = seq
                .events
                .iter()
                .rev()
                .find(|e| e.time <= at)
                .map(|e| e.state)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "subject {} has no event at or before its anchor {anchor}",
                        seq.subject_id
                    ))
                })?;
            if unit > num_states {
                return Err(Error::invalid(format!(
                    "state {unit} outside catalog of {num_states}"
                )));
            }
            counts[[unit - 1, day - 1]] += 1.0;
        }
    }
    OccupancyMatrix::new(counts)
}

/// Relative simulation error per state and overall.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationError {
    /// `per_state[c]` is the mean relative error of 1-based state `c + 1` over
    /// days with positive observed counts.
    pub per_state: Vec<f64>,
    /// Cells skipped per state because the observed count was zero.
    pub skipped_cells: Vec<usize>,
    /// Relative error of the daily totals.
    pub overall: f64,
}

/// `Err_c = (1/H) sum_d |N_cd - S_cd| / N_cd` over days with `N_cd > 0`
/// (zero-count cells are skipped and reported); the overall error applies the
/// same formula to the daily totals.
pub fn relative_sim_error(real: &OccupancyMatrix, sim: &OccupancyMatrix) -> Result<SimulationError> {
    if real.num_states() != sim.num_states() || real.horizon() != sim.horizon() {
        return Err(Error::invalid(format!(
            "occupancy shapes differ: {}x{} vs {}x{}",
            real.num_states(),
            real.horizon(),
            sim.num_states(),
            sim.horizon()
        )));
    }
    let horizon = real.horizon() as f64;
    let mut per_state = Vec::with_capacity(real.num_states());
    let mut skipped_cells = Vec::with_capacity(real.num_states());
    for c in 1..=real.num_states() {
        let mut sum = 0.0;
        let mut skipped = 0usize;
        for d in 1..=real.horizon() {
            let observed = real.get(c, d);
            if observed > 0.0 {
                sum += (observed - sim.get(c, d)).abs() / observed;
            } else {
                skipped += 1;
            }
        }
        per_state.push(sum / horizon);
        skipped_cells.push(skipped);
    }
    let real_totals = real.daily_totals();
    let sim_totals = sim.daily_totals();
    let overall = real_totals
        .iter()
        .zip(&sim_totals)
        .filter(|(&r, _)| r > 0.0)
        .map(|(&r, &s)| (r - s).abs() / r)
        .sum::<f64>()
        / horizon;
    Ok(SimulationError {
        per_state,
        skipped_cells,
        overall,
    })
}
