//! First-order Markov-chain baselines over state labels and duration buckets.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EventSequence;

/// Row-stochastic transition matrix over a label catalog plus the initial
/// label distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    matrix: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

impl TransitionTable {
    pub fn new(matrix: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<TransitionTable> {
        let k = matrix.len();
        if k == 0 {
            return Err(Error::invalid("transition table needs at least one label"));
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != k {
                return Err(Error::invalid(format!("row {i} has {} entries, expected {k}", row.len())));
            }
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::invalid(format!("row {i} has negative or non-finite entries")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("row {i} sums to {sum}, expected 1")));
            }
        }
        if initial.len() != k {
            return Err(Error::invalid("initial distribution length must match the catalog"));
        }
        Ok(TransitionTable { matrix, initial })
    }

    pub fn num_labels(&self) -> usize {
        self.matrix.len()
    }

    /// Transition row for a 1-based label.
    pub fn row(&self, label: usize) -> Result<&[f64]> {
        if label == 0 || label > self.matrix.len() {
            return Err(Error::invalid(format!(
                "label {label} outside catalog of {}",
                self.matrix.len()
            )));
        }
        Ok(&self.matrix[label - 1])
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }
}

/// Estimates a transition table by counting consecutive label pairs.
/// Rows with no outgoing observations fall back to the uniform distribution;
/// the initial distribution counts first labels.
pub fn mc_fit<I>(label_sequences: I, num_labels: usize) -> Result<TransitionTable>
where
    I: IntoIterator<Item = Vec<usize>>,
{
    if num_labels == 0 {
        return Err(Error::invalid("markov fit needs a non-empty label catalog"));
    }
    let mut counts = Array2::<f64>::zeros((num_labels, num_labels));
    let mut initial = vec![0.0; num_labels];
    let mut transitions = 0usize;
    let mut starts = 0usize;
    for labels in label_sequences {
        for (pos, &label) in labels.iter().enumerate() {
            if label == 0 || label > num_labels {
                return Err(Error::invalid(format!(
                    "label {label} outside catalog of {num_labels}"
                )));
            }
            if pos == 0 {
                initial[label - 1] += 1.0;
                starts += 1;
            }
            if pos + 1 < labels.len() {
                let next = labels[pos + 1];
                if next == 0 || next > num_labels {
                    return Err(Error::invalid(format!(
                        "label {next} outside catalog of {num_labels}"
                    )));
                }
                counts[[label - 1, next - 1]] += 1.0;
                transitions += 1;
            }
        }
    }
    if transitions == 0 {
        return Err(Error::invalid("markov fit needs at least one observed transition"));
    }
    let mut matrix = Vec::with_capacity(num_labels);
    for i in 0..num_labels {
        let total: f64 = (0..num_labels).map(|j| counts[[i, j]]).sum();
        let row: Vec<f64> = if total == 0.0 {
            vec![1.0 / num_labels as f64; num_labels]
        } else {
            (0..num_labels).map(|j| counts[[i, j]] / total).collect()
        };
        matrix.push(row);
    }
    if starts > 0 {
        initial.iter_mut().for_each(|p| *p /= starts as f64);
    }
    TransitionTable::new(matrix, initial)
}

/// Argmax of the label's transition row, ties to the smallest index. Returns
/// a 1-based label.
pub fn mc_predict(table: &TransitionTable, current_label: usize) -> Result<usize> {
    let row = table.row(current_label)?;
    let mut best = 0usize;
    for (j, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = j;
        }
    }
    Ok(best + 1)
}

/// State labels of a sequence in order.
pub fn state_labels(seq: &EventSequence) -> Vec<usize> {
    seq.events.iter().map(|e| e.state).collect()
}

/// Duration labels of a sequence in order, skipping the null first entry.
pub fn duration_labels(seq: &EventSequence) -> Vec<usize> {
    seq.events.iter().filter_map(|e| e.duration).collect()
}

/// Two independent first-order chains: one over destination states, one over
/// dwell-duration buckets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovModel {
    pub states: TransitionTable,
    pub durations: TransitionTable,
}

impl MarkovModel {
    pub fn fit(
        sequences: &[EventSequence],
        num_states: usize,
        num_durations: usize,
    ) -> Result<MarkovModel> {
        let states = mc_fit(sequences.iter().map(state_labels), num_states)?;
        let durations = mc_fit(sequences.iter().map(duration_labels), num_durations)?;
        Ok(MarkovModel { states, durations })
    }
}
