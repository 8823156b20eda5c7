//! Hierarchical binary re-balancing: classes are ranked by training count and
//! peeled off one at a time with majority-vs-rest binary fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FeatureVector;

use super::{admm_fit, class_probabilities, ParameterMatrix, SolverConfig, TrainSample};

/// Which label a chain is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainTarget {
    State,
    Duration,
}

/// One step of the chain: a binary model separating `class_label` (fit as
/// class 1, the current majority) from everything remaining (class 2).
#[derive(Debug, Clone)]
pub struct ChainStep {
    pub class_label: usize,
    pub model: ParameterMatrix,
}

/// Ordered majority-first chain of binary models over one label kind.
#[derive(Debug, Clone)]
pub struct HierarchicalChain {
    pub target: ChainTarget,
    pub steps: Vec<ChainStep>,
    /// Label assigned when every step votes for its minority side.
    pub final_class: usize,
}

fn label_of(sample: &TrainSample, target: ChainTarget) -> Option<usize> {
    match target {
        ChainTarget::State => Some(sample.state),
        ChainTarget::Duration => sample.duration,
    }
}

/// Fits the chain: at each step the class with the most remaining training
/// samples (ties to the smaller class index) becomes MAJORITY, a binary model
/// is fit against the pooled rest, and the majority samples are removed.
pub fn hierarchical_fit(
    samples: &[TrainSample],
    target: ChainTarget,
    config: &SolverConfig,
) -> Result<HierarchicalChain> {
    let mut pool: Vec<&TrainSample> = samples
        .iter()
        .filter(|s| label_of(s, target).is_some())
        .collect();
    let mut counts: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for s in &pool {
        *counts.entry(label_of(s, target).unwrap()).or_insert(0) += 1;
    }
    if counts.len() < 2 {
        return Err(Error::invalid(format!(
            "hierarchical fit needs at least 2 classes, found {}",
            counts.len()
        )));
    }
    // Descending count, ties broken by the smaller class index.
    let mut order: Vec<(usize, usize)> = counts.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut steps = Vec::with_capacity(order.len() - 1);
    for (step_index, &(majority, _)) in order[..order.len() - 1].iter().enumerate() {
        let binary: Vec<TrainSample> = pool
            .iter()
            .map(|s| {
                let label = if label_of(s, target).unwrap() == majority { 1 } else { 2 };
                TrainSample::new(s.feature.clone(), label, None).with_weight(s.weight)
            })
            .collect();
        let step_config = SolverConfig {
            seed: config.seed.wrapping_add(step_index as u64),
            ..config.clone()
        };
        let outcome = admm_fit(&binary, 2, 0, &step_config)?;
        steps.push(ChainStep {
            class_label: majority,
            model: outcome.params,
        });
        pool.retain(|s| label_of(s, target).unwrap() != majority);
    }
    Ok(HierarchicalChain {
        target,
        steps,
        final_class: order.last().unwrap().0,
    })
}

/// Walks the chain and returns the first class whose binary model votes
/// MAJORITY; falls through to the final remaining class.
pub fn hierarchical_predict(chain: &HierarchicalChain, f: &FeatureVector) -> Result<usize> {
    for step in &chain.steps {
        let p = class_probabilities(step.model.state_head(), f)?;
        if p[0] >= p[1] {
            return Ok(step.class_label);
        }
    }
    Ok(chain.final_class)
}

impl HierarchicalChain {
    /// Distribution over `1..=num_classes` induced by the chain:
    /// `p(class at step j) = p_maj(j) * prod_{j' < j} (1 - p_maj(j'))`, with the
    /// leftover mass on the final class. Classes never seen in training get 0.
    pub fn class_distribution(&self, f: &FeatureVector, num_classes: usize) -> Result<Vec<f64>> {
        let mut dist = vec![0.0; num_classes];
        let mut mass = 1.0;
        for step in &self.steps {
            if step.class_label > num_classes {
                return Err(Error::invalid(format!(
                    "chain class {} outside catalog of {num_classes}",
                    step.class_label
                )));
            }
            let p = class_probabilities(step.model.state_head(), f)?;
            dist[step.class_label - 1] = mass * p[0];
            mass *= p[1];
        }
        if self.final_class > num_classes {
            return Err(Error::invalid(format!(
                "chain class {} outside catalog of {num_classes}",
                self.final_class
            )));
        }
        dist[self.final_class - 1] += mass;
        Ok(dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureVector;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::new(values.to_vec()).unwrap()
    }

    fn solver() -> SolverConfig {
        SolverConfig {
            gamma: 0.0,
            rho: 0.1,
            beta0: 1.0,
            epsilon: 1e-8,
            max_outer: 100,
            max_inner: 200,
            seed: 1,
            batch_size: None,
        }
    }

    #[test]
    fn two_classes_give_a_single_step() {
        let samples = vec![
            TrainSample::new(fv(&[1.0, 0.0]), 1, None),
            TrainSample::new(fv(&[1.0, 0.1]), 1, None),
            TrainSample::new(fv(&[0.0, 1.0]), 2, None),
        ];
        let chain = hierarchical_fit(&samples, ChainTarget::State, &solver()).unwrap();
        assert_eq!(chain.steps.len(), 1);
        assert_eq!(chain.steps[0].class_label, 1);
        assert_eq!(chain.final_class, 2);
    }

    #[test]
    fn chain_order_follows_descending_counts() {
        let mut samples = Vec::new();
        for _ in 0..100 {
            samples.push(TrainSample::new(fv(&[1.0, 0.0, 0.0]), 2, None));
        }
        for _ in 0..10 {
            samples.push(TrainSample::new(fv(&[0.0, 1.0, 0.0]), 3, None));
        }
        samples.push(TrainSample::new(fv(&[0.0, 0.0, 1.0]), 1, None));
        let config = SolverConfig {
            max_outer: 2,
            max_inner: 5,
            gamma: 0.0,
            ..SolverConfig::default()
        };
        let chain = hierarchical_fit(&samples, ChainTarget::State, &config).unwrap();
        let order: Vec<usize> = chain.steps.iter().map(|s| s.class_label).collect();
        assert_eq!(order, vec![2, 3]);
        assert_eq!(chain.final_class, 1);
    }

    #[test]
    fn separable_three_class_toy_is_recovered() {
        let mut samples = Vec::new();
        for i in 0..4 {
            samples.push(TrainSample::new(fv(&[1.0, 0.05 * i as f64, 0.0]), 1, None));
        }
        for i in 0..3 {
            samples.push(TrainSample::new(fv(&[0.0, 1.0, 0.05 * i as f64]), 2, None));
        }
        for _ in 0..2 {
            samples.push(TrainSample::new(fv(&[0.0, 0.0, 1.0]), 3, None));
        }
        let chain = hierarchical_fit(&samples, ChainTarget::State, &solver()).unwrap();
        for s in &samples {
            assert_eq!(hierarchical_predict(&chain, &s.feature).unwrap(), s.state);
        }
        let dist = chain.class_distribution(&samples[0].feature, 3).unwrap();
        let sum: f64 = dist.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_input_is_rejected() {
        let samples = vec![TrainSample::new(fv(&[1.0]), 1, None)];
        assert!(hierarchical_fit(&samples, ChainTarget::State, &solver()).is_err());
    }
}
