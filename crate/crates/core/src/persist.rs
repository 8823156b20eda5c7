//! Versioned model files.
//!
//! All fitted model kinds share one envelope: format version, config digest,
//! catalog hash, class catalogs, a kind-tagged payload, and the fit report.
//! Loading against a catalog with a different hash is refused.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{MarkovModel, TransitionTable};
use crate::dataset::Catalog;
use crate::error::{Error, Result};
use crate::learner::{ChainTarget, HierarchicalChain, ParameterMatrix, SolverReport, SparseMatrix};
use crate::model::KernelConfig;
use crate::predict::{HierarchicalModel, PointProcessModel, TransitionModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    /// Digest of the resolved run configuration that produced this model.
    pub config_digest: String,
    /// Hash of the feature catalog the model was trained against.
    pub catalog_hash: String,
    pub states: Vec<String>,
    pub durations: Vec<String>,
    pub model: ModelPayload,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelPayload {
    PointProcess {
        kernel: KernelConfig,
        params: SparseMatrix,
    },
    Hierarchical {
        kernel: KernelConfig,
        num_states: usize,
        num_durations: usize,
        state_chain: ChainFile,
        duration_chain: ChainFile,
    },
    MarkovChain {
        states: TransitionTable,
        durations: TransitionTable,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainFile {
    pub steps: Vec<ChainStepFile>,
    pub final_class: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainStepFile {
    pub class_label: usize,
    pub model: SparseMatrix,
}

/// How the training run was set up and what the solver reported.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub strategy: String,
    pub training_samples: usize,
    /// Joint-class counts of the training set the solver actually saw
    /// (after any preprocessing).
    pub class_counts: Vec<ClassCountEntry>,
    /// One solver report per fold; a single-fit run has exactly one.
    pub folds: Vec<SolverReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassCountEntry {
    pub state: usize,
    pub duration: Option<usize>,
    pub count: usize,
}

impl ModelFile {
    /// Refuses catalogs other than the one the model was trained against.
    pub fn check_catalog(&self, catalog: &Catalog) -> Result<()> {
        let hash = catalog.hash();
        if hash != self.catalog_hash {
            return Err(Error::invalid(format!(
                "model was trained against catalog {} but {} was supplied",
                self.catalog_hash, hash
            )));
        }
        Ok(())
    }

    /// Reconstructs the runtime model.
    pub fn to_transition_model(&self) -> Result<Box<dyn TransitionModel>> {
        match &self.model {
            ModelPayload::PointProcess { kernel, params } => {
                kernel.validate()?;
                let params = ParameterMatrix::try_from(params)?;
                if params.num_states() != self.states.len()
                    || params.num_durations() != self.durations.len()
                {
                    return Err(Error::invalid(
                        "parameter heads do not match the class catalogs",
                    ));
                }
                Ok(Box::new(PointProcessModel {
                    params,
                    kernel: *kernel,
                }))
            }
            ModelPayload::Hierarchical {
                kernel,
                num_states,
                num_durations,
                state_chain,
                duration_chain,
            } => {
                kernel.validate()?;
                Ok(Box::new(HierarchicalModel {
                    state_chain: state_chain.to_chain(ChainTarget::State)?,
                    duration_chain: duration_chain.to_chain(ChainTarget::Duration)?,
                    kernel: *kernel,
                    num_states: *num_states,
                    num_durations: *num_durations,
                }))
            }
            ModelPayload::MarkovChain { states, durations } => Ok(Box::new(MarkovModel {
                states: states.clone(),
                durations: durations.clone(),
            })),
        }
    }
}

impl ChainFile {
    pub fn from_chain(chain: &HierarchicalChain) -> ChainFile {
        ChainFile {
            steps: chain
                .steps
                .iter()
                .map(|s| ChainStepFile {
                    class_label: s.class_label,
                    model: SparseMatrix::from(&s.model),
                })
                .collect(),
            final_class: chain.final_class,
        }
    }

    pub fn to_chain(&self, target: ChainTarget) -> Result<HierarchicalChain> {
        Ok(HierarchicalChain {
            target,
            steps: self
                .steps
                .iter()
                .map(|s| {
                    Ok(crate::learner::ChainStep {
                        class_label: s.class_label,
                        model: ParameterMatrix::try_from(&s.model)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            final_class: self.final_class,
        })
    }
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<()> {
    let json = serde_json::to_string_pretty(model).expect("model file serializes");
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let model: ModelFile =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if model.format_version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                model.format_version
            ),
        ));
    }
    Ok(model)
}
