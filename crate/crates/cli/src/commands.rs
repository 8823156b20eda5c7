//! Command implementations.

use std::path::PathBuf;

use careflow::baselines::MarkovModel;
use careflow::datagen::{self, GeneratorConfig};
use careflow::dataset::{
    file_sha256, read_catalog, read_dataset, sibling_catalog_path, write_catalog, write_dataset,
    Catalog,
};
use careflow::error::{Error, Result};
use careflow::imbalance::{
    augmented_sequences, sample_weights, synthesize_balanced, BalanceMode, ClassCounts,
};
use careflow::learner::{
    admm_fit, hierarchical_fit, ChainTarget, ParameterMatrix, SolverConfig, SparseMatrix,
};
use careflow::model::{EventSequence, KernelConfig, KernelVariant};
use careflow::persist::{
    load_model, save_model, ChainFile, ClassCountEntry, FitReport, ModelFile, ModelPayload,
    FORMAT_VERSION,
};
use careflow::predict::{
    accuracy_report, observed_occupancy, prefix_at, relative_sim_error, simulate_cohort,
    TransitionModel,
};
use careflow::samples::{extract_samples, mean_duration_days, TrainingSet};
use careflow::seeding::{derive_seed, shuffled_indices};
use sha2::{Digest, Sha256};

use crate::{BalanceModeArg, DataArgs, ImbalanceArg, KernelArgs, ModelKindArg, SigmaArg, SolverArgs};

impl ImbalanceArg {
    fn name(self) -> &'static str {
        match self {
            ImbalanceArg::None => "none",
            ImbalanceArg::Weighted => "weighted",
            ImbalanceArg::Hierarchical => "hierarchical",
            ImbalanceArg::Synthetic => "synthetic",
        }
    }
}

impl BalanceModeArg {
    fn to_mode(self) -> BalanceMode {
        match self {
            BalanceModeArg::Joint => BalanceMode::Joint,
            BalanceModeArg::Marginal => BalanceMode::MarginalState,
        }
    }

    fn name(self) -> &'static str {
        match self {
            BalanceModeArg::Joint => "joint",
            BalanceModeArg::Marginal => "marginal",
        }
    }
}

/// Stable digest of the resolved run configuration plus input content hashes.
/// Keys are sorted by the JSON map, so the digest is insensitive to insertion
/// order and paths (only file contents count).
fn config_digest(fields: &[(&str, serde_json::Value)]) -> String {
    let map: serde_json::Map<String, serde_json::Value> = fields
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect();
    let bytes = serde_json::to_vec(&serde_json::Value::Object(map)).expect("digest serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn json_f64(x: f64) -> serde_json::Value {
    serde_json::Value::String(format!("{x:?}"))
}

struct LoadedData {
    catalog: Catalog,
    sequences: Vec<EventSequence>,
    data_hash: String,
}

fn load_data(args: &DataArgs) -> Result<LoadedData> {
    let catalog_path = args
        .catalog
        .clone()
        .unwrap_or_else(|| sibling_catalog_path(&args.data));
    let catalog = read_catalog(&catalog_path)?;
    let data = read_dataset(&args.data, &catalog)?;
    let data_hash = file_sha256(&args.data)?;
    Ok(LoadedData {
        catalog,
        sequences: data.sequences,
        data_hash,
    })
}

fn resolve_kernel(args: &KernelArgs, sequences: &[EventSequence]) -> Result<KernelConfig> {
    let sigma = match (args.kernel, args.sigma) {
        (KernelVariant::Mcp, SigmaArg::Auto) => mean_duration_days(sequences)?,
        (_, SigmaArg::Auto) => 1.0,
        (_, SigmaArg::Value(v)) => v,
    };
    KernelConfig::new(args.kernel, sigma)
}

fn solver_config(args: &SolverArgs, gamma: f64, seed: u64) -> SolverConfig {
    SolverConfig {
        gamma,
        rho: args.rho,
        beta0: args.beta0,
        epsilon: args.epsilon,
        max_outer: args.max_outer,
        max_inner: args.max_inner,
        seed,
        batch_size: args.batch_size,
    }
}

fn class_count_entries(training: &TrainingSet) -> Vec<ClassCountEntry> {
    ClassCounts::from_labels(training.samples.iter().map(|s| s.labels()))
        .iter()
        .map(|(&(state, duration), &count)| ClassCountEntry {
            state,
            duration,
            count,
        })
        .collect()
}

/// Applies the chosen strategy to a training set, returning the set the solver
/// sees plus optional per-sample weights.
fn apply_strategy(
    training: &TrainingSet,
    strategy: ImbalanceArg,
    mode: BalanceMode,
    seed: u64,
) -> Result<(TrainingSet, Option<Vec<f64>>)> {
    match strategy {
        ImbalanceArg::None | ImbalanceArg::Hierarchical => Ok((training.clone(), None)),
        ImbalanceArg::Weighted => {
            let weights = sample_weights(&training.samples)?;
            Ok((training.clone(), Some(weights)))
        }
        ImbalanceArg::Synthetic => {
            let balanced = synthesize_balanced(training, seed, mode)?;
            Ok((balanced, None))
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn fit(
    data_args: DataArgs,
    kernel_args: KernelArgs,
    solver_args: SolverArgs,
    imbalance: ImbalanceArg,
    balance_mode: BalanceModeArg,
    folds: Option<usize>,
    holdout: Option<f64>,
    seed: u64,
    model_kind: ModelKindArg,
    out: PathBuf,
) -> Result<()> {
    if let Some(k) = folds {
        if k < 2 {
            return Err(Error::invalid("cross-validation requires at least 2 folds"));
        }
    }
    if let Some(f) = holdout {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::invalid(format!(
                "holdout fraction must be in [0, 1), got {f}"
            )));
        }
    }
    let loaded = load_data(&data_args)?;
    let catalog = &loaded.catalog;
    let num_states = catalog.num_states();
    let num_durations = catalog.num_durations();

    if model_kind == ModelKindArg::Markov {
        if folds.is_some() {
            return Err(Error::invalid("fold averaging applies to parameter matrices, not transition tables"));
        }
        if holdout.is_some() {
            return Err(Error::invalid("the sample-level holdout applies to feature-based models"));
        }
        let markov = MarkovModel::fit(&loaded.sequences, num_states, num_durations)?;
        let digest = config_digest(&[
            ("command", "fit".into()),
            ("model_kind", "markov".into()),
            ("data", loaded.data_hash.clone().into()),
            ("catalog", catalog.hash().into()),
        ]);
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            config_digest: digest.clone(),
            catalog_hash: catalog.hash(),
            states: catalog.states.clone(),
            durations: catalog.durations.clone(),
            model: ModelPayload::MarkovChain {
                states: markov.states,
                durations: markov.durations,
            },
            fit: None,
        };
        save_model(&out, &file)?;
        println!("fitted markov baseline on {} sequences", loaded.sequences.len());
        println!("model written to {} (digest {digest})", out.display());
        return Ok(());
    }

    let kernel = resolve_kernel(&kernel_args, &loaded.sequences)?;
    let extracted = extract_samples(&loaded.sequences, &kernel)?;
    let (training, heldout) = match holdout {
        None => (extracted, Vec::new()),
        Some(fraction) => {
            let n = extracted.samples.len();
            let keep_from = (n as f64 * fraction).round() as usize;
            let order = shuffled_indices(n, derive_seed(seed, 0x401D));
            let heldout: Vec<_> = order[..keep_from]
                .iter()
                .map(|&i| extracted.samples[i].clone())
                .collect();
            let kept: Vec<_> = order[keep_from..]
                .iter()
                .map(|&i| extracted.samples[i].clone())
                .collect();
            if kept.is_empty() {
                return Err(Error::invalid("holdout fraction leaves no training samples"));
            }
            (
                TrainingSet {
                    kernel: extracted.kernel,
                    static_dim: extracted.static_dim,
                    event_dim: extracted.event_dim,
                    samples: kept,
                },
                heldout,
            )
        }
    };
    let (full_set, _) = apply_strategy(&training, imbalance, balance_mode.to_mode(), seed)?;
    let class_counts = class_count_entries(&full_set);

    let digest = config_digest(&[
        ("command", "fit".into()),
        ("model_kind", "point_process".into()),
        ("data", loaded.data_hash.clone().into()),
        ("catalog", catalog.hash().into()),
        ("kernel", kernel.variant.as_str().into()),
        ("sigma", json_f64(kernel.sigma)),
        ("gamma", json_f64(solver_args.gamma)),
        ("rho", json_f64(solver_args.rho)),
        ("beta0", json_f64(solver_args.beta0)),
        ("epsilon", json_f64(solver_args.epsilon)),
        ("max_outer", solver_args.max_outer.into()),
        ("max_inner", solver_args.max_inner.into()),
        ("batch_size", solver_args.batch_size.into()),
        ("imbalance", imbalance.name().into()),
        ("balance_mode", balance_mode.name().into()),
        ("folds", folds.into()),
        ("holdout", holdout.map(json_f64).into()),
        ("seed", seed.into()),
    ]);

    let payload;
    let report;
    if imbalance == ImbalanceArg::Hierarchical {
        if folds.is_some() {
            return Err(Error::invalid(
                "fold averaging applies to parameter matrices, not hierarchical chains",
            ));
        }
        let samples = full_set.to_train_samples(None)?;
        let config = solver_config(&solver_args, solver_args.gamma, seed);
        let state_chain = hierarchical_fit(&samples, ChainTarget::State, &config)?;
        let duration_chain = hierarchical_fit(&samples, ChainTarget::Duration, &config)?;
        payload = ModelPayload::Hierarchical {
            kernel,
            num_states,
            num_durations,
            state_chain: ChainFile::from_chain(&state_chain),
            duration_chain: ChainFile::from_chain(&duration_chain),
        };
        report = FitReport {
            strategy: imbalance.name().into(),
            training_samples: full_set.samples.len(),
            class_counts,
            folds: vec![],
        };
        println!(
            "fitted hierarchical chains ({} + {} steps) on {} samples",
            match &payload {
                ModelPayload::Hierarchical { state_chain, .. } => state_chain.steps.len(),
                _ => unreachable!(),
            },
            match &payload {
                ModelPayload::Hierarchical { duration_chain, .. } => duration_chain.steps.len(),
                _ => unreachable!(),
            },
            full_set.samples.len()
        );
    } else {
        let mut fold_reports = Vec::new();
        let params = match folds {
            None => {
                let (set, weights) =
                    apply_strategy(&training, imbalance, balance_mode.to_mode(), seed)?;
                let samples = set.to_train_samples(weights.as_deref())?;
                let config = solver_config(&solver_args, solver_args.gamma, seed);
                let outcome = admm_fit(&samples, num_states, num_durations, &config)?;
                fold_reports.push(outcome.report);
                outcome.params
            }
            Some(k) => {
                let order = shuffled_indices(training.samples.len(), derive_seed(seed, 0xF01D));
                let mut fold_params = Vec::with_capacity(k);
                for fold in 0..k {
                    let subset: Vec<_> = order
                        .iter()
                        .enumerate()
                        .filter(|(pos, _)| pos % k != fold)
                        .map(|(_, &i)| training.samples[i].clone())
                        .collect();
                    let subset = TrainingSet {
                        kernel: training.kernel,
                        static_dim: training.static_dim,
                        event_dim: training.event_dim,
                        samples: subset,
                    };
                    let (set, weights) =
                        apply_strategy(&subset, imbalance, balance_mode.to_mode(), seed)?;
                    let samples = set.to_train_samples(weights.as_deref())?;
                    let config =
                        solver_config(&solver_args, solver_args.gamma, derive_seed(seed, fold as u64));
                    let outcome = admm_fit(&samples, num_states, num_durations, &config)?;
                    fold_reports.push(outcome.report);
                    fold_params.push(outcome.params);
                }
                ParameterMatrix::mean_of(&fold_params)?
            }
        };
        println!(
            "fitted point-process model: {} nonzero of {} feature rows, loss {:.6}",
            params.nonzero_rows().len(),
            params.num_features(),
            fold_reports.last().map(|r| r.final_loss).unwrap_or(f64::NAN)
        );
        payload = ModelPayload::PointProcess {
            kernel,
            params: SparseMatrix::from(&params),
        };
        report = FitReport {
            strategy: imbalance.name().into(),
            training_samples: full_set.samples.len(),
            class_counts,
            folds: fold_reports,
        };
    }

    let file = ModelFile {
        format_version: FORMAT_VERSION,
        config_digest: digest.clone(),
        catalog_hash: catalog.hash(),
        states: catalog.states.clone(),
        durations: catalog.durations.clone(),
        model: payload,
        fit: Some(report),
    };
    save_model(&out, &file)?;
    if !heldout.is_empty() {
        let (state_ac, duration_ac) = heldout_accuracy(&file, &heldout, num_states, num_durations)?;
        println!(
            "held-out accuracy on {} samples: state {state_ac:.4}, duration {duration_ac:.4}",
            heldout.len()
        );
    }
    println!("model written to {} (digest {digest})", out.display());
    Ok(())
}

/// Scores held-out samples directly against the persisted payload.
fn heldout_accuracy(
    file: &ModelFile,
    heldout: &[careflow::samples::RawSample],
    num_states: usize,
    num_durations: usize,
) -> Result<(f64, f64)> {
    enum Scorer {
        Matrix(ParameterMatrix),
        Chains(
            careflow::learner::HierarchicalChain,
            careflow::learner::HierarchicalChain,
        ),
    }
    let scorer = match &file.model {
        ModelPayload::PointProcess { params, .. } => Scorer::Matrix(ParameterMatrix::try_from(params)?),
        ModelPayload::Hierarchical {
            state_chain,
            duration_chain,
            ..
        } => Scorer::Chains(
            state_chain.to_chain(ChainTarget::State)?,
            duration_chain.to_chain(ChainTarget::Duration)?,
        ),
        ModelPayload::MarkovChain { .. } => {
            return Err(Error::invalid("holdout scoring needs a feature-based model"))
        }
    };
    let mut state_preds = Vec::new();
    let mut state_truths = Vec::new();
    let mut dur_preds = Vec::new();
    let mut dur_truths = Vec::new();
    for sample in heldout {
        let (state, duration) = match &scorer {
            Scorer::Matrix(params) => {
                let sp = careflow::learner::class_probabilities(params.state_head(), &sample.feature)?;
                let dp =
                    careflow::learner::class_probabilities(params.duration_head(), &sample.feature)?;
                (argmax1(&sp), argmax1(&dp))
            }
            Scorer::Chains(state_chain, duration_chain) => (
                careflow::learner::hierarchical_predict(state_chain, &sample.feature)?,
                careflow::learner::hierarchical_predict(duration_chain, &sample.feature)?,
            ),
        };
        state_preds.push(state);
        state_truths.push(sample.state);
        if let Some(d) = sample.duration {
            dur_preds.push(duration);
            dur_truths.push(d);
        }
    }
    let state = accuracy_report(&state_preds, &state_truths, num_states)?;
    let duration = accuracy_report(&dur_preds, &dur_truths, num_durations)?;
    Ok((state.overall, duration.overall))
}

fn argmax1(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best + 1
}

struct Predictions {
    state_preds: Vec<usize>,
    state_truths: Vec<usize>,
    duration_preds: Vec<usize>,
    duration_truths: Vec<usize>,
}

fn predict_dataset(model: &dyn TransitionModel, sequences: &[EventSequence]) -> Result<Predictions> {
    let mut p = Predictions {
        state_preds: Vec::new(),
        state_truths: Vec::new(),
        duration_preds: Vec::new(),
        duration_truths: Vec::new(),
    };
    for seq in sequences {
        for i in 1..seq.events.len() {
            let t = seq.events[i - 1].time;
            p.state_preds.push(model.predict_state(seq, i, t)?);
            p.state_truths.push(seq.events[i].state);
            if let Some(d) = seq.events[i].duration {
                p.duration_preds.push(model.predict_duration(seq, i, t)?);
                p.duration_truths.push(d);
            }
        }
    }
    if p.state_truths.is_empty() {
        return Err(Error::invalid("dataset has no events with a predecessor to evaluate"));
    }
    Ok(p)
}

pub fn evaluate(data_args: DataArgs, model_path: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let loaded = load_data(&data_args)?;
    let file = load_model(&model_path)?;
    file.check_catalog(&loaded.catalog)?;
    let model = file.to_transition_model()?;
    let digest = config_digest(&[
        ("command", "evaluate".into()),
        ("data", loaded.data_hash.clone().into()),
        ("catalog", loaded.catalog.hash().into()),
        ("model", file_sha256(&model_path)?.into()),
    ]);

    let predictions = predict_dataset(model.as_ref(), &loaded.sequences)?;
    let state = accuracy_report(
        &predictions.state_preds,
        &predictions.state_truths,
        loaded.catalog.num_states(),
    )?;
    let duration = accuracy_report(
        &predictions.duration_preds,
        &predictions.duration_truths,
        loaded.catalog.num_durations(),
    )?;

    println!("config digest {digest}");
    println!("state accuracy ({} predictions)", state.total);
    for (i, name) in loaded.catalog.states.iter().enumerate() {
        match state.per_class[i] {
            Some(ac) => println!("  {name:<12} {ac:.4}"),
            None => println!("  {name:<12} undefined (no occurrences)"),
        }
    }
    println!("  {:<12} {:.4}", "overall", state.overall);
    println!("duration accuracy ({} predictions)", duration.total);
    for (i, name) in loaded.catalog.durations.iter().enumerate() {
        match duration.per_class[i] {
            Some(ac) => println!("  {name:<12} {ac:.4}"),
            None => println!("  {name:<12} undefined (no occurrences)"),
        }
    }
    println!("  {:<12} {:.4}", "overall", duration.overall);

    if let Some(path) = out {
        let mut csv = String::new();
        csv.push_str(&format!("# config_digest={digest}\n"));
        csv.push_str("head,label,accuracy\n");
        for (i, name) in loaded.catalog.states.iter().enumerate() {
            let value = state.per_class[i].map(|a| format!("{a:.6}")).unwrap_or_default();
            csv.push_str(&format!("state,{name},{value}\n"));
        }
        csv.push_str(&format!("state,__overall__,{:.6}\n", state.overall));
        for (i, name) in loaded.catalog.durations.iter().enumerate() {
            let value = duration.per_class[i].map(|a| format!("{a:.6}")).unwrap_or_default();
            csv.push_str(&format!("duration,{name},{value}\n"));
        }
        csv.push_str(&format!("duration,__overall__,{:.6}\n", duration.overall));
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        println!("metrics written to {}", path.display());
    }
    Ok(())
}

pub fn simulate(
    data_args: DataArgs,
    model_path: PathBuf,
    cutoff: Option<f64>,
    horizon: usize,
    rounds: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let loaded = load_data(&data_args)?;
    let file = load_model(&model_path)?;
    file.check_catalog(&loaded.catalog)?;
    let model = file.to_transition_model()?;

    let latest = loaded
        .sequences
        .iter()
        .flat_map(|s| s.events.last())
        .map(|e| e.time)
        .fold(f64::NEG_INFINITY, f64::max);
    if !latest.is_finite() {
        return Err(Error::invalid("dataset has no events to anchor a simulation"));
    }
    let cutoff = cutoff.unwrap_or_else(|| (latest - horizon as f64).max(0.0));

    let mut prefixes = Vec::new();
    let mut fulls = Vec::new();
    let mut anchors = Vec::new();
    for seq in &loaded.sequences {
        if let Some(prefix) = prefix_at(seq, cutoff) {
            anchors.push(prefix.events.last().unwrap().time);
            prefixes.push(prefix);
            fulls.push(seq.clone());
        }
    }
    if prefixes.is_empty() {
        return Err(Error::invalid(format!(
            "no subject has an event at or before the cutoff {cutoff}"
        )));
    }

    let digest = config_digest(&[
        ("command", "simulate".into()),
        ("data", loaded.data_hash.clone().into()),
        ("catalog", loaded.catalog.hash().into()),
        ("model", file_sha256(&model_path)?.into()),
        ("cutoff", json_f64(cutoff)),
        ("horizon", horizon.into()),
        ("rounds", rounds.into()),
        ("seed", seed.into()),
    ]);

    let simulated = simulate_cohort(model.as_ref(), model.as_ref(), &prefixes, horizon, rounds, seed)?;
    let observed = observed_occupancy(&fulls, &anchors, loaded.catalog.num_states(), horizon)?;
    let errors = relative_sim_error(&observed, &simulated)?;

    println!("config digest {digest}");
    println!(
        "cohort {} subjects, cutoff {cutoff}, horizon {horizon} days, {rounds} rounds",
        prefixes.len()
    );
    println!("relative simulation error");
    for (i, name) in loaded.catalog.states.iter().enumerate() {
        let skipped = if errors.skipped_cells[i] > 0 {
            format!(" ({} empty observed cells skipped)", errors.skipped_cells[i])
        } else {
            String::new()
        };
        println!("  {name:<12} {:.4}{skipped}", errors.per_state[i]);
    }
    println!("  {:<12} {:.4}", "overall", errors.overall);

    if let Some(path) = out {
        let mut csv = String::new();
        csv.push_str(&format!("# config_digest={digest}\n"));
        csv.push_str("day,state,simulated,observed\n");
        for day in 1..=horizon {
            for (i, name) in loaded.catalog.states.iter().enumerate() {
                csv.push_str(&format!(
                    "{day},{name},{:.6},{:.6}\n",
                    simulated.get(i + 1, day),
                    observed.get(i + 1, day)
                ));
            }
        }
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        println!("occupancy written to {}", path.display());
    }
    Ok(())
}

pub fn generate(config_path: PathBuf, seed: Option<u64>, out: PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
    let mut config: GeneratorConfig =
        serde_json::from_str(&text).map_err(|e| Error::format(&config_path, e.to_string()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let (sequences, planted) = datagen::generate(&config)?;
    let catalog = Catalog::synthetic(
        config.num_states,
        config.num_durations,
        config.static_dim,
        config.event_dim,
    );
    for seq in &sequences {
        catalog.validate_sequence(seq)?;
    }
    write_dataset(&out, &sequences, None)?;
    let catalog_path = sibling_catalog_path(&out);
    write_catalog(&catalog_path, &catalog)?;

    let digest = config_digest(&[
        ("command", "generate".into()),
        (
            "config",
            serde_json::to_value(&config).expect("generator config serializes"),
        ),
    ]);
    #[derive(serde::Serialize)]
    struct Manifest<'a> {
        config_digest: &'a str,
        catalog_hash: String,
        subjects: usize,
        events: usize,
        config: &'a GeneratorConfig,
        planted: SparseMatrix,
    }
    let manifest = Manifest {
        config_digest: &digest,
        catalog_hash: catalog.hash(),
        subjects: sequences.len(),
        events: sequences.iter().map(|s| s.events.len()).sum(),
        config: &config,
        planted: SparseMatrix::from(&planted),
    };
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    let manifest_path = out.with_file_name(format!("{stem}.manifest.json"));
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    println!(
        "generated {} sequences ({} events) into {}",
        manifest.subjects,
        manifest.events,
        out.display()
    );
    println!("catalog {} manifest {}", catalog_path.display(), manifest_path.display());
    println!("config digest {digest}");
    Ok(())
}

pub fn preprocess(
    data_args: DataArgs,
    kernel_args: KernelArgs,
    imbalance: ImbalanceArg,
    balance_mode: BalanceModeArg,
    seed: u64,
    out: PathBuf,
) -> Result<()> {
    let loaded = load_data(&data_args)?;
    match imbalance {
        ImbalanceArg::None => {
            write_dataset(&out, &loaded.sequences, None)?;
            println!(
                "validated and re-emitted {} sequences to {}",
                loaded.sequences.len(),
                out.display()
            );
            Ok(())
        }
        ImbalanceArg::Synthetic => {
            let kernel = resolve_kernel(&kernel_args, &loaded.sequences)?;
            let training = extract_samples(&loaded.sequences, &kernel)?;
            let balanced = synthesize_balanced(&training, seed, balance_mode.to_mode())?;
            let (sequences, flags) = augmented_sequences(&loaded.sequences, &balanced)?;
            write_dataset(&out, &sequences, Some(&flags))?;
            let digest = config_digest(&[
                ("command", "preprocess".into()),
                ("data", loaded.data_hash.clone().into()),
                ("catalog", loaded.catalog.hash().into()),
                ("kernel", kernel.variant.as_str().into()),
                ("sigma", json_f64(kernel.sigma)),
                ("imbalance", imbalance.name().into()),
                ("balance_mode", balance_mode.name().into()),
                ("seed", seed.into()),
            ]);
            let synthetic = flags.iter().filter(|&&f| f).count();
            println!(
                "wrote {} records ({} original, {synthetic} synthetic) to {}",
                sequences.len(),
                loaded.sequences.len(),
                out.display()
            );
            println!("config digest {digest}");
            Ok(())
        }
        ImbalanceArg::Weighted | ImbalanceArg::Hierarchical => Err(Error::invalid(
            "the weighted and hierarchical strategies act at training time and produce no dataset; use them with `fit --imbalance`",
        )),
    }
}

pub fn sweep(
    data_args: DataArgs,
    kernel_args: KernelArgs,
    solver_args: SolverArgs,
    gammas: String,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let grid: Vec<f64> = gammas
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad gamma value '{s}' in the grid")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if grid.is_empty() {
        return Err(Error::invalid("gamma grid is empty"));
    }
    let loaded = load_data(&data_args)?;
    let kernel = resolve_kernel(&kernel_args, &loaded.sequences)?;
    let training = extract_samples(&loaded.sequences, &kernel)?;
    let samples = training.to_train_samples(None)?;
    let num_states = loaded.catalog.num_states();
    let num_durations = loaded.catalog.num_durations();

    let digest = config_digest(&[
        ("command", "sweep".into()),
        ("data", loaded.data_hash.clone().into()),
        ("catalog", loaded.catalog.hash().into()),
        ("kernel", kernel.variant.as_str().into()),
        ("sigma", json_f64(kernel.sigma)),
        (
            "gammas",
            serde_json::Value::Array(grid.iter().map(|&g| json_f64(g)).collect()),
        ),
        ("rho", json_f64(solver_args.rho)),
        ("beta0", json_f64(solver_args.beta0)),
        ("epsilon", json_f64(solver_args.epsilon)),
        ("seed", seed.into()),
    ]);

    println!("config digest {digest}");
    println!(
        "{:>10} {:>12} {:>14} {:>12} {:>10} {:>10}",
        "gamma", "nonzero", "loss", "group_norm", "state_ac", "dur_ac"
    );
    let mut csv = String::new();
    csv.push_str(&format!("# config_digest={digest}\n"));
    csv.push_str("gamma,nonzero_rows,final_loss,group_norm,train_state_accuracy,train_duration_accuracy\n");
    for &gamma in &grid {
        let config = solver_config(&solver_args, gamma, seed);
        let outcome = admm_fit(&samples, num_states, num_durations, &config)?;
        let model = careflow::predict::PointProcessModel {
            params: outcome.params,
            kernel,
        };
        let predictions = predict_dataset(&model, &loaded.sequences)?;
        let state = accuracy_report(&predictions.state_preds, &predictions.state_truths, num_states)?;
        let duration = accuracy_report(
            &predictions.duration_preds,
            &predictions.duration_truths,
            num_durations,
        )?;
        println!(
            "{:>10} {:>12} {:>14.4} {:>12.4} {:>10.4} {:>10.4}",
            gamma,
            outcome.report.nonzero_rows,
            outcome.report.final_loss,
            outcome.report.group_norm,
            state.overall,
            duration.overall
        );
        csv.push_str(&format!(
            "{gamma},{},{},{},{},{}\n",
            outcome.report.nonzero_rows,
            outcome.report.final_loss,
            outcome.report.group_norm,
            state.overall,
            duration.overall
        ));
    }
    if let Some(path) = out {
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        println!("sweep written to {}", path.display());
    }
    Ok(())
}
