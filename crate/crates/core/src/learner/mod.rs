//! Discriminative training of the transition model.
//!
//! The model keeps one coefficient column per state class and one per duration
//! class in a single matrix whose rows are feature dimensions. Class
//! probabilities are softmaxes of per-class intensities, the loss is a
//! weighted two-head cross entropy, and the group-lasso regularized problem is
//! solved by ADMM: gradient steps on the smooth fit term, an exact row-wise
//! block soft-threshold for the sparsity term, and a dual update.

mod hierarchical;

pub use hierarchical::{
    hierarchical_fit, hierarchical_predict, ChainStep, ChainTarget, HierarchicalChain,
};

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FeatureVector;

/// Coefficient matrix with `M` feature rows and `C + D` class columns.
/// Columns `0..C` are the state heads, `C..C+D` the duration heads. Rows are
/// the group-lasso groups shared by both heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMatrix {
    values: Array2<f64>,
    num_states: usize,
    num_durations: usize,
}

impl ParameterMatrix {
    pub fn new(values: Array2<f64>, num_states: usize, num_durations: usize) -> Result<Self> {
        if num_states == 0 {
            return Err(Error::invalid("parameter matrix needs at least one state column"));
        }
        if values.ncols() != num_states + num_durations {
            return Err(Error::invalid(format!(
                "parameter matrix has {} columns, expected {} states + {} durations",
                values.ncols(),
                num_states,
                num_durations
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("parameter matrix contains non-finite entries"));
        }
        Ok(ParameterMatrix {
            values,
            num_states,
            num_durations,
        })
    }

    pub fn zeros(num_features: usize, num_states: usize, num_durations: usize) -> Result<Self> {
        Self::new(
            Array2::zeros((num_features, num_states + num_durations)),
            num_states,
            num_durations,
        )
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn num_features(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_durations(&self) -> usize {
        self.num_durations
    }

    /// Columns for the state classes.
    pub fn state_head(&self) -> ArrayView2<'_, f64> {
        self.values.slice(s![.., ..self.num_states])
    }

    /// Columns for the duration classes.
    pub fn duration_head(&self) -> ArrayView2<'_, f64> {
        self.values.slice(s![.., self.num_states..])
    }

    /// Indices of rows with at least one nonzero entry.
    pub fn nonzero_rows(&self) -> Vec<usize> {
        self.values
            .axis_iter(Axis(0))
            .enumerate()
            .filter(|(_, row)| row.iter().any(|&v| v != 0.0))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.values)
    }

    /// Element-wise mean of several matrices with identical shape, used to
    /// combine per-fold fits. A row stays zero only if it is zero in every fold.
    pub fn mean_of(matrices: &[ParameterMatrix]) -> Result<ParameterMatrix> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::invalid("cannot average an empty list of parameter matrices"))?;
        let mut sum = Array2::zeros(first.values.raw_dim());
        for m in matrices {
            if m.values.raw_dim() != first.values.raw_dim()
                || m.num_states != first.num_states
                || m.num_durations != first.num_durations
            {
                return Err(Error::invalid("parameter matrices have mismatched shapes"));
            }
            sum += &m.values;
        }
        sum /= matrices.len() as f64;
        ParameterMatrix::new(sum, first.num_states, first.num_durations)
    }
}

/// Serialized form of a [`ParameterMatrix`]: nonzero rows stored dense with
/// their indices, zero rows elided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    pub rows: usize,
    pub num_states: usize,
    pub num_durations: usize,
    pub nonzero: Vec<SparseRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub index: usize,
    pub values: Vec<f64>,
}

impl From<&ParameterMatrix> for SparseMatrix {
    fn from(params: &ParameterMatrix) -> SparseMatrix {
        let nonzero = params
            .values
            .axis_iter(Axis(0))
            .enumerate()
            .filter(|(_, row)| row.iter().any(|&v| v != 0.0))
            .map(|(index, row)| SparseRow {
                index,
                values: row.to_vec(),
            })
            .collect();
        SparseMatrix {
            rows: params.num_features(),
            num_states: params.num_states,
            num_durations: params.num_durations,
            nonzero,
        }
    }
}

impl TryFrom<&SparseMatrix> for ParameterMatrix {
    type Error = Error;

    fn try_from(sparse: &SparseMatrix) -> Result<ParameterMatrix> {
        let cols = sparse.num_states + sparse.num_durations;
        let mut values = Array2::zeros((sparse.rows, cols));
        for row in &sparse.nonzero {
            if row.index >= sparse.rows {
                return Err(Error::invalid(format!(
                    "sparse row index {} out of range {}",
                    row.index, sparse.rows
                )));
            }
            if row.values.len() != cols {
                return Err(Error::invalid(format!(
                    "sparse row {} has {} values, expected {cols}",
                    row.index,
                    row.values.len()
                )));
            }
            for (j, &v) in row.values.iter().enumerate() {
                values[[row.index, j]] = v;
            }
        }
        ParameterMatrix::new(values, sparse.num_states, sparse.num_durations)
    }
}

/// One training point: a composed feature vector, a state label, an optional
/// duration label, and a positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub feature: FeatureVector,
    /// 1-based state label.
    pub state: usize,
    /// 1-based duration label; `None` contributes only to the state head.
    pub duration: Option<usize>,
    pub weight: f64,
}

impl TrainSample {
    pub fn new(feature: FeatureVector, state: usize, duration: Option<usize>) -> Self {
        TrainSample {
            feature,
            state,
            duration,
            weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

/// Solver settings for [`admm_fit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Group-lasso weight.
    pub gamma: f64,
    /// ADMM penalty.
    pub rho: f64,
    /// Initial gradient step; decays as `beta0 / k` over outer rounds.
    pub beta0: f64,
    /// Relative Frobenius-change bound for both stopping rules.
    pub epsilon: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Seed for the random initialization of the parameters.
    pub seed: u64,
    /// Optional mini-batch size for the gradient steps; full batch when absent.
    pub batch_size: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma: 1.0,
            rho: 1.0,
            beta0: 1e-4,
            epsilon: 0.01,
            max_outer: 100,
            max_inner: 500,
            seed: 0,
            batch_size: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        for (name, value) in [
            ("rho", self.rho),
            ("beta0", self.beta0),
            ("epsilon", self.epsilon),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {value}")));
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::invalid("iteration caps must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch_size must be at least 1 when set"));
        }
        Ok(())
    }
}

/// Scalar summary of a solver run; persisted alongside the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverReport {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    /// Loss of the returned (proximal) iterate.
    pub final_loss: f64,
    /// Loss of the smooth iterate for comparison.
    pub theta_loss: f64,
    /// Frobenius norm of `theta - x` at termination.
    pub primal_residual: f64,
    pub nonzero_rows: usize,
    pub group_norm: f64,
    /// Which iterate the fit returns as the model.
    pub returned_iterate: String,
}

/// Result of [`admm_fit`]: the sparse proximal iterate as the model, the dense
/// smooth iterate for diagnostics, and the scalar report.
#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub params: ParameterMatrix,
    pub theta: ParameterMatrix,
    pub report: SolverReport,
}

/// Softmax class probabilities for one head: `p_k = exp(theta_k . f) /
/// sum_k' exp(theta_k' . f)`, stabilized by subtracting the max logit.
pub fn class_probabilities(theta_block: ArrayView2<'_, f64>, f: &FeatureVector) -> Result<Vec<f64>> {
    let k = theta_block.ncols();
    if k == 0 {
        return Err(Error::invalid("class probabilities need at least one class"));
    }
    if theta_block.nrows() != f.len() {
        return Err(Error::invalid(format!(
            "feature length {} does not match parameter rows {}",
            f.len(),
            theta_block.nrows()
        )));
    }
    let mut logits = vec![0.0; k];
    for (m, &x) in f.values().iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, logit) in logits.iter_mut().enumerate() {
            *logit += theta_block[[m, j]] * x;
        }
    }
    softmax_in_place(&mut logits)?;
    Ok(logits)
}

fn softmax_in_place(logits: &mut [f64]) -> Result<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::numeric(format!("non-finite logit {max} in softmax")));
    }
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    for z in logits.iter_mut() {
        *z /= sum;
    }
    Ok(max + sum.ln())
}

/// Pre-validated dense training set: one feature row per sample plus 0-based
/// label columns. Built once per fit so repeated loss/gradient evaluations are
/// matrix products.
struct DesignMatrix {
    features: Array2<f64>,
    states: Vec<usize>,
    durations: Vec<Option<usize>>,
    weights: Vec<f64>,
}

impl DesignMatrix {
    fn from_samples(
        samples: &[TrainSample],
        num_states: usize,
        num_durations: usize,
    ) -> Result<DesignMatrix> {
        if samples.is_empty() {
            return Err(Error::invalid("training requires at least one sample"));
        }
        let m = samples[0].feature.len();
        let n = samples.len();
        let mut features = Array2::zeros((n, m));
        let mut states = Vec::with_capacity(n);
        let mut durations = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for (i, sample) in samples.iter().enumerate() {
            if sample.feature.len() != m {
                return Err(Error::invalid(format!(
                    "sample {i} has feature length {}, expected {m}",
                    sample.feature.len()
                )));
            }
            if sample.state == 0 || sample.state > num_states {
                return Err(Error::invalid(format!(
                    "sample {i} state label {} out of range 1..={num_states}",
                    sample.state
                )));
            }
            if let Some(d) = sample.duration {
                if d == 0 || d > num_durations {
                    return Err(Error::invalid(format!(
                        "sample {i} duration label {d} out of range 1..={num_durations}"
                    )));
                }
            }
            if !(sample.weight > 0.0 && sample.weight.is_finite()) {
                return Err(Error::invalid(format!(
                    "sample {i} weight {} must be positive and finite",
                    sample.weight
                )));
            }
            features
                .row_mut(i)
                .iter_mut()
                .zip(sample.feature.values())
                .for_each(|(dst, &src)| *dst = src);
            states.push(sample.state - 1);
            durations.push(sample.duration.map(|d| d - 1));
            weights.push(sample.weight);
        }
        Ok(DesignMatrix {
            features,
            states,
            durations,
            weights,
        })
    }

    fn len(&self) -> usize {
        self.states.len()
    }

    /// Weighted two-head cross entropy and, when requested, its gradient, over
    /// the sample rows in `rows` (gradient scaled by `scale`).
    fn eval(
        &self,
        params: &Array2<f64>,
        num_states: usize,
        rows: std::ops::Range<usize>,
        scale: f64,
        need_grad: bool,
    ) -> Result<(f64, Option<Array2<f64>>)> {
        let feats = self.features.slice(s![rows.clone(), ..]);
        let mut logits = feats.dot(params);
        let num_classes = params.ncols();
        let num_durations = num_classes - num_states;
        let mut loss = 0.0;
        for (local, i) in rows.clone().enumerate() {
            let row = logits.row_mut(local);
            let row = row.into_slice().expect("logit rows are contiguous");
            let w = self.weights[i];
            softmax_in_place(&mut row[..num_states])?;
            let y_state = self.states[i];
            loss -= w * row[y_state].max(f64::MIN_POSITIVE).ln();
            if need_grad {
                for (c, value) in row[..num_states].iter_mut().enumerate() {
                    *value = w * (*value - if c == y_state { 1.0 } else { 0.0 });
                }
            }
            if num_durations > 0 {
                if let Some(y_dur) = self.durations[i] {
                    softmax_in_place(&mut row[num_states..])?;
                    loss -= w * row[num_states + y_dur].max(f64::MIN_POSITIVE).ln();
                    if need_grad {
                        for (d, value) in row[num_states..].iter_mut().enumerate() {
                            *value = w * (*value - if d == y_dur { 1.0 } else { 0.0 });
                        }
                    }
                } else if need_grad {
                    row[num_states..].iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::numeric(format!("loss became non-finite ({loss})")));
        }
        let grad = if need_grad {
            let mut g = feats.t().dot(&logits);
            if scale != 1.0 {
                g *= scale;
            }
            Some(g)
        } else {
            None
        };
        Ok((loss * scale, grad))
    }
}

/// Weighted cross-entropy loss over both heads; duration terms are skipped for
/// samples with a null duration label.
pub fn loss(params: &ParameterMatrix, samples: &[TrainSample]) -> Result<f64> {
    let design = DesignMatrix::from_samples(samples, params.num_states, params.num_durations)?;
    check_dims(params, &design)?;
    let (value, _) = design.eval(&params.values, params.num_states, 0..design.len(), 1.0, false)?;
    Ok(value)
}

/// Gradient of [`loss`] with respect to every coefficient: column `k` receives
/// `sum_i w_i (p_k(f_i) - 1{y_i = k}) f_i` within its head.
pub fn gradient(params: &ParameterMatrix, samples: &[TrainSample]) -> Result<Array2<f64>> {
    let design = DesignMatrix::from_samples(samples, params.num_states, params.num_durations)?;
    check_dims(params, &design)?;
    let (_, grad) = design.eval(&params.values, params.num_states, 0..design.len(), 1.0, true)?;
    Ok(grad.expect("gradient requested"))
}

fn check_dims(params: &ParameterMatrix, design: &DesignMatrix) -> Result<()> {
    if design.features.ncols() != params.num_features() {
        return Err(Error::invalid(format!(
            "feature length {} does not match parameter rows {}",
            design.features.ncols(),
            params.num_features()
        )));
    }
    Ok(())
}

/// Row-wise block soft-threshold: the exact minimizer of
/// `1/2 ||v - x||_F^2 + tau * sum_m ||x_m||_2`. Rows with norm below `tau`
/// become zero, all other rows shrink by `tau` in norm.
pub fn group_lasso_prox(v: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("prox threshold must be >= 0, got {tau}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("prox input contains non-finite entries"));
    }
    let mut out = v.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let norm = row.iter().map(|&x| x * x).sum::<f64>().sqrt();
        if norm <= tau {
            row.fill(0.0);
        } else {
            let shrink = 1.0 - tau / norm;
            row.iter_mut().for_each(|x| *x *= shrink);
        }
    }
    Ok(out)
}

/// Sum of the Euclidean norms of the parameter rows (the group-lasso penalty).
pub fn group_norm(params: &ParameterMatrix) -> f64 {
    group_norm_of(&params.values)
}

fn group_norm_of(values: &Array2<f64>) -> f64 {
    values
        .axis_iter(Axis(0))
        .map(|row| row.iter().map(|&x| x * x).sum::<f64>().sqrt())
        .sum()
}

fn frobenius(values: &Array2<f64>) -> f64 {
    values.iter().map(|&x| x * x).sum::<f64>().sqrt()
}

fn relative_change(new: &Array2<f64>, old: &Array2<f64>) -> f64 {
    let mut diff = 0.0;
    for (a, b) in new.iter().zip(old.iter()) {
        let d = a - b;
        diff += d * d;
    }
    let denom = frobenius(new);
    if denom == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff.sqrt() / denom
    }
}

/// Fits the regularized model by ADMM.
///
/// Initialization draws every coefficient from seeded `uniform(-0.01, 0.01)`,
/// with `x = theta` and `y = 0`. Each outer round runs gradient steps
/// `theta <- theta - beta (grad L + rho (theta - x + y))` with `beta = beta0 / k`
/// for outer round `k`, until the relative Frobenius change drops below
/// `epsilon` or `max_inner` is hit; then `x <- prox(theta + y, gamma / rho)`
/// and `y <- y + theta - x`. Outer rounds stop on the relative change of
/// `theta`. The returned model is the proximal iterate `x`, which carries
/// exact zero rows.
pub fn admm_fit(
    samples: &[TrainSample],
    num_states: usize,
    num_durations: usize,
    config: &SolverConfig,
) -> Result<AdmmOutcome> {
    config.validate()?;
    let design = DesignMatrix::from_samples(samples, num_states, num_durations)?;
    let m = design.features.ncols();
    let k_total = num_states + num_durations;
    let n = design.len();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut theta = Array2::from_shape_simple_fn((m, k_total), || rng.random_range(-0.01..0.01));
    let mut x = theta.clone();
    let mut y = Array2::<f64>::zeros((m, k_total));

    let tau = if config.gamma == 0.0 { 0.0 } else { config.gamma / config.rho };
    let mut total_inner = 0usize;
    let mut outer_done = 0usize;
    let mut converged = false;
    let mut batch_start = 0usize;
    let mut prev_outer_theta: Option<Array2<f64>> = None;

    for outer in 0..config.max_outer {
        let beta = config.beta0 / (outer + 1) as f64;
        for _ in 0..config.max_inner {
            total_inner += 1;
            let (rows, scale) = match config.batch_size {
                None => (0..n, 1.0),
                Some(b) if b >= n => (0..n, 1.0),
                Some(b) => {
                    let start = batch_start;
                    let end = (start + b).min(n);
                    batch_start = if end == n { 0 } else { end };
                    (start..end, n as f64 / (end - start) as f64)
                }
            };
            let (value, grad) = design
                .eval(&theta, num_states, rows, scale, true)
                .map_err(|e| Error::Solver {
                    iteration: total_inner,
                    message: e.to_string(),
                })?;
            if !value.is_finite() {
                return Err(Error::Solver {
                    iteration: total_inner,
                    message: format!("loss became non-finite ({value})"),
                });
            }
            let grad = grad.expect("gradient requested");
            let mut step = grad;
            step.zip_mut_with(&theta, |g, &t| *g += config.rho * t);
            step.zip_mut_with(&x, |g, &xv| *g -= config.rho * xv);
            step.zip_mut_with(&y, |g, &yv| *g += config.rho * yv);
            let previous = theta.clone();
            theta.zip_mut_with(&step, |t, &g| *t -= beta * g);
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Solver {
                    iteration: total_inner,
                    message: "parameters became non-finite".into(),
                });
            }
            if relative_change(&theta, &previous) <= config.epsilon {
                break;
            }
        }
        x = group_lasso_prox(
            &{
                let mut v = theta.clone();
                v += &y;
                v
            },
            tau,
        )?;
        y += &theta;
        y -= &x;
        outer_done = outer + 1;
        // Outer stopping on the relative change of theta between rounds.
        let stop = prev_outer_theta
            .as_ref()
            .is_some_and(|prev| relative_change(&theta, prev) <= config.epsilon);
        prev_outer_theta = Some(theta.clone());
        if stop {
            converged = true;
            break;
        }
    }

    let params = ParameterMatrix::new(x.clone(), num_states, num_durations)?;
    let theta_mat = ParameterMatrix::new(theta.clone(), num_states, num_durations)?;
    let (final_loss, _) = design.eval(&x, num_states, 0..n, 1.0, false)?;
    let (theta_loss, _) = design.eval(&theta, num_states, 0..n, 1.0, false)?;
    let mut residual = theta.clone();
    residual -= &x;
    let report = SolverReport {
        outer_iterations: outer_done,
        inner_iterations: total_inner,
        converged,
        final_loss,
        theta_loss,
        primal_residual: frobenius(&residual),
        nonzero_rows: params.nonzero_rows().len(),
        group_norm: group_norm(&params),
        returned_iterate: "prox".into(),
    };
    Ok(AdmmOutcome {
        params,
        theta: theta_mat,
        report,
    })
}
