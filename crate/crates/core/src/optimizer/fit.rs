//! The joint mini-batch training loop over the projection and the heads.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::projection::{random_orthonormal_with, retract_with, ProjectionMatrix, RetractionMode};
use crate::data::{Dataset, Response, ResponseValues};
use crate::linalg::orthonormality_error;
use crate::models::{Head, Target, DEFAULT_HIDDEN_WIDTH};
use crate::rng::{derive_seed, seeded, streams};
use crate::{FppError, Result};

/// Batch loss above this multiple of the first batch loss counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Learning-rate halvings allowed before giving up.
pub const MAX_HALVINGS: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain stochastic gradient descent.
    Sgd,
    /// Adaptive moment estimation with β₁ = 0.9, β₂ = 0.999.
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// The same step size throughout.
    Constant,
    /// Step size `γ · (1 + cos(π t))/2` at training progress `t ∈ [0, 1)`.
    #[default]
    Cosine,
}

impl LrSchedule {
    fn factor(self, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos()),
        }
    }
}

/// Training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Polynomial degree of every continuous-response head.
    pub degree: usize,
    /// Hidden width of every categorical-response head (0 = linear softmax).
    pub hidden_width: usize,
    /// Standardize features and continuous responses before fitting. Applied
    /// by the pipeline; [`fit`] consumes data as given.
    pub standardize: bool,
    pub retraction: RetractionMode,
    pub optimizer: OptimizerKind,
    pub schedule: LrSchedule,
    /// Independent random initializations; the one with the lowest final
    /// training loss is kept.
    pub restarts: usize,
}

/// Default step size for the adaptive optimizer.
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

/// Default number of independent initializations per fit.
pub const DEFAULT_RESTARTS: usize = 5;

/// Defaults: batches of 50 for 50 epochs with a degree-3 head, trained by
/// Adam at `γ = 0.1` with cosine decay, best of 5 starts. Radially
/// symmetric responses put plain SGD at a saddle it leaves only slowly in
/// higher dimensions, and the decay removes the jitter a constant adaptive
/// step leaves behind. [`HyperParams::plain_sgd`] gives the constant-step
/// single-start SGD configuration.
///
/// From a few hundred dimensions on, and whenever `D` far exceeds `N`, each
/// step can turn the plane toward the handful of samples in the batch and
/// blow up the head. Use `γ ≈ 0.01` or a random pre-projection there.
impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: 50,
            epochs: 50,
            seed: 0,
            degree: 3,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            standardize: true,
            retraction: RetractionMode::PolarFactor,
            optimizer: OptimizerKind::Adam,
            schedule: LrSchedule::Cosine,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

impl HyperParams {
    /// Plain SGD with a constant step of `0.01`.
    pub fn plain_sgd() -> Self {
        HyperParams {
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Sgd,
            schedule: LrSchedule::Constant,
            restarts: 1,
            ..HyperParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FppError::invalid("learning_rate must be a positive number"));
        }
        if self.batch_size == 0 {
            return Err(FppError::invalid("batch_size must be positive"));
        }
        if self.epochs == 0 {
            return Err(FppError::invalid("epochs must be positive"));
        }
        if self.degree == 0 {
            return Err(FppError::invalid("degree must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(FppError::invalid("restarts must be at least 1"));
        }
        Ok(())
    }

    /// Check against a training set of `n` samples.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        if self.batch_size > n {
            return Err(FppError::invalid(format!(
                "batch_size {} exceeds the {n} training samples",
                self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    R2,
    Accuracy,
}

/// Fit quality for one response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseScore {
    pub name: String,
    pub metric: Metric,
    pub train: f64,
    pub test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub projection: ProjectionMatrix,
    pub heads: Vec<Head>,
    /// Size-weighted mean batch loss of every epoch.
    pub loss_history: Vec<f64>,
    /// Objective on the full training set after the last step.
    pub final_train_loss: f64,
    /// Per-response losses on the full training set after the last step.
    pub final_response_losses: Vec<f64>,
    pub scores: Vec<ResponseScore>,
    pub epochs_run: usize,
    pub seed: u64,
    /// Which random initialization was kept.
    pub restart_index: usize,
    pub learning_rate_final: f64,
    pub halvings: usize,
    /// Number of retractions that had to replace a collapsed column.
    pub recoveries: usize,
    pub hyperparams: HyperParams,
}

impl FitResult {
    pub fn embed(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.projection.project(x)
    }
}

/// Per-step report passed to an observer.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub restart: usize,
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub learning_rate: f64,
    /// `‖PᵀP − I‖_F` after the retraction.
    pub orthonormality_error: f64,
    pub recovered: bool,
}

/// The objective and its gradients on one batch.
#[derive(Debug, Clone)]
pub struct ObjectiveGradients {
    /// Mean of the per-response losses.
    pub loss: f64,
    pub per_response: Vec<f64>,
    /// `∂loss/∂P`, same shape as `P`.
    pub projection: Array2<f64>,
    pub heads: Vec<Vec<f64>>,
}

/// Evaluate the equally weighted multi-response objective at an arbitrary
/// (not necessarily orthonormal) `D × 2` matrix `p`.
pub fn batch_objective(
    x: ArrayView2<f64>,
    p: ArrayView2<f64>,
    heads: &[Head],
    targets: &[Target],
) -> Result<ObjectiveGradients> {
    if heads.is_empty() || heads.len() != targets.len() {
        return Err(FppError::invalid("need one head per response"));
    }
    if p.nrows() != x.ncols() || p.ncols() != 2 {
        return Err(FppError::DimensionMismatch {
            expected: x.ncols(),
            actual: p.nrows(),
        });
    }
    let y = x.dot(&p);
    let weight = 1.0 / heads.len() as f64;
    let mut dy = Array2::<f64>::zeros(y.raw_dim());
    let mut loss = 0.0;
    let mut per_response = Vec::with_capacity(heads.len());
    let mut head_grads = Vec::with_capacity(heads.len());
    for (head, target) in heads.iter().zip(targets) {
        let g = head.loss_and_gradients(y.view(), *target)?;
        loss += weight * g.loss;
        per_response.push(g.loss);
        dy.scaled_add(weight, &g.inputs);
        head_grads.push(g.params.into_iter().map(|v| weight * v).collect());
    }
    Ok(ObjectiveGradients {
        loss,
        per_response,
        projection: x.t().dot(&dy),
        heads: head_grads,
    })
}

/// Objective and per-response losses on a full dataset without gradients.
pub fn evaluate_objective(
    x: ArrayView2<f64>,
    projection: &ProjectionMatrix,
    heads: &[Head],
    responses: &[Response],
) -> Result<(f64, Vec<f64>)> {
    let y = projection.project(x)?;
    let losses = heads
        .iter()
        .zip(responses)
        .map(|(h, r)| h.loss(y.view(), Target::of(r)))
        .collect::<Result<Vec<_>>>()?;
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    Ok((mean, losses))
}

/// R² or accuracy of every head on `(x, responses)`.
pub fn score_heads(
    x: ArrayView2<f64>,
    projection: &ProjectionMatrix,
    heads: &[Head],
    responses: &[Response],
) -> Result<Vec<f64>> {
    let y = projection.project(x)?;
    heads
        .iter()
        .zip(responses)
        .map(|(h, r)| h.score(y.view(), Target::of(r)))
        .collect()
}

enum Buffer {
    Continuous(Vec<f64>),
    Categorical(Vec<usize>),
}

impl Buffer {
    fn fill(&mut self, response: &Response, rows: &[usize]) {
        match (self, response.values()) {
            (Buffer::Continuous(buf), ResponseValues::Continuous { values }) => {
                buf.clear();
                buf.extend(rows.iter().map(|&i| values[i]));
            }
            (Buffer::Categorical(buf), ResponseValues::Categorical { labels, .. }) => {
                buf.clear();
                buf.extend(rows.iter().map(|&i| labels[i]));
            }
            _ => unreachable!("buffer kind follows the response kind"),
        }
    }

    fn target(&self) -> Target<'_> {
        match self {
            Buffer::Continuous(v) => Target::Continuous(v),
            Buffer::Categorical(v) => Target::Categorical(v),
        }
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(sizes: impl Iterator<Item = usize>) -> Self {
        let m: Vec<Vec<f64>> = sizes.map(|n| vec![0.0; n]).collect();
        let v = m.clone();
        Adam { m, v, t: 0 }
    }

    fn begin_step(&mut self) -> (f64, f64) {
        self.t += 1;
        (1.0 - Self::BETA1.powi(self.t), 1.0 - Self::BETA2.powi(self.t))
    }

    fn update(&mut self, slot: usize, params: &mut [f64], grad: &[f64], lr: f64, bias: (f64, f64)) {
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..params.len() {
            m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * grad[i];
            v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mh = m[i] / bias.0;
            let vh = v[i] / bias.1;
            params[i] -= lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

#[derive(Clone)]
struct Snapshot {
    p: Array2<f64>,
    heads: Vec<Head>,
    adam: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>, i32)>,
}

/// Fit a projection and one head per response by mini-batch gradient
/// descent with a retraction after every step.
pub fn fit(data: &Dataset, hp: &HyperParams) -> Result<FitResult> {
    fit_with_observer(data, hp, None)
}

/// [`fit`] with a callback invoked after every optimizer step.
pub fn fit_with_observer(
    data: &Dataset,
    hp: &HyperParams,
    mut observer: Option<&mut dyn FnMut(&StepInfo)>,
) -> Result<FitResult> {
    if data.responses().is_empty() {
        return Err(FppError::invalid("fitting needs at least one response"));
    }
    if data.dim() < 2 {
        return Err(FppError::invalid("fitting needs at least two feature columns"));
    }
    hp.validate_for(data.sample_count())?;
    let observing = observer.is_some();
    let mut noop = |_: &StepInfo| {};
    let obs: &mut dyn FnMut(&StepInfo) = match observer.take() {
        Some(o) => o,
        None => &mut noop,
    };
    let mut best: Option<FitResult> = None;
    for restart in 0..hp.restarts {
        let seed = if restart == 0 {
            hp.seed
        } else {
            derive_seed(hp.seed, streams::RESTART_BASE + restart as u64)
        };
        let mut r = fit_once(data, hp, seed, restart, observing.then_some(&mut *obs))?;
        r.seed = hp.seed;
        r.restart_index = restart;
        if best
            .as_ref()
            .is_none_or(|b| r.final_train_loss < b.final_train_loss)
        {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn fit_once(
    data: &Dataset,
    hp: &HyperParams,
    seed: u64,
    restart: usize,
    mut observer: Option<&mut dyn FnMut(&StepInfo)>,
) -> Result<FitResult> {
    let x = data.features();
    let n = data.sample_count();
    let dim = data.dim();
    let responses = data.responses();

    let mut p = random_orthonormal_with(dim, &mut seeded(derive_seed(seed, streams::INIT)))?.into_matrix();
    let mut head_rng = seeded(derive_seed(seed, streams::HEAD_INIT));
    let mut heads = responses
        .iter()
        .map(|r| Head::init_for(r, hp.degree, hp.hidden_width, &mut head_rng))
        .collect::<Result<Vec<_>>>()?;
    let mut batch_rng = seeded(derive_seed(seed, streams::BATCHES));
    let mut recovery_rng = seeded(derive_seed(seed, streams::RECOVERY));
    let mut adam = match hp.optimizer {
        OptimizerKind::Sgd => None,
        OptimizerKind::Adam => Some(Adam::new(
            std::iter::once(p.len()).chain(heads.iter().map(|h| h.params().len())),
        )),
    };

    let mut buffers: Vec<Buffer> = responses
        .iter()
        .map(|r| match r.values() {
            ResponseValues::Continuous { .. } => Buffer::Continuous(Vec::with_capacity(hp.batch_size)),
            ResponseValues::Categorical { .. } => Buffer::Categorical(Vec::with_capacity(hp.batch_size)),
        })
        .collect();
    let mut xb = Array2::<f64>::zeros((hp.batch_size, dim));
    let mut order: Vec<usize> = (0..n).collect();
    let mut lr = hp.learning_rate;
    let mut halvings = 0;
    let mut recoveries = 0;
    let mut reference_loss: Option<f64> = None;
    let mut history = Vec::with_capacity(hp.epochs);
    // Adam moves every entry of P by about the step size, so the rotation of
    // the plane per step grows like √D. This keeps it near γ at any D.
    let projection_step_scale = (2.0 / dim as f64).sqrt();
    let steps_per_epoch = n.div_ceil(hp.batch_size);
    let total_steps = steps_per_epoch * hp.epochs;

    for epoch in 0..hp.epochs {
        order.shuffle(&mut batch_rng);
        let snapshot = Snapshot {
            p: p.clone(),
            heads: heads.clone(),
            adam: adam.as_ref().map(|a| (a.m.clone(), a.v.clone(), a.t)),
        };
        'attempt: loop {
            let mut epoch_loss = 0.0;
            let mut epoch_recoveries = 0;
            for (batch, rows) in order.chunks(hp.batch_size).enumerate() {
                if rows.len() != xb.nrows() {
                    xb = Array2::zeros((rows.len(), dim));
                }
                for (dst, &i) in xb.rows_mut().into_iter().zip(rows) {
                    let mut dst = dst;
                    dst.assign(&x.row(i));
                }
                for (buf, r) in buffers.iter_mut().zip(responses) {
                    buf.fill(r, rows);
                }
                let targets: Vec<Target> = buffers.iter().map(Buffer::target).collect();
                let g = batch_objective(xb.view(), p.view(), &heads, &targets)?;

                let reference = *reference_loss.get_or_insert(g.loss);
                let diverged = !g.loss.is_finite() || g.loss > DIVERGENCE_FACTOR * reference.max(f64::MIN_POSITIVE);
                if diverged {
                    if halvings >= MAX_HALVINGS {
                        return Err(if g.loss.is_finite() {
                            FppError::Diverged { epoch, halvings }
                        } else {
                            FppError::NonFiniteLoss { epoch, batch }
                        });
                    }
                    halvings += 1;
                    lr *= 0.5;
                    p = snapshot.p.clone();
                    heads = snapshot.heads.clone();
                    if let (Some(a), Some((m, v, t))) = (adam.as_mut(), snapshot.adam.clone()) {
                        a.m = m;
                        a.v = v;
                        a.t = t;
                    }
                    continue 'attempt;
                }
                epoch_loss += g.loss * rows.len() as f64;
                let step_lr = lr * hp.schedule.factor(epoch * steps_per_epoch + batch, total_steps);

                match adam.as_mut() {
                    None => {
                        p.scaled_add(-step_lr, &g.projection);
                        for (h, gh) in heads.iter_mut().zip(&g.heads) {
                            for (w, d) in h.params_mut().iter_mut().zip(gh) {
                                *w -= step_lr * d;
                            }
                        }
                    }
                    Some(a) => {
                        let bias = a.begin_step();
                        let grad_p = g.projection.as_standard_layout();
                        a.update(
                            0,
                            p.as_slice_mut().expect("standard layout"),
                            grad_p.as_slice().expect("standard layout"),
                            step_lr * projection_step_scale,
                            bias,
                        );
                        for (k, (h, gh)) in heads.iter_mut().zip(&g.heads).enumerate() {
                            a.update(k + 1, h.params_mut(), gh, step_lr, bias);
                        }
                    }
                }
                let r = retract_with(p.view(), hp.retraction, &mut recovery_rng)?;
                p = r.projection.into_matrix();
                if r.recovered {
                    epoch_recoveries += 1;
                }
                if let Some(obs) = observer.as_deref_mut() {
                    obs(&StepInfo {
                        restart,
                        epoch,
                        batch,
                        loss: g.loss,
                        learning_rate: step_lr,
                        orthonormality_error: orthonormality_error(p.view()),
                        recovered: r.recovered,
                    });
                }
            }
            recoveries += epoch_recoveries;
            history.push(epoch_loss / n as f64);
            break;
        }
    }

    let projection = ProjectionMatrix::new(p)?;
    let (final_train_loss, final_response_losses) =
        evaluate_objective(x.view(), &projection, &heads, responses)?;
    if !final_train_loss.is_finite() {
        return Err(FppError::NonFiniteLoss {
            epoch: hp.epochs,
            batch: 0,
        });
    }
    let train = score_heads(x.view(), &projection, &heads, responses)?;
    let scores = responses
        .iter()
        .zip(train)
        .map(|(r, s)| ResponseScore {
            name: r.name().to_string(),
            metric: match r.values() {
                ResponseValues::Continuous { .. } => Metric::R2,
                ResponseValues::Categorical { .. } => Metric::Accuracy,
            },
            train: s,
            test: None,
        })
        .collect();
    Ok(FitResult {
        projection,
        heads,
        loss_history: history,
        final_train_loss,
        final_response_losses,
        scores,
        epochs_run: hp.epochs,
        seed,
        restart_index: restart,
        learning_rate_final: lr,
        halvings,
        recoveries,
        hyperparams: hp.clone(),
    })
}
