//! End-to-end driver: standardize, optionally pre-project, split, fit and
//! evaluate, then optionally compare the fit against shuffled refits.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{standardize, train_test_split, Dataset, ScalingInfo};
use crate::linalg::orthonormalize_columns;
use crate::optimizer::{
    compose, fit, principal_angles, random_projection_preprocess, score_heads, FitResult, HyperParams,
    ProjectionMatrix,
};
use crate::rng::derive_seed;
use crate::serde_util::opt_matrix_rows;
use crate::significance::{null_samples, overfit_verdict, OverfitAssessment, SignificanceReport};
use crate::{FppError, Result};

/// Stream labels for seeds the pipeline derives from the fit seed.
mod streams {
    pub const SPLIT: u64 = 101;
    pub const PRE_PROJECTION: u64 = 102;
    pub const NULL: u64 = 103;
}

/// Settings for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub hyperparams: HyperParams,
    /// Held-out fraction in `(0, 1)`; `None` fits on every row.
    pub test_fraction: Option<f64>,
    /// Random pre-projection to this many dimensions before fitting.
    pub pre_dim: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            hyperparams: HyperParams::default(),
            test_fraction: Some(0.2),
            pre_dim: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyperparams.validate()?;
        if let Some(f) = self.test_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(FppError::invalid(format!("test_fraction must lie in (0, 1), got {f}")));
            }
        }
        if let Some(d) = self.pre_dim {
            if d < 2 {
                return Err(FppError::invalid("pre_dim must be at least 2"));
            }
        }
        Ok(())
    }

    /// Check against a concrete dataset before any work starts.
    pub fn validate_for(&self, data: &Dataset) -> Result<()> {
        self.validate()?;
        if data.responses().is_empty() {
            return Err(FppError::invalid("dataset has no responses to fit"));
        }
        if let Some(d) = self.pre_dim {
            if d >= data.dim() {
                return Err(FppError::invalid(format!(
                    "pre_dim {d} must be below the feature dimension {}",
                    data.dim()
                )));
            }
        }
        let n = data.sample_count();
        let n_train = match self.test_fraction {
            Some(f) => (n as f64 * (1.0 - f)).ceil() as usize,
            None => n,
        };
        if self.test_fraction.is_some() && n_train >= n {
            return Err(FppError::invalid(format!("{n} samples are too few to hold out a test set")));
        }
        self.hyperparams.validate_for(n_train)
    }
}

/// Data after the transforms that precede fitting.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub stratified: bool,
    pub split_warning: Option<String>,
    pub scaling: Option<ScalingInfo>,
    pub pre_projection: Option<Array2<f64>>,
}

pub fn prepare(data: &Dataset, cfg: &PipelineConfig) -> Result<Prepared> {
    cfg.validate_for(data)?;
    let seed = cfg.hyperparams.seed;
    let (data, scaling) = if cfg.hyperparams.standardize {
        let (d, s) = standardize(data);
        (d, Some(s))
    } else {
        (data.clone(), None)
    };
    let (data, pre_projection) = match cfg.pre_dim {
        Some(k) => {
            let r = random_projection_preprocess(data.dim(), k, derive_seed(seed, streams::PRE_PROJECTION))?;
            (data.with_features(data.features().dot(&r))?, Some(r))
        }
        None => (data, None),
    };
    match cfg.test_fraction {
        Some(f) => {
            let s = train_test_split(&data, f, derive_seed(seed, streams::SPLIT))?;
            Ok(Prepared {
                train: s.train,
                test: Some(s.test),
                train_rows: s.train_rows,
                test_rows: s.test_rows,
                stratified: s.stratified,
                split_warning: s.warning,
                scaling,
                pre_projection,
            })
        }
        None => Ok(Prepared {
            train_rows: (0..data.sample_count()).collect(),
            train: data,
            test: None,
            test_rows: Vec::new(),
            stratified: false,
            split_warning: None,
            scaling,
            pre_projection,
        }),
    }
}

/// Angles between the fitted plane and a known generating plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceRecovery {
    pub smaller_angle_deg: f64,
    pub largest_angle_deg: f64,
}

/// Everything needed to reapply a fit to new rows and to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub version: String,
    pub config: PipelineConfig,
    pub fit: FitResult,
    pub sample_count: usize,
    pub dim: usize,
    pub column_names: Vec<String>,
    pub scaling: Option<ScalingInfo>,
    /// `D × D′` random pre-projection, when used.
    #[serde(with = "opt_matrix_rows", default, skip_serializing_if = "Option::is_none")]
    pub pre_projection: Option<Array2<f64>>,
    /// `D × 2` map from (standardized) inputs to the plane.
    pub composite_projection: ProjectionMatrix,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub stratified: bool,
    pub split_warning: Option<String>,
    /// Present when the data carried a generating plane.
    pub recovery: Option<SubspaceRecovery>,
}

impl FitReport {
    /// Embed raw feature rows exactly as during fitting.
    pub fn embed(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim {
            return Err(FppError::DimensionMismatch {
                expected: self.dim,
                actual: x.ncols(),
            });
        }
        let z = match &self.scaling {
            Some(s) => s.apply_features(x)?,
            None => x.clone(),
        };
        let z = match &self.pre_projection {
            Some(r) => z.dot(r),
            None => z,
        };
        self.fit.projection.project(z.view())
    }

    pub fn mean_train_score(&self) -> f64 {
        mean(self.fit.scores.iter().map(|s| s.train))
    }

    pub fn mean_test_score(&self) -> Option<f64> {
        let tests: Option<Vec<f64>> = self.fit.scores.iter().map(|s| s.test).collect();
        tests.map(|t| mean(t.into_iter()))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

/// Column names, falling back to `x1 … xD`.
pub fn column_names(data: &Dataset) -> Vec<String> {
    data.column_names()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| (1..=data.dim()).map(|i| format!("x{i}")).collect())
}

/// The generating plane expressed in standardized coordinates.
fn truth_in_model_space(basis: &Array2<f64>, scaling: Option<&ScalingInfo>) -> Result<ProjectionMatrix> {
    // bᵀx = bᵀ(s ∘ z + m), so the plane in z-space is spanned by diag(s) b
    let mut b = basis.clone();
    if let Some(s) = scaling {
        for (mut row, &scale) in b.rows_mut().into_iter().zip(&s.feature_scale) {
            row *= scale;
        }
    }
    let q = orthonormalize_columns(b).ok_or(FppError::RankDeficient { sigma_min: 0.0 })?;
    ProjectionMatrix::new(q)
}

/// Run the full pipeline and score the fit on the held-out rows.
pub fn run_fit(data: &Dataset, cfg: &PipelineConfig) -> Result<(FitReport, Prepared)> {
    let prepared = prepare(data, cfg)?;
    let mut result = fit(&prepared.train, &cfg.hyperparams)?;
    if let Some(test) = &prepared.test {
        let scores = score_heads(test.features().view(), &result.projection, &result.heads, test.responses())?;
        for (s, t) in result.scores.iter_mut().zip(scores) {
            s.test = Some(t);
        }
    }
    let composite = match &prepared.pre_projection {
        Some(r) => compose(r, &result.projection)?,
        None => result.projection.clone(),
    };
    let recovery = match data.ground_truth() {
        Some(gt) => {
            let truth = truth_in_model_space(&gt.basis, prepared.scaling.as_ref())?;
            let (a, b) = principal_angles(&composite, &truth)?;
            Some(SubspaceRecovery {
                smaller_angle_deg: a.to_degrees(),
                largest_angle_deg: b.to_degrees(),
            })
        }
        None => None,
    };
    let report = FitReport {
        version: crate::VERSION.to_string(),
        config: cfg.clone(),
        fit: result,
        sample_count: data.sample_count(),
        dim: data.dim(),
        column_names: column_names(data),
        scaling: prepared.scaling.clone(),
        pre_projection: prepared.pre_projection.clone(),
        composite_projection: composite,
        train_rows: prepared.train_rows.clone(),
        test_rows: prepared.test_rows.clone(),
        stratified: prepared.stratified,
        split_warning: prepared.split_warning.clone(),
        recovery,
    };
    Ok((report, prepared))
}

/// Significance of a fitted report plus the overfitting verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueReport {
    pub version: String,
    pub loss: SignificanceReport,
    /// Mean training R² against its null, when every response is continuous.
    pub r2: Option<SignificanceReport>,
    pub assessment: OverfitAssessment,
}

/// Refit `trials` times on shuffled copies of the prepared training set and
/// rank the observed training loss among them.
pub fn run_pvalue(report: &FitReport, prepared: &Prepared, trials: usize, threshold: f64) -> Result<PValueReport> {
    let hp = &report.config.hyperparams;
    let nulls = null_samples(&prepared.train, hp, trials, derive_seed(hp.seed, streams::NULL))?;
    let loss = SignificanceReport::new(report.fit.final_train_loss, nulls.loss, threshold)?;
    let r2 = match nulls.r2 {
        Some(null) => Some(SignificanceReport::new(report.mean_train_score(), null, threshold)?),
        None => None,
    };
    let train = report.mean_train_score();
    let test = report.mean_test_score().unwrap_or(train);
    let assessment = overfit_verdict(loss.p_value(), train, test, threshold);
    Ok(PValueReport {
        version: crate::VERSION.to_string(),
        loss,
        r2,
        assessment,
    })
}

/// Rows of an `n × 2` matrix as points.
pub fn points(y: ArrayView2<f64>) -> Vec<[f64; 2]> {
    y.rows().into_iter().map(|r| [r[0], r[1]]).collect()
}
