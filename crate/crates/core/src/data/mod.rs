//! Datasets, ingestion, standardization, splitting and synthetic generators.

mod bundle;
mod npy;
mod synth;
mod tabular;

use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::seeded;
use crate::serde_util::matrix_rows;
use crate::{FppError, Result};

pub use bundle::{read_bundle, write_bundle, BundleMeta, ResponseMeta, FEATURES_FILE, META_FILE, RESPONSES_FILE};
pub use npy::{read_npy, read_npy_from, write_npy, write_npy_to};
pub use synth::{
    synth_blobs, synth_circle, synth_circle_with, synth_multi, synth_noise, CircleShape,
    MULTI_RESPONSE_FORMULAS,
};
pub use tabular::{load_csv, ColumnSelector};

/// Values of one response function, one entry per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseValues {
    Continuous {
        values: Vec<f64>,
    },
    Categorical {
        labels: Vec<usize>,
        class_count: usize,
        class_names: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    name: String,
    #[serde(flatten)]
    values: ResponseValues,
}

impl Response {
    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FppError::BadCell {
                row: i,
                column: name,
                message: "non-finite response value".into(),
            });
        }
        Ok(Response {
            name,
            values: ResponseValues::Continuous { values },
        })
    }

    /// Categorical response with labels in `0..class_count`.
    pub fn categorical(
        name: impl Into<String>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        let names = (0..class_count).map(|k| k.to_string()).collect();
        Self::categorical_named(name, labels, names)
    }

    pub fn categorical_named(
        name: impl Into<String>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let class_count = class_names.len();
        if class_count < 2 {
            return Err(FppError::invalid(format!(
                "categorical response needs at least 2 classes, found {class_count}"
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(FppError::LabelOutOfRange { label, class_count });
        }
        Ok(Response {
            name: name.into(),
            values: ResponseValues::Categorical {
                labels,
                class_count,
                class_names,
            },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &ResponseValues {
        &self.values
    }

    pub fn kind(&self) -> ResponseKind {
        match self.values {
            ResponseValues::Continuous { .. } => ResponseKind::Continuous,
            ResponseValues::Categorical { .. } => ResponseKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            ResponseValues::Continuous { values } => values.len(),
            ResponseValues::Categorical { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match &self.values {
            ResponseValues::Continuous { values } => Some(values),
            _ => None,
        }
    }

    pub fn as_categorical(&self) -> Option<(&[usize], usize)> {
        match &self.values {
            ResponseValues::Categorical {
                labels,
                class_count,
                ..
            } => Some((labels, *class_count)),
            _ => None,
        }
    }

    pub fn class_count(&self) -> Option<usize> {
        self.as_categorical().map(|(_, k)| k)
    }

    fn select(&self, rows: &[usize]) -> Response {
        let values = match &self.values {
            ResponseValues::Continuous { values } => ResponseValues::Continuous {
                values: rows.iter().map(|&r| values[r]).collect(),
            },
            ResponseValues::Categorical {
                labels,
                class_count,
                class_names,
            } => ResponseValues::Categorical {
                labels: rows.iter().map(|&r| labels[r]).collect(),
                class_count: *class_count,
                class_names: class_names.clone(),
            },
        };
        Response {
            name: self.name.clone(),
            values,
        }
    }

    fn permuted(&self, perm: &[usize]) -> Response {
        self.select(perm)
    }
}

/// Ground-truth subspace of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `D × 2` orthonormal basis of the plane the responses depend on.
    #[serde(with = "matrix_rows")]
    pub basis: Array2<f64>,
    pub description: String,
}

/// `N` samples in `D` dimensions plus `L` attached responses.
///
/// Features are reference counted: datasets derived by shuffling a response
/// share the feature matrix with their source.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Arc<Array2<f64>>,
    responses: Vec<Response>,
    column_names: Option<Vec<String>>,
    ground_truth: Option<GroundTruth>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, responses: Vec<Response>) -> Result<Self> {
        Self::from_shared(Arc::new(features), responses)
    }

    pub fn from_shared(features: Arc<Array2<f64>>, responses: Vec<Response>) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 {
            return Err(FppError::EmptyDataset);
        }
        if d == 0 {
            return Err(FppError::invalid("dataset has no feature columns"));
        }
        if let Some((row, _)) = features
            .rows()
            .into_iter()
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(FppError::BadCell {
                row,
                column: "features".into(),
                message: "non-finite feature value".into(),
            });
        }
        for r in &responses {
            if r.len() != n {
                return Err(FppError::DimensionMismatch {
                    expected: n,
                    actual: r.len(),
                });
            }
        }
        Ok(Dataset {
            features,
            responses,
            column_names: None,
            ground_truth: None,
        })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim() {
            return Err(FppError::DimensionMismatch {
                expected: self.dim(),
                actual: names.len(),
            });
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn with_ground_truth(mut self, truth: GroundTruth) -> Result<Self> {
        if truth.basis.dim() != (self.dim(), 2) {
            return Err(FppError::DimensionMismatch {
                expected: self.dim(),
                actual: truth.basis.nrows(),
            });
        }
        self.ground_truth = Some(truth);
        Ok(self)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn shared_features(&self) -> &Arc<Array2<f64>> {
        &self.features
    }

    pub fn responses(&self) -> &[Response] {
        &self.responses
    }

    pub fn response(&self, index: usize) -> Result<&Response> {
        self.responses.get(index).ok_or(FppError::IndexOutOfRange {
            index,
            len: self.responses.len(),
        })
    }

    pub fn sample_count(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    pub fn all_continuous(&self) -> bool {
        self.responses
            .iter()
            .all(|r| r.kind() == ResponseKind::Continuous)
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let features = self.features.select(Axis(0), rows);
        Dataset {
            features: Arc::new(features),
            responses: self.responses.iter().map(|r| r.select(rows)).collect(),
            column_names: self.column_names.clone(),
            ground_truth: self.ground_truth.clone(),
        }
    }

    /// Same responses over a new feature matrix with the same row count,
    /// e.g. after a random pre-projection. Column names and ground truth are
    /// dropped since they describe the old columns.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Dataset> {
        if features.nrows() != self.sample_count() {
            return Err(FppError::DimensionMismatch {
                expected: self.sample_count(),
                actual: features.nrows(),
            });
        }
        Dataset::new(features, self.responses.clone())
    }

    pub fn with_responses(&self, responses: Vec<Response>) -> Result<Dataset> {
        let mut d = Dataset::from_shared(self.features.clone(), responses)?;
        d.column_names = self.column_names.clone();
        d.ground_truth = self.ground_truth.clone();
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub mean: f64,
    pub scale: f64,
}

/// Per-column affine maps applied by [`standardize`]; sufficient to invert it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingInfo {
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    /// `Some` for continuous responses, `None` for categorical ones.
    pub responses: Vec<Option<ColumnScaling>>,
}

impl ScalingInfo {
    /// Apply the stored feature scaling to new rows.
    pub fn apply_features(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_dim(x)?;
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.feature_mean[j], self.feature_scale[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn invert_features(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_dim(z)?;
        let mut out = z.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.feature_mean[j], self.feature_scale[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        Ok(out)
    }

    fn check_dim(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.feature_mean.len() {
            return Err(FppError::DimensionMismatch {
                expected: self.feature_mean.len(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }
}

/// Mean and population standard deviation; constant columns report scale 1.
fn column_scaling<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> (ColumnScaling, bool) {
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values.clone() {
        n += 1;
        sum += v;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let mean = sum / n as f64;
    if lo == hi {
        return (ColumnScaling { mean, scale: 1.0 }, true);
    }
    let var = values.map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };
    (ColumnScaling { mean, scale }, false)
}

/// Standardize feature columns and continuous responses to zero mean and unit
/// population standard deviation. Constant columns map to all zeros with
/// scale 1. Categorical responses are left untouched.
pub fn standardize(d: &Dataset) -> (Dataset, ScalingInfo) {
    let mut features = d.features().clone();
    let mut feature_mean = Vec::with_capacity(d.dim());
    let mut feature_scale = Vec::with_capacity(d.dim());
    for mut col in features.columns_mut() {
        let (cs, constant) = column_scaling(col.iter());
        if constant {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| (v - cs.mean) / cs.scale);
        }
        feature_mean.push(cs.mean);
        feature_scale.push(cs.scale);
    }

    let mut scalings = Vec::with_capacity(d.responses.len());
    let responses = d
        .responses
        .iter()
        .map(|r| match &r.values {
            ResponseValues::Continuous { values } => {
                let (cs, constant) = column_scaling(values.iter());
                let values = if constant {
                    vec![0.0; values.len()]
                } else {
                    values.iter().map(|v| (v - cs.mean) / cs.scale).collect()
                };
                scalings.push(Some(cs));
                Response {
                    name: r.name.clone(),
                    values: ResponseValues::Continuous { values },
                }
            }
            ResponseValues::Categorical { .. } => {
                scalings.push(None);
                r.clone()
            }
        })
        .collect();

    let out = Dataset {
        features: Arc::new(features),
        responses,
        column_names: d.column_names.clone(),
        ground_truth: d.ground_truth.clone(),
    };
    let info = ScalingInfo {
        feature_mean,
        feature_scale,
        responses: scalings,
    };
    (out, info)
}

/// Result of [`train_test_split`].
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub stratified: bool,
    /// Set when stratification was requested by a categorical response but
    /// had to fall back to an unstratified split.
    pub warning: Option<String>,
}

/// Disjoint random row partition with `⌈N·(1 − test_fraction)⌉` training
/// rows. When the dataset has a categorical response, the first such
/// response stratifies the split.
pub fn train_test_split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(FppError::invalid(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = d.sample_count();
    let n_train = ((n as f64) * (1.0 - test_fraction)).ceil() as usize;
    let n_test = n.saturating_sub(n_train);
    if n_train == 0 || n_test == 0 {
        return Err(FppError::invalid(format!(
            "split of {n} samples at fraction {test_fraction} leaves an empty side"
        )));
    }
    let mut rng = seeded(seed);

    let strat = d.responses.iter().find_map(|r| r.as_categorical());
    let mut warning = None;
    let mut test_rows = None;
    if let Some((labels, k)) = strat {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        if members.iter().any(|m| m.len() < 2) {
            warning = Some("a class has fewer than 2 members; split is not stratified".into());
        } else {
            let quotas = apportion(n_test, &members.iter().map(Vec::len).collect::<Vec<_>>());
            let mut rows = Vec::with_capacity(n_test);
            for (m, q) in members.iter_mut().zip(quotas) {
                m.shuffle(&mut rng);
                rows.extend_from_slice(&m[..q]);
            }
            test_rows = Some(rows);
        }
    }
    let stratified = test_rows.is_some();
    let mut test_rows = test_rows.unwrap_or_else(|| {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all.truncate(n_test);
        all
    });
    test_rows.sort_unstable();
    let mut in_test = vec![false; n];
    for &r in &test_rows {
        in_test[r] = true;
    }
    let train_rows: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();

    Ok(Split {
        train: d.select_rows(&train_rows),
        test: d.select_rows(&test_rows),
        train_rows,
        test_rows,
        stratified,
        warning,
    })
}

/// Largest-remainder apportionment of `total` test rows over classes of the
/// given sizes, keeping at least one training row per class where possible.
fn apportion(total: usize, sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let exact: Vec<f64> = sizes
        .iter()
        .map(|&s| total as f64 * s as f64 / n as f64)
        .collect();
    let mut quota: Vec<usize> = exact
        .iter()
        .zip(sizes)
        .map(|(&e, &s)| (e.floor() as usize).min(s.saturating_sub(1)))
        .collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - quota[a] as f64;
        let fb = exact[b] - quota[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut assigned: usize = quota.iter().sum();
    // first pass respects the one-train-row floor, second pass fills the rest
    for floor in [1usize, 0] {
        for &c in order.iter().cycle().take(order.len() * total.max(1)) {
            if assigned >= total {
                break;
            }
            if quota[c] + floor < sizes[c] {
                quota[c] += 1;
                assigned += 1;
            }
        }
    }
    quota
}

/// Copy of `d` whose response `response_index` is a seeded uniform random
/// permutation of the original values. Features are shared, not copied.
pub fn shuffle_response(d: &Dataset, response_index: usize, seed: u64) -> Result<Dataset> {
    d.response(response_index)?;
    let mut perm: Vec<usize> = (0..d.sample_count()).collect();
    perm.shuffle(&mut seeded(seed));
    let mut responses = d.responses.clone();
    responses[response_index] = d.responses[response_index].permuted(&perm);
    d.with_responses(responses)
}
