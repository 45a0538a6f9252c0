//! Trustworthiness of a fitted projection.
//!
//! The null hypothesis is that the response carries no structure a 2D view
//! could reveal. It is sampled by shuffling every response across samples
//! and rerunning the whole fit, projection included, from a fresh random
//! start. The observed fit is then ranked against those null fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::{shuffle_response, standardize, synth_noise, Dataset};
use crate::optimizer::{fit, FitResult, HyperParams};
use crate::rng::{derive_seed, streams};
use crate::{FppError, Result};

/// Significance level used for verdicts.
pub const DEFAULT_THRESHOLD: f64 = 0.05;
/// Default number of shuffled refits.
pub const DEFAULT_TRIALS: usize = 300;
/// Relative train-to-test score drop above which a fit is suspect.
pub const MAX_RELATIVE_DROP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Lower is a stronger pattern.
    Loss,
    /// Higher is a stronger pattern.
    R2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub metric_kind: MetricKind,
    pub samples: Vec<f64>,
    pub trial_seeds: Vec<u64>,
    pub fit_hyperparams: HyperParams,
}

impl NullDistribution {
    pub fn new(
        metric_kind: MetricKind,
        samples: Vec<f64>,
        trial_seeds: Vec<u64>,
        fit_hyperparams: HyperParams,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(FppError::invalid("a null distribution needs at least 2 trials"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(FppError::invalid("null samples must be finite"));
        }
        if trial_seeds.len() != samples.len() {
            return Err(FppError::DimensionMismatch {
                expected: samples.len(),
                actual: trial_seeds.len(),
            });
        }
        Ok(NullDistribution {
            metric_kind,
            samples,
            trial_seeds,
            fit_hyperparams,
        })
    }

    pub fn trials(&self) -> usize {
        self.samples.len()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Sample standard deviation (`T − 1` denominator).
    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let ss: f64 = self.samples.iter().map(|s| (s - m) * (s - m)).sum();
        (ss / (self.samples.len() - 1) as f64).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Loss and (when every response is continuous) mean training R² null
/// distributions from the same set of shuffled refits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSamples {
    pub loss: NullDistribution,
    pub r2: Option<NullDistribution>,
}

/// Seed of null trial `t`.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, streams::TRIAL_BASE + t as u64)
}

/// Shuffle every response of `data` with streams derived from `seed`.
pub fn shuffle_all(data: &Dataset, seed: u64) -> Result<Dataset> {
    let mut d = data.clone();
    for l in 0..data.responses().len() {
        d = shuffle_response(&d, l, derive_seed(seed, l as u64))?;
    }
    Ok(d)
}

fn mean_score(r: &FitResult) -> f64 {
    r.scores.iter().map(|s| s.train).sum::<f64>() / r.scores.len() as f64
}

/// Refit on `trials` independently shuffled copies of `data`.
///
/// Trials run in parallel on the current rayon pool; every trial draws its
/// shuffle and its initialization from its own derived seed, so the result
/// does not depend on scheduling.
pub fn null_samples(data: &Dataset, hp: &HyperParams, trials: usize, seed: u64) -> Result<NullSamples> {
    if trials < 2 {
        return Err(FppError::invalid(format!("need at least 2 null trials, got {trials}")));
    }
    hp.validate_for(data.sample_count())?;
    let continuous = data.all_continuous();
    let seeds: Vec<u64> = (0..trials).map(|t| trial_seed(seed, t)).collect();
    let outcomes = seeds
        .par_iter()
        .enumerate()
        .map(|(t, &s)| -> Result<(f64, f64)> {
            let wrap = |e: FppError| FppError::Trial {
                trial: t,
                source: Box::new(e),
            };
            let shuffled = shuffle_all(data, s).map_err(wrap)?;
            let trial_hp = HyperParams {
                seed: derive_seed(s, streams::INIT),
                ..hp.clone()
            };
            let r = fit(&shuffled, &trial_hp).map_err(wrap)?;
            let r2 = if continuous { mean_score(&r) } else { f64::NAN };
            Ok((r.final_train_loss, r2))
        })
        .collect::<Result<Vec<_>>>()?;
    let loss = NullDistribution::new(
        MetricKind::Loss,
        outcomes.iter().map(|o| o.0).collect(),
        seeds.clone(),
        hp.clone(),
    )?;
    let r2 = if continuous {
        Some(NullDistribution::new(
            MetricKind::R2,
            outcomes.iter().map(|o| o.1).collect(),
            seeds,
            hp.clone(),
        )?)
    } else {
        None
    };
    Ok(NullSamples { loss, r2 })
}

/// Final training losses of `trials` shuffled refits.
pub fn null_distribution(data: &Dataset, hp: &HyperParams, trials: usize, seed: u64) -> Result<NullDistribution> {
    Ok(null_samples(data, hp, trials, seed)?.loss)
}

/// Permutation p-value with the add-one correction: the fraction of null
/// samples at least as extreme as `observed`, counting the observation.
pub fn p_value_empirical(observed: f64, null: &NullDistribution) -> f64 {
    let extreme = null
        .samples
        .iter()
        .filter(|&&s| match null.metric_kind {
            MetricKind::Loss => s <= observed,
            MetricKind::R2 => s >= observed,
        })
        .count();
    (1 + extreme) as f64 / (null.trials() + 1) as f64
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Gaussian tail probability of `observed` under the null moments: the lower
/// tail for losses, the upper tail for R².
pub fn p_value_parametric(observed: f64, null: &NullDistribution) -> Result<f64> {
    let sd = null.std_dev();
    if !(sd > 0.0) {
        return Err(FppError::ZeroVariance);
    }
    let z = (observed - null.mean()) / sd;
    Ok(match null.metric_kind {
        MetricKind::Loss => normal_cdf(z),
        MetricKind::R2 => normal_cdf(-z),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub observed: f64,
    pub null: NullDistribution,
    pub p_empirical: f64,
    pub p_parametric: f64,
    pub verdict_threshold: f64,
}

impl SignificanceReport {
    pub fn new(observed: f64, null: NullDistribution, verdict_threshold: f64) -> Result<Self> {
        let p_empirical = p_value_empirical(observed, &null);
        let p_parametric = p_value_parametric(observed, &null)?;
        Ok(SignificanceReport {
            observed,
            null,
            p_empirical,
            p_parametric,
            verdict_threshold,
        })
    }

    /// The larger (more conservative) of the two p-values.
    pub fn p_value(&self) -> f64 {
        self.p_empirical.max(self.p_parametric)
    }

    pub fn significant(&self) -> bool {
        self.p_value() <= self.verdict_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Trustworthy,
    Suspect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverfitAssessment {
    pub verdict: Verdict,
    pub p_value: f64,
    pub threshold: f64,
    pub train_score: f64,
    pub test_score: f64,
    /// `(train − test) / train`, absent when the training score is not
    /// positive.
    pub relative_drop: Option<f64>,
    pub reasons: Vec<String>,
}

/// Fit on train, score on test, compare against the null: the view is
/// suspect when the p-value exceeds `threshold`, or when the test score
/// falls more than half below the training score.
pub fn overfit_verdict(p_value: f64, train_score: f64, test_score: f64, threshold: f64) -> OverfitAssessment {
    let mut reasons = Vec::new();
    if p_value > threshold {
        reasons.push(format!("p-value {p_value:.4} exceeds {threshold}"));
    }
    let relative_drop = (train_score > 0.0).then(|| (train_score - test_score) / train_score);
    match relative_drop {
        Some(d) if d > MAX_RELATIVE_DROP => {
            reasons.push(format!("test score is {:.0}% below the training score", 100.0 * d))
        }
        None => reasons.push("training score is not positive".into()),
        _ => {}
    }
    OverfitAssessment {
        verdict: if reasons.is_empty() {
            Verdict::Trustworthy
        } else {
            Verdict::Suspect
        },
        p_value,
        threshold,
        train_score,
        test_score,
        relative_drop,
        reasons,
    }
}

/// Settings for the dimension × sample-size study on pure noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dims: Vec<usize>,
    pub sizes: Vec<usize>,
    pub trials_per_cell: usize,
    pub seed: u64,
    pub reference_r2: f64,
    /// Epochs are raised until every fit takes at least this many steps, so
    /// that small samples are not under-trained relative to large ones.
    pub min_steps: usize,
    pub hyperparams: HyperParams,
}

/// Polynomial degree of the grid-study head.
pub const GRID_DEGREE: usize = 4;

/// Step size for grid fits. Noise-only fits with a quartic head at
/// `D = 100` oscillate at the general default of 0.1.
pub const GRID_LEARNING_RATE: f64 = 0.03;

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dims: vec![2, 5, 10, 20, 50, 100],
            sizes: vec![50, 100, 300, 1000, 3000, 10000],
            trials_per_cell: 20,
            seed: 0,
            reference_r2: 0.5,
            min_steps: 2500,
            hyperparams: HyperParams {
                degree: GRID_DEGREE,
                learning_rate: GRID_LEARNING_RATE,
                restarts: 1,
                ..HyperParams::default()
            },
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.sizes.is_empty() {
            return Err(FppError::invalid("grid needs at least one dimension and one size"));
        }
        if self.trials_per_cell < 2 {
            return Err(FppError::invalid("grid needs at least 2 trials per cell"));
        }
        if let Some(d) = self.dims.iter().find(|&&d| d < 2) {
            return Err(FppError::invalid(format!("grid dimension {d} is below 2")));
        }
        if let Some(n) = self.sizes.iter().find(|&&n| n < 2) {
            return Err(FppError::invalid(format!("grid sample size {n} is below 2")));
        }
        self.hyperparams.validate()
    }

    /// Hyperparameters actually used for a cell with `n` samples.
    pub fn cell_hyperparams(&self, n: usize) -> HyperParams {
        let mut hp = self.hyperparams.clone();
        hp.batch_size = hp.batch_size.min(n);
        let steps_per_epoch = n.div_ceil(hp.batch_size);
        hp.epochs = hp.epochs.max(self.min_steps.div_ceil(steps_per_epoch));
        hp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStudyResult {
    pub dims: Vec<usize>,
    pub sizes: Vec<usize>,
    pub trials_per_cell: usize,
    pub reference_r2: f64,
    /// Scores are training R², which is what overfitting inflates.
    pub score: String,
    /// `mean_r2[i][j]` is the cell with `dims[i]` and `sizes[j]`.
    pub mean_r2: Vec<Vec<f64>>,
    pub std_r2: Vec<Vec<f64>>,
    /// Upper-tail Gaussian p-value of `reference_r2` under each cell's R²
    /// distribution.
    pub p_at_reference: Vec<Vec<f64>>,
    pub epochs: Vec<Vec<usize>>,
    /// Failed trials per cell with their messages; failures are excluded from
    /// the cell statistics.
    pub failures: Vec<Vec<Vec<String>>>,
    pub samples: Vec<Vec<Vec<f64>>>,
}

/// Parametric upper-tail p-value with a degenerate-spread fallback.
fn upper_tail(reference: f64, samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return f64::NAN;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd > 0.0 {
        normal_cdf(-(reference - mean) / sd)
    } else if reference > mean {
        0.0
    } else if reference < mean {
        1.0
    } else {
        0.5
    }
}

fn grid_trial(cfg: &GridConfig, dim: usize, n: usize, seed: u64) -> Result<f64> {
    let data = synth_noise(n, dim, seed)?;
    let hp = HyperParams {
        seed: derive_seed(seed, streams::INIT),
        ..cfg.cell_hyperparams(n)
    };
    let data = if hp.standardize { standardize(&data).0 } else { data };
    let r = fit(&data, &hp)?;
    Ok(r.scores[0].train)
}

/// Fit pure-noise datasets over a grid of dimensions and sample sizes and
/// record how much training R² the procedure manufactures from nothing.
pub fn grid_study(cfg: &GridConfig) -> Result<GridStudyResult> {
    cfg.validate()?;
    let (nd, nn, t) = (cfg.dims.len(), cfg.sizes.len(), cfg.trials_per_cell);
    let tasks: Vec<(usize, usize, usize)> = (0..nd)
        .flat_map(|i| (0..nn).flat_map(move |j| (0..t).map(move |k| (i, j, k))))
        .collect();
    let outcomes: Vec<Result<f64>> = tasks
        .par_iter()
        .map(|&(i, j, k)| {
            let (dim, n) = (cfg.dims[i], cfg.sizes[j]);
            let cell = derive_seed(cfg.seed, ((dim as u64) << 32) ^ n as u64);
            grid_trial(cfg, dim, n, derive_seed(cell, streams::TRIAL_BASE + k as u64))
        })
        .collect();

    let mut samples = vec![vec![Vec::new(); nn]; nd];
    let mut failures = vec![vec![Vec::new(); nn]; nd];
    for (&(i, j, k), o) in tasks.iter().zip(outcomes) {
        match o {
            Ok(r2) => samples[i][j].push(r2),
            Err(e) => failures[i][j].push(format!("trial {k}: {e}")),
        }
    }
    let stat = |f: &dyn Fn(&[f64]) -> f64| -> Vec<Vec<f64>> {
        samples
            .iter()
            .map(|row| row.iter().map(|c| f(c)).collect())
            .collect()
    };
    let mean_r2 = stat(&|c| {
        if c.is_empty() {
            f64::NAN
        } else {
            c.iter().sum::<f64>() / c.len() as f64
        }
    });
    let std_r2 = stat(&|c| {
        if c.len() < 2 {
            return f64::NAN;
        }
        let m = c.iter().sum::<f64>() / c.len() as f64;
        (c.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (c.len() - 1) as f64).sqrt()
    });
    let p_at_reference = stat(&|c| upper_tail(cfg.reference_r2, c));
    let epochs = cfg
        .dims
        .iter()
        .map(|_| cfg.sizes.iter().map(|&n| cfg.cell_hyperparams(n).epochs).collect())
        .collect();
    Ok(GridStudyResult {
        dims: cfg.dims.clone(),
        sizes: cfg.sizes.clone(),
        trials_per_cell: t,
        reference_r2: cfg.reference_r2,
        score: "training_r2".into(),
        mean_r2,
        std_r2,
        p_at_reference,
        epochs,
        failures,
        samples,
    })
}

impl GridStudyResult {
    /// A matrix as CSV with dimensions down the rows and sample sizes across
    /// the columns.
    pub fn matrix_csv(&self, matrix: &[Vec<f64>]) -> String {
        let mut out = String::from("dim");
        for n in &self.sizes {
            out.push_str(&format!(",n={n}"));
        }
        out.push('\n');
        for (d, row) in self.dims.iter().zip(matrix) {
            out.push_str(&d.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Average ranks (ties share the mean rank), 1-based.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: the Pearson correlation of average ranks.
/// `NaN` when either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman needs equal lengths");
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
