//! The five commands. Each validates its inputs and output directory first,
//! then computes, then writes its files.

use std::path::Path;

use fpp::data::{read_bundle, synth_blobs, synth_circle, synth_multi, synth_noise, write_bundle, Dataset, ResponseValues};
use fpp::models::{mse_loss, ols_fit};
use fpp::optimizer::{rotate_embedding, ProjectionMatrix};
use fpp::pipeline::{points, prepare, run_fit, run_pvalue, FitReport};
use fpp::plot::{axis_annotation, heatmap_svg, histogram_svg, scatter_svg, Axes, Coloring, Panel};
use fpp::significance::grid_study;
use ndarray::Axis;
use serde::Serialize;

use crate::config::{RunConfig, SynthKind};
use crate::failure::Failure;
use crate::output::{prepare_out, require_bundle, require_file, slug, write_json, write_text, Timings};

/// Number of input dimensions named on each plot axis.
const AXIS_TERMS: usize = 3;
const HISTOGRAM_BINS: usize = 30;
/// Color range of the p-value heatmap.
const P_MAP_RANGE: (f64, f64) = (0.0, 0.05);

pub fn synth(cfg: &RunConfig) -> Result<(), Failure> {
    let s = &cfg.synth;
    let mut missing = Vec::new();
    if s.kind.is_none() {
        missing.push("<kind> (circle|multi|blobs|noise)");
    }
    if s.n.is_none() {
        missing.push("--n");
    }
    if s.dim.is_none() {
        missing.push("--dim");
    }
    if !missing.is_empty() {
        return Err(Failure::validation(format!("missing required flags: {}", missing.join(", "))));
    }
    let (kind, n, dim) = (s.kind.unwrap_or(SynthKind::Circle), s.n.unwrap_or(0), s.dim.unwrap_or(0));
    let out = prepare_out(&cfg.out_dir())?;
    let mut timings = Timings::start("synth");
    let data = match kind {
        SynthKind::Circle => synth_circle(n, dim, s.noise, s.seed),
        SynthKind::Multi => synth_multi(n, dim, s.responses, s.seed),
        SynthKind::Blobs => synth_blobs(n, dim, s.classes, s.separation, s.seed),
        SynthKind::Noise => synth_noise(n, dim, s.seed),
    }?;
    timings.phase("generate");
    let generator = serde_json::to_value(s).map_err(|e| Failure::runtime(e.to_string()))?;
    write_bundle(&out, &data, Some(generator))?;
    timings.phase("write");
    timings.write(&out)
}

fn load_data(dir: &Path) -> Result<Dataset, Failure> {
    Ok(read_bundle(dir)?.0)
}

fn load_report(path: &Path) -> Result<FitReport, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::validation(format!("invalid fit result {}: {e}", path.display())))
}

/// Axis titles naming the inputs with the largest weights in each column.
fn axes_for(p: &ProjectionMatrix, names: &[String]) -> Axes {
    let label = |j: usize| {
        let w: Vec<f64> = p.matrix().column(j).to_vec();
        format!("axis {}: {}", j + 1, axis_annotation(&w, names, AXIS_TERMS))
    };
    Axes {
        x_label: label(0),
        y_label: label(1),
    }
}

/// Response values restricted to `rows`, owned so a [`Coloring`] can borrow
/// them.
enum Colors {
    Continuous(Vec<f64>),
    Categorical(Vec<usize>, Vec<String>),
}

impl Colors {
    fn of(values: &ResponseValues, rows: Option<&[usize]>) -> Colors {
        let pick = |n: usize| -> Vec<usize> { rows.map(<[usize]>::to_vec).unwrap_or_else(|| (0..n).collect()) };
        match values {
            ResponseValues::Continuous { values } => Colors::Continuous(pick(values.len()).iter().map(|&i| values[i]).collect()),
            ResponseValues::Categorical {
                labels, class_names, ..
            } => Colors::Categorical(pick(labels.len()).iter().map(|&i| labels[i]).collect(), class_names.clone()),
        }
    }

    fn coloring(&self) -> Coloring<'_> {
        match self {
            Colors::Continuous(v) => Coloring::Continuous(v),
            Colors::Categorical(labels, names) => Coloring::Categorical { labels, names },
        }
    }
}

pub fn fit(cfg: &RunConfig) -> Result<(), Failure> {
    let data_dir = require_bundle(cfg.data.as_deref())?;
    let out = prepare_out(&cfg.out_dir())?;
    let mut timings = Timings::start("fit");
    let data = load_data(&data_dir)?;
    timings.phase("load");
    cfg.pipeline.validate_for(&data)?;
    let (report, _) = run_fit(&data, &cfg.pipeline)?;
    timings.phase("fit");
    write_json(&out.join("fit.json"), &report)?;

    let y = report.embed(data.features())?;
    let all = points(y.view());
    let axes = axes_for(&report.composite_projection, &report.column_names);
    for (k, r) in data.responses().iter().enumerate() {
        let colors = Colors::of(r.values(), None);
        let title = format!("colored by {}", r.name());
        let svg = scatter_svg(
            &[Panel {
                points: &all,
                coloring: colors.coloring(),
                title: &title,
            }],
            &axes,
        )?;
        write_text(&out.join(format!("scatter_{k}_{}.svg", slug(r.name()))), &svg)?;
    }

    let first = &data.responses()[0];
    let train_pts: Vec<[f64; 2]> = report.train_rows.iter().map(|&i| all[i]).collect();
    let test_pts: Vec<[f64; 2]> = report.test_rows.iter().map(|&i| all[i]).collect();
    let train_colors = Colors::of(first.values(), Some(&report.train_rows));
    let test_colors = Colors::of(first.values(), Some(&report.test_rows));
    let score = |s: Option<f64>| s.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
    let train_title = format!("train ({}: {})", first.name(), score(Some(report.fit.scores[0].train)));
    let test_title = format!("test ({}: {})", first.name(), score(report.fit.scores[0].test));
    let mut panels = vec![Panel {
        points: &train_pts,
        coloring: train_colors.coloring(),
        title: &train_title,
    }];
    if !test_pts.is_empty() {
        panels.push(Panel {
            points: &test_pts,
            coloring: test_colors.coloring(),
            title: &test_title,
        });
    }
    write_text(&out.join("train_test.svg"), &scatter_svg(&panels, &axes)?)?;
    timings.phase("plot");
    timings.write(&out)
}

pub fn pvalue(cfg: &RunConfig) -> Result<(), Failure> {
    let data_dir = require_bundle(cfg.data.as_deref())?;
    let fit_path = require_file(cfg.fit_result.as_deref(), "--fit")?;
    if cfg.trials < 2 {
        return Err(Failure::validation(format!("trials must be at least 2, got {}", cfg.trials)));
    }
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(Failure::validation(format!("threshold must lie in (0, 1), got {}", cfg.threshold)));
    }
    let out = prepare_out(&cfg.out_dir())?;
    let mut timings = Timings::start("pvalue");
    let report = load_report(&fit_path)?;
    let data = load_data(&data_dir)?;
    if data.sample_count() != report.sample_count || data.dim() != report.dim {
        return Err(Failure::validation(format!(
            "dataset is {}×{} but the fit was made on {}×{}",
            data.sample_count(),
            data.dim(),
            report.sample_count,
            report.dim
        )));
    }
    let prepared = prepare(&data, &report.config)?;
    if prepared.train_rows != report.train_rows {
        return Err(Failure::validation("dataset does not reproduce the fit's training split"));
    }
    timings.phase("load");
    let pv = run_pvalue(&report, &prepared, cfg.trials, cfg.threshold)?;
    timings.phase("null_distribution");
    write_json(&out.join("pvalue.json"), &pv)?;
    let title = format!(
        "training loss of {} shuffled refits (p = {:.4})",
        pv.loss.null.trials(),
        pv.loss.p_value()
    );
    let svg = histogram_svg(&pv.loss.null.samples, pv.loss.observed, HISTOGRAM_BINS, &title, "training loss")?;
    write_text(&out.join("null_histogram.svg"), &svg)?;
    timings.phase("plot");
    timings.write(&out)
}

#[derive(Debug, Serialize)]
struct RefitLoss {
    response: String,
    degree: usize,
    /// Least-squares polynomial loss on the fit-time coordinates.
    loss_unrotated: f64,
    /// The same on the rotated coordinates.
    loss_rotated: f64,
}

#[derive(Debug, Serialize)]
struct ProjectReport {
    version: &'static str,
    rotation_degrees: f64,
    sample_count: usize,
    /// `D × 2` map from standardized inputs to the rotated plane.
    projection: ProjectionMatrix,
    refit: Vec<RefitLoss>,
}

pub fn project(cfg: &RunConfig) -> Result<(), Failure> {
    let fit_path = require_file(cfg.fit_result.as_deref(), "--fit")?;
    let data_dir = require_bundle(cfg.data.as_deref())?;
    if !cfg.rotation_degrees.is_finite() {
        return Err(Failure::validation("rotation must be finite"));
    }
    let out = prepare_out(&cfg.out_dir())?;
    let mut timings = Timings::start("project");
    let report = load_report(&fit_path)?;
    let data = load_data(&data_dir)?;
    timings.phase("load");
    let y = report.embed(data.features())?;
    let rotated = rotate_embedding(y.view(), cfg.rotation_degrees);
    timings.phase("project");

    let mut csv = String::from("axis1,axis2\n");
    for row in rotated.axis_iter(Axis(0)) {
        csv.push_str(&format!("{},{}\n", row[0], row[1]));
    }
    write_text(&out.join("coordinates.csv"), &csv)?;

    let degree = report.config.hyperparams.degree;
    let mut refit = Vec::new();
    for r in data.responses() {
        if let ResponseValues::Continuous { values } = r.values() {
            let loss = |c: &ndarray::Array2<f64>| -> Result<f64, Failure> {
                let head = ols_fit(c.view(), values, degree)?;
                Ok(mse_loss(&head.predict_batch(c.view()), values)?.value)
            };
            refit.push(RefitLoss {
                response: r.name().to_string(),
                degree,
                loss_unrotated: loss(&y)?,
                loss_rotated: loss(&rotated)?,
            });
        }
    }
    let projection = report.composite_projection.rotated(cfg.rotation_degrees);
    let pts = points(rotated.view());
    let svg = match data.responses().first() {
        Some(first) => {
            let colors = Colors::of(first.values(), None);
            let title = format!("colored by {}, rotated {}°", first.name(), cfg.rotation_degrees);
            scatter_svg(
                &[Panel {
                    points: &pts,
                    coloring: colors.coloring(),
                    title: &title,
                }],
                &axes_for(&projection, &report.column_names),
            )?
        }
        None => return Err(Failure::validation("dataset has no responses to color by")),
    };
    write_text(&out.join("projection.svg"), &svg)?;
    write_json(
        &out.join("project.json"),
        &ProjectReport {
            version: fpp::VERSION,
            rotation_degrees: cfg.rotation_degrees,
            sample_count: data.sample_count(),
            projection,
            refit,
        },
    )?;
    timings.phase("write");
    timings.write(&out)
}

pub fn grid(cfg: &RunConfig) -> Result<(), Failure> {
    cfg.grid.validate()?;
    let out = prepare_out(&cfg.out_dir())?;
    let mut timings = Timings::start("grid");
    let result = grid_study(&cfg.grid)?;
    timings.phase("fits");
    write_json(&out.join("grid.json"), &result)?;
    write_text(&out.join("mean_r2.csv"), &result.matrix_csv(&result.mean_r2))?;
    write_text(&out.join("p_value.csv"), &result.matrix_csv(&result.p_at_reference))?;
    let rows: Vec<String> = result.dims.iter().map(|d| format!("D={d}")).collect();
    let cols: Vec<String> = result.sizes.iter().map(|n| format!("N={n}")).collect();
    let svg = heatmap_svg(&result.mean_r2, &rows, &cols, (0.0, 1.0), "mean training R² on pure noise")?;
    write_text(&out.join("mean_r2.svg"), &svg)?;
    let title = format!("p-value of R² = {} (colors clamped at 0.05)", result.reference_r2);
    let svg = heatmap_svg(&result.p_at_reference, &rows, &cols, P_MAP_RANGE, &title)?;
    write_text(&out.join("p_value.svg"), &svg)?;
    timings.phase("write");
    timings.write(&out)
}
