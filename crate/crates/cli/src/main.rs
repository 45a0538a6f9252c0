//! `fpp`: synthesize datasets, fit function preserving projections, test
//! them against shuffled data and render the results as SVG.

mod commands;
mod config;
mod failure;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CommonFlags, SynthKind};
use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "fpp", version, about = "Function preserving projections")]
struct Cli {
    #[command(flatten)]
    common: CommonFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset bundle.
    Synth {
        #[arg(value_enum)]
        kind: Option<SynthKind>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        /// Response noise for `circle`.
        #[arg(long)]
        noise: Option<f64>,
        /// Number of responses for `multi`.
        #[arg(long)]
        responses: Option<usize>,
        /// Number of classes for `blobs`.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        separation: Option<f64>,
    },
    /// Standardize, optionally pre-project, split, fit and evaluate.
    Fit {
        /// Dataset bundle directory.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Compare a fit against refits on shuffled responses.
    Pvalue {
        #[arg(long)]
        data: Option<PathBuf>,
        /// `fit.json` from the fit command.
        #[arg(long = "fit")]
        fit_result: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Embed a dataset with a fitted projection.
    Project {
        #[arg(long = "fit")]
        fit_result: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// In-plane rotation applied after projecting, in degrees.
        #[arg(long, allow_negative_numbers = true)]
        rotation: Option<f64>,
    },
    /// Fit pure noise over a grid of dimensions and sample sizes.
    Grid {
        /// Comma-separated dimensions.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Trials per cell.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        reference_r2: Option<f64>,
        #[arg(long)]
        min_steps: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = config::RunConfig::load(cli.common.config.as_deref())?;
    cli.common.apply_common(&mut cfg);
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(Failure::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::runtime(format!("cannot start thread pool: {e}")))?;
    }
    let common = &cli.common;
    match cli.command {
        Command::Synth {
            kind,
            n,
            dim,
            noise,
            responses,
            k,
            separation,
        } => {
            common.reject("synth", true, true)?;
            let s = &mut cfg.synth;
            s.kind = kind.or(s.kind);
            s.n = n.or(s.n);
            s.dim = dim.or(s.dim);
            s.noise = noise.unwrap_or(s.noise);
            s.responses = responses.unwrap_or(s.responses);
            s.classes = k.unwrap_or(s.classes);
            s.separation = separation.unwrap_or(s.separation);
            commands::synth(&cfg)
        }
        Command::Fit { data } => {
            cfg.data = data.or(cfg.data);
            commands::fit(&cfg)
        }
        Command::Pvalue {
            data,
            fit_result,
            trials,
            threshold,
        } => {
            common.reject("pvalue (it reuses the settings stored in the fit)", true, true)?;
            cfg.data = data.or(cfg.data);
            cfg.fit_result = fit_result.or(cfg.fit_result);
            cfg.trials = trials.unwrap_or(cfg.trials);
            cfg.threshold = threshold.unwrap_or(cfg.threshold);
            commands::pvalue(&cfg)
        }
        Command::Project {
            fit_result,
            data,
            rotation,
        } => {
            common.reject("project", true, true)?;
            cfg.data = data.or(cfg.data);
            cfg.fit_result = fit_result.or(cfg.fit_result);
            cfg.rotation_degrees = rotation.unwrap_or(cfg.rotation_degrees);
            commands::project(&cfg)
        }
        Command::Grid {
            dims,
            sizes,
            trials,
            reference_r2,
            min_steps,
        } => {
            common.reject("grid", false, true)?;
            let g = &mut cfg.grid;
            if let Some(d) = dims {
                g.dims = d;
            }
            if let Some(s) = sizes {
                g.sizes = s;
            }
            g.trials_per_cell = trials.unwrap_or(g.trials_per_cell);
            g.reference_r2 = reference_r2.unwrap_or(g.reference_r2);
            g.min_steps = min_steps.unwrap_or(g.min_steps);
            commands::grid(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let f = Failure::validation(e.to_string().trim_end());
            eprintln!("{}", f.to_json());
            return ExitCode::from(f.kind.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.kind.exit_code() as u8)
        }
    }
}
