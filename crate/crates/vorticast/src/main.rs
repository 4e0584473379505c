use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vorticast::manifest::{Precision, RunManifest};
use vorticast::pipeline::{
    self, run_all, stage_eval, stage_gen_data, stage_plot, stage_train, PipelineError, RunFilter,
};
use vorticast::rollout::Scheme;

#[derive(Parser)]
#[command(
    name = "vorticast",
    version,
    about = "Train and compare autoregressive surrogates for 2D incompressible flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run manifest (TOML)
    #[arg(long, short = 'c')]
    config: PathBuf,
    /// Output directory for all artifacts
    #[arg(long, short = 'o')]
    out: PathBuf,
    /// Worker threads (defaults to all cores; results do not depend on this)
    #[arg(long)]
    threads: Option<usize>,
    /// Override the manifest master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the manifest precision (single | double)
    #[arg(long)]
    precision: Option<String>,
    /// Suppress progress output
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct Select {
    /// Restrict to one model by its index in the manifest
    #[arg(long)]
    model_index: Option<usize>,
    /// Restrict to one scheme (teacher_forcing | curriculum | free_rollout)
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the vorticity trajectories and write the dataset
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train one run per (model, scheme) pair
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: Select,
        /// Continue from checkpoint_final.ckpt if present
        #[arg(long)]
        resume: bool,
    },
    /// Score best checkpoints on the test split and rebuild summary.csv
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: Select,
    },
    /// Render SVG charts from the training logs and error curves
    Plot {
        /// Output directory holding runs/ from earlier stages
        #[arg(long, short = 'o')]
        out: PathBuf,
    },
    /// Full scheme comparison: gen-data, train, eval, plot, summary.csv
    Repro {
        #[command(flatten)]
        common: Common,
        /// Continue training runs from their final checkpoints if present
        #[arg(long)]
        resume: bool,
    },
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "teacher_forcing" | "tf" => Ok(Scheme::TeacherForcing),
        "curriculum" | "cl" => Ok(Scheme::Curriculum),
        "free_rollout" | "fr" => Ok(Scheme::FreeRollout),
        other => Err(format!(
            "unknown scheme {other:?} (expected teacher_forcing, curriculum or free_rollout)"
        )),
    }
}

fn setup(common: &Common) -> Result<RunManifest, PipelineError> {
    if let Some(n) = common.threads {
        // Ignore the error if a global pool already exists (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut manifest = RunManifest::load(&common.config)?;
    if let Some(seed) = common.seed {
        manifest.master_seed = seed;
    }
    if let Some(p) = &common.precision {
        manifest.precision = match p.as_str() {
            "single" => Precision::Single,
            "double" => Precision::Double,
            other => {
                return Err(PipelineError::Invalid(format!(
                    "unknown precision {other:?} (expected single or double)"
                )))
            }
        };
    }
    Ok(manifest)
}

fn dispatch(cmd: &Command) -> Result<(), PipelineError> {
    match cmd {
        Command::GenData { common } => {
            let manifest = setup(common)?;
            with_marker(&common.out, || stage_gen_data(&manifest, &common.out))
        }
        Command::Train {
            common,
            select,
            resume,
        } => {
            let manifest = setup(common)?;
            let filter = RunFilter {
                model_idx: select.model_index,
                scheme: select.scheme,
            };
            let verbose = !common.quiet;
            with_marker(&common.out, || match manifest.precision {
                Precision::Single => stage_train::<f32>(&manifest, &common.out, filter, *resume, verbose),
                Precision::Double => stage_train::<f64>(&manifest, &common.out, filter, *resume, verbose),
            })
        }
        Command::Eval { common, select } => {
            let manifest = setup(common)?;
            let filter = RunFilter {
                model_idx: select.model_index,
                scheme: select.scheme,
            };
            let verbose = !common.quiet;
            with_marker(&common.out, || match manifest.precision {
                Precision::Single => stage_eval::<f32>(&manifest, &common.out, filter, verbose),
                Precision::Double => stage_eval::<f64>(&manifest, &common.out, filter, verbose),
            })
        }
        Command::Plot { out } => with_marker(out, || stage_plot(out)),
        Command::Repro { common, resume } => {
            let manifest = setup(common)?;
            run_all(&manifest, &common.out, *resume, !common.quiet)
        }
    }
}

fn with_marker<F>(out: &std::path::Path, f: F) -> Result<(), PipelineError>
where
    F: FnOnce() -> Result<(), PipelineError>,
{
    let result = f();
    if let Err(ref e) = result {
        pipeline::write_failed_marker(out, e);
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
