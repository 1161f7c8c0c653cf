use clap::{Args, Parser, Subcommand, ValueEnum};
use hwm_cli::commands::{self, RunContext};
use hwm_cli::error::Result;
use hwm_core::learning::DynamicsKind;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "hwm", version, about = "Structured world models for simple mechanical systems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; omitted means the built-in pendulum defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides HWM_OUT_DIR and the [output] section)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding the configuration file
    #[arg(long)]
    seed: Option<u64>,
    /// Cap the worker thread count
    #[arg(long)]
    threads: Option<usize>,
    /// Also write SVG plots next to the CSV artifacts
    #[arg(long)]
    plot: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModelSel {
    /// Structured dynamics: learned energy plus a gated correction field
    Hwm,
    /// Unstructured latent dynamics of matched size
    Baseline,
}

impl From<ModelSel> for DynamicsKind {
    fn from(m: ModelSel) -> Self {
        match m {
            ModelSel::Hwm => DynamicsKind::PortHamiltonian,
            ModelSel::Baseline => DynamicsKind::Baseline,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample trajectories from the configured world into a dataset
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a model to a dataset and write a checkpoint
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset to fit (from `generate`)
        #[arg(long)]
        dataset: PathBuf,
        /// Which dynamics class to train
        #[arg(long, value_enum, default_value_t = ModelSel::Hwm)]
        model: ModelSel,
    },
    /// Score open-loop predictions against a held-out dataset
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated prediction horizons (default: a sparse sweep)
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
    },
    /// Run the receding-horizon controller in the configured world
    Plan {
        #[command(flatten)]
        common: Common,
        /// Learned model to plan with; optional for double_integrator
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Inspect one checkpoint: errors, loss terms, energy drift
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Structured vs baseline on the same held-out data
    Compare {
        #[command(flatten)]
        common: Common,
        /// Structured-model checkpoint
        #[arg(long)]
        checkpoint: PathBuf,
        /// Baseline checkpoint
        #[arg(long)]
        baseline: PathBuf,
        /// Held-out dataset
        #[arg(long)]
        dataset: PathBuf,
        /// Training dataset, enabling the data-efficiency sweep
        #[arg(long)]
        train_data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        /// Comma-separated training-subset sizes for the efficiency sweep
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Resolve a configuration and print it; writes nothing
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn setup_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

fn context(common: &Common) -> Result<RunContext> {
    commands::load_context(
        common.config.as_deref(),
        common.out.as_deref(),
        common.seed,
        common.plot,
    )
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Generate { common } => {
            setup_threads(common.threads);
            commands::generate(&context(&common)?)
        }
        Cmd::Train { common, dataset, model } => {
            setup_threads(common.threads);
            commands::train_cmd(&context(&common)?, &dataset, model.into())
        }
        Cmd::Rollout { common, checkpoint, dataset, horizons } => {
            setup_threads(common.threads);
            commands::rollout(&context(&common)?, &checkpoint, &dataset, horizons)
        }
        Cmd::Plan { common, checkpoint } => {
            setup_threads(common.threads);
            commands::plan_cmd(&context(&common)?, checkpoint.as_deref())
        }
        Cmd::Diagnose { common, checkpoint, dataset } => {
            setup_threads(common.threads);
            commands::diagnose(&context(&common)?, &checkpoint, &dataset)
        }
        Cmd::Compare {
            common,
            checkpoint,
            baseline,
            dataset,
            train_data,
            horizons,
            sizes,
        } => {
            setup_threads(common.threads);
            commands::compare(
                &context(&common)?,
                &checkpoint,
                &baseline,
                &dataset,
                train_data.as_deref(),
                horizons,
                sizes,
            )
        }
        Cmd::Validate { common } => {
            commands::validate_cmd(common.config.as_deref(), common.seed)
        }
    }
}

fn main() {
    // Usage mistakes are user-fixable, so they exit 1 like every other
    // configuration problem; clap's default of 2 is reserved here for
    // numerical failures at runtime.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.cmd) {
        e.report();
        std::process::exit(e.exit_code());
    }
}
