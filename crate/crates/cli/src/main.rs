//! `lpvred`: simulate, embed, reduce and evaluate from a single config file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use lpv_core::config::{Method, PipelineConfig};
use lpv_core::pca::NormMode;
use lpv_core::pipeline::{self, Artifacts, RegionOptions, Selection};
use lpv_core::region::RegionMethod;
use lpv_core::{LpvError, Result};

const DEFAULT_OUT: &str = "lpvred-out";

#[derive(Parser, Debug)]
#[command(name = "lpvred", version, about = "LPV embedding and scheduling-dimension reduction")]
struct Cli {
    /// Pipeline configuration (TOML, or JSON by extension). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-threaded numerics for byte-identical artifacts.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Sweep {
    /// Reduced scheduling dimensions, e.g. `3,5,10`.
    #[arg(long, value_delimiter = ',')]
    nhat: Vec<usize>,
    /// Normalization modes (`std`, `minmax`).
    #[arg(long, value_delimiter = ',')]
    norm: Vec<NormMode>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the scenarios and write the training and validation datasets.
    Simulate,
    /// Build the full-order affine LPV model.
    Embed,
    /// PCA reductions over the configured sweep.
    ReducePca(Sweep),
    /// Encoder/decoder reductions over the configured sweep.
    ReduceDnn(Sweep),
    /// Bounding regions of the reduced scheduling variables.
    Region {
        #[command(flatten)]
        sweep: Sweep,
        /// Reductions to bound (`pca`, `dnn`).
        #[arg(long, value_delimiter = ',')]
        reduction: Vec<Method>,
        /// Region construction (`auto`, `axis_aligned`, `kabsch`, `ellipsoid`, `sphere`).
        #[arg(long)]
        method: Option<RegionMethod>,
        /// Bound only the leading coordinates.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Error reports for the reductions on both data splits.
    Evaluate {
        #[command(flatten)]
        sweep: Sweep,
        #[arg(long, value_delimiter = ',')]
        method: Vec<Method>,
    },
    /// Open-loop trajectories of the nonlinear and reduced models.
    Compare {
        #[command(flatten)]
        sweep: Sweep,
        #[arg(long, value_delimiter = ',')]
        method: Vec<Method>,
    },
    /// All stages in order.
    Run,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::read(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.deterministic {
        cfg.deterministic = true;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn selection(cfg: &PipelineConfig, sweep: &Sweep, methods: &[Method]) -> Result<Selection> {
    let mut sel = Selection::from_config(cfg);
    if !sweep.nhat.is_empty() {
        sel.sweep = sweep.nhat.clone();
    }
    if !sweep.norm.is_empty() {
        sel.norms = sweep.norm.clone();
    }
    if !methods.is_empty() {
        sel.methods = methods.to_vec();
    }
    let mut check = cfg.clone();
    check.reduction.n_theta_hat = sel.sweep.clone();
    check.reduction.normalizations = sel.norms.clone();
    check.reduction.methods = sel.methods.clone();
    check.validate()?;
    Ok(sel)
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let art = Artifacts::new(&out);
    if cfg.deterministic {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global()
            .map_err(|e| LpvError::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let pca = [Method::Pca];
    let dnn = [Method::Dnn];
    match &cli.command {
        Command::Run => {
            let manifest = pipeline::run_pipeline(&cfg, &out)?;
            println!("{} artifacts in {}", manifest.files.len(), out.display());
            return Ok(());
        }
        Command::Simulate => {
            pipeline::write_config(&cfg, &art)?;
            pipeline::simulate(&cfg, &art)?;
        }
        Command::Embed => pipeline::embed(&cfg, &art)?,
        Command::ReducePca(sweep) => {
            let sel = selection(&cfg, sweep, &pca)?;
            pipeline::reduce_pca(&cfg, &art, &sel.norms, &sel.sweep)?;
        }
        Command::ReduceDnn(sweep) => {
            let sel = selection(&cfg, sweep, &dnn)?;
            pipeline::reduce_dnn(&cfg, &art, &sel.norms, &sel.sweep)?;
        }
        Command::Region {
            sweep,
            reduction,
            method,
            dim,
        } => {
            let sel = selection(&cfg, sweep, reduction)?;
            let opts = RegionOptions {
                method: *method,
                dim: *dim,
            };
            for path in pipeline::regions(&cfg, &art, &sel, &opts)? {
                println!("{}", path.display());
            }
        }
        Command::Evaluate { sweep, method } => {
            let sel = selection(&cfg, sweep, method)?;
            for r in pipeline::evaluate(&cfg, &art, &sel)? {
                println!(
                    "{:<10} {:<7} n={:<2} {:<10} e_pi_rms={:.4e} e_xdot_rms={:.4e}",
                    r.method, r.normalization, r.n_theta_hat, r.dataset, r.pi.rms, r.xdot.rms
                );
            }
        }
        Command::Compare { sweep, method } => {
            let mut sel = selection(&cfg, sweep, method)?;
            if sweep.nhat.is_empty() {
                sel.sweep = cfg.compare.n_theta_hat.clone();
            }
            for path in pipeline::compare(&cfg, &art, &sel)? {
                println!("{}", path.display());
            }
        }
    }
    let manifest = pipeline::write_manifest(&cfg, &art)?;
    info!("manifest lists {} files", manifest.files.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
