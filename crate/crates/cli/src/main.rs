//! `phri`: generate synthetic interaction data, train and ablate the latent
//! model, and export evaluation, latent and spectrum artifacts.
//!
//! Exit codes: 0 success, 1 usage or format error, 2 numeric failure, 3 I/O
//! error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use phri_core::crc::ReservoirMode;
use phri_core::experiment::{self as exp, RunConfig};
use phri_core::model::Flags;
use phri_core::sim::{DatasetSpec, Split};
use phri_core::{PhriError, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "phri", version, about = "Latent pHRI modeling experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration; omitted keys use desk-scale defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override (dataset seed for `generate`, model seed for `train`,
    /// first seed for `ablate`, reservoir seed for `fft`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Complex,
    Real,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the dataset and write trajectories plus manifest.
    Generate {
        /// 11/3/3 trajectories per condition with 900 steps each.
        #[arg(long)]
        full_scale: bool,
    },
    /// Train one model and write a checkpoint and learning curves.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Flag cell such as `+D+A+C` or `-D-A-C`.
        #[arg(long, allow_hyphen_values = true)]
        ablation: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train every flag cell for every seed and write the report.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated seed list; overrides the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Cells trained concurrently.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// One-step prediction errors of a checkpoint on a split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Export per-step latents with labels and cluster metrics.
    Latent {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Free-response spectra of a randomly driven reservoir.
    Fft {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        neurons: Option<usize>,
    },
}

fn out_dir(global: &Global, default: &str) -> PathBuf {
    global.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn load_config(global: &Global) -> Result<RunConfig> {
    match &global.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let mut cfg = load_config(g)?;
    match cli.command {
        Command::Generate { full_scale } => {
            if full_scale {
                let full = DatasetSpec::full();
                cfg.dataset.counts = full.counts;
                cfg.dataset.n_steps = full.n_steps;
            }
            if let Some(s) = g.seed {
                cfg.dataset.seed = s;
            }
            let out = out_dir(g, "data");
            let ds = exp::cmd_generate(&cfg, &out, g.force)?;
            println!("generated {} trajectories in {}", ds.trajectories.len(), out.display());
        }
        Command::Train { data, ablation, epochs } => {
            if let Some(label) = ablation {
                cfg.model.flags = Flags::parse(&label)?;
            }
            if let Some(e) = epochs {
                cfg.model.epochs = e;
            }
            if let Some(s) = g.seed {
                cfg.model.seed = s;
            }
            let out = out_dir(g, "runs/train");
            let s = exp::cmd_train(&cfg, &data, &out, g.force)?;
            println!(
                "trained {} for {} epochs: val action MSE {:.6}, val obs MSE {:.6}",
                cfg.model.flags, s.epochs_trained, s.final_val_action_mse, s.final_val_obs_mse
            );
        }
        Command::Ablate {
            data,
            seeds,
            jobs,
            epochs,
        } => {
            if let Some(list) = seeds {
                cfg.ablation.seeds = list;
            }
            if let Some(s) = g.seed {
                let n = cfg.ablation.seeds.len() as u64;
                cfg.ablation.seeds = (s..s + n).collect();
            }
            if let Some(j) = jobs {
                cfg.ablation.jobs = j;
            }
            if let Some(e) = epochs {
                cfg.model.epochs = e;
            }
            let out = out_dir(g, "runs/ablate");
            let report = exp::cmd_ablate(&cfg, &data, &out, g.force)?;
            print!("{}", exp::report_csv(&report));
            let failed = report.cells.iter().filter(|c| c.failure.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} cell run(s) failed; see {}", out.join(exp::REPORT_MD).display());
            }
        }
        Command::Eval { checkpoint, data, split } => {
            warn_unused_seed(g);
            let out = out_dir(g, "runs/eval");
            let r = exp::cmd_eval(&checkpoint, &data, split.into(), &out, g.force)?;
            println!(
                "action MSE mean {:.6} median {:.6} std {:.6}",
                r.action.mean, r.action.median, r.action.std
            );
            println!(
                "observation MSE mean {:.6} median {:.6} std {:.6}",
                r.observation.mean, r.observation.median, r.observation.std
            );
        }
        Command::Latent { checkpoint, data, split } => {
            warn_unused_seed(g);
            let out = out_dir(g, "runs/latent");
            let r = exp::cmd_latent(&checkpoint, &data, split.into(), &out, g.force)?;
            match r.silhouette.value() {
                Some(v) => println!("{} latent points, silhouette {v:.6}", r.n_points),
                None => println!("{} latent points, silhouette {}", r.n_points, exp::NOT_APPLICABLE),
            }
        }
        Command::Fft { mode, neurons } => {
            if let Some(m) = mode {
                cfg.fft.mode = match m {
                    ModeArg::Complex => ReservoirMode::Complex,
                    ModeArg::Real => ReservoirMode::Real,
                };
            }
            if let Some(n) = neurons {
                cfg.fft.n_neurons = n;
            }
            if let Some(s) = g.seed {
                cfg.fft.seed = s;
            }
            let out = out_dir(g, "runs/fft");
            let s = exp::cmd_fft(&cfg, &out, g.force)?;
            println!(
                "free-phase retention {:.4}, max free peak/median {:.2}",
                s.retention, s.max_free_peak_ratio
            );
        }
    }
    Ok(())
}

fn warn_unused_seed(g: &Global) {
    if g.seed.is_some() {
        log::warn!("--seed has no effect here; the checkpoint fixes every seed");
    }
    if let Some(p) = &g.config {
        log::warn!("--config {} is ignored; the checkpoint carries its own config", show(p));
    }
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &PhriError) -> u8 {
    e.exit_code() as u8
}
