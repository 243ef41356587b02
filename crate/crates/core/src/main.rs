use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use elastipinn::driver::{
    self, assemble, config_with_overrides, evaluate_checkpoint, presets, run_experiment, run_replicate,
    truth_fields, ExperimentConfig, TrainedCheckpoint,
};
use elastipinn::Error;

#[derive(Parser, Debug)]
#[command(name = "elastipinn", version, about = "PINN stiffness estimation for 3D hyperelastic slabs")]
struct Cli {
    /// More log output; repeat for debug and trace.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only print errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Experiment config JSON file.
    #[arg(short, long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset instead of a config file.
    #[arg(short, long)]
    preset: Option<String>,
    /// Dotted-key override, e.g. `noise.ld=0.05` or `training.adam.lr=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Force deterministic execution regardless of the config.
    #[arg(long)]
    determinism: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the observation set, collocation counts and ground-truth fields.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0.0)]
        ld: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train every replicate of the experiment, or a single one.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Only this noise level.
        #[arg(long)]
        ld: Option<f64>,
        /// Only this replicate seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output_dir`.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint against the config's test data.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        ld: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// List named experiments, optionally writing each config to a directory.
    Presets {
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// Parse and validate a config, printing the resolved JSON.
    ValidateConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Failures are split into configuration problems (exit 1) and everything
/// that goes wrong once a valid config is running (exit 2).
enum Failure {
    Config(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn resolve(args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let text = match (&args.config, &args.preset) {
        (Some(path), _) => fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?,
        (None, Some(name)) => driver::preset(name)
            .ok_or_else(|| Failure::Config(format!("unknown preset '{name}'")))?
            .to_json()?,
        (None, None) => return Err(Failure::Config("one of --config or --preset is required".into())),
    };
    let mut cfg = config_with_overrides(&text, &args.overrides).map_err(|e| Failure::Config(e.to_string()))?;
    if args.determinism {
        cfg.determinism = true;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    fs::write(path, serde_json::to_string_pretty(value).map_err(Error::from)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Presets { write } => {
            let all = presets();
            let width = all.iter().map(|p| p.name.len()).max().unwrap_or(0);
            for p in all {
                println!("{:width$}  {}", p.name, p.summary);
            }
            if let Some(dir) = write {
                fs::create_dir_all(&dir)?;
                for p in all {
                    fs::write(dir.join(format!("{}.json", p.name)), p.config().to_json()?)?;
                }
            }
        }
        Command::ValidateConfig { cfg } => {
            let cfg = resolve(&cfg)?;
            println!("{}", cfg.to_json()?);
        }
        Command::Generate { cfg, ld, seed, out } => {
            let cfg = resolve(&cfg)?;
            fs::create_dir_all(&out)?;
            let a = assemble(&cfg, ld, seed)?;
            fs::write(out.join("config.json"), cfg.to_json()?)?;
            a.train.obs.write_csv(&out.join("observations.csv"))?;
            a.test.obs.write_csv(&out.join("observations_test.csv"))?;
            write_json(
                &out.join("collocation.json"),
                &serde_json::json!({
                    "pde": a.train.pde.len(),
                    "neumann": a.train.neumann.len(),
                    "robin": a.train.robin.len(),
                    "test_pde": a.test.pde.len(),
                }),
            )?;
            if let Some(p) = &a.manufactured {
                truth_fields(p, &cfg.geometry, cfg.export.spacing)?.write_csv(&out.join("fields_truth.csv"))?;
            }
            log::info!("wrote {} observations to {}", a.train.obs.len(), out.display());
        }
        Command::Train { cfg, ld, seed, out } => {
            let mut cfg = resolve(&cfg)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(ld) = ld {
                cfg.noise.ld.0 = vec![ld];
            }
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if cfg.seeds.len() == 1 && cfg.noise.ld.0.len() == 1 {
                let s = run_replicate(&cfg, cfg.noise.ld.0[0], cfg.seeds[0])?;
                println!("{}", serde_json::to_string_pretty(&s).map_err(Error::from)?);
            } else {
                for r in run_experiment(&cfg)? {
                    println!(
                        "ld={:.3} runs={} failed={} mean E_mu={:?}",
                        r.ld,
                        r.runs.len(),
                        r.failed.len(),
                        r.mean.e_mu
                    );
                }
            }
        }
        Command::Eval {
            cfg,
            checkpoint,
            ld,
            seed,
            out,
        } => {
            let cfg = resolve(&cfg)?;
            let ck = TrainedCheckpoint::load(&checkpoint)?;
            fs::create_dir_all(&out)?;
            let (metrics, fields) = evaluate_checkpoint(&cfg, &ck, ld, seed)?;
            fields.write_csv(&out.join("fields.csv"))?;
            write_json(&out.join("metrics.json"), &metrics)?;
            println!("{}", serde_json::to_string_pretty(&metrics).map_err(Error::from)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp_secs().init();

    if let Ok(n) = std::env::var("ELASTIPINN_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: ELASTIPINN_THREADS must be a positive integer, got '{n}'");
                return ExitCode::from(1);
            }
        }
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
