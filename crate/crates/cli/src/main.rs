//! `ldpfraud`: runs the simulator pipeline stage by stage or as a full ε sweep.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ldpfraud::pipeline::{self, ExperimentConfig, RunContext, OUT_ENV};
use ldpfraud::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_MISSING: u8 = 2;
const EXIT_AUDIT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "ldpfraud", version, about = "Fraud detection over locally differentially private account profiles")]
struct Cli {
    /// Flat `key = value` config file. Defaults to `<out>/config.conf` when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true, env = OUT_ENV, default_value = "ldpfraud-out")]
    out: PathBuf,
    /// Worker threads; sweeps run this many cells at once.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic transaction network.
    Generate,
    /// Contrastive pretraining of every bank's encoders.
    Pretrain,
    /// Train the fraud scorer at one privacy budget.
    Train {
        /// Privacy budget; `inf` disables noise.
        #[arg(long, default_value = "inf")]
        epsilon: String,
    },
    /// Run inversion, attribute and membership attacks on released profiles.
    Attack,
    /// Append the metrics row of the current run.
    Evaluate,
    /// Run the full ε × repeat grid.
    Sweep,
    /// Check persisted message traces for isolation violations.
    Audit {
        /// Trace file or directory; defaults to the run directory.
        path: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> ldpfraud::Result<ExperimentConfig> {
    let persisted = cli.out.join("config.conf");
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if persisted.exists() => ExperimentConfig::load(&persisted)?,
        None => ExperimentConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

fn run(cli: &Cli) -> ldpfraud::Result<u8> {
    if cli.parallel == 0 {
        return Err(Error::Config("--parallel must be at least 1".into()));
    }
    if let Command::Audit { path } = &cli.command {
        let target = path.as_deref().unwrap_or(&cli.out);
        let report = pipeline::audit(target)?;
        print!("{}", report.render());
        return Ok(if report.is_clean() { 0 } else { EXIT_AUDIT });
    }
    let cfg = load_config(cli)?;
    if !matches!(cli.command, Command::Sweep) && cli.parallel > 1 {
        // Only the first call can set the global pool; later calls are no-ops.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.parallel).build_global();
    }
    let ctx = RunContext {
        root: cli.out.clone(),
        cell: cli.out.clone(),
        parallel: cli.parallel > 1,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Generate => {
            pipeline::cmd_generate(&cfg, &ctx)?;
            println!("{}", ctx.data_dir().display());
        }
        Command::Pretrain => {
            let s = pipeline::cmd_pretrain(&cfg, &ctx)?;
            println!("{}", json(&s));
        }
        Command::Train { epsilon } => {
            let eps = pipeline::config::parse_f64("--epsilon", epsilon)?;
            let a = pipeline::cmd_train(&cfg, &ctx, eps, cfg.seed)?;
            println!("{}", json(&a.report));
        }
        Command::Attack => {
            let a = pipeline::cmd_attack(&cfg, &ctx, cfg.seed)?;
            println!("{}", json(&a.report));
        }
        Command::Evaluate => {
            let row = pipeline::cmd_evaluate(&cfg, &ctx)?;
            println!("{}", json(&row));
        }
        Command::Sweep => {
            let o = pipeline::cmd_sweep(&cfg, &cli.out, cli.parallel, cli.quiet)?;
            print!("{}", std::fs::read_to_string(cli.out.join("table.txt"))?);
            println!("{}", o.report.display());
        }
        Command::Audit { .. } => unreachable!("handled above"),
    }
    Ok(0)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::MissingArtifact { .. } => EXIT_MISSING,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

