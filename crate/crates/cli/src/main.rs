//! `evsurrogate` command-line entry point.
//!
//! Exit status: 0 on success, 1 when the config, flags or inputs fail
//! validation, 2 when a pipeline stage fails.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use commands::{Inputs, Outputs};
use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "evsurrogate", version, about = "Event-level surrogate models for analog circuit blocks")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores), overriding the config.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate random testbenches and write the labelled event dataset.
    Characterize,
    /// Train every configured family and write the model bundles.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Test-split metrics of every family bundle.
    Eval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Digit classification with the network matching the circuit.
    Simulate {
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Runtime scaling of the engine against the transient simulator.
    Bench {
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Error propagation with predicted vs. observed state.
    Study {
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Characterize => "characterize",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Simulate { .. } => "simulate",
            Command::Bench { .. } => "bench",
            Command::Study { .. } => "study",
        }
    }

    fn inputs(&self) -> Inputs {
        let (dataset, bundle) = match self {
            Command::Characterize => (None, None),
            Command::Train { dataset } => (dataset.clone(), None),
            Command::Eval { dataset, bundle } => (dataset.clone(), bundle.clone()),
            Command::Simulate { bundle } | Command::Bench { bundle } | Command::Study { bundle } => (None, bundle.clone()),
        };
        Inputs { dataset, bundle }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    cfg = cfg.with_seed(seed);
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    if let Some(n) = cli.parallelism {
        cfg.generation.parallelism = n;
    }
    cfg.validate().map_err(Failure::Validation)?;
    Ok(cfg)
}

/// Move every produced file into the output directory through a staging
/// directory, so a failed command leaves no half-written results.
fn commit(dir: &Path, cmd: &str, cfg: &RunConfig, out: Outputs, elapsed: f64, started: u64) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Runtime(format!("writing {}: {e}", dir.display()));
    let stage = dir.join(format!(".staging-{cmd}-{}", std::process::id()));
    let write_all = || -> std::io::Result<()> {
        fs::create_dir_all(stage.join("meta"))?;
        for (name, body) in &out.files {
            fs::write(stage.join(name), body)?;
        }
        fs::write(stage.join(format!("config_{cmd}.toml")), cfg.to_toml())?;
        let spec = toml::to_string_pretty(&cfg.spec()).expect("spec serializes");
        fs::write(stage.join("spec.toml"), spec)?;
        let mut meta = format!(
            "command = \"{cmd}\"\nversion = \"{}\"\nstarted_unix = {started}\nelapsed_seconds = {elapsed}\nparallel_feature = {}\n",
            env!("CARGO_PKG_VERSION"),
            evsurrogate::par::parallel_enabled()
        );
        meta.push_str(&format!("parallelism = {}\n", cfg.generation.parallelism));
        fs::write(stage.join("meta").join(format!("{cmd}.toml")), meta)?;
        for (name, body) in &out.meta {
            fs::write(stage.join("meta").join(name), body)?;
        }
        Ok(())
    };
    fs::create_dir_all(dir).map_err(io)?;
    if let Err(e) = write_all() {
        let _ = fs::remove_dir_all(&stage);
        return Err(io(e));
    }
    let mut names: Vec<PathBuf> = out.files.iter().map(|f| f.0.clone()).collect();
    names.push(format!("config_{cmd}.toml").into());
    names.push("spec.toml".into());
    fs::create_dir_all(dir.join("meta")).map_err(io)?;
    for n in names {
        fs::rename(stage.join(&n), dir.join(&n)).map_err(io)?;
    }
    for entry in fs::read_dir(stage.join("meta")).map_err(io)? {
        let entry = entry.map_err(io)?;
        fs::rename(entry.path(), dir.join("meta").join(entry.file_name())).map_err(io)?;
    }
    fs::remove_dir_all(&stage).map_err(io)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    let cmd = cli.command.name();
    let inp = cli.command.inputs();
    commands::preflight(cmd, &cfg, &inp)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let t0 = Instant::now();
    let out = match &cli.command {
        Command::Characterize => commands::characterize(&cfg),
        Command::Train { .. } => commands::train(&cfg, &inp),
        Command::Eval { .. } => commands::eval(&cfg, &inp),
        Command::Simulate { .. } => commands::simulate(&cfg, &inp),
        Command::Bench { .. } => commands::bench(&cfg, &inp),
        Command::Study { .. } => commands::study(&cfg, &inp),
    }?;
    commit(&cfg.output.dir, cmd, &cfg, out, t0.elapsed().as_secs_f64(), started)
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("evsurrogate: {f}");
            ExitCode::from(f.code())
        }
    }
}
