use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use vortlab::{parse_config, run, Command, Options, RunConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Simulate,
    Ensemble,
    OuCalibrate,
    Invariant,
    MarkovTest,
    TailReport,
    ContdepTest,
    Checks,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Ensemble => Command::Ensemble,
            Cmd::OuCalibrate => Command::OuCalibrate,
            Cmd::Invariant => Command::Invariant,
            Cmd::MarkovTest => Command::MarkovTest,
            Cmd::TailReport => Command::TailReport,
            Cmd::ContdepTest => Command::ContdepTest,
            Cmd::Checks => Command::Checks,
        }
    }
}

/// Stochastic damped 2D Euler laboratory.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    command: Cmd,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    quiet: bool,
}

fn load(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| {
        let opts = Options {
            out: cfg.output_dir.clone(),
            workers: cli.workers.max(1),
            quiet: cli.quiet,
        };
        run(cli.command.into(), &cfg, &opts)
    });
    match result {
        Ok(m) if m.pass => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
