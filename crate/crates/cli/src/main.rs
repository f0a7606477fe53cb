use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod config;
mod plot;
mod run;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "hosu", version, about = "Higher-order secant update experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay an iterate sequence and write per-iteration diagnostics.
    Run(Box<ExperimentConfig>),
    /// Run a named property suite.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
    },
    /// Extract the columns of one figure from a diagnostics CSV.
    PlotData {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, value_enum)]
        figure: plot::Figure,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Characterizations,
    Convergence,
    DennisMore,
    Lemmas,
    Golden,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Characterizations => "characterizations",
            Suite::Convergence => "convergence",
            Suite::DennisMore => "dennis-more",
            Suite::Lemmas => "lemmas",
            Suite::Golden => "golden",
        }
    }
}

/// `HOSU_SEED` takes precedence over the command line.
fn effective_seed(flag: u64) -> anyhow::Result<u64> {
    match std::env::var("HOSU_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|e| anyhow::anyhow!("HOSU_SEED={s:?} is not an integer: {e}")),
        Err(_) => Ok(flag),
    }
}

fn verify(suite: Suite, seed: u64) -> anyhow::Result<bool> {
    let seed = effective_seed(seed)?;
    let checks = hosu_core::suites::run_suite(suite.name(), seed).expect("suite names match")?;
    let mut all = true;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        all &= c.passed;
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(mut cfg) => effective_seed(cfg.seed).and_then(|seed| {
            cfg.seed = seed;
            run::run(&cfg).map(|_| true)
        }),
        Command::Verify { suite, seed } => verify(suite, seed),
        Command::PlotData { csv, figure, out } => plot::emit(&csv, figure, out.as_deref()).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
