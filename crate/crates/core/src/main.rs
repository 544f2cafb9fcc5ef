use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qswarm::cli::{self, Options, OUT_ENV};
use qswarm::config::{Mode, Scenario};
use qswarm::par::with_threads;

#[derive(Parser)]
#[command(name = "qswarm", version, about = "Swarm simulation of lattice quantum dynamics")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// meanfield, stochastic or oracle.
    #[arg(long, global = true, value_parser = |s: &str| s.parse::<Mode>().map_err(|e| e.to_string()))]
    mode: Option<Mode>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a scenario and write density frames.
    Run { config: PathBuf },
    /// Repeated position measurements against Born probabilities.
    BornTest {
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        draws: u64,
    },
    /// Point-source diffusion equilibrium against 1/r.
    GreenTest { config: PathBuf },
    /// Step time against particle count.
    Bench {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        particles: Vec<usize>,
    },
    /// Compare two density frames.
    Compare { frame_a: PathBuf, frame_b: PathBuf },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let opts = Options {
        seed: args.global.seed,
        out: args.global.out,
        mode: args.global.mode,
    };
    let result = with_threads(args.global.threads, || match &args.command {
        Command::Run { config } => Scenario::from_file(config).and_then(|s| cli::run(&s, &opts)),
        Command::BornTest { config, draws } => {
            Scenario::from_file(config).and_then(|s| cli::born_test(&s, *draws, &opts))
        }
        Command::GreenTest { config } => Scenario::from_file(config).and_then(|s| cli::green_test(&s, &opts)),
        Command::Bench { config, particles } => {
            Scenario::from_file(config).and_then(|s| cli::bench(&s, particles, &opts))
        }
        Command::Compare { frame_a, frame_b } => cli::compare(frame_a, frame_b),
    });
    match result {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
