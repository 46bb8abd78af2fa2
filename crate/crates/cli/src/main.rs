use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfteams_cli::{run, ExperimentConfig, Mode, DEFAULT_EPISODES};

#[derive(Parser)]
#[command(
    name = "mfteams",
    version,
    about = "Mean-field games among teams: solve, simulate and compare"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a game spec and report its sizes and model Lipschitz constants
    Validate(Common),
    /// Equilibrium of the finite-population game over the count lattice, with certificate
    SolveFinite(Common),
    /// Equilibrium of the infinite-population game on a simplex grid, with rollout
    SolveInfinite(Common),
    /// Agent-level simulation of the lifted finite-population equilibrium
    Simulate(Common),
    /// Exact equilibrium cost against agent-level simulation
    Compare(Common),
    /// Finite-game deviation gain of the limit policy next to the approximation bound
    Bound(Common),
    /// Pure Nash and Team-Nash equilibria of a static game (bundled example by default)
    StaticTne(Common),
}

#[derive(Args)]
struct Common {
    /// Game specification (JSON)
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory; artifacts go to <out>/<mode>/
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed, overriding the spec's
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_EPISODES)]
    episodes: usize,
    /// Use gridded prescriptions with rows in multiples of 1/G
    #[arg(long = "grid-g")]
    grid_g: Option<u32>,
    /// Simplex grid resolution for the limit game
    #[arg(long = "simplex-n")]
    simplex_n: Option<u32>,
    /// Populations per team for the bound sweep
    #[arg(long = "n-sweep", value_delimiter = ',', default_values_t = [4u32, 8, 16])]
    n_sweep: Vec<u32>,
    /// Fail when a stage game has no pure equilibrium
    #[arg(long = "pure-only")]
    pure_only: bool,
    /// Worker threads (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Also write per-episode costs
    #[arg(long = "per-episode")]
    per_episode: bool,
    /// Also write kernels and stage games
    #[arg(long)]
    audit: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, c) = match cli.command {
        Command::Validate(c) => (Mode::Validate, c),
        Command::SolveFinite(c) => (Mode::SolveFinite, c),
        Command::SolveInfinite(c) => (Mode::SolveInfinite, c),
        Command::Simulate(c) => (Mode::Simulate, c),
        Command::Compare(c) => (Mode::Compare, c),
        Command::Bound(c) => (Mode::Bound, c),
        Command::StaticTne(c) => (Mode::StaticTne, c),
    };
    let config = ExperimentConfig {
        mode,
        spec: c.spec,
        out: c.out,
        seed: c.seed,
        episodes: c.episodes,
        grid_g: c.grid_g,
        simplex_n: c.simplex_n,
        n_sweep: c.n_sweep,
        pure_only: c.pure_only,
        workers: c.workers,
        per_episode: c.per_episode,
        audit: c.audit,
    };
    let outcome = run(&config);
    if let Some(msg) = &outcome.error {
        eprintln!("error: {msg}");
    }
    ExitCode::from(outcome.exit_code as u8)
}
