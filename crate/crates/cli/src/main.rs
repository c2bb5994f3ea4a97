use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pantodamp_cli::{run, Mode, RunConfig};

#[derive(Parser)]
#[command(
    name = "pantodamp",
    about = "Optimal damping of delay control systems on temporal trees",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Problem file (JSON).
    #[arg(long)]
    problem: PathBuf,
    /// Target mesh spacing.
    #[arg(long)]
    h: f64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Relative tolerance for the verification gates.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Seed for the randomised optimality probes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the optimal-damping problem and write trajectories and controls.
    Solve(CommonArgs),
    /// Integrate the forward problem with user-supplied controls.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Controls CSV with `edge,t,u` rows, interpreted per edge as
        /// piecewise-linear in t.
        #[arg(long)]
        controls: PathBuf,
    },
    /// Solve, then run the full verification battery.
    Verify(CommonArgs),
    /// Refinement study across dyadically nested meshes.
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of refinement levels (at least 3).
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
}

fn to_config(command: Command) -> RunConfig {
    let (mode, common, levels, controls) = match command {
        Command::Solve(c) => (Mode::Solve, c, 3, None),
        Command::Simulate { common, controls } => (Mode::Simulate, common, 3, Some(controls)),
        Command::Verify(c) => (Mode::Verify, c, 3, None),
        Command::Convergence { common, levels } => (Mode::Convergence, common, levels, None),
    };
    RunConfig {
        mode,
        problem: common.problem,
        h: common.h,
        levels,
        out: common.out,
        tol: common.tol,
        seed: common.seed,
        controls,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&to_config(cli.command)) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(1)
        }
    }
}
