//! Batch front door: channel and state ingestion, one subcommand per
//! module, machine-readable reports with embedded run manifests.
//!
//! Exit status is 0 exactly when every requested check passed. The dimension
//! cap can be overridden with the `PRIVMAC_DIM_CAP` environment variable.

mod commands;
mod spec;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{Format, Output};

#[derive(Parser)]
#[command(
    name = "privmac",
    about = "Rate regions, leftover-hash verification, and coding simulation for cq multiple-access wiretap channels",
    version
)]
struct Cli {
    /// Master seed for all randomized computations.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Tolerance forwarded to commands that take one.
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<String>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Records)]
    format: FormatArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Records,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Entropic quantities of a state, cq-state, or channel+ensemble spec.
    Entropy {
        #[arg(long)]
        spec: String,
        /// Factor index splitting A from B for plain state fixtures.
        #[arg(long, default_value_t = 1)]
        split: usize,
    },
    /// Achievable-region bounds, corner points, and the L = 2 polygon.
    Region {
        #[arg(long)]
        spec: String,
    },
    /// Seeded random-instance verification of the leftover-hash bound.
    Hashlemma {
        #[arg(long, default_value_t = 200)]
        count: u64,
    },
    /// Smoothing-construction check on a joint pmf.
    Aep {
        #[arg(long)]
        pmf: String,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        epsilon: f64,
    },
    /// Concentration-bound value for an iid log-probability deviation.
    Tail {
        #[arg(long)]
        alphabet: usize,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        delta: f64,
    },
    /// Maximize a sum-rate objective over input ensembles.
    Optimize {
        #[arg(long)]
        spec: String,
        /// `p` (private sum rate) or `q` (coherent-information sum rate).
        #[arg(long)]
        objective: String,
        /// Iteration budget per restart.
        #[arg(long, default_value_t = 160)]
        budget: usize,
        #[arg(long, default_value_t = 6)]
        restarts: usize,
        /// Grid points per axis for binary classical refinement.
        #[arg(long, default_value_t = 201)]
        grid: usize,
    },
    /// End-to-end coding simulation on a cq wiretap channel spec.
    Simulate {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        n: u32,
        /// Per-user hash output bits, comma separated.
        #[arg(long, value_delimiter = ',')]
        hash_bits: Vec<u32>,
        /// Per-user bin bits, comma separated.
        #[arg(long, value_delimiter = ',')]
        bin_bits: Vec<u32>,
        /// Expurgation parameter.
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
    },
    /// Numerical degradability check for a Kraus-form channel.
    Degradable {
        #[arg(long)]
        spec: String,
    },
}

fn main() {
    let cli = Cli::parse();
    let output = Output {
        out: cli.out.clone(),
        format: match cli.format {
            FormatArg::Records => Format::Records,
            FormatArg::Csv => Format::Csv,
        },
    };
    let result = match &cli.command {
        Command::Entropy { spec, split } => {
            commands::cmd_entropy(spec, *split, cli.seed, cli.tol, &output)
        }
        Command::Region { spec } => commands::cmd_region(spec, cli.seed, cli.tol, &output),
        Command::Hashlemma { count } => commands::cmd_hashlemma(*count, cli.seed, cli.tol, &output),
        Command::Aep { pmf, n, epsilon } => commands::cmd_aep(pmf, *n, *epsilon, cli.seed, &output),
        Command::Tail { alphabet, n, delta } => commands::cmd_tail(*alphabet, *n, *delta),
        Command::Optimize {
            spec,
            objective,
            budget,
            restarts,
            grid,
        } => commands::cmd_optimize(
            spec, objective, *budget, *restarts, *grid, cli.seed, cli.tol, &output,
        ),
        Command::Simulate {
            spec,
            n,
            hash_bits,
            bin_bits,
            alpha,
        } => commands::cmd_simulate(
            spec,
            *n,
            hash_bits.clone(),
            bin_bits.clone(),
            cli.seed,
            *alpha,
            &output,
        ),
        Command::Degradable { spec } => commands::cmd_degradable(spec, cli.tol, cli.seed, &output),
    };
    match result {
        Ok(true) => std::process::exit(0),
        Ok(false) => std::process::exit(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}
