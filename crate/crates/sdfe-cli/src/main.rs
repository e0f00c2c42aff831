//! `sdfe` — solve and compare supply-function equilibria from the shell.
//!
//! Exit codes: 0 ok, 1 validation failed, 2 bad input, 3 no convergence
//! (including unbracketed thresholds), 4 singular or degenerate system.

mod commands;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sdfe::{ChainRegime, RegimeKind, SdfeError, SolveOptions, SubstitutesOptions};

use commands::ValidationFailed;
use report::{Format, Report};

#[derive(Parser, Debug)]
#[command(name = "sdfe", version, about = "Supply and demand function equilibria on input-output networks")]
struct Cli {
    #[command(flatten)]
    out: OutputArgs,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "pretty")]
    format: Format,

    /// Significant digits for numbers.
    #[arg(long, global = true, default_value_t = 9, value_parser = clap::value_parser!(u8).range(1..=17))]
    precision: u8,

    /// Write to this file instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1.0)]
    damping: f64,
    /// Upper starting slope for firms with kappa = 0.
    #[arg(long)]
    cap: Option<f64>,
}

impl SolverArgs {
    fn options(&self) -> SolveOptions {
        SolveOptions { tol: self.tol, max_iter: self.max_iter, damping: self.damping, cap: self.cap }
    }
}

#[derive(Args, Debug)]
struct ChainArgs {
    #[arg(long)]
    layers: usize,
    /// Firms per layer, downstream first; one value is broadcast.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    firms: Vec<f64>,
    /// Capacity k = 1/kappa per layer; one value is broadcast.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    k: Vec<f64>,
    #[arg(long = "Bc", alias = "bc", default_value_t = 1.0)]
    b_c: f64,
    #[arg(long = "A", alias = "a", default_value_t = 1.0)]
    a: f64,
    /// Linear labor cost of the last layer.
    #[arg(long = "f-L", alias = "f-l", default_value_t = 0.0)]
    f_l: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check viability and connectivity of an economy file.
    Validate { economy: PathBuf },
    /// Solve one regime.
    Solve {
        economy: PathBuf,
        #[arg(long, default_value = "multilateral", value_parser = parse_regime)]
        regime: RegimeKind,
        /// Explicit up-set for a unilateral regime, as FIRM=good1,good2.
        #[arg(long = "up-set")]
        up_sets: Vec<String>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Multilateral vs unilateral-inputs vs local on one economy.
    Compare {
        economy: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Closed-form layered chain.
    Chain {
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long, default_value = "multilateral", value_parser = parse_chain_regime)]
        regime: ChainRegime,
    },
    /// Vertical merger of the two downstream layers.
    Merger {
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long = "Bc", alias = "bc", default_value_t = 1.0)]
        b_c: f64,
        #[arg(long = "A", alias = "a", default_value_t = 1.0)]
        a: f64,
        #[arg(long = "n1-max", default_value_t = 20)]
        n1_max: usize,
    },
    /// Quantity and welfare of multilateral vs local as chains deepen.
    SweepDepth {
        #[arg(long = "N-max", alias = "n-max", default_value_t = 30)]
        n_max: usize,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long = "Bc", alias = "bc", default_value_t = 1.0)]
        b_c: f64,
        #[arg(long = "A", alias = "a", default_value_t = 1.0)]
        a: f64,
    },
    /// Per-layer markups, markdowns and profits in every chain regime.
    Surplus {
        #[command(flatten)]
        chain: ChainArgs,
    },
    /// Goods network, centrality prices and markup centralities.
    GoodsNetwork {
        economy: PathBuf,
        #[arg(long, default_value = "multilateral", value_parser = parse_regime)]
        regime: RegimeKind,
        /// Drop this firm from the network (markup centrality view).
        #[arg(long)]
        remove: Option<String>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Matrix supply functions for firms with substitutable inputs.
    SolveSubstitutes {
        economy: PathBuf,
        #[arg(long, default_value = "multilateral", value_parser = parse_regime)]
        regime: RegimeKind,
        /// Replace every price impact by zero.
        #[arg(long)]
        zero_impact: bool,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
    },
}

fn parse_regime(s: &str) -> std::result::Result<RegimeKind, String> {
    s.parse().map_err(|e: SdfeError| e.to_string())
}

fn parse_chain_regime(s: &str) -> std::result::Result<ChainRegime, String> {
    s.parse().map_err(|e: SdfeError| e.to_string())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SDFE_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("SDFE_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let mut failure = None;
    init_threads()?;
    let rep: Report = match cli.cmd {
        Command::Validate { economy } => {
            let (rep, f) = commands::cmd_validate(&commands::load(&economy)?)?;
            failure = f;
            rep
        }
        Command::Solve { economy, regime, up_sets, solver } => {
            let e = commands::load(&economy)?;
            let r = commands::build_regime(&e, regime, &up_sets)?;
            commands::cmd_solve(&e, &r, &solver.options())?
        }
        Command::Compare { economy, solver } => commands::cmd_compare(&commands::load(&economy)?, &solver.options())?,
        Command::Chain { chain, regime } => {
            let spec = commands::chain_spec(chain.layers, &chain.firms, &chain.k, chain.b_c, chain.a, chain.f_l)?;
            commands::cmd_chain(&spec, &[regime])?
        }
        Command::Merger { k, b_c, a, n1_max } => commands::cmd_merger(n1_max, k, b_c, a)?,
        Command::SweepDepth { n_max, k, b_c, a } => commands::cmd_sweep_depth(n_max, k, b_c, a)?,
        Command::Surplus { chain } => {
            let spec = commands::chain_spec(chain.layers, &chain.firms, &chain.k, chain.b_c, chain.a, chain.f_l)?;
            commands::cmd_chain(&spec, &ChainRegime::ALL)?
        }
        Command::GoodsNetwork { economy, regime, remove, solver } => {
            let e = commands::load(&economy)?;
            let r = commands::build_regime(&e, regime, &[])?;
            commands::cmd_goods_network(&e, &r, &solver.options(), remove.as_deref())?
        }
        Command::SolveSubstitutes { economy, regime, zero_impact, tol, max_iter } => {
            let e = commands::load(&economy)?;
            let opts = SubstitutesOptions { regime, tol, max_iter, zero_impact };
            commands::cmd_substitutes(&e, &opts)?
        }
    };

    let digits = cli.out.precision as usize;
    match &cli.out.output {
        Some(path) => {
            let mut f = std::io::BufWriter::new(
                std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
            );
            rep.write(&mut f, cli.out.format, digits)?;
            f.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            rep.write(&mut lock, cli.out.format, digits)?;
        }
    }
    if let Some(msg) = failure {
        eprintln!("error: {msg}");
        return Ok(false);
    }
    Ok(true)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ValidationFailed>().is_some() {
        return 1;
    }
    match err.downcast_ref::<SdfeError>() {
        Some(SdfeError::NotConverged { .. } | SdfeError::ThresholdNotBracketed { .. }) => 3,
        Some(
            SdfeError::SingularSystem { .. }
            | SdfeError::NotPositiveDefinite(_)
            | SdfeError::DegenerateReply(_)
            | SdfeError::DegenerateChain(_)
            | SdfeError::NoPositiveRoot(_),
        ) => 4,
        _ => 2,
    }
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<csv::Error>().is_some_and(
                |e| matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe),
            )
            || c.downcast_ref::<serde_json::Error>()
                .is_some_and(|e| e.io_error_kind() == Some(std::io::ErrorKind::BrokenPipe))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
