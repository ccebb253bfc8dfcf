//! `qtdg`: convergence studies and field snapshots for the quasi-Trefftz DG
//! solver, driven either by flags or by a JSON experiment config.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure. Both
//! failure kinds print a single `error (<stage>): ...` line on stderr.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CliError, ExperimentConfig, GammaRule};

#[derive(Parser)]
#[command(
    name = "qtdg",
    version,
    about = "Quasi-Trefftz DG experiments on the unit square",
    after_help = "Built-in problems: poly_reaction, exp_diffusion, smooth_dar, \
                  advdom_neumann(nu), advdom_dirichlet(nu), reactdom(nu).\n\
                  Set QTDG_THREADS to cap assembly parallelism."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        /// Path to the config (see `ExperimentConfig` in the README).
        #[arg(long)]
        config: PathBuf,
    },
    /// Convergence sweep over degrees pmin..=pmax and the given levels.
    Convergence {
        #[arg(long)]
        problem: String,
        /// Diffusion scale for the problems that take one.
        #[arg(long)]
        nu: Option<f64>,
        /// Discrete space: qt or full.
        #[arg(long, default_value = "qt")]
        space: String,
        #[arg(long)]
        pmin: u32,
        #[arg(long)]
        pmax: u32,
        /// Comma-separated elements-per-axis, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        /// -1 SIPG, 0 IIPG, +1 NIPG.
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        epsilon: f64,
        /// Penalty: a number or "8p2".
        #[arg(long, default_value = "8p2")]
        gamma: String,
        /// Quadrature points per axis (default: degree-dependent).
        #[arg(long)]
        quad: Option<usize>,
        /// Output directory for convergence.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve with both spaces on one mesh and tabulate dofs vs error.
    Compare {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        pmin: u32,
        #[arg(long)]
        pmax: u32,
        /// Elements per axis.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        epsilon: f64,
        #[arg(long, default_value = "8p2")]
        gamma: String,
        #[arg(long)]
        quad: Option<usize>,
        /// Output directory for compare.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one case and sample it on a 101x101 grid, one value per line.
    Snapshot {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        p: u32,
        /// Elements per axis.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        epsilon: f64,
        /// Penalty value (a number; degree rules make no sense for one run).
        #[arg(long, allow_negative_numbers = true)]
        gamma: f64,
        #[arg(long)]
        quad: Option<usize>,
        /// Output file for the grid values.
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let (path, record) = runner::run_to_csv(&cfg, "results.csv")?;
            report(&path, &record);
            Ok(())
        }
        Command::Convergence {
            problem,
            nu,
            space,
            pmin,
            pmax,
            levels,
            epsilon,
            gamma,
            quad,
            out,
        } => {
            if pmin > pmax {
                return Err(CliError::Config(format!("pmin {pmin} exceeds pmax {pmax}")));
            }
            let cfg = ExperimentConfig {
                problem,
                nu,
                space,
                degrees: (pmin..=pmax).collect(),
                levels,
                epsilon,
                gamma: GammaRule::parse_flag(&gamma)?,
                quad_points: quad,
                out,
            };
            let (path, record) = runner::run_to_csv(&cfg, "convergence.csv")?;
            report(&path, &record);
            Ok(())
        }
        Command::Compare { problem, nu, pmin, pmax, n, epsilon, gamma, quad, out } => {
            let rule = GammaRule::parse_flag(&gamma)?;
            let path =
                runner::compare_spaces(&problem, nu, pmin, pmax, n, epsilon, &rule, quad, &out)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Snapshot { problem, nu, p, n, epsilon, gamma, quad, out } => {
            runner::snapshot(&problem, nu, p, n, epsilon, gamma, quad, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

/// Print where the CSV went plus a terse per-row summary on stdout.
fn report(path: &std::path::Path, record: &runner::RunRecord) {
    for w in &record.warnings {
        eprintln!("warning: {w}");
    }
    for row in &record.rows {
        let rate = row
            .rates
            .map(|t| format!(" rate_L2={:.2}", t.l2))
            .unwrap_or_default();
        println!(
            "{} p={} n={} dofs={} err_L2={:.3e}{}",
            row.space, row.p, row.n, row.report.dofs, row.report.err_l2, rate
        );
    }
    println!("wrote {}", path.display());
}

fn main() -> ExitCode {
    // Opt-in cap on the rayon pool; useful for timing runs and CI boxes.
    if let Ok(threads) = std::env::var("QTDG_THREADS") {
        match threads.parse::<usize>() {
            Ok(t) if t > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
            _ => {
                eprintln!("error (config): QTDG_THREADS must be a positive integer, got {threads:?}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({}): {e}", e.stage());
            ExitCode::from(e.exit_code())
        }
    }
}
