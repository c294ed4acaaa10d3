//! Command-line front end for the dengue vector-control toolkit.
//!
//! Subcommands map onto the scenario runner: `simulate`, `r0`, `optimize`,
//! `compare` and `figure`. Each accepts a `key = value` config file plus a
//! handful of flag overrides; results land as CSV files in the output
//! directory. Exit status 0 means success, 2 means the optimizer stopped
//! without meeting its convergence criteria (files are still written), and
//! 1 is any other failure.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vctrl::ocp::Channel;
use vctrl::r0::SweepPair;
use vctrl::scenario::{self, Figure, RunConfig, Scenario};

#[derive(Parser)]
#[command(
    name = "vctrl",
    version,
    about = "SIR+ASI dengue vector-control model runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Time horizon in days.
    #[arg(long)]
    tf: Option<f64>,
    /// Number of control intervals.
    #[arg(long)]
    intervals: Option<usize>,
    /// Seed for multistart draws.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the model under constant controls.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Reproduction number: point value, or a grid when --pair is given.
    R0 {
        #[command(flatten)]
        common: CommonArgs,
        /// Control pair to sweep (cm-ca, cm-alpha, ca-alpha).
        #[arg(long)]
        pair: Option<String>,
        /// Grid resolution per axis.
        #[arg(long)]
        resolution: Option<usize>,
        /// Fixed value of the third control.
        #[arg(long)]
        fixed: Option<f64>,
    },
    /// Solve the optimal-scheduling problem.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
        /// Weight case A, B or C.
        #[arg(long)]
        case: Option<String>,
        /// Optimize one channel only (adulticide, larvicide, mechanical).
        #[arg(long)]
        single: Option<String>,
    },
    /// Optimize and also write the no-control baseline.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        case: Option<String>,
    },
    /// Write the data behind one of the standard figures.
    Figure {
        #[command(flatten)]
        common: CommonArgs,
        /// Which figure (fig1a, fig1b, fig1c, fig2 .. fig8).
        #[arg(long)]
        which: String,
        #[arg(long)]
        case: Option<String>,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, String> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            scenario::parse_config(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(tf) = common.tf {
        if !tf.is_finite() || tf <= 0.0 {
            return Err("--tf must be positive".into());
        }
        config.t_f = tf;
        config.n_intervals = tf.round().max(1.0) as usize;
        config.integrator.output_points = vctrl::integrator::default_output_points(tf);
    }
    if let Some(n) = common.intervals {
        if n == 0 {
            return Err("--intervals must be at least 1".into());
        }
        config.n_intervals = n;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
        config.solver.seed = seed;
    }
    Ok(config)
}

fn apply_case(config: &mut RunConfig, case: &Option<String>) -> Result<(), String> {
    if let Some(case) = case {
        let case = case.parse::<vctrl::ocp::WeightCase>()?;
        config.weights = vctrl::ocp::scenario_weights(case);
    }
    Ok(())
}

fn run() -> Result<bool, String> {
    if let Ok(threads) = std::env::var("VCTRL_THREADS") {
        let threads: usize = threads
            .parse()
            .map_err(|_| "VCTRL_THREADS must be a positive integer".to_string())?;
        if threads == 0 {
            return Err("VCTRL_THREADS must be a positive integer".into());
        }
        // ignore failure when a pool already exists (e.g. repeated init)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let cli = Cli::parse();
    let report = match &cli.command {
        Command::Simulate { common } => {
            let mut config = load_config(common)?;
            config.scenario = Scenario::Simulate;
            scenario::run(&config).map_err(|e| e.to_string())?
        }
        Command::R0 {
            common,
            pair,
            resolution,
            fixed,
        } => {
            let mut config = load_config(common)?;
            config.scenario = Scenario::R0Point;
            if let Some(pair) = pair {
                config.scenario = Scenario::R0Sweep;
                config.sweep.pair = match pair.as_str() {
                    "cm-ca" => SweepPair::CmCa,
                    "cm-alpha" => SweepPair::CmAlpha,
                    "ca-alpha" => SweepPair::CaAlpha,
                    other => return Err(format!("unknown pair `{other}`")),
                };
            }
            if let Some(res) = resolution {
                config.sweep.resolution = *res;
            }
            if fixed.is_some() {
                config.sweep.fixed = *fixed;
            }
            scenario::run(&config).map_err(|e| e.to_string())?
        }
        Command::Optimize {
            common,
            case,
            single,
        } => {
            let mut config = load_config(common)?;
            config.scenario = Scenario::Optimize;
            apply_case(&mut config, case)?;
            if let Some(single) = single {
                config.scenario = Scenario::OptimizeSingle;
                config.single = Some(single.parse::<Channel>()?);
            }
            scenario::run(&config).map_err(|e| e.to_string())?
        }
        Command::Compare { common, case } => {
            let mut config = load_config(common)?;
            config.scenario = Scenario::Compare;
            apply_case(&mut config, case)?;
            scenario::run(&config).map_err(|e| e.to_string())?
        }
        Command::Figure {
            common,
            which,
            case,
        } => {
            let mut config = load_config(common)?;
            apply_case(&mut config, case)?;
            let figure = which.parse::<Figure>()?;
            scenario::emit_figure_data(figure, &config).map_err(|e| e.to_string())?
        }
    };

    for file in &report.files {
        println!("wrote {}", file.display());
    }
    if !report.converged {
        eprintln!("warning: optimizer stopped before meeting its convergence criteria");
    }
    Ok(report.converged)
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
