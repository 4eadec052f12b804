//! `rmvp` — command-line front end for the robust-mvp toolkit.
//!
//! Three subcommands map onto the library drivers: `simulate` runs
//! replicated synthetic experiments from a TOML config, `estimate` fits the
//! factor model and covariance on a CSV panel, `backtest` evaluates
//! strategies in a rolling window. Exit codes: 0 success, 2 config error,
//! 3 data error, 4 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use robust_mvp::config::{
    BacktestConfig, CommandKind, EstimateConfig, EstimationConfig, RunConfig, Threads,
};
use robust_mvp::driver;
use robust_mvp::factor::NumFactors;
use robust_mvp::threshold::{ThresholdConstant, ThresholdRule};

#[derive(Parser)]
#[command(
    name = "rmvp",
    version,
    about = "Shock-adaptive minimum variance portfolios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicated synthetic experiments from a TOML config.
    Simulate(SimulateArgs),
    /// Fit the robust factor model and covariance on a CSV panel.
    Estimate(EstimateArgs),
    /// Rolling-window out-of-sample evaluation on a CSV panel.
    Backtest(BacktestArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads ("auto" or a count). ROBUSTMVP_THREADS overrides.
    #[arg(long, default_value = "auto")]
    threads: String,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML run config (must contain a `[simulate]` block).
    #[arg(long)]
    config: PathBuf,
    /// Accept up to this many failed strategy cells.
    #[arg(long)]
    tolerate_failures: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Clone)]
struct EstimationArgs {
    /// Number of factors ("auto" or an integer).
    #[arg(long, default_value = "auto")]
    factors: String,
    /// Residual-norm quantile for the robustness threshold.
    #[arg(long)]
    quantile: Option<f64>,
    /// Force the classic-PCA special case (quantile 1.0).
    #[arg(long)]
    poet: bool,
    /// Thresholding constant ("cv" or a number).
    #[arg(long, default_value = "0.5")]
    threshold_const: String,
    /// Shrinkage rule.
    #[arg(long, value_enum, default_value_t = RuleArg::Soft)]
    rule: RuleArg,
    /// Cross-validation folds.
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Cross-validation candidate grid, comma-separated and ascending.
    #[arg(long)]
    cv_grid: Option<String>,
    /// Cross-validation seed.
    #[arg(long)]
    cv_seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Soft,
    Hard,
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV panel (header: `date,<asset ids>`).
    #[arg(long)]
    panel: PathBuf,
    #[command(flatten)]
    estimation: EstimationArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    FixAtFirstNode,
    RefitEachNode,
}

#[derive(Args)]
struct BacktestArgs {
    /// CSV panel (header: `date,<asset ids>`).
    #[arg(long)]
    panel: PathBuf,
    /// Trailing estimation window length.
    #[arg(long)]
    window: usize,
    /// Holding length between rebalances.
    #[arg(long)]
    hold: usize,
    /// Transaction cost in basis points per unit of turnover.
    #[arg(long, default_value_t = 10.0)]
    cost_bps: f64,
    /// Comma-separated strategy names.
    #[arg(
        long,
        default_value = "equal_weight,sample,linear_shrinkage,poet,r_mvp"
    )]
    strategies: String,
    /// Parameter refresh policy.
    #[arg(long, value_enum, default_value_t = PolicyArg::FixAtFirstNode)]
    param_policy: PolicyArg,
    /// Hold target weights fixed within holding periods (no drift).
    #[arg(long)]
    frozen_weights: bool,
    /// Inclusive start label.
    #[arg(long)]
    start: Option<String>,
    /// Inclusive end label.
    #[arg(long)]
    end: Option<String>,
    #[command(flatten)]
    estimation: EstimationArgs,
    #[command(flatten)]
    common: CommonArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, driver::DriverError> {
    let config = build_config(&cli)?;
    let print_only = match &cli.command {
        Command::Simulate(a) => a.common.print_config,
        Command::Estimate(a) => a.common.print_config,
        Command::Backtest(a) => a.common.print_config,
    };
    if print_only {
        print!("{}", config.to_toml_string());
        return Ok(ExitCode::SUCCESS);
    }
    let summary = driver::run(&config)?;
    print!("{}", summary.text);
    eprintln!(
        "wrote {} artifact(s) to {}",
        summary.artifacts.len(),
        config.output_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn build_config(cli: &Cli) -> Result<RunConfig, driver::DriverError> {
    let config_err = |m: String| driver::DriverError {
        kind: driver::DriverErrorKind::Config,
        message: m,
    };
    match &cli.command {
        Command::Simulate(args) => {
            let mut config = RunConfig::from_toml_path(&args.config)?;
            if config.command != CommandKind::Simulate {
                return Err(config_err(format!(
                    "config {} does not describe a simulate run",
                    args.config.display()
                )));
            }
            config.output_dir = args.common.out.clone();
            config.threads = parse_threads(&args.common.threads).map_err(config_err)?;
            if let (Some(tol), Some(sim)) = (args.tolerate_failures, config.simulate.as_mut()) {
                sim.tolerate_failures = tol;
            }
            Ok(config)
        }
        Command::Estimate(args) => {
            let estimation = estimation_config(&args.estimation).map_err(config_err)?;
            Ok(RunConfig {
                command: CommandKind::Estimate,
                output_dir: args.common.out.clone(),
                log_level: "info".into(),
                threads: parse_threads(&args.common.threads).map_err(config_err)?,
                simulate: None,
                estimate: Some(EstimateConfig {
                    panel: args.panel.clone(),
                    estimation,
                }),
                backtest: None,
            })
        }
        Command::Backtest(args) => {
            let estimation = estimation_config(&args.estimation).map_err(config_err)?;
            Ok(RunConfig {
                command: CommandKind::Backtest,
                output_dir: args.common.out.clone(),
                log_level: "info".into(),
                threads: parse_threads(&args.common.threads).map_err(config_err)?,
                simulate: None,
                estimate: None,
                backtest: Some(BacktestConfig {
                    panel: args.panel.clone(),
                    window: args.window,
                    holding: args.hold,
                    cost_bps: args.cost_bps,
                    strategies: args
                        .strategies
                        .split(',')
                        .map(|s| s.trim().to_owned())
                        .filter(|s| !s.is_empty())
                        .collect(),
                    param_policy: match args.param_policy {
                        PolicyArg::FixAtFirstNode => {
                            robust_mvp::backtest::ParamPolicy::FixAtFirstNode
                        }
                        PolicyArg::RefitEachNode => {
                            robust_mvp::backtest::ParamPolicy::RefitEachNode
                        }
                    },
                    frozen_weights: args.frozen_weights,
                    start: args.start.clone(),
                    end: args.end.clone(),
                    estimation,
                }),
            })
        }
    }
}

fn estimation_config(args: &EstimationArgs) -> Result<EstimationConfig, String> {
    let defaults = EstimationConfig::default();
    let num_factors = match args.factors.as_str() {
        "auto" => NumFactors::AUTO,
        text => NumFactors::Fixed(
            text.parse::<usize>()
                .map_err(|_| format!("--factors: expected \"auto\" or an integer, got {text:?}"))?,
        ),
    };
    let threshold_constant = match args.threshold_const.as_str() {
        "cv" => ThresholdConstant::CV,
        text => ThresholdConstant::Fixed(text.parse::<f64>().map_err(|_| {
            format!("--threshold-const: expected \"cv\" or a number, got {text:?}")
        })?),
    };
    let cv_grid = match &args.cv_grid {
        None => defaults.cv_grid.clone(),
        Some(text) => text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("--cv-grid: {s:?} is not a number"))
            })
            .collect::<Result<Vec<f64>, _>>()?,
    };
    Ok(EstimationConfig {
        num_factors,
        threshold_quantile: if args.poet {
            1.0
        } else {
            args.quantile.unwrap_or(defaults.threshold_quantile)
        },
        threshold_constant,
        threshold_rule: match args.rule {
            RuleArg::Soft => ThresholdRule::Soft,
            RuleArg::Hard => ThresholdRule::Hard,
        },
        cv_folds: args.cv_folds.unwrap_or(defaults.cv_folds),
        cv_grid,
        cv_seed: args.cv_seed.unwrap_or(defaults.cv_seed),
        ..defaults
    })
}

fn parse_threads(text: &str) -> Result<Threads, String> {
    if text == "auto" {
        return Ok(Threads::AUTO);
    }
    text.parse::<usize>()
        .map(Threads::Fixed)
        .map_err(|_| format!("--threads: expected \"auto\" or a count, got {text:?}"))
}
