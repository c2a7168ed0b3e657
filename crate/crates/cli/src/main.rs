//! `hpfactor`: the factor pipeline from transactions to scenario tables.
//!
//! Every command reads and writes under `<out_dir>/<run_id>/`. Upstream
//! artifacts are checked against the current config hash before use.

mod charts;
mod config;
mod error;
mod pipeline;
mod run;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use hpfactor::exec::{init_threads, Exec};

use config::{keys_help, PipelineConfig};
use error::{CliError, CliResult};
use pipeline::Ctx;
use run::{RunDir, RunManifest, StepRecord};

#[derive(Parser, Debug)]
#[command(name = "hpfactor", version, about = "Regional house price factor pipeline")]
struct Cli {
    /// JSON config file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set windows.step=6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output root (config key `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run directory name (config key `run_id`).
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// Seed of the synthetic world (config key `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything sequentially, 0 lets rayon decide.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Also render SVG charts from the CSV artifacts.
    #[arg(long, global = true)]
    charts: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Generate a synthetic world with planted factors and loadings.
    Synth,
    /// Load transactions, pair repeat sales and estimate the index panels.
    BuildIndex,
    /// Principal components of the fine-region panel.
    Pca,
    /// Build the market, mining and lifestyle factors.
    Factors,
    /// Select ARIMA orders for the factor spreads and regional disturbances.
    Select,
    /// Full-sample regional loadings with standard errors.
    Fit,
    /// Expanding-window loadings and their medians.
    Windows,
    /// Forecast fans of the factor spreads.
    Fans,
    /// Cumulative factor decomposition of each regional index.
    Decompose,
    /// Scenario map and uncertainty bands.
    Scenario,
    /// Structural breaks in a factor spread.
    Breaks,
    /// Every step from build-index to breaks.
    All,
    /// Print the effective config as JSON.
    Config,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::BuildIndex => "build-index",
            Command::Pca => "pca",
            Command::Factors => "factors",
            Command::Select => "select",
            Command::Fit => "fit",
            Command::Windows => "windows",
            Command::Fans => "fans",
            Command::Decompose => "decompose",
            Command::Scenario => "scenario",
            Command::Breaks => "breaks",
            Command::All => "all",
            Command::Config => "config",
        }
    }

    fn steps(self) -> Vec<Command> {
        use Command::*;
        match self {
            All => vec![BuildIndex, Pca, Factors, Select, Fit, Windows, Fans, Decompose, Scenario, Breaks],
            Config => vec![],
            c => vec![c],
        }
    }

    fn execute(self, ctx: &mut Ctx) -> CliResult<()> {
        match self {
            Command::Synth => pipeline::synth(ctx),
            Command::BuildIndex => pipeline::build_index(ctx),
            Command::Pca => pipeline::pca(ctx),
            Command::Factors => pipeline::factors(ctx),
            Command::Select => pipeline::select(ctx),
            Command::Fit => pipeline::fit_loadings(ctx),
            Command::Windows => pipeline::windows(ctx),
            Command::Fans => pipeline::fans(ctx),
            Command::Decompose => pipeline::decomposition(ctx),
            Command::Scenario => pipeline::scenario(ctx),
            Command::Breaks => pipeline::breaks(ctx),
            Command::All | Command::Config => unreachable!("composite command"),
        }
    }
}

fn parse() -> Cli {
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for n in names {
        let help = keys_help(&n);
        cmd = cmd.mut_subcommand(&n, |s| s.after_help(help));
    }
    let matches = cmd.get_matches();
    Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit())
}

fn run(cli: Cli) -> CliResult<()> {
    let mut overrides = cli.set.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(o) = &cli.out {
        overrides.push(format!("out_dir={}", serde_json::json!(o)));
    }
    if let Some(r) = &cli.run_id {
        overrides.push(format!("run_id={}", serde_json::json!(r)));
    }
    if cli.charts {
        overrides.push("charts=true".into());
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    if cli.command == Command::Config {
        // a closed pipe (e.g. `| head`) is not an error
        let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }

    let exec = if cli.threads == 1 {
        Exec::Sequential
    } else {
        init_threads(cli.threads);
        Exec::Parallel
    };
    let run = RunDir::new(&cfg);
    let mut manifest = RunManifest::load_or_new(&run, &cfg);
    manifest.threads = cli.threads;
    manifest.parallel = exec == Exec::Parallel && Exec::is_parallel_available();
    manifest.last_command = cli.command.name().to_string();
    run.write_json("config.json", &cfg)?;
    run.take_written();

    let mut ctx = Ctx {
        cfg: &cfg,
        run: &run,
        exec,
        warnings: vec![],
        failures: vec![],
    };
    let mut outcome = Ok(());
    for step in cli.command.steps() {
        let t0 = Instant::now();
        log::info!("running {}", step.name());
        let (w0, f0) = (ctx.warnings.len(), ctx.failures.len());
        let res = step.execute(&mut ctx);
        manifest.steps.insert(
            step.name().to_string(),
            StepRecord {
                seconds: t0.elapsed().as_secs_f64(),
                artifacts: run.take_written(),
                warnings: ctx.warnings[w0..].to_vec(),
                validation_failures: ctx.failures[f0..].to_vec(),
            },
        );
        if let Err(e) = res {
            outcome = Err(e);
            break;
        }
    }
    if outcome.is_ok() && cfg.charts {
        match charts::render(&run) {
            Ok(files) => {
                manifest.steps.insert(
                    "charts".into(),
                    StepRecord {
                        artifacts: files,
                        ..Default::default()
                    },
                );
            }
            Err(e) => outcome = Err(e),
        }
    }
    manifest.save(&run)?;
    outcome?;
    if !ctx.failures.is_empty() {
        return Err(CliError::Validation(ctx.failures));
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = parse();
    if let Err(e) = run(cli) {
        let _ = writeln!(std::io::stdout(), "{}", e.to_json());
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
