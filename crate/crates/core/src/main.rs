use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use ecodrive::experiment::{
    emit_report, level_preset, oracle_check, run_matrix, ControllerKind, ExperimentMatrix,
    InternalLevel,
};
use ecodrive::ScenarioConfig;

#[derive(Parser)]
#[command(
    name = "ecodrive",
    version,
    about = "Eco-driving signalized-intersection simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the controller × extension × disturbance matrix and write reports.
    Run {
        /// Scenario TOML file; defaults apply to omitted keys.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "analytical,optimal")]
        controllers: Vec<String>,
        /// Red extensions in seconds.
        #[arg(long, value_delimiter = ',', default_value = "0,2,4,6")]
        extensions: Vec<f64>,
        /// Internal disturbance levels: none, low, medium, high, or `scenario`
        /// for the scenario file's [disturbance] section.
        #[arg(long, value_delimiter = ',', default_value = "scenario")]
        levels: Vec<String>,
        #[arg(long, default_value_t = 1)]
        reps: u32,
        /// Base seed; repetition r uses seed + r.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Compare the optimizer with the brute-force oracles on toy instances.
    OracleCheck {
        #[arg(long, default_value_t = 10)]
        steps: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run {
            scenario,
            controllers,
            extensions,
            levels,
            reps,
            seed,
            out,
            workers,
        } => {
            let mut base = match &scenario {
                Some(path) => ScenarioConfig::load(path)
                    .with_context(|| format!("loading {}", path.display()))?,
                None => ScenarioConfig::default(),
            };
            if let Some(s) = seed {
                base.seed = s;
            }
            let controllers = controllers
                .iter()
                .map(|c| c.parse::<ControllerKind>())
                .collect::<Result<Vec<_>, _>>()?;
            let internal_levels = levels
                .iter()
                .map(|name| match name.as_str() {
                    "scenario" => Ok(InternalLevel::new("scenario", base.disturbance)),
                    other => level_preset(other)
                        .with_context(|| format!("unknown disturbance level '{other}'")),
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let matrix = ExperimentMatrix {
                controllers,
                extensions_s: extensions,
                internal_levels,
                repetitions: reps,
                base_config: base,
                output_dir: out.clone(),
                workers,
            };
            let outcome = run_matrix(&matrix)?;
            emit_report(&outcome, &out)?;
            let failed = outcome.rows.iter().filter(|r| !r.ok()).count();
            println!(
                "{} rows written to {} ({failed} failed)",
                outcome.rows.len(),
                out.display()
            );
            for r in outcome.rows.iter().filter(|r| !r.ok()) {
                println!(
                    "  {} {} seed {}: {}",
                    r.method, r.scenario, r.seed, r.status
                );
            }
            Ok(failed == 0)
        }
        Command::OracleCheck { steps } => {
            if steps < 2 {
                bail!("--steps must be at least 2");
            }
            let mut all_ok = true;
            for (i, c) in oracle_check(steps)?.iter().enumerate() {
                let ok = c.solver_within_bound() && c.oracles_agree();
                all_ok &= ok;
                let exhaustive = c
                    .exhaustive_objective
                    .map_or("skipped".to_string(), |e| format!("{e:.6}"));
                println!(
                    "instance {i}: solver {:.6} dp {:.6} exhaustive {exhaustive} slack {:.6} -> {}",
                    c.solver_objective,
                    c.dp_objective,
                    c.slack,
                    if ok { "ok" } else { "FAIL" }
                );
            }
            Ok(all_ok)
        }
    }
}
