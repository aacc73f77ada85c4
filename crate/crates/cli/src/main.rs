use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use asre_core::harness::verify::{self, Scope};
use asre_core::harness::{self, AgentKind, ExperimentConfig};
use asre_core::{EnvSpec, Error};
use clap::{Args, Parser, Subcommand};

/// Sparse-action reinforcement learning experiments.
#[derive(Parser)]
#[command(name = "asre", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent on every configured seed.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides the config's `agent`.
        #[arg(long)]
        agent: Option<AgentKind>,
    },
    /// Train several agents on the same environment and seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "asre,egreedy,softq,prior_penalty")]
        agents: Vec<AgentKind>,
    },
    /// Final score of the sparsity-regularized agent for each λ.
    SweepLambda {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.005,0.01,0.05,0.2")]
        lambdas: Vec<f64>,
    },
    /// Run the property and oracle checks and report pass/fail.
    Verify {
        /// Skip the training comparisons that take minutes.
        #[arg(long)]
        quick: bool,
    },
    /// Print a starter config for one of the built-in environments.
    ExampleConfig {
        #[arg(long, default_value = "shooter", value_parser = ["shooter", "market", "chain"])]
        env: String,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long, short)]
    config: PathBuf,
    /// `section.key=value` override, applied before validation. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> asre_core::Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config, &self.overrides)?;
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Config(_))));
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}

fn execute(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run { common, agent } => {
            let mut config = common.load()?;
            if let Some(agent) = agent {
                config.agent = agent;
            }
            let result = harness::run_experiment(&config).context("run failed")?;
            let freq = result.execution_frequency(&config.env.sparse_actions());
            let score = match result.final_mean_std(config.final_checkpoints) {
                Ok((mean, std)) => format!("final {mean:.4} ± {std:.4}"),
                Err(_) => "no evaluation checkpoint reached".to_string(),
            };
            println!(
                "{} on {}: {score}, sparse-action frequency {freq:.4}",
                config.agent,
                config.env.name()
            );
            println!("wrote {}", config.output_dir.join(config.agent.name()).display());
        }
        Command::Compare { common, agents } => {
            let config = common.load()?;
            let rows = harness::compare(&config, &agents).context("compare failed")?;
            println!("{:<14} {:>12} {:>10} {:>10}", "agent", "final", "std", "sparse");
            for r in rows {
                println!(
                    "{:<14} {:>12.4} {:>10.4} {:>10.4}",
                    r.agent.name(),
                    r.final_mean,
                    r.final_std,
                    r.sparse_frequency
                );
            }
            println!("wrote {}", config.output_dir.join("comparison.csv").display());
        }
        Command::SweepLambda { common, lambdas } => {
            let config = common.load()?;
            let rows = harness::run_lambda_sweep(&config, &lambdas).context("sweep failed")?;
            print!("{}", harness::sweep_csv(&rows));
            println!("wrote {}", config.output_dir.join("lambda_sweep.csv").display());
        }
        Command::Verify { quick } => {
            let scope = if quick { Scope::Quick } else { Scope::Full };
            let results = verify::run_checks(scope);
            for r in &results {
                println!(
                    "[{}] {:<42} {:>8.2}s  {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.elapsed.as_secs_f64(),
                    r.detail
                );
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} passed, {failed} failed", results.len() - failed);
            if failed > 0 {
                return Ok(ExitCode::from(1));
            }
        }
        Command::ExampleConfig { env } => {
            let spec = match env.as_str() {
                "market" => EnvSpec::default_market(),
                "chain" => EnvSpec::default_chain(),
                _ => EnvSpec::default_shooter(),
            };
            let config = verify::benchmark_config(spec, AgentKind::Asre, format!("runs/{env}"));
            print!("{}", config.to_toml()?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
