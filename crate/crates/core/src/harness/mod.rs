//! Experiment orchestration: multi-seed runs, CSV persistence, agent
//! comparisons, λ sweeps and SVG plots.
//!
//! A run of agent `A` writes, under `<output_dir>/<A>/`:
//!
//! * `seed_<s>.csv`, the episode table of each seed (see [`crate::record`]);
//! * `aggregate.csv`, one row per evaluation checkpoint with the mean and
//!   population standard deviation across seeds followed by each seed's
//!   evaluation return;
//! * `curve.svg`, `ptilde.svg` and `frequency.svg`.

mod config;
pub mod plot;
pub mod verify;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use config::{AgentKind, ExperimentConfig};

use crate::agent::{train, AgentConfig};
use crate::baselines::{egreedy_q_train, prior_penalty_train, softq_train};
use crate::error::{Error, Result};
use crate::mdp::SparseActionMdp;
use crate::record::{mean_std, RunRecord, CSV_SCHEMA_VERSION};

/// Columns of `aggregate.csv` before the per-seed block.
pub const AGGREGATE_HEADER: &str = "checkpoint,steps,eval_mean,eval_std";

#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub record: RunRecord,
}

/// All seeds of one agent on one environment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub agent: AgentKind,
    pub runs: Vec<SeedRun>,
}

/// One evaluation checkpoint reduced across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub checkpoint: u64,
    pub steps: u64,
    pub mean: f64,
    pub std: f64,
    pub per_seed: Vec<f64>,
}

impl ExperimentResult {
    /// Final score of each seed: mean evaluation return over its last `k`
    /// checkpoints. Errors if a seed recorded no checkpoint.
    pub fn final_scores(&self, k: usize) -> Result<Vec<f64>> {
        self.runs
            .iter()
            .map(|r| {
                r.record
                    .final_score(k)
                    .ok_or_else(|| Error::Contract(format!("seed {} recorded no evaluation checkpoint", r.seed)))
            })
            .collect()
    }

    pub fn final_mean_std(&self, k: usize) -> Result<(f64, f64)> {
        Ok(mean_std(&self.final_scores(k)?))
    }

    /// Executions of `actions` over all training steps, pooled across seeds.
    pub fn execution_frequency(&self, actions: &[usize]) -> f64 {
        let (mut executed, mut steps) = (0u64, 0u64);
        for run in &self.runs {
            for row in &run.record.episodes {
                executed += actions.iter().map(|&a| row.executed[a]).sum::<u64>();
            }
            steps += run.record.total_steps();
        }
        if steps == 0 {
            0.0
        } else {
            executed as f64 / steps as f64
        }
    }

    /// Per-checkpoint mean and standard deviation across seeds.
    pub fn aggregate(&self) -> Result<Vec<AggregateRow>> {
        let first = self
            .runs
            .first()
            .ok_or_else(|| Error::Contract("no runs to aggregate".into()))?;
        for run in &self.runs[1..] {
            let same = run.record.evaluations.len() == first.record.evaluations.len()
                && run
                    .record
                    .evaluations
                    .iter()
                    .zip(&first.record.evaluations)
                    .all(|(a, b)| a.steps == b.steps);
            if !same {
                return Err(Error::Contract(format!(
                    "seed {} has different checkpoints than seed {}",
                    run.seed, first.seed
                )));
            }
        }
        Ok(first
            .record
            .evaluations
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let per_seed: Vec<f64> = self.runs.iter().map(|r| r.record.evaluations[i].mean_return).collect();
                let (mean, std) = mean_std(&per_seed);
                AggregateRow {
                    checkpoint: e.checkpoint,
                    steps: e.steps,
                    mean,
                    std,
                    per_seed,
                }
            })
            .collect())
    }

    pub fn aggregate_csv(&self) -> Result<String> {
        let mut out = String::from(AGGREGATE_HEADER);
        for r in &self.runs {
            write!(out, ",seed_{}", r.seed).unwrap();
        }
        out.push('\n');
        for row in self.aggregate()? {
            write!(out, "{},{},{},{}", row.checkpoint, row.steps, row.mean, row.std).unwrap();
            for v in &row.per_seed {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Trains `agent` once on `mdp`.
pub fn run_single(config: &ExperimentConfig, agent: AgentKind, mdp: &SparseActionMdp, seed: u64) -> Result<RunRecord> {
    let total = config.total_steps;
    let asre = with_evaluation(&config.asre, config);
    let mut baseline = config.baseline.clone();
    if let Some(e) = &config.evaluation {
        baseline.evaluation = e.clone();
    }
    Ok(match agent {
        AgentKind::Asre => train(mdp, &asre, total, seed)?.record,
        AgentKind::Egreedy => egreedy_q_train(mdp, &baseline, total, seed)?.1,
        AgentKind::Softq => softq_train(mdp, &baseline, total, seed)?.1,
        AgentKind::PriorPenalty => prior_penalty_train(mdp, &baseline, &config.env.sparse_actions(), total, seed)?.1,
    })
}

fn with_evaluation(agent: &AgentConfig, config: &ExperimentConfig) -> AgentConfig {
    let mut agent = agent.clone();
    if let Some(e) = &config.evaluation {
        agent.evaluation = e.clone();
    }
    agent
}

/// Runs every seed of `agent` in parallel, one thread per seed. Results come
/// back in the order of `config.seeds`.
pub fn run_seeds(config: &ExperimentConfig, agent: AgentKind) -> Result<ExperimentResult> {
    config.validate()?;
    let mdp = config.env.build()?;
    let records: Vec<Result<RunRecord>> = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .seeds
            .iter()
            .map(|&seed| {
                let mdp = &mdp;
                scope.spawn(move || run_single(config, agent, mdp, seed))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Contract("worker thread panicked".into()))))
            .collect()
    });
    let runs = config
        .seeds
        .iter()
        .zip(records)
        .map(|(&seed, record)| Ok(SeedRun { seed, record: record? }))
        .collect::<Result<_>>()?;
    Ok(ExperimentResult { agent, runs })
}

/// Runs `config.agent` on every seed and writes its CSVs and plots.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let result = run_seeds(config, config.agent)?;
    write_result(config, &result)?;
    Ok(result)
}

/// Writes the per-seed CSVs, the aggregate CSV and the single-agent plots of
/// `result` into `<output_dir>/<agent>/`.
pub fn write_result(config: &ExperimentConfig, result: &ExperimentResult) -> Result<()> {
    let dir = config.output_dir.join(result.agent.name());
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    for run in &result.runs {
        write_file(&dir.join(format!("seed_{}.csv", run.seed)), &run.record.episodes_csv())?;
    }
    write_file(&dir.join("aggregate.csv"), &result.aggregate_csv()?)?;
    write_file(&dir.join("manifest.toml"), &manifest(config, result.agent)?)?;
    emit_plots(&dir, config, std::slice::from_ref(result))
}

/// Curve, p̃ heat strip and frequency chart for one or more agents.
pub fn emit_plots(dir: &Path, config: &ExperimentConfig, results: &[ExperimentResult]) -> Result<()> {
    let curves = results
        .iter()
        .map(|r| {
            let rows = r.aggregate()?;
            Ok(plot::CurveSeries {
                label: r.agent.name().to_string(),
                steps: rows.iter().map(|x| x.steps).collect(),
                mean: rows.iter().map(|x| x.mean).collect(),
                std: rows.iter().map(|x| x.std).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if curves.iter().any(|c| !c.steps.is_empty()) {
        let curves: Vec<_> = curves.into_iter().filter(|c| !c.steps.is_empty()).collect();
        write_file(&dir.join("curve.svg"), &plot::training_curve_svg(&curves)?)?;
    }

    let sparse = config.env.sparse_actions();
    let bars: Vec<(String, f64)> = results
        .iter()
        .map(|r| (r.agent.name().to_string(), r.execution_frequency(&sparse)))
        .collect();
    write_file(&dir.join("frequency.svg"), &plot::frequency_bars_svg(&bars)?)?;

    if let Some(asre) = results.iter().find(|r| r.agent == AgentKind::Asre) {
        let records: Vec<&RunRecord> = asre.runs.iter().map(|r| &r.record).collect();
        let columns = plot::ptilde_columns(&records, plot::HEAT_COLUMNS);
        if !columns.is_empty() {
            let svg = plot::heat_strip_svg(config.env.action_names(), &columns)?;
            write_file(&dir.join("ptilde.svg"), &svg)?;
        }
    }
    Ok(())
}

/// Final score of one agent in a comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub agent: AgentKind,
    pub final_mean: f64,
    pub final_std: f64,
    /// Share of training steps that executed a sparse action.
    pub sparse_frequency: f64,
}

/// Runs each of `agents` on the same environment and seeds. Writes each
/// agent's files plus `comparison.csv` and joint plots into `output_dir`.
pub fn compare(config: &ExperimentConfig, agents: &[AgentKind]) -> Result<Vec<ComparisonRow>> {
    if agents.is_empty() {
        return Err(Error::Config("compare needs at least one agent".into()));
    }
    let mut results = Vec::with_capacity(agents.len());
    for &agent in agents {
        let result = run_seeds(config, agent)?;
        write_result(config, &result)?;
        results.push(result);
    }
    let sparse = config.env.sparse_actions();
    let rows = results
        .iter()
        .map(|r| {
            let (final_mean, final_std) = r.final_mean_std(config.final_checkpoints)?;
            Ok(ComparisonRow {
                agent: r.agent,
                final_mean,
                final_std,
                sparse_frequency: r.execution_frequency(&sparse),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("agent,final_mean,final_std,sparse_frequency\n");
    for r in &rows {
        writeln!(csv, "{},{},{},{}", r.agent, r.final_mean, r.final_std, r.sparse_frequency).unwrap();
    }
    write_file(&config.output_dir.join("comparison.csv"), &csv)?;
    emit_plots(&config.output_dir, config, &results)?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub final_mean: f64,
    pub final_std: f64,
    pub per_seed: Vec<f64>,
}

/// Trains the sparsity-regularized agent once per λ over all seeds.
pub fn lambda_sweep(config: &ExperimentConfig, lambdas: &[f64]) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() {
        return Err(Error::Config("lambda sweep needs at least one value".into()));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let mut c = config.clone();
            c.asre.lambda = lambda;
            let result = run_seeds(&c, AgentKind::Asre)?;
            let per_seed = result.final_scores(config.final_checkpoints)?;
            let (final_mean, final_std) = mean_std(&per_seed);
            Ok(SweepRow {
                lambda,
                final_mean,
                final_std,
                per_seed,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lambda,final_mean,final_std\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.lambda, r.final_mean, r.final_std).unwrap();
    }
    out
}

/// [`lambda_sweep`] followed by writing `lambda_sweep.csv` into `output_dir`.
pub fn run_lambda_sweep(config: &ExperimentConfig, lambdas: &[f64]) -> Result<Vec<SweepRow>> {
    let rows = lambda_sweep(config, lambdas)?;
    fs::create_dir_all(&config.output_dir).map_err(|e| io_error(&config.output_dir, e))?;
    write_file(&config.output_dir.join("lambda_sweep.csv"), &sweep_csv(&rows))?;
    Ok(rows)
}

fn manifest(config: &ExperimentConfig, agent: AgentKind) -> Result<String> {
    let mut c = config.clone();
    c.agent = agent;
    Ok(format!("csv_schema_version = {CSV_SCHEMA_VERSION}\n\n{}", c.to_toml()?))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}
