//! Per-run metric streams and their CSV encoding.
//!
//! A run produces two tables. The episode table has one row per completed
//! training episode:
//!
//! ```text
//! episode,steps,return,req_a0..req_aN,exec_a0..exec_aN,ptilde_a0..ptilde_aN,mu_a0..mu_aN,walltime_ms
//! ```
//!
//! The evaluation table has one row per checkpoint:
//!
//! ```text
//! checkpoint,steps,eval_return,eval_std
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so the same
//! record always serializes to the same bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Bumped whenever a column changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRow {
    pub episode: u64,
    /// Environment steps taken so far, this episode included.
    pub steps: u64,
    /// Undiscounted environment return.
    pub ret: f64,
    pub requested: Vec<u64>,
    pub executed: Vec<u64>,
    pub ptilde: Vec<f64>,
    pub mu: Vec<f64>,
    pub walltime_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub checkpoint: u64,
    pub steps: u64,
    pub mean_return: f64,
    pub std_return: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub num_actions: usize,
    pub episodes: Vec<EpisodeRow>,
    pub evaluations: Vec<EvalRow>,
}

impl RunRecord {
    pub fn new(num_actions: usize) -> Self {
        Self {
            num_actions,
            ..Default::default()
        }
    }

    /// Mean evaluation return over the last `k` checkpoints.
    pub fn final_score(&self, k: usize) -> Option<f64> {
        if self.evaluations.is_empty() || k == 0 {
            return None;
        }
        let tail = &self.evaluations[self.evaluations.len().saturating_sub(k)..];
        Some(tail.iter().map(|e| e.mean_return).sum::<f64>() / tail.len() as f64)
    }

    pub fn total_steps(&self) -> u64 {
        self.episodes.last().map_or(0, |e| e.steps)
    }

    /// Executions of `actions` divided by decision steps, over the episodes
    /// that finished within the first `within_steps` steps (all when `None`).
    pub fn execution_frequency(&self, actions: &[usize], within_steps: Option<u64>) -> f64 {
        let limit = within_steps.unwrap_or(u64::MAX);
        let mut executed = 0u64;
        let mut steps = 0u64;
        for row in self.episodes.iter().take_while(|r| r.steps <= limit) {
            executed += actions.iter().map(|&a| row.executed[a]).sum::<u64>();
            steps = row.steps;
        }
        if steps == 0 {
            0.0
        } else {
            executed as f64 / steps as f64
        }
    }

    pub fn episode_header(num_actions: usize) -> String {
        let mut h = String::from("episode,steps,return");
        for prefix in ["req", "exec", "ptilde", "mu"] {
            for a in 0..num_actions {
                write!(h, ",{prefix}_a{a}").unwrap();
            }
        }
        h.push_str(",walltime_ms");
        h
    }

    pub fn episodes_csv(&self) -> String {
        let mut out = Self::episode_header(self.num_actions);
        out.push('\n');
        for r in &self.episodes {
            write!(out, "{},{},{}", r.episode, r.steps, r.ret).unwrap();
            for v in r.requested.iter().chain(&r.executed) {
                write!(out, ",{v}").unwrap();
            }
            for v in r.ptilde.iter().chain(&r.mu) {
                write!(out, ",{v}").unwrap();
            }
            writeln!(out, ",{}", r.walltime_ms).unwrap();
        }
        out
    }

    pub fn evaluations_csv(&self) -> String {
        let mut out = String::from("checkpoint,steps,eval_return,eval_std\n");
        for e in &self.evaluations {
            writeln!(out, "{},{},{},{}", e.checkpoint, e.steps, e.mean_return, e.std_return).unwrap();
        }
        out
    }

    pub fn parse_episodes_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty episode CSV".into()))?;
        let cols = header.split(',').count();
        if cols < 4 || (cols - 4) % 4 != 0 {
            return Err(Error::Config(format!("unexpected episode CSV header: {header}")));
        }
        let na = (cols - 4) / 4;
        if header != Self::episode_header(na) {
            return Err(Error::Config(format!("unexpected episode CSV header: {header}")));
        }
        let mut record = RunRecord::new(na);
        for (lineno, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols {
                return Err(Error::Config(format!("row {} has {} fields, expected {cols}", lineno + 2, f.len())));
            }
            let bad = |e: &dyn std::fmt::Display| Error::Config(format!("row {}: {e}", lineno + 2));
            let int = |s: &str| s.parse::<u64>().map_err(|e| bad(&e));
            let float = |s: &str| s.parse::<f64>().map_err(|e| bad(&e));
            let block = |k: usize| 3 + k * na..3 + (k + 1) * na;
            record.episodes.push(EpisodeRow {
                episode: int(f[0])?,
                steps: int(f[1])?,
                ret: float(f[2])?,
                requested: f[block(0)].iter().map(|s| int(s)).collect::<Result<_>>()?,
                executed: f[block(1)].iter().map(|s| int(s)).collect::<Result<_>>()?,
                ptilde: f[block(2)].iter().map(|s| float(s)).collect::<Result<_>>()?,
                mu: f[block(3)].iter().map(|s| float(s)).collect::<Result<_>>()?,
                walltime_ms: int(f[cols - 1])?,
            });
        }
        Ok(record)
    }

    pub fn parse_evaluations_csv(text: &str) -> Result<Vec<EvalRow>> {
        let mut lines = text.lines();
        match lines.next() {
            Some("checkpoint,steps,eval_return,eval_std") => {}
            other => return Err(Error::Config(format!("unexpected evaluation CSV header: {other:?}"))),
        }
        lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 4 {
                    return Err(Error::Config(format!("malformed evaluation row: {line}")));
                }
                let bad = |e: &dyn std::fmt::Display| Error::Config(format!("{line}: {e}"));
                Ok(EvalRow {
                    checkpoint: f[0].parse().map_err(|e| bad(&e))?,
                    steps: f[1].parse().map_err(|e| bad(&e))?,
                    mean_return: f[2].parse().map_err(|e| bad(&e))?,
                    std_return: f[3].parse().map_err(|e| bad(&e))?,
                })
            })
            .collect()
    }

    /// Reads back the pair written by [`RunRecord::write`].
    pub fn read(episodes: &Path, evaluations: &Path) -> Result<Self> {
        let mut record = Self::parse_episodes_csv(&std::fs::read_to_string(episodes)?)?;
        record.evaluations = Self::parse_evaluations_csv(&std::fs::read_to_string(evaluations)?)?;
        Ok(record)
    }

    pub fn write(&self, episodes: &Path, evaluations: &Path) -> Result<()> {
        std::fs::write(episodes, self.episodes_csv())?;
        std::fs::write(evaluations, self.evaluations_csv())?;
        Ok(())
    }
}

/// Sample mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(episode: u64, steps: u64, ret: f64) -> EpisodeRow {
        EpisodeRow {
            episode,
            steps,
            ret,
            requested: vec![3, 1],
            executed: vec![4, 0],
            ptilde: vec![0.25, 0.75],
            mu: vec![0.0, 1.5],
            walltime_ms: 0,
        }
    }

    #[test]
    fn header_lists_every_action_block() {
        assert_eq!(
            RunRecord::episode_header(2),
            "episode,steps,return,req_a0,req_a1,exec_a0,exec_a1,ptilde_a0,ptilde_a1,mu_a0,mu_a1,walltime_ms"
        );
    }

    #[test]
    fn frequency_counts_within_step_window() {
        let mut r = RunRecord::new(2);
        r.episodes.push(row(0, 4, 1.0));
        r.episodes.push(row(1, 8, 1.0));
        r.episodes[1].executed = vec![0, 4];
        assert_eq!(r.execution_frequency(&[1], Some(4)), 0.0);
        assert_eq!(r.execution_frequency(&[1], None), 0.5);
        assert_eq!(r.execution_frequency(&[0, 1], None), 1.0);
    }

    #[test]
    fn final_score_uses_tail() {
        let mut r = RunRecord::new(1);
        assert_eq!(r.final_score(5), None);
        for (i, v) in [0.0, 10.0, 20.0].iter().enumerate() {
            r.evaluations.push(EvalRow {
                checkpoint: i as u64,
                steps: i as u64,
                mean_return: *v,
                std_return: 0.0,
            });
        }
        assert_eq!(r.final_score(2), Some(15.0));
        assert_eq!(r.final_score(5), Some(10.0));
    }

    #[test]
    fn rejects_malformed_csv() {
        assert!(RunRecord::parse_episodes_csv("").is_err());
        assert!(RunRecord::parse_episodes_csv("a,b,c\n").is_err());
        let mut text = RunRecord::new(2).episodes_csv();
        text.push_str("0,1,2\n");
        assert!(RunRecord::parse_episodes_csv(&text).is_err());
    }

    proptest! {
        #[test]
        fn episode_csv_round_trips(rets in prop::collection::vec(-1e6f64..1e6, 0..20)) {
            let mut r = RunRecord::new(2);
            for (i, ret) in rets.iter().enumerate() {
                r.episodes.push(row(i as u64, 10 * (i as u64 + 1), *ret));
            }
            let back = RunRecord::parse_episodes_csv(&r.episodes_csv()).unwrap();
            prop_assert_eq!(back, r);
        }
    }
}
