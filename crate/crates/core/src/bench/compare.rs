//! Baseline versus equivariant comparison over multi-seed training logs.
//!
//! Aggregate CSV columns: `step, mode, mean, two_sigma`, where `two_sigma`
//! is twice the sample standard deviation across seeds. A step appears only
//! when every seed of that mode has an evaluation there.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::config::RunConfig;
use super::run::{log_path, read_log, LogRow, RunError};
use crate::rl::{AgentMode, Algorithm};

/// Fraction of the best mean return that counts as "reached".
pub const THRESHOLD_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum CompareError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("no training log for {mode} seed {seed} at {path}")]
    MissingLog { mode: AgentMode, seed: u64, path: PathBuf },
    #[error("logs for {0} share no evaluation step across all seeds")]
    NoCommonSteps(AgentMode),
    #[error("evaluation steps differ between modes: {0}")]
    Misaligned(String),
    #[error("csv error on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub step: usize,
    pub mean: f64,
    pub two_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareStatus {
    Improved,
    NoImprovement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: AgentMode,
    pub curve: Vec<CurvePoint>,
    /// First step where the seed-mean curve reaches the threshold.
    pub steps_to_threshold: Option<usize>,
    /// Same criterion applied to each seed's own curve.
    pub per_seed_steps: Vec<Option<usize>>,
    /// Seed mean and sample std of the last common evaluation.
    pub final_mean: f64,
    pub final_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSummary {
    pub algo: Algorithm,
    pub baseline: ModeSummary,
    pub equivariant: ModeSummary,
    pub best_mean: f64,
    pub threshold: f64,
    /// Baseline steps divided by equivariant steps, when both reach the threshold.
    pub speedup: Option<f64>,
    /// `sqrt((s_b² + s_e²) / 2)` of the final returns.
    pub pooled_std: f64,
    pub status: CompareStatus,
}

impl ComparisonSummary {
    /// Equivariant final mean is at least the baseline's minus one pooled std.
    pub fn final_return_ok(&self) -> bool {
        self.equivariant.final_mean >= self.baseline.final_mean - self.pooled_std
    }

    /// Equivariant steps-to-threshold is no later than the baseline's; a mode
    /// that never reaches the threshold counts as infinitely slow.
    pub fn speed_ok(&self) -> bool {
        let key = |s: Option<usize>| s.unwrap_or(usize::MAX);
        key(self.equivariant.steps_to_threshold) <= key(self.baseline.steps_to_threshold)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let fmt_steps = |v: Option<usize>| v.map_or("never".to_string(), |x| x.to_string());
        let _ = writeln!(
            s,
            "{}: threshold {:.4} ({:.0}% of best mean {:.4})",
            self.algo,
            self.threshold,
            THRESHOLD_FRACTION * 100.0,
            self.best_mean
        );
        let _ = writeln!(s, "{:<12} {:>18} {:>24} {:>12}", "mode", "steps_to_threshold", "per_seed", "final_mean");
        for m in [&self.baseline, &self.equivariant] {
            let per_seed: Vec<String> = m.per_seed_steps.iter().map(|v| fmt_steps(*v)).collect();
            let _ = writeln!(
                s,
                "{:<12} {:>18} {:>24} {:>8.4} ± {:.4}",
                m.mode,
                fmt_steps(m.steps_to_threshold),
                per_seed.join("/"),
                m.final_mean,
                m.final_std
            );
        }
        let speed = self.speedup.map_or("n/a".to_string(), |x| format!("{x:.2}x"));
        let status = match self.status {
            CompareStatus::Improved => "improved",
            CompareStatus::NoImprovement => "no improvement",
        };
        let _ = writeln!(s, "speedup {speed}, pooled final std {:.4}, status: {status}", self.pooled_std);
        s
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and `2 σ` band across seeds at every step all seeds share.
pub fn aggregate(logs: &[Vec<LogRow>]) -> Vec<CurvePoint> {
    let mut by_step: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for log in logs {
        for row in log {
            by_step.entry(row.env_step).or_default().push(row.eval_mean_return);
        }
    }
    by_step
        .into_iter()
        .filter(|(_, v)| v.len() == logs.len())
        .map(|(step, v)| {
            let (mean, std) = mean_std(&v);
            CurvePoint {
                step,
                mean,
                two_sigma: 2.0 * std,
            }
        })
        .collect()
}

pub fn steps_to_threshold(curve: &[CurvePoint], threshold: f64) -> Option<usize> {
    curve.iter().find(|p| p.mean >= threshold).map(|p| p.step)
}

fn mode_summary(mode: AgentMode, logs: &[Vec<LogRow>], threshold: f64) -> ModeSummary {
    let curve = aggregate(logs);
    let last_step = curve.last().map(|p| p.step);
    let finals: Vec<f64> = logs
        .iter()
        .filter_map(|log| log.iter().find(|r| Some(r.env_step) == last_step).map(|r| r.eval_mean_return))
        .collect();
    let (final_mean, final_std) = mean_std(&finals);
    let per_seed_steps = logs
        .iter()
        .map(|log| log.iter().find(|r| r.eval_mean_return >= threshold).map(|r| r.env_step))
        .collect();
    ModeSummary {
        mode,
        steps_to_threshold: steps_to_threshold(&curve, threshold),
        curve,
        per_seed_steps,
        final_mean,
        final_std,
    }
}

/// Compares per-seed logs of both modes trained with the same algorithm.
pub fn compare_logs(
    algo: Algorithm,
    baseline: &[Vec<LogRow>],
    equivariant: &[Vec<LogRow>],
) -> Result<ComparisonSummary, CompareError> {
    let curves = [aggregate(baseline), aggregate(equivariant)];
    for (mode, c) in AgentMode::ALL.iter().zip(&curves) {
        if c.is_empty() {
            return Err(CompareError::NoCommonSteps(*mode));
        }
    }
    let steps = |c: &[CurvePoint]| c.iter().map(|p| p.step).collect::<Vec<_>>();
    if steps(&curves[0]) != steps(&curves[1]) {
        return Err(CompareError::Misaligned(format!(
            "baseline {:?} vs equivariant {:?}",
            steps(&curves[0]),
            steps(&curves[1])
        )));
    }
    let best_mean = curves
        .iter()
        .flat_map(|c| c.iter().map(|p| p.mean))
        .fold(f64::NEG_INFINITY, f64::max);
    let threshold = THRESHOLD_FRACTION * best_mean;
    let b = mode_summary(AgentMode::Baseline, baseline, threshold);
    let e = mode_summary(AgentMode::Equivariant, equivariant, threshold);
    let speedup = match (b.steps_to_threshold, e.steps_to_threshold) {
        (Some(sb), Some(se)) => Some(sb as f64 / se as f64),
        _ => None,
    };
    let status = match (e.steps_to_threshold, b.steps_to_threshold) {
        (Some(se), Some(sb)) if se < sb => CompareStatus::Improved,
        (Some(_), None) => CompareStatus::Improved,
        _ => CompareStatus::NoImprovement,
    };
    let pooled_std = ((b.final_std.powi(2) + e.final_std.powi(2)) / 2.0).sqrt();
    Ok(ComparisonSummary {
        algo,
        baseline: b,
        equivariant: e,
        best_mean,
        threshold,
        speedup,
        pooled_std,
        status,
    })
}

pub fn write_aggregate_csv(path: &Path, summary: &ComparisonSummary) -> Result<(), CompareError> {
    #[derive(Serialize)]
    struct Row {
        step: usize,
        mode: &'static str,
        mean: f64,
        two_sigma: f64,
    }
    let csv_err = |source| CompareError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut wtr = csv::Writer::from_path(path).map_err(csv_err)?;
    for m in [&summary.baseline, &summary.equivariant] {
        for p in &m.curve {
            wtr.serialize(Row {
                step: p.step,
                mode: m.mode.as_str(),
                mean: p.mean,
                two_sigma: p.two_sigma,
            })
            .map_err(csv_err)?;
        }
    }
    wtr.flush().map_err(|e| csv_err(e.into()))?;
    Ok(())
}

/// Reads both modes' logs for `cfg.algo` and `cfg.seeds` from
/// `cfg.out_dir`, writes `{algo}_comparison.csv` next to them and returns
/// the summary.
pub fn cmd_compare(cfg: &RunConfig) -> Result<ComparisonSummary, CompareError> {
    let mut logs: Vec<Vec<Vec<LogRow>>> = Vec::new();
    for mode in AgentMode::ALL {
        let mut per_mode = Vec::new();
        for &seed in &cfg.seeds {
            let path = log_path(&cfg.out_dir, cfg.algo, mode, seed);
            if !path.exists() {
                return Err(CompareError::MissingLog { mode, seed, path });
            }
            per_mode.push(read_log(&path)?);
        }
        logs.push(per_mode);
    }
    let summary = compare_logs(cfg.algo, &logs[0], &logs[1])?;
    write_aggregate_csv(&cfg.out_dir.join(format!("{}_comparison.csv", cfg.algo)), &summary)?;
    Ok(summary)
}
