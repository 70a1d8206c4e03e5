//! Iteration and timing statistics of full grid searches under different
//! solver configurations.

use crate::error::Result;
use crate::experiment::cv::{cv_select, CvOptions};
use crate::experiment::grid::{default_grid, GridSpec};
use crate::experiment::table::{Table, Value};
use crate::types::{HyperParams, TrainingSet, Wss};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub tau: f64,
    pub wss: Wss,
    pub warm_start: bool,
    pub clipped_gap: bool,
    pub knn: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub dataset: String,
    pub config: BenchConfig,
    /// `(lambda, gamma)` for per-cell rows, `None` for the grid aggregate.
    pub cell: Option<(f64, f64)>,
    pub iterations: u64,
    pub seconds: f64,
    /// Cell risk, or the best cell's risk for the aggregate.
    pub risk: f64,
    pub converged: bool,
}

/// Runs a cross-validated grid search for every dataset and configuration.
///
/// `datasets` must already be scaled. `base` supplies epsilon and the clip
/// bound; `grid = None` uses each dataset's default grid.
pub fn benchmark(
    datasets: &[(String, TrainingSet)],
    configs: &[BenchConfig],
    base: &HyperParams,
    grid: Option<&GridSpec>,
    cv: &CvOptions,
    per_cell: bool,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for (name, data) in datasets {
        let default;
        let grid = match grid {
            Some(g) => g,
            None => {
                default = default_grid(data.n(), data.d());
                &default
            }
        };
        for config in configs {
            let template = base
                .with_tau(config.tau)?
                .with_wss(config.wss)
                .with_clipped_gap(config.clipped_gap)
                .with_knn(config.knn)?;
            let opts = CvOptions {
                warm_start: config.warm_start,
                ..*cv
            };
            let report = cv_select(data, &template, grid, &opts)?;
            log::info!(
                "{name}: tau {} {} {} {} knn {}: {} iterations",
                config.tau,
                config.wss,
                if config.warm_start { "warm" } else { "cold" },
                if config.clipped_gap { "clipped" } else { "unclipped" },
                config.knn,
                report.total_iterations()
            );
            if per_cell {
                rows.extend(report.cells.iter().map(|c| BenchRow {
                    dataset: name.clone(),
                    config: *config,
                    cell: Some((c.lambda, c.gamma)),
                    iterations: c.iterations,
                    seconds: c.seconds,
                    risk: c.mean_risk,
                    converged: c.converged,
                }));
            }
            rows.push(BenchRow {
                dataset: name.clone(),
                config: *config,
                cell: None,
                iterations: report.total_iterations(),
                seconds: report.total_seconds(),
                risk: report.best_cell().mean_risk,
                converged: report.cells.iter().all(|c| c.converged),
            });
        }
    }
    Ok(rows)
}

pub fn bench_table(rows: &[BenchRow]) -> Table {
    let mut t = Table::new([
        "dataset",
        "tau",
        "wss",
        "init",
        "gap",
        "knn",
        "lambda",
        "gamma",
        "iterations",
        "risk",
        "converged",
        "seconds",
    ]);
    for r in rows {
        let (lambda, gamma) = match r.cell {
            Some((l, g)) => (Value::Float(l), Value::Float(g)),
            None => ("all".into(), "all".into()),
        };
        t.push(vec![
            r.dataset.clone().into(),
            r.config.tau.into(),
            r.config.wss.as_str().into(),
            if r.config.warm_start { "warm" } else { "cold" }.into(),
            if r.config.clipped_gap { "clipped" } else { "unclipped" }.into(),
            r.config.knn.into(),
            lambda,
            gamma,
            r.iterations.into(),
            r.risk.into(),
            r.converged.into(),
            r.seconds.into(),
        ]);
    }
    t
}
