//! Expectile curves along one feature for several expectile levels.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::experiment::cv::{cv_select, refit, CvOptions};
use crate::experiment::data::scale_to_unit_box;
use crate::experiment::grid::{default_grid, GridSpec};
use crate::experiment::table::Table;
use crate::model::Model;
use crate::solver::{self, SolverOptions};
use crate::types::{HyperParams, TrainingSet};

/// How each curve's hyperparameters are obtained.
#[derive(Debug, Clone)]
pub enum CurveFit {
    /// Train on the scaled data with these cost and kernel width values.
    Fixed(HyperParams),
    /// Cross-validate on `grid` (default grid when `None`) and refit.
    CrossValidated {
        template: HyperParams,
        grid: Option<GridSpec>,
        cv: CvOptions,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    /// Feature to vary; required when the data has more than one. The
    /// others are held at their mean.
    pub feature: Option<usize>,
    /// Number of evenly spaced evaluation points.
    pub resolution: usize,
    /// Replace the feature by its square root before fitting.
    pub sqrt_x: bool,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            feature: None,
            resolution: 200,
            sqrt_x: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    /// Evaluation points of the varied feature (after the optional square root).
    pub x: Vec<f64>,
    pub taus: Vec<f64>,
    /// One column of predictions per tau.
    pub values: Vec<Vec<f64>>,
    pub models: Vec<Model>,
}

impl Curves {
    pub fn to_table(&self) -> Table {
        let mut header = vec!["x".to_string()];
        header.extend(self.taus.iter().map(|t| format!("tau={t}")));
        let mut table = Table::new(header);
        for (r, &x) in self.x.iter().enumerate() {
            let mut row = vec![x.into()];
            row.extend(self.values.iter().map(|col| col[r].into()));
            table.push(row);
        }
        table
    }
}

fn fit_one(scaled: &TrainingSet, scaling: &crate::model::Scaling, tau: f64, fit: &CurveFit, solver_opts: &SolverOptions) -> Result<Model> {
    match fit {
        CurveFit::Fixed(params) => {
            let params = params.with_tau(tau)?;
            let out = solver::train(scaled, &params, None, solver_opts)?;
            Model::from_state(scaled.features(), &out.state, params.gamma(), params.clip_m(), scaling.clone())
        }
        CurveFit::CrossValidated { template, grid, cv } => {
            let template = template.with_tau(tau)?;
            let grid = grid.clone().unwrap_or_else(|| default_grid(scaled.n(), scaled.d()));
            let report = cv_select(scaled, &template, &grid, cv)?;
            let best = report.best_cell();
            log::info!(
                "tau {tau}: selected lambda {} gamma {} (cv risk {})",
                best.lambda,
                best.gamma,
                best.mean_risk
            );
            let (model, _) = refit(scaled, &template, best.lambda, best.gamma, scaling.clone(), &cv.solver)?;
            Ok(model)
        }
    }
}

/// Fits one model per tau on `raw` and evaluates each along an even grid
/// over the range of the chosen feature.
pub fn expectile_curves(
    raw: &TrainingSet,
    taus: &[f64],
    fit: &CurveFit,
    opts: &CurveOptions,
    solver_opts: &SolverOptions,
) -> Result<Curves> {
    if taus.is_empty() {
        return Err(Error::Empty("tau list"));
    }
    if opts.resolution == 0 {
        return Err(Error::Empty("curve grid"));
    }
    let d = raw.d();
    let feature = match opts.feature {
        Some(f) if f < d => f,
        Some(f) => return Err(Error::IndexOutOfRange { index: f, len: d }),
        None if d == 1 => 0,
        None => {
            return Err(Error::InvalidParameter {
                name: "feature",
                value: d as f64,
                reason: "curves on multi-dimensional data need a designated feature",
            })
        }
    };
    let mut features = raw.features().clone();
    if opts.sqrt_x {
        let mut col = features.column_mut(feature);
        if let Some(i) = col.iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidParameter {
                name: "sqrt_x",
                value: col[i],
                reason: "square-root transform needs a nonnegative feature",
            });
        }
        col.mapv_inplace(f64::sqrt);
    }
    let data = TrainingSet::new(features, raw.labels().to_vec())?;
    let (scaled, scaling) = scale_to_unit_box(&data);

    let column = data.features().column(feature);
    let lo = column.fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = column.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let x: Vec<f64> = if opts.resolution == 1 {
        vec![0.5 * (lo + hi)]
    } else {
        (0..opts.resolution)
            .map(|i| lo + (hi - lo) * i as f64 / (opts.resolution - 1) as f64)
            .collect()
    };
    let means = data.features().mean_axis(Axis(0)).expect("nonempty data");
    let mut points = Array2::zeros((x.len(), d));
    for (mut row, &xv) in points.outer_iter_mut().zip(&x) {
        row.assign(&means);
        row[feature] = xv;
    }

    let mut values = Vec::with_capacity(taus.len());
    let mut models = Vec::with_capacity(taus.len());
    for &tau in taus {
        let model = fit_one(&scaled, &scaling, tau, fit, solver_opts)?;
        values.push(model.predict_batch(&points, false)?);
        models.push(model);
    }
    Ok(Curves {
        x,
        taus: taus.to_vec(),
        values,
        models,
    })
}
