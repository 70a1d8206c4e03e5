//! k-fold cross-validation over a grid, refitting and test evaluation.
//!
//! Inside a fold the model is trained on roughly `(k-1) n / k` samples, so
//! the grid values are converted with that size: the kernel width becomes
//! `(k-1) n gamma / k` and the cost `k / (2 (k-1) n lambda)`. The final refit
//! on all `n` samples uses `n gamma` and `1 / (2 n lambda)`.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dual::DualState;
use crate::error::{Error, Result};
use crate::experiment::grid::GridSpec;
use crate::experiment::table::{Table, Value};
use crate::kernel::{build_knn, rbf, KernelCache, KnnIndex};
use crate::model::{Model, Scaling};
use crate::solver::{self, SolverOptions, TrainOutcome};
use crate::types::{HyperParams, Tau, TrainingSet, Wss};

/// Kernel width used inside a fold.
pub fn cv_gamma(gamma: f64, n: usize, folds: usize) -> f64 {
    let k = folds as f64;
    (k - 1.0) * n as f64 * gamma / k
}

/// Cost used inside a fold.
pub fn cv_cost(lambda: f64, n: usize, folds: usize) -> f64 {
    let k = folds as f64;
    k / (2.0 * (k - 1.0) * n as f64 * lambda)
}

/// Kernel width of the refit on all `n` training samples.
pub fn refit_gamma(gamma: f64, n: usize) -> f64 {
    n as f64 * gamma
}

/// Seeded permutation cut into `folds` contiguous blocks whose sizes differ
/// by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(Error::DegenerateFolds { folds, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut blocks = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        blocks.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(blocks)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    /// Chain each descending-lambda run from the previous solution.
    pub warm_start: bool,
    pub solver: SolverOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 5,
            seed: 0,
            warm_start: true,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvCell {
    pub lambda: f64,
    pub gamma: f64,
    pub mean_risk: f64,
    pub fold_risks: Vec<f64>,
    /// Coordinate updates summed over folds.
    pub iterations: u64,
    /// Solver wall time summed over folds.
    pub seconds: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    /// Ordered by gamma, then by descending lambda.
    pub cells: Vec<CvCell>,
    pub best: usize,
    pub folds: usize,
    pub seed: u64,
    pub n: usize,
    pub tau: Tau,
}

impl CvReport {
    pub fn best_cell(&self) -> &CvCell {
        &self.cells[self.best]
    }

    pub fn total_iterations(&self) -> u64 {
        self.cells.iter().map(|c| c.iterations).sum()
    }

    pub fn total_seconds(&self) -> f64 {
        self.cells.iter().map(|c| c.seconds).sum()
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new([
            "lambda",
            "gamma",
            "cv_gamma",
            "cv_cost",
            "mean_risk",
            "iterations",
            "converged",
            "best",
            "seconds",
        ]);
        for (i, c) in self.cells.iter().enumerate() {
            t.push(vec![
                c.lambda.into(),
                c.gamma.into(),
                cv_gamma(c.gamma, self.n, self.folds).into(),
                cv_cost(c.lambda, self.n, self.folds).into(),
                c.mean_risk.into(),
                c.iterations.into(),
                c.converged.into(),
                Value::from(i == self.best),
                c.seconds.into(),
            ]);
        }
        t
    }
}

struct Fold {
    train: TrainingSet,
    valid: TrainingSet,
    knn: Option<KnnIndex>,
}

struct Run {
    risk: f64,
    iterations: u64,
    seconds: f64,
    converged: bool,
}

/// Mean ALS loss of `labels - predictions`, with predictions clamped to
/// `[-m, m]` when `clip` is set.
fn risk(labels: &[f64], predictions: &[f64], tau: Tau, clip: Option<f64>) -> f64 {
    let total: f64 = labels
        .iter()
        .zip(predictions)
        .map(|(&y, &f)| tau.loss(y - clip.map_or(f, |m| f.clamp(-m, m))))
        .sum();
    total / labels.len() as f64
}

/// Trains `params` on the data behind `kernel`.
pub(crate) fn run_session(
    kernel: &mut KernelCache<'_>,
    knn: Option<&KnnIndex>,
    params: &HyperParams,
    init: DualState,
    options: &SolverOptions,
) -> Result<TrainOutcome> {
    crate::twodim::train_2d(kernel, knn, params, init, options)
}

fn cross_kernel(valid: &Array2<f64>, train: &Array2<f64>, gamma: f64) -> Array2<f64> {
    let (nv, nt) = (valid.nrows(), train.nrows());
    let mut out = Array2::zeros((nv, nt));
    out.as_slice_mut()
        .expect("fresh array")
        .par_chunks_mut(nt.max(1))
        .enumerate()
        .for_each(|(v, row)| {
            let x = valid.row(v);
            let x = x.as_slice().expect("standard layout");
            for (t, out) in row.iter_mut().enumerate() {
                *out = rbf(train.row(t).as_slice().expect("standard layout"), x, gamma);
            }
        });
    out
}

fn run_chain(
    fold: &Fold,
    template: &HyperParams,
    gamma: f64,
    lambdas: &[f64],
    n: usize,
    folds: usize,
    opts: &CvOptions,
) -> Result<Vec<Run>> {
    let gamma_cv = cv_gamma(gamma, n, folds);
    let points = fold.train.features();
    let mut kernel = KernelCache::new(points, gamma_cv, opts.solver.kernel_mode_for(fold.train.n()))?;
    let cross = cross_kernel(fold.valid.features(), points, gamma_cv);
    let clip = template.gap_clip();
    let mut previous: Option<DualState> = None;
    let mut runs = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cost = cv_cost(lambda, n, folds);
        let params = template.with_cost(cost)?.with_gamma(gamma_cv)?;
        let init = match previous.take() {
            Some(state) if opts.warm_start => state.warm_start(cost)?,
            _ => DualState::cold_start(fold.train.labels(), &params)?,
        };
        let start = Instant::now();
        let out = run_session(&mut kernel, fold.knn.as_ref(), &params, init, &opts.solver)?;
        let seconds = start.elapsed().as_secs_f64();
        let u = Array1::from(out.state.coefficients());
        let predictions = cross.dot(&u);
        runs.push(Run {
            risk: risk(
                fold.valid.labels(),
                predictions.as_slice().expect("contiguous"),
                template.tau(),
                clip,
            ),
            iterations: out.iterations,
            seconds,
            converged: out.converged(),
        });
        previous = Some(out.state);
    }
    Ok(runs)
}

/// Cross-validates every grid cell on `train` (already scaled).
///
/// `template` supplies tau, epsilon, the clip bound, the gap variant and
/// the working-set rule; its cost and gamma are ignored. Chains over
/// `(fold, gamma)` run in parallel.
pub fn cv_select(train: &TrainingSet, template: &HyperParams, grid: &GridSpec, opts: &CvOptions) -> Result<CvReport> {
    let n = train.n();
    let k = opts.folds;
    let blocks = fold_assignment(n, k, opts.seed)?;
    let folds: Vec<Fold> = blocks
        .iter()
        .map(|held_out| {
            let mut mask = vec![true; n];
            held_out.iter().for_each(|&i| mask[i] = false);
            let kept: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
            let fold_train = train.subset(&kept)?;
            let knn = match template.wss() {
                Wss::Wss2 => Some(build_knn(fold_train.features(), template.knn())?),
                _ => None,
            };
            Ok(Fold {
                train: fold_train,
                valid: train.subset(held_out)?,
                knn,
            })
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..grid.gammas().len()).flat_map(|g| (0..k).map(move |f| (g, f))).collect();
    let results: Vec<Vec<Run>> = jobs
        .par_iter()
        .map(|&(g, f)| run_chain(&folds[f], template, grid.gammas()[g], grid.lambdas(), n, k, opts))
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(grid.len());
    for (g, &gamma) in grid.gammas().iter().enumerate() {
        for (l, &lambda) in grid.lambdas().iter().enumerate() {
            let runs: Vec<&Run> = (0..k).map(|f| &results[g * k + f][l]).collect();
            let fold_risks: Vec<f64> = runs.iter().map(|r| r.risk).collect();
            cells.push(CvCell {
                lambda,
                gamma,
                mean_risk: fold_risks.iter().sum::<f64>() / k as f64,
                fold_risks,
                iterations: runs.iter().map(|r| r.iterations).sum(),
                seconds: runs.iter().map(|r| r.seconds).sum(),
                converged: runs.iter().all(|r| r.converged),
            });
        }
    }
    let best = best_index(&cells);
    Ok(CvReport {
        cells,
        best,
        folds: k,
        seed: opts.seed,
        n,
        tau: template.tau(),
    })
}

/// Smallest mean risk; ties prefer the larger lambda, then the smaller gamma.
fn best_index(cells: &[CvCell]) -> usize {
    let mut best = 0;
    for (i, c) in cells.iter().enumerate().skip(1) {
        let b = &cells[best];
        let better = c.mean_risk < b.mean_risk
            || (c.mean_risk == b.mean_risk && (c.lambda > b.lambda || (c.lambda == b.lambda && c.gamma < b.gamma)));
        if better {
            best = i;
        }
    }
    best
}

/// Trains on all of `train` (scaled) at grid values `(lambda, gamma)`.
pub fn refit(
    train: &TrainingSet,
    template: &HyperParams,
    lambda: f64,
    gamma: f64,
    scaling: Scaling,
    options: &SolverOptions,
) -> Result<(Model, TrainOutcome)> {
    let n = train.n();
    let params = template
        .with_cost(crate::types::cost_from_lambda(lambda, n as f64))?
        .with_gamma(refit_gamma(gamma, n))?;
    let out = solver::train(train, &params, None, options)?;
    let model = Model::from_state(train.features(), &out.state, params.gamma(), params.clip_m(), scaling)?;
    Ok((model, out))
}

/// Mean ALS loss at the model's tau of the scaled-space residuals on a raw
/// test set.
pub fn evaluate(model: &Model, test: &TrainingSet, clipped: bool) -> Result<f64> {
    let scaling = model.scaling();
    let predictions: Vec<f64> = (0..test.n())
        .into_par_iter()
        .map(|i| model.predict_scaled(&scaling.scale_point(test.point(i))?))
        .collect::<Result<_>>()?;
    let labels: Vec<f64> = test.labels().iter().map(|&y| scaling.scale_label(y)).collect();
    Ok(risk(&labels, &predictions, model.tau(), clipped.then_some(model.clip_m())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn conversions() {
        assert_relative_eq!(cv_gamma(0.01, 1000, 5), 8.0, max_relative = 1e-15);
        assert_relative_eq!(cv_cost(0.001, 1000, 5), 0.625, max_relative = 1e-15);
        assert_eq!(refit_gamma(0.01, 1000), 10.0);
    }

    #[test]
    fn folds_partition_the_sample() {
        let blocks = fold_assignment(23, 5, 9).unwrap();
        let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
        let mut all: Vec<usize> = blocks.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert_eq!(blocks, fold_assignment(23, 5, 9).unwrap());
        assert!(matches!(fold_assignment(3, 4, 0), Err(Error::DegenerateFolds { folds: 4, n: 3 })));
        assert!(fold_assignment(3, 1, 0).is_err());
    }

    #[test]
    fn best_cell_tie_break() {
        let cell = |lambda, gamma, mean_risk| CvCell {
            lambda,
            gamma,
            mean_risk,
            fold_risks: vec![],
            iterations: 0,
            seconds: 0.0,
            converged: true,
        };
        let cells = vec![cell(0.1, 1.0, 0.5), cell(1.0, 2.0, 0.5), cell(1.0, 1.0, 0.5), cell(0.01, 1.0, 0.7)];
        assert_eq!(best_index(&cells), 2);
        let cells = vec![cell(0.1, 1.0, 0.5), cell(1.0, 1.0, 0.4)];
        assert_eq!(best_index(&cells), 1);
    }

    #[test]
    fn evaluate_examples() {
        let test = TrainingSet::new(array![[0.0], [1.0]], vec![1.0, -1.0]).unwrap();
        let zero = Model::new(
            Array2::zeros((0, 1)),
            vec![],
            1.0,
            Tau::new(0.5).unwrap(),
            1.0,
            1.0,
            Scaling::identity(1),
        )
        .unwrap();
        assert_eq!(evaluate(&zero, &test, false).unwrap(), 0.5);
        let doubled = test.subset(&[0, 1, 0, 1]).unwrap();
        assert_eq!(evaluate(&zero, &doubled, false).unwrap(), 0.5);
        let exact = TrainingSet::new(array![[0.0], [1.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(evaluate(&zero, &exact, true).unwrap(), 0.0);
    }

    #[test]
    fn small_cv_run_is_deterministic() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| -1.0 + 2.0 * i as f64 / 39.0);
        let y: Vec<f64> = x.column(0).iter().map(|v| (3.0 * v).sin()).collect();
        let data = TrainingSet::new(x, y).unwrap();
        let grid = GridSpec::new(vec![1e-2, 1e-3], vec![0.02, 0.05]).unwrap();
        let template = HyperParams::new(0.5, 1.0, 1.0).unwrap();
        let opts = CvOptions {
            folds: 4,
            seed: 11,
            ..CvOptions::default()
        };
        let a = cv_select(&data, &template, &grid, &opts).unwrap();
        let b = cv_select(&data, &template, &grid, &opts).unwrap();
        assert_eq!(a.cells.len(), 4);
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.mean_risk, y.mean_risk);
            assert_eq!(x.iterations, y.iterations);
        }
        assert_eq!(a.best, b.best);
        assert!(a.cells.iter().all(|c| c.converged));
        let best = a.best_cell();
        assert!(a.cells.iter().all(|c| c.mean_risk >= best.mean_risk));
    }
}
