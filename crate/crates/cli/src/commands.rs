use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ersvm_core::experiment::{
    bench_table, benchmark, cv_select, default_ranges, evaluate, expectile_curves, ingest, read_points, refit, scale_to_unit_box, split,
    BenchConfig, CurveFit, CurveOptions, CvOptions, GridSpec, IngestOptions, LabelColumn, Table,
};
use ersvm_core::solver::{SolverOptions, DEFAULT_MAX_ITER};
use ersvm_core::types::cost_from_lambda;
use ersvm_core::{train, HyperParams, Model, Scaling, TrainingSet, Wss};
use thiserror::Error;

use crate::args::{
    BenchArgs, Command, CurvesArgs, CvArgs, DataArgs, GapArg, GridArgs, InitArg, PredictArgs, Regularization, SolverArg, SolverArgs,
    TableArgs, TrainArgs, WssArg,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] ersvm_core::Error),
    #[error("{path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use ersvm_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::InvalidParameter { .. } | E::DegenerateFolds { .. }) => 1,
            CliError::Core(_) | CliError::Output { .. } => 2,
            CliError::NotConverged(_) => 3,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Curves(a) => cmd_curves(a),
    }
}

fn ingest_options(data: &DataArgs, default_label: LabelColumn) -> IngestOptions {
    IngestOptions {
        format: data.format,
        has_header: data.header,
        delimiter: data.delimiter,
        label: data.label_column.unwrap_or(default_label),
        dim: data.dim,
    }
}

fn wss_of(arg: WssArg) -> Wss {
    match arg {
        WssArg::Scan => Wss::Scan1D,
        WssArg::Wss1 => Wss::Wss1,
        WssArg::Wss2 => Wss::Wss2,
    }
}

fn select_wss(solver: Option<SolverArg>, wss: Option<WssArg>) -> CliResult<Wss> {
    match (solver, wss) {
        (Some(SolverArg::OneD), None | Some(WssArg::Scan)) | (None, Some(WssArg::Scan)) => Ok(Wss::Scan1D),
        (Some(SolverArg::OneD), Some(w)) => Err(CliError::Usage(format!("--solver 1d cannot be combined with --wss {}", wss_of(w)))),
        (Some(SolverArg::TwoD), Some(WssArg::Scan)) => Err(CliError::Usage("--solver 2d needs --wss wss1 or wss2".into())),
        (_, Some(w)) => Ok(wss_of(w)),
        (_, None) => Ok(Wss::Wss2),
    }
}

/// Applies the solver flags to `params`.
fn configure(params: HyperParams, s: &SolverArgs) -> CliResult<HyperParams> {
    Ok(params
        .with_epsilon(s.epsilon)?
        .with_clip(s.clip)?
        .with_clipped_gap(s.gap == GapArg::Clipped)
        .with_wss(select_wss(s.solver, s.wss)?)
        .with_knn(s.knn)?)
}

fn solver_options(max_iter: Option<u64>, debug_every: Option<u64>) -> SolverOptions {
    SolverOptions {
        max_iter: max_iter.unwrap_or(DEFAULT_MAX_ITER),
        debug_every,
        ..SolverOptions::default()
    }
}

fn cost_of(reg: &Regularization, n: usize) -> Option<f64> {
    reg.cost.or_else(|| reg.lambda.map(|l| cost_from_lambda(l, n as f64)))
}

fn grid_spec(g: &GridArgs, n: usize, d: usize) -> CliResult<GridSpec> {
    let (lr, gr) = default_ranges(n, d);
    Ok(GridSpec::from_ranges(
        g.lambda_range.unwrap_or(lr),
        g.gamma_range.unwrap_or(gr),
        g.grid_lambdas,
        g.grid_gammas,
    )?)
}

fn cv_options(g: &GridArgs, solver: SolverOptions) -> CvOptions {
    CvOptions {
        folds: g.folds,
        seed: g.seed,
        warm_start: g.warm_start,
        solver,
    }
}

fn with_output(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult {
    let wrap = |source, path: &Path| CliError::Output {
        path: path.to_path_buf(),
        source,
    };
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| wrap(e, p))?;
            let mut out = BufWriter::new(file);
            write(&mut out).and_then(|_| out.flush()).map_err(|e| wrap(e, p))
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            write(&mut out)
                .and_then(|_| out.flush())
                .map_err(|e| wrap(e, Path::new("<stdout>")))
        }
    }
}

fn emit_table(mut table: Table, t: &TableArgs) -> CliResult {
    if t.no_timing {
        table.drop_column("seconds");
    }
    let text = table.to_string_with(t.out_delimiter);
    with_output(t.output.as_deref(), |out| out.write_all(text.as_bytes()))
}

fn cmd_train(a: TrainArgs) -> CliResult {
    let raw = ingest(&a.data.data, &ingest_options(&a.data, LabelColumn::Last))?;
    let (data, scaling) = if a.no_scale {
        (raw.clone(), Scaling::identity(raw.d()))
    } else {
        scale_to_unit_box(&raw)
    };
    let cost = cost_of(&a.reg, data.n()).unwrap_or(1.0);
    let params = configure(HyperParams::new(a.tau, cost, a.gamma)?, &a.solver)?;
    let start = Instant::now();
    let out = train(&data, &params, None, &solver_options(a.solver.max_iter, a.solver.debug_every))?;
    let seconds = start.elapsed().as_secs_f64();
    let model = Model::from_state(data.features(), &out.state, params.gamma(), params.clip_m(), scaling)?;
    model.save(&a.model)?;
    log::info!(
        "model with {} support vectors written to {}",
        model.support_len(),
        a.model.display()
    );

    with_output(None, |w| {
        writeln!(w, "termination\t{}", out.termination)?;
        writeln!(w, "iterations\t{}", out.iterations)?;
        writeln!(w, "gap\t{}", out.gap.s)?;
        writeln!(w, "threshold\t{}", out.gap.threshold)?;
        writeln!(w, "support\t{}", model.support_len())?;
        writeln!(w, "seconds\t{seconds:.3}")
    })?;
    if out.converged() {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "training ended with {} after {} updates (gap {} > {})",
            out.termination, out.iterations, out.gap.s, out.gap.threshold
        )))
    }
}

fn cmd_predict(a: PredictArgs) -> CliResult {
    let model = Model::load(&a.model)?;
    let points = read_points(&a.data.data, &ingest_options(&a.data, LabelColumn::None))?;
    if points.nrows() > 0 && points.ncols() != model.dim() {
        return Err(ersvm_core::Error::DimensionMismatch {
            expected: model.dim(),
            found: points.ncols(),
        }
        .into());
    }
    let predictions = if points.nrows() == 0 {
        Vec::new()
    } else {
        model.predict_batch(&points, a.clipped)?
    };
    with_output(a.output.as_deref(), |w| predictions.iter().try_for_each(|p| writeln!(w, "{p}")))
}

fn cmd_cv(a: CvArgs) -> CliResult {
    let raw = ingest(&a.data.data, &ingest_options(&a.data, LabelColumn::Last))?;
    let (train_raw, test_raw) = match a.test_fraction {
        Some(f) => {
            let (train, test) = split(&raw, 1.0 - f, a.grid.seed)?;
            (train, Some(test))
        }
        None => (raw, None),
    };
    let (data, scaling) = scale_to_unit_box(&train_raw);
    let template = configure(HyperParams::new(a.tau, 1.0, 1.0)?, &a.solver)?;
    let grid = grid_spec(&a.grid, data.n(), data.d())?;
    let cv = cv_options(&a.grid, solver_options(a.solver.max_iter, a.solver.debug_every));

    let report = cv_select(&data, &template, &grid, &cv)?;
    let best = report.best_cell();
    let (model, outcome) = refit(&data, &template, best.lambda, best.gamma, scaling, &cv.solver)?;
    if let Some(path) = &a.model {
        model.save(path)?;
    }
    let mut summary = format!("best lambda {} gamma {}: cv risk {}", best.lambda, best.gamma, best.mean_risk);
    if let Some(test) = &test_raw {
        let risk = evaluate(&model, test, template.use_clipped_gap())?;
        summary.push_str(&format!(", test risk {risk} on {} held-out samples", test.n()));
    }
    eprintln!("{summary}");
    emit_table(report.to_table(), &a.table)?;

    if outcome.converged() {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "refit ended with {} after {} updates",
            outcome.termination, outcome.iterations
        )))
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn cmd_bench(a: BenchArgs) -> CliResult {
    let opts = IngestOptions {
        format: a.format,
        has_header: a.header,
        delimiter: a.delimiter,
        label: a.label_column.unwrap_or(LabelColumn::Last),
        dim: None,
    };
    let mut configs = Vec::new();
    for &tau in &a.taus {
        for &w in &a.wss_list {
            let wss = wss_of(w);
            let knns: &[usize] = if wss == Wss::Wss2 { &a.knn_list } else { &a.knn_list[..1] };
            for &init in &a.init {
                for &gap in &a.gaps {
                    for &knn in knns {
                        configs.push(BenchConfig {
                            tau,
                            wss,
                            warm_start: init == InitArg::Warm,
                            clipped_gap: gap == GapArg::Clipped,
                            knn,
                        });
                    }
                }
            }
        }
    }
    if configs.is_empty() {
        return Err(CliError::Usage("no benchmark configurations selected".into()));
    }
    let base = HyperParams::new(0.5, 1.0, 1.0)?.with_epsilon(a.epsilon)?.with_clip(a.clip)?;
    let cv = cv_options(&a.grid, solver_options(a.max_iter, None));
    let mut rows = Vec::new();
    for path in &a.data {
        let raw = ingest(path, &opts)?;
        let (data, _) = scale_to_unit_box(&raw);
        let grid = grid_spec(&a.grid, data.n(), data.d())?;
        let named = [(dataset_name(path), data)];
        rows.extend(benchmark(&named, &configs, &base, Some(&grid), &cv, a.per_cell)?);
    }
    emit_table(bench_table(&rows), &a.table)
}

fn cmd_curves(a: CurvesArgs) -> CliResult {
    let raw: TrainingSet = ingest(&a.data.data, &ingest_options(&a.data, LabelColumn::Last))?;
    let solver = solver_options(a.solver.max_iter, a.solver.debug_every);
    let fit = match (cost_of(&a.reg, raw.n()), a.gamma) {
        (Some(cost), Some(gamma)) => CurveFit::Fixed(configure(HyperParams::new(0.5, cost, gamma)?, &a.solver)?),
        (None, None) => CurveFit::CrossValidated {
            template: configure(HyperParams::new(0.5, 1.0, 1.0)?, &a.solver)?,
            grid: Some(grid_spec(&a.grid, raw.n(), raw.d())?),
            cv: cv_options(&a.grid, solver),
        },
        _ => return Err(CliError::Usage("fixed curves need both --gamma and one of --lambda/--cost".into())),
    };
    let opts = CurveOptions {
        feature: a.feature,
        resolution: a.resolution,
        sqrt_x: a.sqrt_x,
    };
    let curves = expectile_curves(&raw, &a.taus, &fit, &opts, &solver)?;
    emit_table(curves.to_table(), &a.table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_and_wss_combinations() {
        use SolverArg::*;
        use WssArg::*;
        assert_eq!(select_wss(None, None).unwrap(), Wss::Wss2);
        assert_eq!(select_wss(Some(OneD), None).unwrap(), Wss::Scan1D);
        assert_eq!(select_wss(None, Some(Scan)).unwrap(), Wss::Scan1D);
        assert_eq!(select_wss(Some(TwoD), Some(Wss1)).unwrap(), Wss::Wss1);
        assert!(select_wss(Some(OneD), Some(Wss2)).is_err());
        assert!(select_wss(Some(TwoD), Some(Scan)).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
        assert_eq!(CliError::NotConverged(String::new()).exit_code(), 3);
        let bad_tau = ersvm_core::Tau::new(1.0).unwrap_err();
        assert_eq!(CliError::from(bad_tau).exit_code(), 1);
        assert_eq!(CliError::from(ersvm_core::Error::Empty("data file")).exit_code(), 2);
    }
}
