//! Experiment pipeline: ingestion, scaling, grids, cross-validation,
//! evaluation, benchmarks and curve tables.

pub mod bench;
pub mod curves;
pub mod cv;
pub mod data;
pub mod grid;
pub mod table;

pub use bench::{bench_table, benchmark, BenchConfig, BenchRow};
pub use curves::{expectile_curves, CurveFit, CurveOptions, Curves};
pub use cv::{cv_cost, cv_gamma, cv_select, evaluate, fold_assignment, refit, refit_gamma, CvCell, CvOptions, CvReport};
pub use data::{ingest, ingest_reader, read_points, read_table, scale_to_unit_box, split, DataFormat, IngestOptions, LabelColumn, RawData};
pub use grid::{default_grid, default_grid_sized, default_ranges, geometric, GridSpec};
pub use table::{Table, Value, DEFAULT_DELIMITER};
