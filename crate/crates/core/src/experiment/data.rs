//! Reading CSV and sparse `label idx:val ...` files, unit-box scaling and
//! train/test splitting.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Scaling;
use crate::types::TrainingSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    /// One sample per line: `label idx:value ...` with 1-based indices.
    Sparse,
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "sparse" | "libsvm" => Ok(DataFormat::Sparse),
            other => Err(format!("unknown data format `{other}` (expected csv or libsvm)")),
        }
    }
}

/// Which CSV column holds the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    /// Every column is a feature.
    None,
    First,
    Last,
    /// 0-based column index.
    Index(usize),
}

impl FromStr for LabelColumn {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(LabelColumn::None),
            "first" => Ok(LabelColumn::First),
            "last" => Ok(LabelColumn::Last),
            other => other
                .parse()
                .map(LabelColumn::Index)
                .map_err(|_| format!("invalid label column `{s}` (expected first, last, none or an index)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub format: DataFormat,
    pub has_header: bool,
    pub delimiter: u8,
    pub label: LabelColumn,
    /// Feature dimension of sparse files; `None` takes the largest index.
    pub dim: Option<usize>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            format: DataFormat::Csv,
            has_header: false,
            delimiter: b',',
            label: LabelColumn::Last,
            dim: None,
        }
    }
}

/// Parsed file contents; may hold zero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RawData {
    pub features: Array2<f64>,
    pub labels: Option<Vec<f64>>,
}

fn parse_error(line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn parse_number(text: &str, line: u64, column: usize) -> Result<f64> {
    match text.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(parse_error(line, column, format!("non-finite value `{text}`"))),
        Err(_) => Err(parse_error(line, column, format!("not a number: `{text}`"))),
    }
}

fn read_csv<R: Read>(input: R, opts: &IngestOptions) -> Result<RawData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .delimiter(opts.delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut width: Option<usize> = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut label_index = None;
    let mut n = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, 0, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(parse_error(
                line,
                record.len().min(w) + 1,
                format!("expected {w} fields, found {}", record.len()),
            ));
        }
        let li = *label_index.get_or_insert(match opts.label {
            LabelColumn::None => None,
            LabelColumn::First => Some(0),
            LabelColumn::Last => Some(w - 1),
            LabelColumn::Index(i) if i < w => Some(i),
            LabelColumn::Index(i) => {
                return Err(parse_error(line, i + 1, format!("label column {i} out of range for {w} fields")));
            }
        });
        for (col, field) in record.iter().enumerate() {
            let v = parse_number(field, line, col + 1)?;
            if Some(col) == li {
                labels.push(v);
            } else {
                values.push(v);
            }
        }
        n += 1;
    }
    let d = width.unwrap_or(0) - usize::from(label_index.flatten().is_some());
    let features = Array2::from_shape_vec((n, d), values).expect("rows have equal width");
    Ok(RawData {
        features,
        labels: (opts.label != LabelColumn::None).then_some(labels),
    })
}

fn read_sparse<R: Read>(input: R, opts: &IngestOptions) -> Result<RawData> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line_no = idx as u64 + 1;
        let text = line.map_err(|e| parse_error(line_no, 0, e.to_string()))?;
        let text = text.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut tokens = text.split_whitespace();
        let label = parse_number(tokens.next().expect("nonempty line"), line_no, 1)?;
        let mut row = Vec::new();
        for (pos, token) in tokens.enumerate() {
            let column = pos + 2;
            let (i, v) = token
                .split_once(':')
                .ok_or_else(|| parse_error(line_no, column, format!("expected `index:value`, found `{token}`")))?;
            let i: usize = i
                .parse()
                .ok()
                .filter(|&i| i >= 1)
                .ok_or_else(|| parse_error(line_no, column, format!("invalid feature index `{i}`")))?;
            if let Some(dim) = opts.dim {
                if i > dim {
                    return Err(parse_error(line_no, column, format!("feature index {i} exceeds dimension {dim}")));
                }
            }
            if row.iter().any(|&(j, _)| j == i - 1) {
                return Err(parse_error(line_no, column, format!("duplicate feature index {i}")));
            }
            row.push((i - 1, parse_number(v, line_no, column)?));
            max_index = max_index.max(i);
        }
        rows.push(row);
        labels.push(label);
    }
    let d = opts.dim.unwrap_or(max_index);
    let mut features = Array2::zeros((rows.len(), d));
    for (r, row) in rows.iter().enumerate() {
        for &(i, v) in row {
            features[[r, i]] = v;
        }
    }
    Ok(RawData {
        features,
        labels: Some(labels),
    })
}

/// Parses a whole file from `input`.
pub fn read_table<R: Read>(input: R, opts: &IngestOptions) -> Result<RawData> {
    match opts.format {
        DataFormat::Csv => read_csv(input, opts),
        DataFormat::Sparse => read_sparse(input, opts),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Labeled data for training; empty files are rejected.
pub fn ingest_reader<R: Read>(input: R, opts: &IngestOptions) -> Result<TrainingSet> {
    let raw = read_table(input, opts)?;
    let labels = raw.labels.ok_or(Error::Empty("label column"))?;
    if labels.is_empty() {
        return Err(Error::Empty("data file"));
    }
    TrainingSet::new(raw.features, labels)
}

pub fn ingest(path: &Path, opts: &IngestOptions) -> Result<TrainingSet> {
    ingest_reader(open(path)?, opts)
}

/// Feature rows for prediction; a label column, if designated, is dropped.
pub fn read_points(path: &Path, opts: &IngestOptions) -> Result<Array2<f64>> {
    Ok(read_table(open(path)?, opts)?.features)
}

/// Maps every feature column and the labels onto `[-1, 1]`.
pub fn scale_to_unit_box(raw: &TrainingSet) -> (TrainingSet, Scaling) {
    let scaling = Scaling::fit(raw);
    let scaled = scaling.apply(raw).expect("scaling fitted on the same data");
    (scaled, scaling)
}

/// Seeded shuffle followed by a prefix split of `round(train_fraction * n)`
/// training rows.
pub fn split(data: &TrainingSet, train_fraction: f64, seed: u64) -> Result<(TrainingSet, TrainingSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter {
            name: "train_fraction",
            value: train_fraction,
            reason: "must lie strictly between 0 and 1",
        });
    }
    let n = data.n();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidParameter {
            name: "train_fraction",
            value: train_fraction,
            reason: "leaves the training or the test part empty",
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((data.subset(&order[..n_train])?, data.subset(&order[n_train..])?))
}
