//! Trained expectile model, prediction and the text model format.
//!
//! File layout (one record per line, whitespace separated):
//!
//! ```text
//! ersvm-model 1
//! m <support count>
//! d <dimension>
//! tau <float>
//! cost <float>
//! gamma <float>
//! clip_m <float>
//! scaling
//! <center> <scale>          d feature lines, then one label line
//! support
//! <x_1> ... <x_d> <coef>    m lines
//! end
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::dual::DualState;
use crate::error::{positive, Error, Result};
use crate::kernel::rbf;
use crate::types::{Tau, TrainingSet};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "ersvm-model";

/// Coefficients smaller than this in magnitude are dropped from a model.
pub const COEFFICIENT_CUTOFF: f64 = 1e-12;

/// Componentwise affine map `v -> (v - center) / scale` for features and label.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    feature_center: Vec<f64>,
    feature_scale: Vec<f64>,
    label_center: f64,
    label_scale: f64,
}

impl Scaling {
    pub fn identity(d: usize) -> Self {
        Scaling {
            feature_center: vec![0.0; d],
            feature_scale: vec![1.0; d],
            label_center: 0.0,
            label_scale: 1.0,
        }
    }

    /// `features` holds `(center, scale)` per column.
    pub fn new(features: Vec<(f64, f64)>, label: (f64, f64)) -> Result<Self> {
        for &(c, s) in features.iter().chain(std::iter::once(&label)) {
            if !c.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "scaling center",
                    value: c,
                    reason: "must be finite",
                });
            }
            positive("scaling scale", s)?;
        }
        let (feature_center, feature_scale) = features.into_iter().unzip();
        Ok(Scaling {
            feature_center,
            feature_scale,
            label_center: label.0,
            label_scale: label.1,
        })
    }

    /// Maps every feature column and the labels of `data` onto `[-1, 1]`
    /// using the observed minimum and maximum; constant columns are
    /// shifted to zero.
    pub fn fit(data: &TrainingSet) -> Self {
        let center_scale = |min: f64, max: f64| {
            if max > min {
                ((min + max) / 2.0, (max - min) / 2.0)
            } else {
                (min, 1.0)
            }
        };
        let features = data
            .features()
            .axis_iter(Axis(1))
            .map(|col| {
                let (min, max) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                center_scale(min, max)
            })
            .collect::<Vec<_>>();
        let (min, max) = data
            .labels()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let label = center_scale(min, max);
        Scaling::new(features, label).expect("finite data gives a valid scaling")
    }

    pub fn dim(&self) -> usize {
        self.feature_center.len()
    }

    pub fn feature_params(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.feature_center.iter().copied().zip(self.feature_scale.iter().copied())
    }

    pub fn label_params(&self) -> (f64, f64) {
        (self.label_center, self.label_scale)
    }

    pub fn scale_point(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(x.iter().zip(self.feature_params()).map(|(v, (c, s))| (v - c) / s).collect())
    }

    pub fn scale_label(&self, y: f64) -> f64 {
        (y - self.label_center) / self.label_scale
    }

    pub fn unscale_label(&self, y: f64) -> f64 {
        y * self.label_scale + self.label_center
    }

    /// Applies the map to every row and label of `data`.
    pub fn apply(&self, data: &TrainingSet) -> Result<TrainingSet> {
        if data.d() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: data.d(),
            });
        }
        let mut features = data.features().clone();
        for (mut col, (c, s)) in features.axis_iter_mut(Axis(1)).zip(self.feature_params()) {
            col.mapv_inplace(|v| (v - c) / s);
        }
        let labels = data.labels().iter().map(|&y| self.scale_label(y)).collect();
        TrainingSet::new(features, labels)
    }
}

/// Kernel expansion `f(x) = sum_i u_i k(x_i, x)` over the support points,
/// defined in scaled coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    support: Array2<f64>,
    coefficients: Vec<f64>,
    gamma: f64,
    tau: Tau,
    cost: f64,
    clip_m: f64,
    scaling: Scaling,
}

impl Model {
    pub fn new(
        support: Array2<f64>,
        coefficients: Vec<f64>,
        gamma: f64,
        tau: Tau,
        cost: f64,
        clip_m: f64,
        scaling: Scaling,
    ) -> Result<Self> {
        if support.nrows() != coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: support.nrows(),
                found: coefficients.len(),
            });
        }
        if support.ncols() != scaling.dim() {
            return Err(Error::DimensionMismatch {
                expected: scaling.dim(),
                found: support.ncols(),
            });
        }
        if let Some(index) = coefficients.iter().position(|&u| !(u.is_finite() && u != 0.0)) {
            return Err(Error::InvalidParameter {
                name: "coefficient",
                value: coefficients[index],
                reason: "support coefficients must be finite and nonzero",
            });
        }
        if let Some(index) = support.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "support points",
                index,
            });
        }
        Ok(Model {
            support: support.as_standard_layout().into_owned(),
            coefficients,
            gamma: positive("gamma", gamma)?,
            tau,
            cost: positive("cost", cost)?,
            clip_m: positive("clip_m", clip_m)?,
            scaling,
        })
    }

    /// Keeps the points of `points` (scaled coordinates, one row per dual
    /// variable of `state`) whose coefficient is not negligible.
    pub fn from_state(points: &Array2<f64>, state: &DualState, gamma: f64, clip_m: f64, scaling: Scaling) -> Result<Self> {
        if points.nrows() != state.len() {
            return Err(Error::DimensionMismatch {
                expected: state.len(),
                found: points.nrows(),
            });
        }
        let kept: Vec<(usize, f64)> = state
            .coefficients()
            .into_iter()
            .enumerate()
            .filter(|(_, u)| u.abs() >= COEFFICIENT_CUTOFF)
            .collect();
        let support = points.select(Axis(0), &kept.iter().map(|&(i, _)| i).collect::<Vec<_>>());
        let coefficients = kept.into_iter().map(|(_, u)| u).collect();
        Model::new(support, coefficients, gamma, state.tau(), state.cost(), clip_m, scaling)
    }

    pub fn support(&self) -> &Array2<f64> {
        &self.support
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn support_len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn dim(&self) -> usize {
        self.scaling.dim()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau(&self) -> Tau {
        self.tau
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn clip_m(&self) -> f64 {
        self.clip_m
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    /// Prediction in scaled coordinates for an already scaled point.
    pub fn predict_scaled(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self
            .support
            .outer_iter()
            .zip(&self.coefficients)
            .map(|(p, u)| u * rbf(p.as_slice().expect("standard layout"), x, self.gamma))
            .sum())
    }

    /// Prediction for a raw point, on the raw label scale.
    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        let f = self.predict_scaled(&self.scaling.scale_point(x)?)?;
        Ok(self.scaling.unscale_label(f))
    }

    /// As [`Self::predict`] with the scaled prediction clamped to `[-M, M]`.
    pub fn predict_clipped(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        let f = self.predict_scaled(&self.scaling.scale_point(x)?)?;
        Ok(self.scaling.unscale_label(f.clamp(-self.clip_m, self.clip_m)))
    }

    /// Predicts every row of `points` in parallel.
    pub fn predict_batch(&self, points: &Array2<f64>, clipped: bool) -> Result<Vec<f64>> {
        (0..points.nrows())
            .into_par_iter()
            .map(|i| {
                let x = points.row(i);
                if clipped {
                    self.predict_clipped(x)
                } else {
                    self.predict(x)
                }
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
        writeln!(out, "m {}", self.support_len())?;
        writeln!(out, "d {}", self.dim())?;
        writeln!(out, "tau {:.16e}", self.tau.get())?;
        writeln!(out, "cost {:.16e}", self.cost)?;
        writeln!(out, "gamma {:.16e}", self.gamma)?;
        writeln!(out, "clip_m {:.16e}", self.clip_m)?;
        writeln!(out, "scaling")?;
        for (c, s) in self.scaling.feature_params().chain(std::iter::once(self.scaling.label_params())) {
            writeln!(out, "{c:.16e} {s:.16e}")?;
        }
        writeln!(out, "support")?;
        for (p, u) in self.support.outer_iter().zip(&self.coefficients) {
            for v in p {
                write!(out, "{v:.16e} ")?;
            }
            writeln!(out, "{u:.16e}")?;
        }
        writeln!(out, "end")?;
        out.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io)?;
        self.write_to(BufWriter::new(file)).map_err(io)
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut reader = Reader {
            lines: input.lines(),
            line: 0,
        };
        let header = reader.fields("format header")?;
        if header.len() != 2 || header[0] != MAGIC {
            return Err(Error::ModelMalformed {
                line: reader.line,
                message: format!("expected `{MAGIC} <version>` header"),
            });
        }
        let version: u32 = reader.parse(&header[1], "version")?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let m: usize = reader.keyed("m")?;
        let d: usize = reader.keyed("d")?;
        let tau: f64 = reader.keyed("tau")?;
        let cost: f64 = reader.keyed("cost")?;
        let gamma: f64 = reader.keyed("gamma")?;
        let clip_m: f64 = reader.keyed("clip_m")?;
        reader.marker("scaling")?;
        let mut pairs = Vec::with_capacity(d + 1);
        for _ in 0..=d {
            let row = reader.floats("scaling pair", 2)?;
            pairs.push((row[0], row[1]));
        }
        let label = pairs.pop().expect("d + 1 pairs");
        let scaling = Scaling::new(pairs, label).map_err(|e| Error::ModelMalformed {
            line: reader.line,
            message: e.to_string(),
        })?;
        reader.marker("support")?;
        let mut support = Array2::zeros((m, d));
        let mut coefficients = Vec::with_capacity(m);
        for mut row in support.outer_iter_mut() {
            let values = reader.floats("support record", d + 1)?;
            row.iter_mut().zip(&values).for_each(|(dst, v)| *dst = *v);
            coefficients.push(values[d]);
        }
        reader.marker("end")?;
        let tau = Tau::new(tau).map_err(|e| Error::ModelMalformed {
            line: 0,
            message: e.to_string(),
        })?;
        Model::new(support, coefficients, gamma, tau, cost, clip_m, scaling).map_err(|e| Error::ModelMalformed {
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Model::read_from(BufReader::new(file))
    }
}

struct Reader<I> {
    lines: I,
    line: usize,
}

impl<I: Iterator<Item = std::io::Result<String>>> Reader<I> {
    /// Next non-blank line split on whitespace.
    fn fields(&mut self, expected: &str) -> Result<Vec<String>> {
        loop {
            self.line += 1;
            match self.lines.next() {
                None => {
                    return Err(Error::ModelTruncated {
                        expected: expected.to_string(),
                    })
                }
                Some(Err(e)) => {
                    return Err(Error::ModelMalformed {
                        line: self.line,
                        message: e.to_string(),
                    })
                }
                Some(Ok(text)) => {
                    let fields: Vec<String> = text.split_whitespace().map(str::to_string).collect();
                    if !fields.is_empty() {
                        return Ok(fields);
                    }
                }
            }
        }
    }

    fn parse<T: std::str::FromStr>(&self, text: &str, what: &str) -> Result<T> {
        text.parse().map_err(|_| Error::ModelMalformed {
            line: self.line,
            message: format!("cannot parse {what} from `{text}`"),
        })
    }

    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let fields = self.fields(&format!("`{key}` field"))?;
        if fields[0] != key {
            return Err(Error::ModelMalformed {
                line: self.line,
                message: format!("expected field `{key}`, found `{}`", fields[0]),
            });
        }
        if fields.len() != 2 {
            return Err(Error::ModelFieldCount {
                line: self.line,
                expected: 2,
                found: fields.len(),
            });
        }
        self.parse(&fields[1], key)
    }

    fn marker(&mut self, name: &str) -> Result<()> {
        let fields = self.fields(&format!("`{name}` marker"))?;
        if fields.len() == 1 && fields[0] == name {
            Ok(())
        } else {
            Err(Error::ModelMalformed {
                line: self.line,
                message: format!("expected `{name}`, found `{}`", fields.join(" ")),
            })
        }
    }

    fn floats(&mut self, what: &str, count: usize) -> Result<Vec<f64>> {
        let fields = self.fields(what)?;
        if fields.len() != count {
            return Err(Error::ModelFieldCount {
                line: self.line,
                expected: count,
                found: fields.len(),
            });
        }
        fields
            .iter()
            .map(|f| {
                let v: f64 = self.parse(f, what)?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::ModelMalformed {
                        line: self.line,
                        message: format!("non-finite {what} value `{f}`"),
                    })
                }
            })
            .collect()
    }
}
