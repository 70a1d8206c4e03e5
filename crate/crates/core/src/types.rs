//! Shared domain types and the asymmetric least squares (ALS) loss.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};

use crate::error::{positive, Error, Result};

/// Expectile level, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Tau(f64);

impl Tau {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 && tau < 1.0 {
            Ok(Tau(tau))
        } else {
            Err(Error::InvalidParameter {
                name: "tau",
                value: tau,
                reason: "expectile level must lie strictly inside (0, 1)",
            })
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// ALS loss of residual `t = y - f(x)`.
    #[inline]
    pub fn loss(self, t: f64) -> f64 {
        if t >= 0.0 {
            self.0 * t * t
        } else {
            (1.0 - self.0) * t * t
        }
    }
}

impl fmt::Display for Tau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// ALS loss `tau * t^2` for `t >= 0` and `(1 - tau) * t^2` otherwise.
pub fn als_loss(t: f64, tau: f64) -> Result<f64> {
    let tau = Tau::new(tau)?;
    if !t.is_finite() {
        return Err(Error::NonFinite {
            what: "residual",
            index: 0,
        });
    }
    Ok(tau.loss(t))
}

/// Empirical ALS risk: the mean loss over `residuals`.
pub fn als_risk(residuals: &[f64], tau: f64) -> Result<f64> {
    let tau = Tau::new(tau)?;
    if residuals.is_empty() {
        return Err(Error::Empty("residual vector"));
    }
    let mut sum = 0.0;
    for (index, &t) in residuals.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::NonFinite { what: "residual", index });
        }
        sum += tau.loss(t);
    }
    Ok(sum / residuals.len() as f64)
}

/// The constant `e` minimizing the summed ALS loss of `values - e`.
///
/// Bisection on the first-order condition
/// `tau * sum (y - e)_+ = (1 - tau) * sum (e - y)_+`, whose left side minus
/// right side is strictly decreasing in `e`.
pub fn sample_expectile(values: &[f64], tau: f64) -> Result<f64> {
    let tau = Tau::new(tau)?.get();
    if values.is_empty() {
        return Err(Error::Empty("sample"));
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "sample", index });
    }
    let excess = |e: f64| {
        let (mut above, mut below) = (0.0, 0.0);
        for &y in values {
            if y > e {
                above += y - e;
            } else {
                below += e - y;
            }
        }
        tau * above - (1.0 - tau) * below
    };
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(lo);
    }
    for _ in 0..200 {
        if hi - lo <= 1e-12 * lo.abs().max(hi.abs()).max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Feature matrix (`n x d`, row-major) and labels of a data set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    features: Array2<f64>,
    labels: Vec<f64>,
}

impl TrainingSet {
    pub fn new(features: Array2<f64>, labels: Vec<f64>) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 {
            return Err(Error::Empty("training set"));
        }
        if d == 0 {
            return Err(Error::Empty("feature dimension"));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        if let Some(index) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "features", index });
        }
        if let Some(index) = labels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "labels", index });
        }
        // kernel rows are computed from contiguous slices
        let features = if features.is_standard_layout() {
            features
        } else {
            features.as_standard_layout().into_owned()
        };
        Ok(TrainingSet { features, labels })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// Rows `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let d = self.d();
        let mut features = Array2::zeros((indices.len(), d));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            if i >= self.n() {
                return Err(Error::IndexOutOfRange { index: i, len: self.n() });
            }
            features.row_mut(row).assign(&self.features.row(i));
            labels.push(self.labels[i]);
        }
        TrainingSet::new(features, labels)
    }
}

/// Working-set selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Wss {
    /// Single-coordinate updates chosen by a full gain scan.
    Scan1D,
    /// Best 1D directions from the two index halves, paired with the
    /// previous iteration's directions.
    Wss1,
    /// Best 1D direction paired with its best nearest-neighbor partner.
    Wss2,
}

impl Wss {
    pub fn as_str(self) -> &'static str {
        match self {
            Wss::Scan1D => "scan",
            Wss::Wss1 => "wss1",
            Wss::Wss2 => "wss2",
        }
    }
}

impl fmt::Display for Wss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Wss {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "scan" | "scan1d" | "1d" => Ok(Wss::Scan1D),
            "wss1" => Ok(Wss::Wss1),
            "wss2" => Ok(Wss::Wss2),
            other => Err(format!("unknown working set selection `{other}`")),
        }
    }
}

/// Hyperparameters of one training run.
///
/// The regularization is carried as `C = 1 / (2 n lambda)`; use
/// [`HyperParams::from_lambda`] to convert once at the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    tau: Tau,
    cost: f64,
    gamma: f64,
    epsilon: f64,
    clip_m: f64,
    use_clipped_gap: bool,
    wss: Wss,
    knn: usize,
}

impl HyperParams {
    pub const DEFAULT_EPSILON: f64 = 1e-3;
    pub const DEFAULT_CLIP: f64 = 1.0;
    pub const DEFAULT_KNN: usize = 15;

    pub fn new(tau: f64, cost: f64, gamma: f64) -> Result<Self> {
        Ok(HyperParams {
            tau: Tau::new(tau)?,
            cost: positive("cost", cost)?,
            gamma: positive("gamma", gamma)?,
            epsilon: Self::DEFAULT_EPSILON,
            clip_m: Self::DEFAULT_CLIP,
            use_clipped_gap: false,
            wss: Wss::Wss2,
            knn: Self::DEFAULT_KNN,
        })
    }

    /// Builds parameters from `lambda` for a training set of size `n`.
    pub fn from_lambda(tau: f64, lambda: f64, n: usize, gamma: f64) -> Result<Self> {
        let lambda = positive("lambda", lambda)?;
        if n == 0 {
            return Err(Error::Empty("training set"));
        }
        Self::new(tau, cost_from_lambda(lambda, n as f64), gamma)
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        self.tau = Tau::new(tau)?;
        Ok(self)
    }

    pub fn with_cost(mut self, cost: f64) -> Result<Self> {
        self.cost = positive("cost", cost)?;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = positive("gamma", gamma)?;
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.epsilon = positive("epsilon", epsilon)?;
        Ok(self)
    }

    pub fn with_clip(mut self, clip_m: f64) -> Result<Self> {
        self.clip_m = positive("clip", clip_m)?;
        Ok(self)
    }

    pub fn with_clipped_gap(mut self, clipped: bool) -> Self {
        self.use_clipped_gap = clipped;
        self
    }

    pub fn with_wss(mut self, wss: Wss) -> Self {
        self.wss = wss;
        self
    }

    pub fn with_knn(mut self, knn: usize) -> Result<Self> {
        if knn == 0 {
            return Err(Error::InvalidParameter {
                name: "knn",
                value: 0.0,
                reason: "need at least one neighbor",
            });
        }
        self.knn = knn;
        Ok(self)
    }

    pub fn tau(&self) -> Tau {
        self.tau
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// `lambda = 1 / (2 n C)` for a training set of size `n`.
    pub fn lambda(&self, n: usize) -> f64 {
        1.0 / (2.0 * n as f64 * self.cost)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn clip_m(&self) -> f64 {
        self.clip_m
    }

    pub fn use_clipped_gap(&self) -> bool {
        self.use_clipped_gap
    }

    /// Clip bound used by the stopping rule, if the clipped gap is active.
    pub fn gap_clip(&self) -> Option<f64> {
        self.use_clipped_gap.then_some(self.clip_m)
    }

    pub fn wss(&self) -> Wss {
        self.wss
    }

    pub fn knn(&self) -> usize {
        self.knn
    }
}

/// `C = 1 / (2 n lambda)`.
pub fn cost_from_lambda(lambda: f64, n: f64) -> f64 {
    1.0 / (2.0 * n * lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn loss_values() {
        assert_eq!(als_loss(0.0, 0.3).unwrap(), 0.0);
        assert_abs_diff_eq!(als_loss(2.0, 0.75).unwrap(), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(als_loss(-2.0, 0.75).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn loss_rejects_bad_input() {
        assert!(als_loss(f64::NAN, 0.5).is_err());
        assert!(als_loss(1.0, 0.0).is_err());
        assert!(als_loss(1.0, 1.0).is_err());
        assert!(als_loss(1.0, f64::NAN).is_err());
    }

    #[test]
    fn risk_values() {
        assert_eq!(als_risk(&[0.0, 0.0, 0.0], 0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(als_risk(&[2.0, -2.0], 0.75).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(als_risk(&[1.0; 4], 0.25).unwrap(), 0.25, epsilon = 1e-15);
        assert!(matches!(als_risk(&[], 0.5), Err(Error::Empty(_))));
    }

    #[test]
    fn expectile_values() {
        assert_abs_diff_eq!(sample_expectile(&[0.0, 1.0], 0.5).unwrap(), 0.5, epsilon = 1e-12);
        // 0.75 (1 - e) = 0.25 e
        assert_abs_diff_eq!(sample_expectile(&[0.0, 1.0], 0.75).unwrap(), 0.75, epsilon = 1e-12);
        assert_eq!(sample_expectile(&[4.5; 3], 0.1).unwrap(), 4.5);
        assert!(sample_expectile(&[], 0.5).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(HyperParams::new(1.0, 1.0, 1.0).is_err());
        assert!(HyperParams::new(0.0, 1.0, 1.0).is_err());
        assert!(HyperParams::new(0.5, 0.0, 1.0).is_err());
        assert!(HyperParams::new(0.5, 1.0, -1.0).is_err());
        let p = HyperParams::new(0.5, 1.0, 1.0).unwrap();
        assert!(p.with_epsilon(0.0).is_err());
        assert!(p.with_clip(-1.0).is_err());
        assert!(p.with_knn(0).is_err());
        let p = HyperParams::from_lambda(0.5, 0.001, 1000, 1.0).unwrap();
        assert_abs_diff_eq!(p.cost(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.lambda(1000), 0.001, epsilon = 1e-15);
    }

    #[test]
    fn training_set_validation() {
        let x = Array2::zeros((2, 1));
        assert!(TrainingSet::new(x.clone(), vec![1.0]).is_err());
        assert!(TrainingSet::new(x.clone(), vec![1.0, f64::INFINITY]).is_err());
        assert!(TrainingSet::new(Array2::zeros((0, 1)), vec![]).is_err());
        assert!(TrainingSet::new(Array2::zeros((2, 0)), vec![0.0, 0.0]).is_err());
        let set = TrainingSet::new(x, vec![1.0, 2.0]).unwrap();
        assert_eq!((set.n(), set.d()), (2, 1));
        assert_eq!(set.subset(&[1]).unwrap().labels(), &[2.0]);
    }

    proptest! {
        #[test]
        fn loss_reflection(t in -1e3f64..1e3, tau in 0.001f64..0.999) {
            let a = als_loss(t, tau).unwrap();
            let b = als_loss(-t, 1.0 - tau).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn loss_convex(t1 in -100f64..100.0, t2 in -100f64..100.0, theta in 0f64..=1.0, tau in 0.01f64..0.99) {
            let mid = als_loss(theta * t1 + (1.0 - theta) * t2, tau).unwrap();
            let chord = theta * als_loss(t1, tau).unwrap() + (1.0 - theta) * als_loss(t2, tau).unwrap();
            prop_assert!(mid <= chord + 1e-9 * chord.max(1.0));
        }

        #[test]
        fn expectile_monotone_in_tau(
            values in proptest::collection::vec(-50f64..50.0, 1..40),
            a in 0.01f64..0.99,
            b in 0.01f64..0.99,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let e_lo = sample_expectile(&values, lo).unwrap();
            let e_hi = sample_expectile(&values, hi).unwrap();
            prop_assert!(e_lo <= e_hi + 1e-9);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let e_mid = sample_expectile(&values, 0.5).unwrap();
            prop_assert!((e_mid - mean).abs() <= 1e-9);
        }
    }
}
