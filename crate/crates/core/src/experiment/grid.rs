//! Geometric hyperparameter grids.

use crate::error::{Error, Result};

/// Regularization values in descending order (so that the cost rises along
/// a warm-start chain) and kernel widths in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lambdas: Vec<f64>,
    gammas: Vec<f64>,
}

pub const DEFAULT_GRID_SIZE: usize = 10;
const LAMBDA_LOW_FACTOR: f64 = 0.001;
const GAMMA_LOW_FACTOR: f64 = 0.1;
const GAMMA_HIGH: f64 = 0.2;

fn strictly(values: &[f64], name: &'static str, descending: bool) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Empty(name));
    }
    if let Some(&v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidParameter {
            name,
            value: v,
            reason: "grid values must be finite and positive",
        });
    }
    let ordered = values.windows(2).all(|w| if descending { w[0] > w[1] } else { w[0] < w[1] });
    if !ordered {
        return Err(Error::InvalidParameter {
            name,
            value: values[0],
            reason: if descending {
                "grid must be strictly descending"
            } else {
                "grid must be strictly ascending"
            },
        });
    }
    Ok(())
}

/// `count` geometrically spaced values from `low` to `high` inclusive; a
/// single value is the geometric midpoint.
pub fn geometric(low: f64, high: f64, count: usize) -> Result<Vec<f64>> {
    crate::error::positive("grid lower bound", low)?;
    crate::error::positive("grid upper bound", high)?;
    match count {
        0 => Err(Error::Empty("grid")),
        1 => Ok(vec![(low * high).sqrt()]),
        _ => {
            let ratio = (high / low).ln() / (count - 1) as f64;
            let mut values: Vec<f64> = (0..count).map(|i| low * (ratio * i as f64).exp()).collect();
            values[0] = low;
            values[count - 1] = high;
            Ok(values)
        }
    }
}

impl GridSpec {
    pub fn new(lambdas: Vec<f64>, gammas: Vec<f64>) -> Result<Self> {
        strictly(&lambdas, "lambda grid", true)?;
        strictly(&gammas, "gamma grid", false)?;
        Ok(GridSpec { lambdas, gammas })
    }

    /// Geometric grids over `[lambda_low, lambda_high]` and
    /// `[gamma_low, gamma_high]`.
    pub fn from_ranges(lambda_range: (f64, f64), gamma_range: (f64, f64), lambda_count: usize, gamma_count: usize) -> Result<Self> {
        let (ll, lh) = (lambda_range.0.min(lambda_range.1), lambda_range.0.max(lambda_range.1));
        let mut lambdas = geometric(ll, lh, lambda_count)?;
        lambdas.reverse();
        let (gl, gh) = (gamma_range.0.min(gamma_range.1), gamma_range.0.max(gamma_range.1));
        GridSpec::new(lambdas, geometric(gl, gh, gamma_count)?)
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Default ranges for `n` training samples in dimension `d`:
/// `lambda` in `[0.001 / n, 1]`, `gamma` in `[0.1 n^(-1/d), 0.2]`.
pub fn default_ranges(n: usize, d: usize) -> ((f64, f64), (f64, f64)) {
    let n = n.max(1) as f64;
    let d = d.max(1) as f64;
    ((LAMBDA_LOW_FACTOR / n, 1.0), (GAMMA_LOW_FACTOR * n.powf(-1.0 / d), GAMMA_HIGH))
}

/// The default 10 by 10 grid.
pub fn default_grid(n: usize, d: usize) -> GridSpec {
    default_grid_sized(n, d, DEFAULT_GRID_SIZE, DEFAULT_GRID_SIZE).expect("default grid sizes are valid")
}

pub fn default_grid_sized(n: usize, d: usize, lambda_count: usize, gamma_count: usize) -> Result<GridSpec> {
    let (lr, gr) = default_ranges(n, d);
    GridSpec::from_ranges(lr, gr, lambda_count, gamma_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_grid_endpoints() {
        let g = default_grid(1000, 5);
        assert_eq!(g.lambdas().len(), 10);
        assert_eq!(g.gammas().len(), 10);
        assert_relative_eq!(g.lambdas()[0], 1.0);
        assert_relative_eq!(g.lambdas()[9], 1e-6, max_relative = 1e-15);
        assert_relative_eq!(g.gammas()[0], 0.025118864315095794, max_relative = 1e-12);
        assert_eq!(g.gammas()[9], 0.2);
        for seq in [g.lambdas(), g.gammas()] {
            let r0 = seq[1] / seq[0];
            for w in seq.windows(2) {
                assert_relative_eq!(w[1] / w[0], r0, max_relative = 1e-12);
            }
        }
        let g = default_grid(1, 3);
        assert_eq!(g.lambdas()[9], 0.001);
        assert_eq!(g.gammas()[0], 0.1);
    }

    #[test]
    fn single_cell_grid() {
        let g = default_grid_sized(100, 1, 1, 1).unwrap();
        assert_eq!(g.len(), 1);
        assert_relative_eq!(g.lambdas()[0], (1e-5f64).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn ordering_is_enforced() {
        assert!(GridSpec::new(vec![0.1, 1.0], vec![1.0]).is_err());
        assert!(GridSpec::new(vec![1.0], vec![2.0, 1.0]).is_err());
        assert!(GridSpec::new(vec![1.0, 1.0], vec![1.0]).is_err());
        assert!(GridSpec::new(vec![], vec![1.0]).is_err());
        assert!(GridSpec::new(vec![1.0, 0.5], vec![0.1, 0.3]).is_ok());
        assert!(geometric(0.0, 1.0, 3).is_err());
    }
}
