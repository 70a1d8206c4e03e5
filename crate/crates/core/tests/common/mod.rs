//! Oracles and data generators shared by the integration tests.
#![allow(dead_code)]

use ersvm_core::dual::DualState;
use ersvm_core::kernel::{build_knn, KernelCache};
use ersvm_core::solver::{Observer, SolverOptions, TrainOutcome};
use ersvm_core::{onedim, twodim, HyperParams, Result, TrainingSet, Wss};
use ndarray::Array2;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw from `(1, 20]`, the range used for the diagonal coefficients.
pub fn draw_b(rng: &mut impl Rng) -> f64 {
    20.0 - rng.gen_range(0.0..19.0)
}

pub fn rational(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite value")
}

/// Golden-section search for the maximizer of a unimodal function on
/// `[lo, hi]`, run until the bracket can no longer shrink in floating point.
/// Only comparisons of `f` values are used, so an exact `f` gives an
/// argmax resolved to the last bit.
pub fn golden_max<V: PartialOrd>(lo: f64, hi: f64, mut f: impl FnMut(f64) -> V) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..2000 {
        if !(a < c && c < d && d < b) {
            break;
        }
        if fc > fd {
            b = d;
            (d, fd) = (c, fc);
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            (c, fc) = (d, fd);
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Single-coordinate subproblem in terms of the net step `s = alpha - beta`,
/// evaluated exactly: `s c - b1 s^2 / 2` for `s >= 0`, `s c - b2 s^2 / 2` otherwise.
pub struct ExactCoordinate {
    radius: f64,
    c: BigRational,
    b1: BigRational,
    b2: BigRational,
}

impl ExactCoordinate {
    pub fn new(c: f64, b1: f64, b2: f64) -> Self {
        ExactCoordinate {
            radius: c.abs() + 1.0,
            c: rational(c),
            b1: rational(b1),
            b2: rational(b2),
        }
    }

    pub fn value(&self, s: f64) -> BigRational {
        let s = rational(s);
        let b = if s >= BigRational::from_integer(0.into()) {
            &self.b1
        } else {
            &self.b2
        };
        let half = BigRational::new(1.into(), 2.into());
        &s * &self.c - &s * &s * b * half
    }

    /// Golden-section maximizer with exact comparisons.
    pub fn argmax(&self) -> f64 {
        golden_max(-self.radius, self.radius, |s| self.value(s))
    }
}

/// Two-coordinate subproblem over the full nonnegative orthant, as a plain
/// f64 function of the four new variables.
#[derive(Debug, Clone, Copy)]
pub struct PairProblem {
    pub c_i: f64,
    pub c_j: f64,
    pub k: f64,
    pub b1: f64,
    pub b2: f64,
}

impl PairProblem {
    pub fn objective(&self, ai: f64, bi: f64, aj: f64, bj: f64) -> f64 {
        let (ui, uj) = (ai - bi, aj - bj);
        self.c_i * ui + self.c_j * uj - 0.5 * self.b1 * (ai * ai + aj * aj) - 0.5 * self.b2 * (bi * bi + bj * bj) + ai * bi + aj * bj
            - self.k * ui * uj
    }

    /// Bound on `|s_i|, |s_j|` at the maximizer: the objective is strongly
    /// concave in the net steps with modulus at least `min(b1, b2) - |k|`.
    pub fn radius(&self) -> f64 {
        let mu = self.b1.min(self.b2) - self.k.abs();
        2.0 * (self.c_i.abs() + self.c_j.abs()) / mu + 1.0
    }

    /// Maximizer as net steps `(s_i, s_j)`.
    ///
    /// Dense grid over `s_i` of the profile `max_{s_j}`, then golden-section
    /// refinement around the best grid cell. The inner maximum is the
    /// coordinate-wise closed form (itself checked against golden section),
    /// and every comparison is exact.
    pub fn argmax(&self) -> (f64, f64) {
        let exact = ExactPair::new(self);
        let r = self.radius();
        let cells = 40;
        let grid: Vec<f64> = (0..=cells).map(|m| -r + 2.0 * r * m as f64 / cells as f64).collect();
        let values: Vec<BigRational> = grid.iter().map(|&s| exact.profile(s).1).collect();
        let best = (0..values.len()).fold(0, |b, m| if values[m] > values[b] { m } else { b });
        let lo = grid[best.saturating_sub(1)];
        let hi = grid[(best + 1).min(cells)];
        let si = golden_max(lo, hi, |s| exact.profile(s).1);
        (si, exact.inner(si))
    }

    /// Best value of the objective on a dense f64 grid; a lower bound on the maximum.
    pub fn grid_max(&self, cells: usize) -> f64 {
        let r = self.radius();
        let pts: Vec<f64> = (0..=cells).map(|m| -r + 2.0 * r * m as f64 / cells as f64).collect();
        let mut best = f64::NEG_INFINITY;
        for &si in &pts {
            for &sj in &pts {
                best = best.max(self.net_objective(si, sj));
            }
        }
        best
    }

    pub fn net_objective(&self, si: f64, sj: f64) -> f64 {
        self.objective(si.max(0.0), (-si).max(0.0), sj.max(0.0), (-sj).max(0.0))
    }
}

struct ExactPair {
    c_i: BigRational,
    c_j: BigRational,
    k: BigRational,
    b1: BigRational,
    b2: BigRational,
    k_f: f64,
    b1_f: f64,
    b2_f: f64,
    c_j_f: f64,
}

impl ExactPair {
    fn new(p: &PairProblem) -> Self {
        ExactPair {
            c_i: rational(p.c_i),
            c_j: rational(p.c_j),
            k: rational(p.k),
            b1: rational(p.b1),
            b2: rational(p.b2),
            k_f: p.k,
            b1_f: p.b1,
            b2_f: p.b2,
            c_j_f: p.c_j,
        }
    }

    fn q(&self, s: &BigRational) -> BigRational {
        let b = if *s >= BigRational::from_integer(0.into()) {
            &self.b1
        } else {
            &self.b2
        };
        s * s * b
    }

    /// Maximizer over `s_j` for fixed `s_i`, rounded to f64.
    fn inner(&self, si: f64) -> f64 {
        let t = self.c_j_f - self.k_f * si;
        if t >= 0.0 {
            t / self.b1_f
        } else {
            t / self.b2_f
        }
    }

    /// `(s_j*, max_{s_j} value)` at `s_i`, where the maximum is exact.
    fn profile(&self, si: f64) -> (BigRational, BigRational) {
        let s_i = rational(si);
        let t = &self.c_j - &self.k * &s_i;
        let s_j = if t >= BigRational::from_integer(0.into()) {
            &t / &self.b1
        } else {
            &t / &self.b2
        };
        let half = BigRational::new(1.into(), 2.into());
        let value = &s_i * &self.c_i + &s_j * &self.c_j - (self.q(&s_i) + self.q(&s_j)) * &half - &self.k * &s_i * &s_j;
        (s_j, value)
    }
}

/// Gaussian kernel matrix computed directly.
pub fn kernel_matrix(points: &Array2<f64>, gamma: f64) -> Array2<f64> {
    let n = points.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let d2: f64 = points.row(i).iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
        (-gamma * gamma * d2).exp()
    })
}

/// Dual objective computed from scratch.
pub fn dual_value(k: &Array2<f64>, y: &[f64], alpha: &[f64], beta: &[f64], cost: f64, tau: f64) -> f64 {
    let u: Vec<f64> = alpha.iter().zip(beta).map(|(a, b)| a - b).collect();
    let ku = k.dot(&ndarray::ArrayView1::from(&u));
    let quad: f64 = u.iter().zip(ku.iter()).map(|(a, b)| a * b).sum();
    let lin: f64 = u.iter().zip(y).map(|(a, b)| a * b).sum();
    let na: f64 = alpha.iter().map(|a| a * a).sum();
    let nb: f64 = beta.iter().map(|b| b * b).sum();
    lin - 0.5 * quad - na / (4.0 * cost * tau) - nb / (4.0 * cost * (1.0 - tau))
}

/// Cyclic projected coordinate ascent over the separate `alpha` and `beta`
/// variables, with the kernel matrix held explicitly. Returns the final
/// `(alpha, beta)`.
pub fn naive_dual_ascent(k: &Array2<f64>, y: &[f64], cost: f64, tau: f64, max_sweeps: usize) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let (sa, sb) = (1.0 / (2.0 * cost * tau), 1.0 / (2.0 * cost * (1.0 - tau)));
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut ku = vec![0.0; n];
    for _ in 0..max_sweeps {
        let mut largest = 0.0f64;
        for i in 0..n {
            let ga = y[i] - ku[i] - sa * alpha[i];
            let new_a = (alpha[i] + ga / (k[[i, i]] + sa)).max(0.0);
            let mut step = new_a - alpha[i];
            alpha[i] = new_a;
            for (l, v) in ku.iter_mut().enumerate() {
                *v += step * k[[l, i]];
            }
            largest = largest.max(step.abs());

            let gb = -y[i] + ku[i] - sb * beta[i];
            let new_b = (beta[i] + gb / (k[[i, i]] + sb)).max(0.0);
            step = new_b - beta[i];
            beta[i] = new_b;
            for (l, v) in ku.iter_mut().enumerate() {
                *v -= step * k[[l, i]];
            }
            largest = largest.max(step.abs());
        }
        if largest < 1e-15 {
            break;
        }
    }
    (alpha, beta)
}

/// The tau-expectile of the standard normal distribution, by bisection on
/// `tau E(Z - e)_+ = (1 - tau) E(e - Z)_+`.
pub fn normal_expectile(tau: f64) -> f64 {
    let z = Normal::new(0.0, 1.0).expect("standard normal");
    let balance = |e: f64| {
        let upper = z.pdf(e) - e * (1.0 - z.cdf(e));
        let lower = e * z.cdf(e) + z.pdf(e);
        tau * upper - (1.0 - tau) * lower
    };
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn uniform_points(rng: &mut impl Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))
}

/// Smooth target plus Gaussian noise on `[-1, 1]^d`.
pub fn synthetic(rng: &mut impl Rng, n: usize, d: usize, noise: f64) -> TrainingSet {
    let x = uniform_points(rng, n, d);
    let y = x
        .outer_iter()
        .map(|row| {
            let trend: f64 = row.iter().skip(1).map(|v| 0.3 * v).sum();
            (std::f64::consts::PI * row[0]).sin() + trend + noise * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    TrainingSet::new(x, y).expect("finite synthetic data")
}

/// `y = sin(2 pi x) + sigma N(0, 1)` with `x` uniform on `[0, 1]`.
pub fn sine_data(rng: &mut impl Rng, n: usize, sigma: f64) -> TrainingSet {
    let x = Array2::from_shape_fn((n, 1), |_| rng.gen_range(0.0..1.0));
    let y = x
        .column(0)
        .iter()
        .map(|&v| (2.0 * std::f64::consts::PI * v).sin() + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    TrainingSet::new(x, y).expect("finite synthetic data")
}

/// Trains from a cold start with the solver implied by `params.wss()` and
/// reports every state to `observer`.
pub fn train_observed(data: &TrainingSet, params: &HyperParams, options: &SolverOptions, observer: Observer<'_>) -> Result<TrainOutcome> {
    let mut kernel = KernelCache::new(data.features(), params.gamma(), options.kernel_mode_for(data.n()))?;
    let init = DualState::cold_start(data.labels(), params)?;
    match params.wss() {
        Wss::Scan1D => onedim::train_1d_observed(&mut kernel, params, init, options, observer),
        Wss::Wss1 => twodim::train_2d_observed(&mut kernel, None, params, init, options, observer),
        Wss::Wss2 => {
            let knn = build_knn(data.features(), params.knn())?;
            twodim::train_2d_observed(&mut kernel, Some(&knn), params, init, options, observer)
        }
    }
}

pub const SOLVERS: [Wss; 3] = [Wss::Scan1D, Wss::Wss1, Wss::Wss2];
