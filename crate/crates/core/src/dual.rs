//! Mutable dual optimization state.
//!
//! The dual problem is
//!
//! ```text
//! max W(a, b) = <a - b, y> - 1/2 <a - b, K (a - b)> - |a|^2 / (4 C tau) - |b|^2 / (4 C (1 - tau))
//! s.t. a, b >= 0
//! ```
//!
//! and the state keeps both gradients of `W` plus the gap component
//! `T = 1/2 <u, K u> - W` (with `u = a - b`) up to date after every
//! coordinate update. The other gap component `E` (the weighted squared
//! slacks) depends on every prediction and is summed afresh on demand.

use std::sync::Arc;

use crate::error::{positive, Error, Result};
use crate::kernel::KernelCache;
use crate::onedim::BCoeffs;
use crate::types::{HyperParams, Tau};

/// Relative tolerance of the debug consistency check.
pub const CONSISTENCY_TOL: f64 = 1e-6;

const FEASIBILITY_SLACK: f64 = 1e-14;

/// Duality gap `S = T + C * E` together with the stopping threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub t_part: f64,
    pub e_part: f64,
    pub s: f64,
    /// `epsilon / (2 lambda)`.
    pub threshold: f64,
    pub clipped: bool,
}

impl GapReport {
    pub fn converged(&self) -> bool {
        self.s <= self.threshold
    }
}

/// Quantities recomputed from the kernel matrix, independent of the
/// incremental bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Recomputed {
    pub grad_alpha: Vec<f64>,
    pub grad_beta: Vec<f64>,
    pub t_part: f64,
    pub dual_objective: f64,
    pub primal_objective: f64,
}

#[derive(Debug, Clone)]
pub struct DualState {
    labels: Arc<[f64]>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    grad_alpha: Vec<f64>,
    grad_beta: Vec<f64>,
    t_part: f64,
    cost: f64,
    tau: Tau,
    coeffs: BCoeffs,
    updates: u64,
}

impl DualState {
    /// `alpha = beta = 0`, where the gradients are `y` and `-y`.
    pub fn cold_start(labels: &[f64], params: &HyperParams) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("labels"));
        }
        let n = labels.len();
        Ok(DualState {
            labels: labels.into(),
            alpha: vec![0.0; n],
            beta: vec![0.0; n],
            grad_alpha: labels.to_vec(),
            grad_beta: labels.iter().map(|y| -y).collect(),
            t_part: 0.0,
            cost: params.cost(),
            tau: params.tau(),
            coeffs: BCoeffs::new(params.cost(), params.tau()),
            updates: 0,
        })
    }

    /// Builds a state at arbitrary feasible `(alpha, beta)`, computing
    /// gradients and `T` directly from the kernel.
    pub fn from_duals(labels: &[f64], alpha: Vec<f64>, beta: Vec<f64>, params: &HyperParams, kernel: &mut KernelCache<'_>) -> Result<Self> {
        let n = labels.len();
        for v in [&alpha, &beta] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
        }
        if kernel.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: kernel.len(),
            });
        }
        if let Some(i) = (0..n).find(|&i| !(alpha[i] >= 0.0 && beta[i] >= 0.0)) {
            return Err(Error::Infeasible {
                index: i,
                alpha: alpha[i],
                beta: beta[i],
            });
        }
        let mut state = Self::cold_start(labels, params)?;
        state.alpha = alpha;
        state.beta = beta;
        let scratch = state.recompute(kernel)?;
        state.grad_alpha = scratch.grad_alpha;
        state.grad_beta = scratch.grad_beta;
        state.t_part = scratch.t_part;
        Ok(state)
    }

    /// Reuses a solution trained at `self.cost()` as the starting point for
    /// `c_new`, shifting gradients and `T` for the changed regularization.
    pub fn warm_start(&self, c_new: f64) -> Result<Self> {
        let c_new = positive("cost", c_new)?;
        let tau = self.tau.get();
        let shift = 1.0 / self.cost - 1.0 / c_new;
        let mut next = self.clone();
        let mut sq = 0.0;
        for i in 0..self.len() {
            let (a, b) = (self.alpha[i], self.beta[i]);
            next.grad_alpha[i] += a / (2.0 * tau) * shift;
            next.grad_beta[i] += b / (2.0 * (1.0 - tau)) * shift;
            sq += a * a / tau + b * b / (1.0 - tau);
        }
        next.t_part -= 0.25 * shift * sq;
        next.cost = c_new;
        next.coeffs = BCoeffs::new(c_new, self.tau);
        next.updates = 0;
        Ok(next)
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn grad_alpha(&self) -> &[f64] {
        &self.grad_alpha
    }

    pub fn grad_beta(&self) -> &[f64] {
        &self.grad_beta
    }

    pub fn t_part(&self) -> f64 {
        self.t_part
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn tau(&self) -> Tau {
        self.tau
    }

    pub fn coeffs(&self) -> BCoeffs {
        self.coeffs
    }

    /// Number of accepted coordinate updates (a 2D update counts once).
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Dual-difference coefficients `u = alpha - beta`.
    pub fn coefficients(&self) -> Vec<f64> {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| a - b).collect()
    }

    fn alpha_scale(&self) -> f64 {
        1.0 / (2.0 * self.cost * self.tau.get())
    }

    fn beta_scale(&self) -> f64 {
        1.0 / (2.0 * self.cost * (1.0 - self.tau.get()))
    }

    /// Training-point prediction `f(x_i) = (K u)_i`, read off the gradient.
    #[inline]
    pub fn prediction(&self, i: usize) -> f64 {
        self.labels[i] - self.grad_alpha[i] - self.alpha[i] * self.alpha_scale()
    }

    /// Increase of `T` caused by stepping `(delta, eta)` at coordinate `i`,
    /// evaluated at the current (pre-step) state.
    fn t_increase(&self, i: usize, delta: f64, eta: f64) -> f64 {
        let s = delta - eta;
        let (a, b) = (self.alpha[i], self.beta[i]);
        s * (self.labels[i] - 2.0 * self.grad_alpha[i] - 2.0 * a * self.alpha_scale())
            + s * s
            + (2.0 * a * delta + delta * delta) * 0.5 * self.alpha_scale()
            + (2.0 * b * eta + eta * eta) * 0.5 * self.beta_scale()
    }

    /// The decrement `U` with `T(after) = T(before) - U` for a 1D step.
    pub fn t_update_factor(&self, i: usize, delta: f64, eta: f64) -> f64 {
        -self.t_increase(i, delta, eta)
    }

    fn stepped(&self, i: usize, delta: f64, eta: f64) -> Result<(f64, f64)> {
        let settle = |old: f64, step: f64| {
            let new = old + step;
            if new < 0.0 && new >= -FEASIBILITY_SLACK * old.abs().max(1.0) {
                0.0
            } else {
                new
            }
        };
        let a = settle(self.alpha[i], delta);
        let b = settle(self.beta[i], eta);
        if !(a >= 0.0 && b >= 0.0) {
            return Err(Error::Infeasible {
                index: i,
                alpha: a,
                beta: b,
            });
        }
        Ok((a, b))
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, len: self.len() })
        }
    }

    /// Steps `alpha[i] += delta`, `beta[i] += eta` and updates gradients and `T`.
    pub fn apply_update_1d(&mut self, kernel: &mut KernelCache<'_>, i: usize, delta: f64, eta: f64) -> Result<()> {
        self.check_index(i)?;
        let (a_new, b_new) = self.stepped(i, delta, eta)?;
        let (delta, eta) = (a_new - self.alpha[i], b_new - self.beta[i]);
        if delta == 0.0 && eta == 0.0 {
            self.updates += 1;
            return Ok(());
        }
        self.t_part += self.t_increase(i, delta, eta);
        let s = delta - eta;
        let row = kernel.row(i)?;
        for (k, &kik) in row.iter().enumerate() {
            let change = s * kik;
            self.grad_alpha[k] -= change;
            self.grad_beta[k] += change;
        }
        self.grad_alpha[i] -= delta * self.alpha_scale();
        self.grad_beta[i] -= eta * self.beta_scale();
        self.alpha[i] = a_new;
        self.beta[i] = b_new;
        self.updates += 1;
        Ok(())
    }

    /// Simultaneous step at two distinct coordinates.
    #[allow(clippy::too_many_arguments)]
    pub fn apply_update_2d(
        &mut self,
        kernel: &mut KernelCache<'_>,
        i: usize,
        j: usize,
        delta_i: f64,
        eta_i: f64,
        delta_j: f64,
        eta_j: f64,
    ) -> Result<()> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(Error::SameIndex(i));
        }
        let (ai, bi) = self.stepped(i, delta_i, eta_i)?;
        let (aj, bj) = self.stepped(j, delta_j, eta_j)?;
        let (delta_i, eta_i) = (ai - self.alpha[i], bi - self.beta[i]);
        let (delta_j, eta_j) = (aj - self.alpha[j], bj - self.beta[j]);
        let (si, sj) = (delta_i - eta_i, delta_j - eta_j);
        if delta_i == 0.0 && eta_i == 0.0 && delta_j == 0.0 && eta_j == 0.0 {
            self.updates += 1;
            return Ok(());
        }
        let row_i = kernel.row(i)?;
        let row_j = kernel.row(j)?;
        let kij = row_i[j];
        self.t_part += self.t_increase(i, delta_i, eta_i) + self.t_increase(j, delta_j, eta_j) + 2.0 * si * sj * kij;
        for k in 0..self.len() {
            let change = si * row_i[k] + sj * row_j[k];
            self.grad_alpha[k] -= change;
            self.grad_beta[k] += change;
        }
        let (sa, sb) = (self.alpha_scale(), self.beta_scale());
        self.grad_alpha[i] -= delta_i * sa;
        self.grad_beta[i] -= eta_i * sb;
        self.grad_alpha[j] -= delta_j * sa;
        self.grad_beta[j] -= eta_j * sb;
        self.alpha[i] = ai;
        self.beta[i] = bi;
        self.alpha[j] = aj;
        self.beta[j] = bj;
        self.updates += 1;
        Ok(())
    }

    /// Slack pair `(xi_plus, xi_minus)` at sample `i`; with `clip = Some(M)`
    /// the prediction is clamped to `[-M, M]` first.
    pub fn slacks(&self, i: usize, clip: Option<f64>) -> (f64, f64) {
        match clip {
            None => {
                let r = self.grad_alpha[i] + self.alpha[i] * self.alpha_scale();
                (r.max(0.0), (-r).max(0.0))
            }
            Some(m) => {
                let f = self.prediction(i).clamp(-m, m);
                let r = self.labels[i] - f;
                (r.max(0.0), (-r).max(0.0))
            }
        }
    }

    /// `E` (or its clipped variant), summed over all samples.
    pub fn e_part(&self, clip: Option<f64>) -> f64 {
        let tau = self.tau.get();
        (0..self.len())
            .map(|i| {
                let (p, m) = self.slacks(i, clip);
                tau * p * p + (1.0 - tau) * m * m
            })
            .sum()
    }

    /// Duality gap `S = T + C E` and the threshold `epsilon / (2 lambda)`.
    pub fn duality_gap(&self, clip: Option<f64>, epsilon: f64) -> GapReport {
        let e_part = self.e_part(clip);
        // lambda = 1 / (2 n C)
        let threshold = epsilon * self.len() as f64 * self.cost;
        GapReport {
            t_part: self.t_part,
            e_part,
            s: self.t_part + self.cost * e_part,
            threshold,
            clipped: clip.is_some(),
        }
    }

    /// Dual objective `W` from the maintained gradients, `O(n)`.
    pub fn dual_objective(&self) -> f64 {
        let (sa, sb) = (self.alpha_scale(), self.beta_scale());
        (0..self.len())
            .map(|i| {
                let (a, b) = (self.alpha[i], self.beta[i]);
                let u = a - b;
                u * self.labels[i] - 0.5 * u * self.prediction(i) - 0.5 * (a * a * sa + b * b * sb)
            })
            .sum()
    }

    /// Gradients, `T`, `W` and the primal objective computed from the
    /// kernel matrix in `O(n^2)`.
    pub fn recompute(&self, kernel: &mut KernelCache<'_>) -> Result<Recomputed> {
        let n = self.len();
        if kernel.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: kernel.len(),
            });
        }
        let u = self.coefficients();
        let mut ku = vec![0.0; n];
        for (i, out) in ku.iter_mut().enumerate() {
            let row = kernel.row(i)?;
            *out = row.iter().zip(&u).map(|(k, u)| k * u).sum();
        }
        let (sa, sb) = (self.alpha_scale(), self.beta_scale());
        let mut quad = 0.0;
        let mut linear = 0.0;
        let mut penalty = 0.0;
        let mut loss = 0.0;
        let mut grad_alpha = Vec::with_capacity(n);
        let mut grad_beta = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b, y) = (self.alpha[i], self.beta[i], self.labels[i]);
            grad_alpha.push(y - ku[i] - a * sa);
            grad_beta.push(-y + ku[i] - b * sb);
            quad += u[i] * ku[i];
            linear += u[i] * y;
            penalty += 0.5 * (a * a * sa + b * b * sb);
            loss += self.tau.loss(y - ku[i]);
        }
        let dual_objective = linear - 0.5 * quad - penalty;
        Ok(Recomputed {
            grad_alpha,
            grad_beta,
            t_part: 0.5 * quad - dual_objective,
            dual_objective,
            primal_objective: 0.5 * quad + self.cost * loss,
        })
    }

    /// Compares the incremental gradients and `T` against [`Self::recompute`].
    pub fn check_consistency(&self, kernel: &mut KernelCache<'_>, rel_tol: f64) -> Result<()> {
        let scratch = self.recompute(kernel)?;
        let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * b.abs().max(1.0);
        for i in 0..self.len() {
            if !close(self.grad_alpha[i], scratch.grad_alpha[i]) {
                return Err(Error::Inconsistent {
                    what: "alpha gradient",
                    incremental: self.grad_alpha[i],
                    recomputed: scratch.grad_alpha[i],
                });
            }
            if !close(self.grad_beta[i], scratch.grad_beta[i]) {
                return Err(Error::Inconsistent {
                    what: "beta gradient",
                    incremental: self.grad_beta[i],
                    recomputed: scratch.grad_beta[i],
                });
            }
        }
        // T is a difference of O(|W|) terms, so scale by the dual objective
        let t_scale = scratch.dual_objective.abs().max(scratch.t_part.abs()).max(1.0);
        if (self.t_part - scratch.t_part).abs() > rel_tol * t_scale {
            return Err(Error::Inconsistent {
                what: "T",
                incremental: self.t_part,
                recomputed: scratch.t_part,
            });
        }
        Ok(())
    }
}
