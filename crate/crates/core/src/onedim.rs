//! Exact single-coordinate updates and the 1D solver loop.

use std::ops::Range;

use crate::dual::{DualState, GapReport};
use crate::error::Result;
use crate::kernel::KernelCache;
use crate::solver::{Observer, SolverOptions, Termination, TrainOutcome};
use crate::types::{HyperParams, Tau};

/// Diagonal coefficients of the per-coordinate stationarity system
/// `b1 a - b = c`, `a - b2 b = c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BCoeffs {
    pub b1: f64,
    pub b2: f64,
}

impl BCoeffs {
    pub fn new(cost: f64, tau: Tau) -> Self {
        let pa = 2.0 * cost * tau.get();
        let pb = 2.0 * cost * (1.0 - tau.get());
        BCoeffs {
            b1: (pa + 1.0) / pa,
            b2: (pb + 1.0) / pb,
        }
    }
}

/// `b1 = (2 C tau + 1) / (2 C tau)`, `b2 = (2 C (1 - tau) + 1) / (2 C (1 - tau))`.
pub fn b_coefficients(cost: f64, tau: f64) -> Result<BCoeffs> {
    let tau = Tau::new(tau)?;
    crate::error::positive("cost", cost)?;
    Ok(BCoeffs::new(cost, tau))
}

/// A single-coordinate step and the dual objective increase it achieves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step1D {
    pub index: usize,
    pub delta: f64,
    pub eta: f64,
    pub gain: f64,
}

/// Right-hand side `c_i = y_i - (K (u - u_i e_i))_i`, from the gradient.
#[inline]
pub fn c_value(state: &DualState, i: usize) -> f64 {
    state.grad_alpha()[i] + state.coeffs().b1 * state.alpha()[i] - state.beta()[i]
}

/// Maximizer `(alpha+, beta+)` of the coordinate subproblem over the
/// nonnegative quadrant. The unconstrained stationary point is infeasible
/// for every `c != 0`, so the optimum sits on one of the two axes.
#[inline]
pub fn solve_1d(c: f64, coeffs: BCoeffs) -> (f64, f64) {
    ((c / coeffs.b1).max(0.0), (-c / coeffs.b2).max(0.0))
}

/// `W(a + delta e_i, b + eta e_i) - W(a, b)`.
#[inline]
pub fn gain_1d(delta: f64, eta: f64, grad_a: f64, grad_b: f64, coeffs: BCoeffs) -> f64 {
    delta * (grad_a - 0.5 * coeffs.b1 * delta) + eta * (grad_b - 0.5 * coeffs.b2 * eta) + delta * eta
}

/// Optimal step at coordinate `i`.
#[inline]
pub fn step_at(state: &DualState, i: usize) -> Step1D {
    let coeffs = state.coeffs();
    let (a_new, b_new) = solve_1d(c_value(state, i), coeffs);
    let delta = a_new - state.alpha()[i];
    let eta = b_new - state.beta()[i];
    Step1D {
        index: i,
        delta,
        eta,
        gain: gain_1d(delta, eta, state.grad_alpha()[i], state.grad_beta()[i], coeffs),
    }
}

/// Max-gain coordinate within `range`; ties go to the lowest index.
pub fn best_direction_in(state: &DualState, range: Range<usize>) -> Option<Step1D> {
    let mut best: Option<Step1D> = None;
    for i in range {
        let step = step_at(state, i);
        if best.is_none_or(|b| step.gain > b.gain) {
            best = Some(step);
        }
    }
    best
}

/// Max-gain coordinate over all samples.
pub fn best_direction_1d(state: &DualState) -> Step1D {
    best_direction_in(state, 0..state.len()).expect("dual state is never empty")
}

/// Greedy single-coordinate ascent until the duality gap drops below
/// `epsilon / (2 lambda)`.
pub fn train_1d(kernel: &mut KernelCache<'_>, params: &HyperParams, init: DualState, options: &SolverOptions) -> Result<TrainOutcome> {
    train_1d_observed(kernel, params, init, options, &mut |_, _| {})
}

pub fn train_1d_observed(
    kernel: &mut KernelCache<'_>,
    params: &HyperParams,
    init: DualState,
    options: &SolverOptions,
    observer: Observer<'_>,
) -> Result<TrainOutcome> {
    crate::solver::check_session(kernel, params, &init)?;
    let mut state = init;
    let clip = params.gap_clip();
    let mut gap = state.duality_gap(clip, params.epsilon());
    observer(&state, &gap);
    let mut checkpoints = options.checkpoints();
    let mut iterations = 0u64;
    let termination = loop {
        if gap.converged() {
            break Termination::Converged;
        }
        if iterations >= options.max_iter {
            break Termination::IterationCap;
        }
        let step = best_direction_1d(&state);
        if step.gain.is_nan() || step.gain <= 0.0 {
            break Termination::Stalled;
        }
        state.apply_update_1d(kernel, step.index, step.delta, step.eta)?;
        iterations += 1;
        gap = state.duality_gap(clip, params.epsilon());
        checkpoints.visit(iterations, &state, kernel)?;
        observer(&state, &gap);
    };
    Ok(finish(state, gap, iterations, termination))
}

fn finish(state: DualState, gap: GapReport, iterations: u64, termination: Termination) -> TrainOutcome {
    if termination != Termination::Converged {
        log::warn!(
            "1D solver stopped without convergence ({termination:?}) after {iterations} iterations, gap {} > {}",
            gap.s,
            gap.threshold
        );
    }
    TrainOutcome {
        state,
        iterations,
        termination,
        gap,
    }
}
