//! Options, outcomes and the top-level training entry point.

use std::fmt;

use crate::dual::{DualState, GapReport, CONSISTENCY_TOL};
use crate::error::{Error, Result};
use crate::kernel::{build_knn, KernelCache, KernelMode};
use crate::types::{HyperParams, TrainingSet, Wss};

/// Default cap on coordinate updates per training run.
pub const DEFAULT_MAX_ITER: u64 = 10_000_000;

/// Called once with the initial state and after every accepted update.
pub type Observer<'a> = &'a mut dyn FnMut(&DualState, &GapReport);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: u64,
    /// Recompute gradients, `T` and `W` from the kernel every this many
    /// updates and fail on drift.
    pub debug_every: Option<u64>,
    /// `None` picks [`KernelMode::auto`].
    pub kernel_mode: Option<KernelMode>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: DEFAULT_MAX_ITER,
            debug_every: None,
            kernel_mode: None,
        }
    }
}

impl SolverOptions {
    pub(crate) fn checkpoints(&self) -> Checkpoints {
        Checkpoints {
            every: self.debug_every.filter(|&k| k > 0),
            last_w: None,
        }
    }

    pub fn kernel_mode_for(&self, n: usize) -> KernelMode {
        self.kernel_mode.unwrap_or_else(|| KernelMode::auto(n))
    }
}

pub(crate) struct Checkpoints {
    every: Option<u64>,
    last_w: Option<f64>,
}

impl Checkpoints {
    pub(crate) fn visit(&mut self, iterations: u64, state: &DualState, kernel: &mut KernelCache<'_>) -> Result<()> {
        let Some(every) = self.every else {
            return Ok(());
        };
        if !iterations.is_multiple_of(every) {
            return Ok(());
        }
        state.check_consistency(kernel, CONSISTENCY_TOL)?;
        let w = state.recompute(kernel)?.dual_objective;
        if let Some(prev) = self.last_w {
            if w < prev - 1e-10 * prev.abs().max(1.0) {
                return Err(Error::Inconsistent {
                    what: "dual objective (decreased)",
                    incremental: w,
                    recomputed: prev,
                });
            }
        }
        self.last_w = Some(w);
        Ok(())
    }
}

/// How a training run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The duality gap reached `epsilon / (2 lambda)`.
    Converged,
    /// The update cap was exhausted first.
    IterationCap,
    /// No update with positive gain remained in floating point while the
    /// gap was still above threshold.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: DualState,
    pub iterations: u64,
    pub termination: Termination,
    pub gap: GapReport,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::IterationCap => "iteration-cap",
            Termination::Stalled => "stalled",
        })
    }
}

impl TrainOutcome {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

pub(crate) fn check_session(kernel: &KernelCache<'_>, params: &HyperParams, init: &DualState) -> Result<()> {
    if kernel.len() != init.len() {
        return Err(Error::DimensionMismatch {
            expected: kernel.len(),
            found: init.len(),
        });
    }
    if init.cost() != params.cost() {
        return Err(Error::InvalidParameter {
            name: "cost",
            value: init.cost(),
            reason: "initial state was built for a different C; warm start it first",
        });
    }
    if init.tau() != params.tau() {
        return Err(Error::InvalidParameter {
            name: "tau",
            value: init.tau().get(),
            reason: "initial state was built for a different expectile level",
        });
    }
    Ok(())
}

/// Trains on `data` with the solver implied by `params.wss()`.
///
/// Builds the kernel (and for WSS2 the neighbor index); `init = None`
/// starts from zero.
pub fn train(data: &TrainingSet, params: &HyperParams, init: Option<DualState>, options: &SolverOptions) -> Result<TrainOutcome> {
    let mut kernel = KernelCache::new(data.features(), params.gamma(), options.kernel_mode_for(data.n()))?;
    let init = match init {
        Some(state) => state,
        None => DualState::cold_start(data.labels(), params)?,
    };
    match params.wss() {
        Wss::Scan1D => crate::onedim::train_1d(&mut kernel, params, init, options),
        Wss::Wss1 => crate::twodim::train_2d(&mut kernel, None, params, init, options),
        Wss::Wss2 => {
            let knn = build_knn(data.features(), params.knn())?;
            crate::twodim::train_2d(&mut kernel, Some(&knn), params, init, options)
        }
    }
}
