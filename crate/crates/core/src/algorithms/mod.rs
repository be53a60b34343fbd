//! Q-DGT and the three comparison baselines.

mod baselines;
mod qdgt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use baselines::{
    dgt_round, naive_qdgt_round, push_pull_round, run_dgt, run_naive_qdgt, run_push_pull, DgtState,
    NaiveLink, NaiveState, NaiveTrace,
};
pub use qdgt::{qdgt_round, run_qdgt, run_qdgt_with, QdgtState, StepTrace, ThetaContext};

use crate::codec::ScalingSchedule;
use crate::constants::LevelSchedule;
use crate::error::{check_positive, Error, Result};

/// Residual above which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaturationPolicy {
    #[default]
    Record,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

/// Run parameters for Q-DGT. The smoothing factors α, β live in the
/// `WeightPair` the run is given.
#[derive(Debug, Clone)]
pub struct AlgorithmConfig {
    pub eta: f64,
    pub schedule: LevelSchedule,
    pub scaling: ScalingSchedule,
    pub horizon: usize,
    /// Stop once the residual is at most this value.
    pub tolerance: Option<f64>,
    pub saturation: SaturationPolicy,
    pub execution: Execution,
    pub record_symbols: bool,
}

impl AlgorithmConfig {
    pub fn new(eta: f64, schedule: LevelSchedule, scaling: ScalingSchedule, horizon: usize) -> Self {
        Self {
            eta,
            schedule,
            scaling,
            horizon,
            tolerance: None,
            saturation: SaturationPolicy::Record,
            execution: Execution::Sequential,
            record_symbols: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("eta", self.eta)?;
        if self.horizon == 0 || self.schedule.is_empty() {
            return Err(Error::Config("horizon and schedule must be nonempty".into()));
        }
        Ok(())
    }
}

/// Stops a run when the iterate blows up.
pub(crate) fn check_divergence(round: usize, x: &DMatrix<f64>, residual: f64) -> Result<()> {
    if !residual.is_finite() || residual > DIVERGENCE_THRESHOLD || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { round, residual });
    }
    Ok(())
}

/// `max_i ‖x_i − x*‖₂`, or consensus gap plus gradient norm if `x*` is unknown.
pub(crate) fn stopping_residual(
    x: &DMatrix<f64>,
    objective: &dyn crate::problems::Objective,
) -> f64 {
    match objective.x_star() {
        Some(xs) => crate::metrics::residual(x, xs),
        None => {
            let n = x.nrows() as f64;
            let mean = x.row_sum() / n;
            let gap = x
                .row_iter()
                .map(|r| (r - &mean).norm())
                .fold(0.0, f64::max);
            gap + objective.total_gradient(&mean.transpose()).norm()
        }
    }
}
