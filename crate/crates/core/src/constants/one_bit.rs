//! Grid search for parameters under which one-level quantization
//! (`K_x = K_y = 1`, one trit per component) is certified.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{
    level_schedule_remark, theorem3_omega, AnalysisOptions, ConstantsBundle, NetworkConstants,
    ProblemScalars, ScheduleParams, Theorem3Check,
};
use crate::digraph::{build_weights, perron_vectors, Digraph};
use crate::error::Result;
use crate::metrics;
use crate::problems::Objective;

#[derive(Debug, Clone)]
pub struct OneBitSearch {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Step sizes as fractions of `eta_max`.
    pub eta_fractions: Vec<f64>,
    /// `ξ = ρ̂ + f (1 − ρ̂)` for each fraction `f`.
    pub xi_fractions: Vec<f64>,
    /// `C` as multiples (> 1) of the one-level lower bound on `C`.
    pub c_multiples: Vec<f64>,
    /// Rounds over which the remark schedule must be identically one.
    pub horizon: usize,
    pub options: AnalysisOptions,
}

impl Default for OneBitSearch {
    fn default() -> Self {
        let geom = |hi: f64, lo: f64, steps: usize| -> Vec<f64> {
            (0..steps)
                .map(|i| hi * (lo / hi).powf(i as f64 / (steps - 1) as f64))
                .collect()
        };
        Self {
            alphas: geom(0.5, 1e-3, 12),
            betas: geom(0.5, 1e-6, 16),
            eta_fractions: vec![1.0, 0.5],
            xi_fractions: vec![0.5, 0.9, 0.99],
            c_multiples: vec![1.01, 1.5, 3.0, 10.0],
            horizon: 5000,
            options: AnalysisOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OneBitParams {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub c: f64,
    pub xi: f64,
    pub c_theta: f64,
    pub check: Theorem3Check,
}

/// The search's best near miss is kept for diagnostics.
#[derive(Debug, Clone, Serialize)]
pub enum OneBitOutcome {
    Feasible(OneBitParams),
    Infeasible {
        candidates: usize,
        /// Smallest `max(Ω_x, Ω_y, Ω_y√m)` seen, with its parameters.
        best: Option<(f64, OneBitParams)>,
    },
}

impl OneBitOutcome {
    pub fn feasible(&self) -> Option<&OneBitParams> {
        match self {
            Self::Feasible(p) => Some(p),
            Self::Infeasible { .. } => None,
        }
    }
}

/// `‖Θ(1)‖₂` with `z(1) = 0`.
fn c_theta(x1: &DMatrix<f64>, bundle: &ConstantsBundle, pv: &crate::digraph::PerronVectors, objective: &dyn Objective) -> Result<f64> {
    let zero = DMatrix::zeros(x1.nrows(), x1.ncols());
    let th = metrics::theta(
        x1,
        &zero,
        &zero,
        pv,
        &bundle.network.norm_a,
        &bundle.network.norm_b,
        objective.x_star(),
    )?;
    Ok(th.norm())
}

/// Walks the grid in order and returns the first point where the `Ω`
/// bounds are at most one and the remark schedule is one for every round
/// up to the horizon. Grid points whose constants cannot be formed (for
/// example `ρ(G) ≥ 1`) are skipped.
pub fn one_bit_params(
    graph: &Digraph,
    objective: &dyn Objective,
    x1: &DMatrix<f64>,
    search: &OneBitSearch,
) -> Result<OneBitOutcome> {
    let problem = ProblemScalars {
        mu: objective.mu(),
        l: objective.l(),
        n: objective.nodes(),
        m: objective.dim(),
    };
    problem.validate()?;
    let y1 = objective.stacked_gradient(x1);
    let x1_inf = x1.amax();
    let y1_inf = y1.amax();
    let mut candidates = 0usize;
    let mut best: Option<(f64, OneBitParams)> = None;

    for &alpha in &search.alphas {
        for &beta in &search.betas {
            let Ok(w) = build_weights(graph, alpha, beta) else { continue };
            let pv = perron_vectors(&w)?;
            let Ok(net) = NetworkConstants::compute(&w, &pv, &search.options) else { continue };
            let eta_max = super::max_step_size(&problem, &net).eta_max;
            for &frac in &search.eta_fractions {
                let eta = frac * eta_max;
                let Ok(bundle) = ConstantsBundle::from_network(net.clone(), problem, Some(eta), &search.options)
                else {
                    continue;
                };
                let ct = c_theta(x1, &bundle, &pv, objective)?;
                let rho_hat = bundle.rho_hat();
                for &xf in &search.xi_fractions {
                    let xi = rho_hat + xf * (1.0 - rho_hat);
                    if !(xi > rho_hat && xi < 1.0) {
                        continue;
                    }
                    let mut params = ScheduleParams {
                        consts: &bundle,
                        c: 1.0,
                        xi,
                        c_theta: ct,
                        x1_inf,
                        y1_inf,
                        horizon: search.horizon,
                    };
                    let lower = theorem3_omega(&params)?.c_lower_bound;
                    if !(lower.is_finite() && lower > 0.0) {
                        continue;
                    }
                    for &mult in &search.c_multiples {
                        candidates += 1;
                        params.c = mult * lower;
                        let check = theorem3_omega(&params)?;
                        let found = OneBitParams {
                            alpha,
                            beta,
                            eta,
                            c: params.c,
                            xi,
                            c_theta: ct,
                            check,
                        };
                        let worst = check.omega_x.max(check.omega_y).max(check.omega_y_sqrt_m);
                        if check.omegas_within_one() {
                            let s = level_schedule_remark(&params)?;
                            if s.max_levels() == (1, 1) {
                                return Ok(OneBitOutcome::Feasible(found));
                            }
                        }
                        if best.as_ref().is_none_or(|b| worst < b.0) {
                            best = Some((worst, found));
                        }
                    }
                }
            }
        }
    }
    Ok(OneBitOutcome::Infeasible { candidates, best })
}
