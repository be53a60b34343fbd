//! Q-DGT rounds over zooming codec channels.

use std::time::Instant;

use nalgebra::{DMatrix, RowDVector};
use rayon::prelude::*;

use super::{check_divergence, stopping_residual, AlgorithmConfig, Execution, SaturationPolicy};
use crate::codec::{ChannelKind, CodecChannel, SymbolRecord, Transmission};
use crate::digraph::{Digraph, WeightPair};
use crate::error::{Error, Result};
use crate::metrics::{self, ConvergenceReport, RoundRecord, Theta};
use crate::problems::Objective;
use crate::quantizer::UniformQuantizer;

/// Iterates at round `k` plus every channel's codec state.
#[derive(Debug, Clone)]
pub struct QdgtState {
    pub k: usize,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// `y(k-1)`; equal to `y(1)` at `k = 1`.
    pub y_prev: DMatrix<f64>,
    x_channels: Vec<CodecChannel>,
    y_channels: Vec<CodecChannel>,
    in_neighbors: Vec<Vec<usize>>,
}

impl QdgtState {
    /// Starts at `x(1)` with `y(1) = ∇F(x(1))`.
    pub fn new(graph: &Digraph, x1: DMatrix<f64>, objective: &dyn Objective) -> Result<Self> {
        let y1 = objective.stacked_gradient(&x1);
        Self::with_tracker(graph, x1, y1)
    }

    /// Starts at an arbitrary `(x(1), y(1))`.
    pub fn with_tracker(graph: &Digraph, x1: DMatrix<f64>, y1: DMatrix<f64>) -> Result<Self> {
        let n = graph.n();
        if x1.nrows() != n || y1.shape() != x1.shape() {
            return Err(Error::Dimension(format!(
                "initial state must be {n}×m for both x and y"
            )));
        }
        let m = x1.ncols();
        let channels = |kind| {
            (0..n)
                .map(|j| CodecChannel::new(j, kind, m, &graph.out_neighbors(j)))
                .collect::<Vec<_>>()
        };
        Ok(Self {
            k: 1,
            y_prev: y1.clone(),
            x: x1,
            y: y1,
            x_channels: channels(ChannelKind::X),
            y_channels: channels(ChannelKind::Y),
            in_neighbors: (0..n).map(|i| graph.in_neighbors(i)).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn channels(&self) -> impl Iterator<Item = &CodecChannel> {
        self.x_channels.iter().chain(&self.y_channels)
    }

    pub fn channels_in_sync(&self) -> bool {
        self.channels().all(CodecChannel::in_sync)
    }

    /// Encoder internals `p(k)` as an `n×m` matrix.
    pub fn p(&self) -> DMatrix<f64> {
        stack(&self.x_channels)
    }

    /// Encoder internals `s(k)` as an `n×m` matrix.
    pub fn s(&self) -> DMatrix<f64> {
        stack(&self.y_channels)
    }
}

fn stack(channels: &[CodecChannel]) -> DMatrix<f64> {
    let m = channels[0].encoder().internal().len();
    DMatrix::from_row_iterator(
        channels.len(),
        m,
        channels.iter().flat_map(|c| c.encoder().internal().iter().copied()),
    )
}

/// Everything observable about one round.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub k: usize,
    pub h: f64,
    pub kx: u64,
    pub ky: u64,
    /// `p(k) − x(k)`
    pub sigma_x: DMatrix<f64>,
    /// `s(k) − y(k)`
    pub sigma_y: DMatrix<f64>,
    /// `σ_x / h(k-1)`
    pub e_x: DMatrix<f64>,
    pub e_y: DMatrix<f64>,
    /// `β B σ_y(k)`
    pub epsilon_y: DMatrix<f64>,
    pub saturated_x: Vec<bool>,
    pub saturated_y: Vec<bool>,
    /// Symbols broadcast this round (one per component per channel).
    pub symbols_sent: u64,
    /// Fixed-width wire cost this round.
    pub bits: u64,
    /// Entropy-bound cost this round.
    pub entropy_bits: f64,
    /// `‖1ᵀz(k+1) − 1ᵀ∇F(x(k+1)) − 1ᵀε_y(k)‖∞`
    pub tracking_residual: f64,
    /// `‖∇F(x(k+1))‖_F`
    pub grad_norm: f64,
    pub symbols: Vec<SymbolRecord>,
}

impl StepTrace {
    pub fn saturated(&self) -> bool {
        self.saturated_x.iter().chain(&self.saturated_y).any(|&s| s)
    }
}

fn transmit_all(
    channels: &mut [CodecChannel],
    values: &DMatrix<f64>,
    h: f64,
    quantizer: UniformQuantizer,
    exec: Execution,
) -> Result<Vec<Transmission>> {
    let send = |(j, ch): (usize, &mut CodecChannel)| {
        let row: Vec<f64> = values.row(j).iter().copied().collect();
        ch.transmit(&row, h, quantizer)
    };
    match exec {
        Execution::Sequential => channels.iter_mut().enumerate().map(send).collect(),
        Execution::Parallel => channels.par_iter_mut().enumerate().map(send).collect(),
    }
}

/// One Q-DGT round: broadcast `x(k)`, `y(k)` through the codecs, then
///
/// ```text
/// x_i(k+1) = x_i(k) + α Σ_j a_ij (p_j − p_i) − η (y_i(k) − y_i(k−1))
/// y_i(k+1) = (1−β) y_i(k) + β Σ_j b_ij s_j + ∇f_i(x_i(k+1))
/// ```
///
/// where each node reads `p_j`, `s_j` from its own decoders.
pub fn qdgt_round(
    state: &mut QdgtState,
    cfg: &AlgorithmConfig,
    w: &WeightPair,
    objective: &dyn Objective,
) -> Result<StepTrace> {
    let (n, m, k) = (state.n(), state.m(), state.k);
    if w.n() != n || objective.nodes() != n || objective.dim() != m {
        return Err(Error::Dimension("state, weights and objective disagree".into()));
    }
    let h = cfg.scaling.h(k - 1);
    let (kx, ky) = cfg.schedule.levels(k);
    let qx = UniformQuantizer::new(kx)?;
    let qy = UniformQuantizer::new(ky)?;

    let tx = transmit_all(&mut state.x_channels, &state.x, h, qx, cfg.execution)?;
    let ty = transmit_all(&mut state.y_channels, &state.y, h, qy, cfg.execution)?;

    let (alpha, beta, eta) = (w.alpha, w.beta, cfg.eta);
    let st = &*state;
    let update = |i: usize| -> (RowDVector<f64>, RowDVector<f64>) {
        let own_p = st.x_channels[i].encoder().internal();
        let mut mix = vec![0.0; m];
        let mut push = vec![0.0; m];
        for &j in &st.in_neighbors[i] {
            let pj = st.x_channels[j].estimate_at(i).expect("in-neighbor decoder");
            let sj = st.y_channels[j].estimate_at(i).expect("in-neighbor decoder");
            let (a, b) = (w.a[(i, j)], w.b[(i, j)]);
            for c in 0..m {
                mix[c] += a * (pj[c] - own_p[c]);
                push[c] += b * sj[c];
            }
        }
        let xi = RowDVector::from_fn(m, |_, c| {
            st.x[(i, c)] + alpha * mix[c] - eta * (st.y[(i, c)] - st.y_prev[(i, c)])
        });
        let gi = objective.gradient(i, &xi.transpose());
        let yi = RowDVector::from_fn(m, |_, c| (1.0 - beta) * st.y[(i, c)] + beta * push[c] + gi[c]);
        (xi, yi)
    };
    let rows: Vec<_> = match cfg.execution {
        Execution::Sequential => (0..n).map(update).collect(),
        Execution::Parallel => (0..n).into_par_iter().map(update).collect(),
    };
    let x_new = DMatrix::from_rows(&rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>());
    let y_new = DMatrix::from_rows(&rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>());

    let sigma_x = state.p() - &state.x;
    let sigma_y = state.s() - &state.y;
    let epsilon_y = &w.b * &sigma_y * beta;
    let grad_new = objective.stacked_gradient(&x_new);
    let tracking_residual = metrics::tracking_residual(&y_new, &state.y, &grad_new, &epsilon_y);

    let symbols = if cfg.record_symbols {
        let mut out = Vec::with_capacity(2 * n * m);
        for (kind, tr) in [(ChannelKind::X, &tx), (ChannelKind::Y, &ty)] {
            for (sender, t) in tr.iter().enumerate() {
                for (component, &symbol) in t.symbols.iter().enumerate() {
                    out.push(SymbolRecord {
                        round: k,
                        sender,
                        channel: kind,
                        component,
                        symbol,
                        h,
                        saturated: t.saturated,
                    });
                }
            }
        }
        out
    } else {
        Vec::new()
    };

    let per_channel = (n * m) as u64;
    let trace = StepTrace {
        k,
        h,
        kx,
        ky,
        e_x: &sigma_x / h,
        e_y: &sigma_y / h,
        sigma_x,
        sigma_y,
        epsilon_y,
        saturated_x: tx.iter().map(|t| t.saturated).collect(),
        saturated_y: ty.iter().map(|t| t.saturated).collect(),
        symbols_sent: 2 * per_channel,
        bits: per_channel * u64::from(qx.bits_per_symbol() + qy.bits_per_symbol()),
        entropy_bits: per_channel as f64 * (qx.entropy_bits() + qy.entropy_bits()),
        tracking_residual,
        grad_norm: grad_new.norm(),
        symbols,
    };

    state.y_prev = std::mem::replace(&mut state.y, y_new);
    state.x = x_new;
    state.k += 1;
    Ok(trace)
}

/// Norms and Perron vectors needed to evaluate `Θ` each round.
pub struct ThetaContext<'a> {
    pub pv: &'a crate::digraph::PerronVectors,
    pub norm_a: &'a crate::constants::WeightedNorm,
    pub norm_b: &'a crate::constants::WeightedNorm,
}

pub fn run_qdgt(
    cfg: &AlgorithmConfig,
    w: &WeightPair,
    graph: &Digraph,
    objective: &dyn Objective,
    x1: DMatrix<f64>,
    theta_ctx: Option<&ThetaContext>,
) -> Result<ConvergenceReport> {
    run_qdgt_with(cfg, w, graph, objective, x1, theta_ctx, |_, _| {})
}

/// As [`run_qdgt`], calling `observe(state_after, trace)` after each round.
pub fn run_qdgt_with(
    cfg: &AlgorithmConfig,
    w: &WeightPair,
    graph: &Digraph,
    objective: &dyn Objective,
    x1: DMatrix<f64>,
    theta_ctx: Option<&ThetaContext>,
    mut observe: impl FnMut(&QdgtState, &StepTrace),
) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut state = QdgtState::new(graph, x1, objective)?;
    let mut rounds = Vec::with_capacity(cfg.horizon);
    let mut bits_cum = 0u64;
    let mut saturation_events = 0usize;
    for _ in 0..cfg.horizon {
        let trace = qdgt_round(&mut state, cfg, w, objective)?;
        let k = trace.k;
        if trace.saturated() {
            saturation_events += 1;
            if cfg.saturation == SaturationPolicy::Abort {
                return Err(Error::Saturated { round: k });
            }
        }
        observe(&state, &trace);
        bits_cum += trace.bits;
        let residual = stopping_residual(&state.x, objective);
        check_divergence(k, &state.x, residual)?;
        let theta = match theta_ctx {
            Some(c) => Some(metrics::theta(
                &state.x,
                &state.y,
                &state.y_prev,
                c.pv,
                c.norm_a,
                c.norm_b,
                objective.x_star(),
            )?),
            None => None::<Theta>,
        };
        rounds.push(RoundRecord {
            k,
            residual,
            theta,
            tracking_residual: trace.tracking_residual,
            bits_cum,
            kx: trace.kx,
            ky: trace.ky,
            saturated: trace.saturated(),
            accumulation: None,
        });
        if cfg.tolerance.is_some_and(|tol| residual <= tol) {
            break;
        }
    }
    let mut report = ConvergenceReport {
        algorithm: "qdgt".into(),
        rounds,
        fit: None,
        saturation_events,
        bits_total: bits_cum,
        wall_time: start.elapsed(),
        final_x: state.x.transpose().as_slice().to_vec(),
    };
    report.refit();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ScalingSchedule;
    use crate::constants::level_schedule_fixed;
    use crate::digraph::build_weights;
    use crate::problems::quadratic_fixture;

    const HUGE_K: u64 = 1 << 40;

    fn cfg(eta: f64, k: u64, c: f64, xi: f64, horizon: usize) -> AlgorithmConfig {
        AlgorithmConfig::new(
            eta,
            level_schedule_fixed(k, horizon).unwrap(),
            ScalingSchedule::new(c, xi).unwrap(),
            horizon,
        )
    }

    #[test]
    fn fine_quantization_matches_exact_recursion() {
        // h = 2⁻²⁰ and inputs on the grid make every σ exactly zero
        let g = Digraph::ring(3).unwrap();
        let w = build_weights(&g, 0.5, 0.5).unwrap();
        let f = quadratic_fixture(3, 1, 1).unwrap();
        let x1 = DMatrix::from_column_slice(3, 1, &[0.5, -0.25, 1.0]);
        let c = cfg(0.01, HUGE_K, 2f64.powi(-20), 0.5, 1);
        let mut s = QdgtState::new(&g, x1.clone(), &f).unwrap();
        let y1 = s.y.clone();
        let tr = qdgt_round(&mut s, &c, &w, &f).unwrap();
        assert!(tr.sigma_x.iter().all(|&v| v == 0.0));
        let expect = &w.a_alpha * &x1;
        assert!((&s.x - expect).amax() < 1e-15);
        assert_eq!(s.y_prev, y1);
    }

    #[test]
    fn single_node_is_gradient_tracking_descent() {
        let g = Digraph::new(1, []).unwrap();
        let w = build_weights(&g, 0.5, 0.5).unwrap();
        let f = quadratic_fixture(1, 2, 3).unwrap();
        let x1 = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let c = cfg(0.05, 20, 10.0, 0.9, 3);
        let mut s = QdgtState::new(&g, x1, &f).unwrap();
        for _ in 0..3 {
            let (x, y, yp) = (s.x.clone(), s.y.clone(), s.y_prev.clone());
            qdgt_round(&mut s, &c, &w, &f).unwrap();
            let expect = &x - (&y - &yp) * 0.05;
            assert!((&s.x - expect).amax() < 1e-14);
        }
    }

    #[test]
    fn two_node_exact_channels_converge() {
        let g = Digraph::complete(2).unwrap();
        let w = build_weights(&g, 0.5, 0.5).unwrap();
        let f = quadratic_fixture(2, 2, 5).unwrap();
        let x1 = DMatrix::zeros(2, 2);
        let c = cfg(0.1, HUGE_K, 1.0, 0.98, 2000);
        let rep = run_qdgt(&c, &w, &g, &f, x1, None).unwrap();
        assert!(rep.final_residual() <= 1e-8, "{}", rep.final_residual());
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let g = Digraph::default_fixture();
        let w = build_weights(&g, 0.5, 0.5).unwrap();
        let f = quadratic_fixture(10, 3, 2).unwrap();
        let x1 = DMatrix::from_fn(10, 3, |i, j| (i as f64 - 3.0 * j as f64) * 0.1);
        let mut c = cfg(0.01, 4, 5.0, 0.99, 200);
        let a = run_qdgt(&c, &w, &g, &f, x1.clone(), None).unwrap();
        c.execution = Execution::Parallel;
        let b = run_qdgt(&c, &w, &g, &f, x1, None).unwrap();
        assert_eq!(a.residuals(), b.residuals());
        assert_eq!(a.final_x, b.final_x);
    }

    #[test]
    fn abort_policy_reports_round() {
        let g = Digraph::ring(3).unwrap();
        let w = build_weights(&g, 0.5, 0.5).unwrap();
        let f = quadratic_fixture(3, 1, 1).unwrap();
        let x1 = DMatrix::from_element(3, 1, 100.0);
        let mut c = cfg(0.01, 1, 1.0, 0.9, 10);
        c.saturation = SaturationPolicy::Abort;
        assert!(matches!(
            run_qdgt(&c, &w, &g, &f, x1, None),
            Err(Error::Saturated { round: 1 })
        ));
    }

    #[test]
    fn trace_quantities_are_consistent() {
        let g = Digraph::random_strongly_connected(5, 0.3, 8).unwrap();
        let w = build_weights(&g, 0.4, 0.6).unwrap();
        let f = quadratic_fixture(5, 2, 8).unwrap();
        let x1 = DMatrix::from_fn(5, 2, |i, j| i as f64 - j as f64);
        let c = cfg(0.01, 3, 4.0, 0.98, 50);
        let mut s = QdgtState::new(&g, x1, &f).unwrap();
        for _ in 0..50 {
            let tr = qdgt_round(&mut s, &c, &w, &f).unwrap();
            assert!(s.channels_in_sync());
            // σ = h·e up to the rounding of one division
            assert!((&tr.sigma_x - &tr.e_x * tr.h).amax() <= 1e-15 * tr.h.max(tr.sigma_x.amax()));
            assert!(tr.tracking_residual <= 1e-9 * (1.0 + tr.grad_norm));
            assert_eq!(tr.symbols_sent, 20);
            assert_eq!(tr.bits, 20 * 3);
        }
    }
}
