//! Exact DGT, DGT with naively quantized mixing, and exact push-pull.

use std::time::Instant;

use nalgebra::DMatrix;

use super::{check_divergence, stopping_residual};
use crate::codec::{ChannelKind, CodecChannel, ScalingSchedule};
use crate::digraph::{Digraph, WeightPair};
use crate::error::{check_positive, Error, Result};
use crate::metrics::{ConvergenceReport, RoundRecord};
use crate::problems::Objective;
use crate::quantizer::UniformQuantizer;

/// Wire cost charged per real number on an unquantized link.
const EXACT_BITS: u64 = 64;

/// Iterates of a gradient-tracking method whose `y` update uses the
/// gradient difference `∇F(x(k+1)) − ∇F(x(k))`.
#[derive(Debug, Clone)]
pub struct DgtState {
    pub k: usize,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// `∇F(x(k))`, cached so each round evaluates gradients once.
    pub grad: DMatrix<f64>,
}

impl DgtState {
    /// `y(1) = ∇F(x(1))`.
    pub fn new(x1: DMatrix<f64>, objective: &dyn Objective) -> Result<Self> {
        if x1.nrows() != objective.nodes() || x1.ncols() != objective.dim() {
            return Err(Error::Dimension("initial x must be n×m".into()));
        }
        let grad = objective.stacked_gradient(&x1);
        Ok(Self {
            k: 1,
            y: grad.clone(),
            x: x1,
            grad,
        })
    }

    fn advance(&mut self, x_new: DMatrix<f64>, y_mixed: DMatrix<f64>, objective: &dyn Objective) {
        let grad_new = objective.stacked_gradient(&x_new);
        self.y = y_mixed + &grad_new - &self.grad;
        self.x = x_new;
        self.grad = grad_new;
        self.k += 1;
    }
}

/// `x ← Wx − ηy`, `y ← Wy + ∇F(x_new) − ∇F(x)`.
pub fn dgt_round(state: &mut DgtState, w: &DMatrix<f64>, eta: f64, objective: &dyn Objective) {
    let x_new = w * &state.x - &state.y * eta;
    let y_mixed = w * &state.y;
    state.advance(x_new, y_mixed, objective);
}

/// `x ← A_α x − ηy`, `y ← B_β y + ∇F(x_new) − ∇F(x)`.
pub fn push_pull_round(state: &mut DgtState, w: &WeightPair, eta: f64, objective: &dyn Objective) {
    let x_new = &w.a_alpha * &state.x - &state.y * eta;
    let y_mixed = &w.b_beta * &state.y;
    state.advance(x_new, y_mixed, objective);
}

/// How the naive baseline's mixing terms are communicated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NaiveLink {
    Exact,
    /// Zooming codec with a fixed level count and the given scaling.
    Quantized { levels: u64, scaling: ScalingSchedule },
}

#[derive(Debug, Clone)]
pub struct NaiveState {
    pub dgt: DgtState,
    link: NaiveLink,
    x_channels: Vec<CodecChannel>,
    y_channels: Vec<CodecChannel>,
    /// `Σ_{l ≤ k} 1ᵀσ_y(l)`
    pub accumulated: Vec<f64>,
}

impl NaiveState {
    pub fn new(graph: &Digraph, x1: DMatrix<f64>, objective: &dyn Objective, link: NaiveLink) -> Result<Self> {
        let dgt = DgtState::new(x1, objective)?;
        let (n, m) = dgt.x.shape();
        if graph.n() != n {
            return Err(Error::Dimension("graph and state disagree on n".into()));
        }
        let channels = |kind| {
            (0..n)
                .map(|j| CodecChannel::new(j, kind, m, &graph.out_neighbors(j)))
                .collect::<Vec<_>>()
        };
        Ok(Self {
            dgt,
            link,
            x_channels: channels(ChannelKind::X),
            y_channels: channels(ChannelKind::Y),
            accumulated: vec![0.0; m],
        })
    }
}

#[derive(Debug, Clone)]
pub struct NaiveTrace {
    pub k: usize,
    pub sigma_y: DMatrix<f64>,
    pub saturated: bool,
    pub bits: u64,
    /// `‖1ᵀy(k+1) − 1ᵀ∇F(x(k+1)) − Σ_l 1ᵀσ_y(l)‖∞`
    pub accumulation_gap: f64,
    /// The same quantity without the accumulated sum.
    pub conservation_gap: f64,
}

/// Encodes every row and returns the stacked internals plus a saturation flag.
fn encode_rows(
    channels: &mut [CodecChannel],
    values: &DMatrix<f64>,
    h: f64,
    q: UniformQuantizer,
) -> Result<(DMatrix<f64>, bool)> {
    let (n, m) = values.shape();
    let mut out = DMatrix::zeros(n, m);
    let mut saturated = false;
    for (j, ch) in channels.iter_mut().enumerate() {
        let row: Vec<f64> = values.row(j).iter().copied().collect();
        saturated |= ch.transmit(&row, h, q)?.saturated;
        debug_assert!(ch.in_sync());
        for (c, &v) in ch.encoder().internal().iter().enumerate() {
            out[(j, c)] = v;
        }
    }
    Ok((out, saturated))
}

/// `x ← W(x + σ_x) − ηy`, `y ← W(y + σ_y) + ∇F(x_new) − ∇F(x)`.
pub fn naive_qdgt_round(
    state: &mut NaiveState,
    w: &DMatrix<f64>,
    eta: f64,
    objective: &dyn Objective,
) -> Result<NaiveTrace> {
    let k = state.dgt.k;
    let (n, m) = state.dgt.x.shape();
    let (p, s, saturated, bits) = match state.link {
        NaiveLink::Exact => (
            state.dgt.x.clone(),
            state.dgt.y.clone(),
            false,
            2 * (n * m) as u64 * EXACT_BITS,
        ),
        NaiveLink::Quantized { levels, scaling } => {
            let q = UniformQuantizer::new(levels)?;
            let h = scaling.h(k - 1);
            let (p, sx) = encode_rows(&mut state.x_channels, &state.dgt.x, h, q)?;
            let (s, sy) = encode_rows(&mut state.y_channels, &state.dgt.y, h, q)?;
            (p, s, sx || sy, 2 * (n * m) as u64 * u64::from(q.bits_per_symbol()))
        }
    };
    let sigma_y = &s - &state.dgt.y;
    for (acc, col) in state.accumulated.iter_mut().zip(sigma_y.column_iter()) {
        *acc += col.sum();
    }
    let x_new = w * &p - &state.dgt.y * eta;
    let y_mixed = w * &s;
    state.dgt.advance(x_new, y_mixed, objective);

    let lhs = state.dgt.y.row_sum() - state.dgt.grad.row_sum();
    let conservation_gap = lhs.amax();
    let accumulation_gap = lhs
        .iter()
        .zip(&state.accumulated)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(NaiveTrace {
        k,
        sigma_y,
        saturated,
        bits,
        accumulation_gap,
        conservation_gap,
    })
}

/// Shared bookkeeping for the baseline run loops.
struct Recorder {
    start: Instant,
    rounds: Vec<RoundRecord>,
    bits: u64,
    saturation_events: usize,
}

impl Recorder {
    fn new(horizon: usize) -> Self {
        Self {
            start: Instant::now(),
            rounds: Vec::with_capacity(horizon),
            bits: 0,
            saturation_events: 0,
        }
    }

    /// Returns true when the run should stop. `levels` is 0 on exact links.
    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        k: usize,
        x: &DMatrix<f64>,
        objective: &dyn Objective,
        bits: u64,
        levels: u64,
        saturated: bool,
        tracking_residual: f64,
        accumulation: Option<(Vec<f64>, f64)>,
        tolerance: Option<f64>,
    ) -> Result<bool> {
        let residual = stopping_residual(x, objective);
        check_divergence(k, x, residual)?;
        self.bits += bits;
        self.saturation_events += usize::from(saturated);
        self.rounds.push(RoundRecord {
            k,
            residual,
            theta: None,
            tracking_residual,
            bits_cum: self.bits,
            kx: levels,
            ky: levels,
            saturated,
            accumulation,
        });
        Ok(tolerance.is_some_and(|t| residual <= t))
    }

    fn finish(self, algorithm: &str, x: &DMatrix<f64>) -> ConvergenceReport {
        let mut r = ConvergenceReport {
            algorithm: algorithm.into(),
            rounds: self.rounds,
            fit: None,
            saturation_events: self.saturation_events,
            bits_total: self.bits,
            wall_time: self.start.elapsed(),
            final_x: x.transpose().as_slice().to_vec(),
        };
        r.refit();
        r
    }
}

fn conservation(state: &DgtState) -> f64 {
    (state.y.row_sum() - state.grad.row_sum()).amax()
}

pub fn run_dgt(
    w: &DMatrix<f64>,
    eta: f64,
    objective: &dyn Objective,
    x1: DMatrix<f64>,
    horizon: usize,
    tolerance: Option<f64>,
) -> Result<ConvergenceReport> {
    check_positive("eta", eta)?;
    let mut state = DgtState::new(x1, objective)?;
    let bits = 2 * (state.x.len() as u64) * EXACT_BITS;
    let mut rec = Recorder::new(horizon);
    for _ in 0..horizon {
        let k = state.k;
        dgt_round(&mut state, w, eta, objective);
        if rec.record(k, &state.x, objective, bits, 0, false, conservation(&state), None, tolerance)? {
            break;
        }
    }
    Ok(rec.finish("dgt", &state.x))
}

pub fn run_push_pull(
    w: &WeightPair,
    eta: f64,
    objective: &dyn Objective,
    x1: DMatrix<f64>,
    horizon: usize,
    tolerance: Option<f64>,
) -> Result<ConvergenceReport> {
    check_positive("eta", eta)?;
    let mut state = DgtState::new(x1, objective)?;
    let bits = 2 * (state.x.len() as u64) * EXACT_BITS;
    let mut rec = Recorder::new(horizon);
    for _ in 0..horizon {
        let k = state.k;
        push_pull_round(&mut state, w, eta, objective);
        if rec.record(k, &state.x, objective, bits, 0, false, conservation(&state), None, tolerance)? {
            break;
        }
    }
    Ok(rec.finish("push_pull", &state.x))
}

/// The report's `tracking_residual` column carries the conservation gap
/// (without the accumulated sum) and `accumulation` carries the running sum
/// together with the gap of the accumulation identity.
#[allow(clippy::too_many_arguments)]
pub fn run_naive_qdgt(
    graph: &Digraph,
    w: &DMatrix<f64>,
    eta: f64,
    objective: &dyn Objective,
    x1: DMatrix<f64>,
    link: NaiveLink,
    horizon: usize,
    tolerance: Option<f64>,
) -> Result<ConvergenceReport> {
    check_positive("eta", eta)?;
    let mut state = NaiveState::new(graph, x1, objective, link)?;
    let mut rec = Recorder::new(horizon);
    for _ in 0..horizon {
        let tr = naive_qdgt_round(&mut state, w, eta, objective)?;
        let acc = Some((state.accumulated.clone(), tr.accumulation_gap));
        if rec.record(
            tr.k,
            &state.dgt.x,
            objective,
            tr.bits,
            match link {
                NaiveLink::Exact => 0,
                NaiveLink::Quantized { levels, .. } => levels,
            },
            tr.saturated,
            tr.conservation_gap,
            acc,
            tolerance,
        )? {
            break;
        }
    }
    Ok(rec.finish("naive_qdgt", &state.dgt.x))
}
