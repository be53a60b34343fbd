//! Convergence diagnostics: the error state `Θ`, residuals, rate fits and
//! the per-round CSV trace.

use std::io::Write;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::constants::WeightedNorm;
use crate::digraph::PerronVectors;
use crate::error::{Error, Result};
use crate::linalg;

/// `(‖x̄ − x*‖₂, ‖x − 1x̄‖_A, ‖z − π_B z̄‖_B)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Theta {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl Theta {
    pub fn norm(&self) -> f64 {
        (self.t1 * self.t1 + self.t2 * self.t2 + self.t3 * self.t3).sqrt()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.t1, self.t2, self.t3]
    }
}

/// `x`, `y`, `y_prev` are `n×m` with one node per row.
pub fn theta(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    y_prev: &DMatrix<f64>,
    pv: &PerronVectors,
    norm_a: &WeightedNorm,
    norm_b: &WeightedNorm,
    x_star: Option<&DVector<f64>>,
) -> Result<Theta> {
    let x_star = x_star.ok_or(Error::MissingOptimum("theta needs x_star"))?;
    let n = x.nrows();
    let ones = linalg::ones(n);
    let x_bar = pv.pi_a.transpose() * x;
    let t1 = (x_bar.transpose() - x_star).norm();
    let t2 = norm_a.matrix(&(x - &ones * &x_bar));
    let z = y - y_prev;
    let z_bar = ones.transpose() * &z;
    let t3 = norm_b.matrix(&(&z - &pv.pi_b * z_bar));
    Ok(Theta { t1, t2, t3 })
}

/// `max_i ‖x_i − x*‖₂`.
pub fn residual(x: &DMatrix<f64>, x_star: &DVector<f64>) -> f64 {
    x.row_iter()
        .map(|r| (r.transpose() - x_star).norm())
        .fold(0.0, f64::max)
}

/// `‖1ᵀ(y_new − y_old) − 1ᵀ∇F(x_new) − 1ᵀε_y‖∞`.
pub fn tracking_residual(
    y_new: &DMatrix<f64>,
    y_old: &DMatrix<f64>,
    grad_new: &DMatrix<f64>,
    epsilon_y: &DMatrix<f64>,
) -> f64 {
    let d = y_new - y_old - grad_new - epsilon_y;
    d.row_sum().amax()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Relative level below which a residual is treated as round-off.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// Least-squares fit of `log r(k)` against `k` over `trace[burn_in..]`,
/// truncated where the trace first reaches the round-off floor
/// `RESIDUAL_FLOOR · max r`.
pub fn fit_linear_rate(trace: &[f64], burn_in: usize) -> Result<RateFit> {
    let floor = RESIDUAL_FLOOR * trace.iter().copied().fold(0.0, f64::max);
    let end = trace.iter().position(|&r| !(r > floor)).unwrap_or(trace.len());
    if end < burn_in + 20 {
        return Err(Error::OutOfRange {
            name: "trace length",
            value: end as f64,
            expected: "at least burn_in + 20 positive entries",
        });
    }
    let pts: Vec<(f64, f64)> = (burn_in..end).map(|k| (k as f64, trace[k].ln())).collect();
    let cnt = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / cnt;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / cnt;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    // a flat trace is fit exactly by slope 0
    let r_squared = if syy <= 1e-300 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit {
        rate: slope.exp(),
        r_squared,
        points: pts.len(),
    })
}

/// Default burn-in: the first tenth of the trace.
pub fn default_burn_in(len: usize) -> usize {
    len / 10
}

/// One completed round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub k: usize,
    pub residual: f64,
    pub theta: Option<Theta>,
    pub tracking_residual: f64,
    pub bits_cum: u64,
    pub kx: u64,
    pub ky: u64,
    pub saturated: bool,
    /// Naive baseline only: `(Σ_l 1ᵀσ_y(l), max-norm gap of the accumulation identity)`.
    pub accumulation: Option<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub algorithm: String,
    pub rounds: Vec<RoundRecord>,
    pub fit: Option<RateFit>,
    pub saturation_events: usize,
    pub bits_total: u64,
    #[serde(skip)]
    pub wall_time: Duration,
    pub final_x: Vec<f64>,
}

impl ConvergenceReport {
    pub fn residuals(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.residual).collect()
    }

    pub fn final_residual(&self) -> f64 {
        self.rounds.last().map_or(f64::NAN, |r| r.residual)
    }

    /// First round whose residual is at most `tol`.
    pub fn rounds_to(&self, tol: f64) -> Option<usize> {
        self.rounds.iter().find(|r| r.residual <= tol).map(|r| r.k)
    }

    pub fn max_tracking_residual(&self) -> f64 {
        self.rounds.iter().map(|r| r.tracking_residual).fold(0.0, f64::max)
    }

    /// Fits the rate after the default burn-in and stores it.
    pub fn refit(&mut self) {
        let tr = self.residuals();
        self.fit = fit_linear_rate(&tr, default_burn_in(tr.len())).ok();
    }

    /// Columns `k, residual, theta1, theta2, theta3, tracking_residual,
    /// bits_cum, Kx, Ky, saturated`, followed by `acc_sum_j` and `acc_gap`
    /// when the accumulation record is present.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let acc_dim = self
            .rounds
            .iter()
            .find_map(|r| r.accumulation.as_ref().map(|a| a.0.len()));
        let mut header: Vec<String> = [
            "k", "residual", "theta1", "theta2", "theta3", "tracking_residual", "bits_cum", "Kx", "Ky",
            "saturated",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        if let Some(d) = acc_dim {
            header.extend((1..=d).map(|j| format!("acc_sum_{j}")));
            header.push("acc_gap".into());
        }
        w.write_record(&header)?;
        let fmt = |x: f64| format!("{x:e}");
        for r in &self.rounds {
            let th = r.theta.map(|t| t.as_array());
            let mut row = vec![
                r.k.to_string(),
                fmt(r.residual),
                th.map_or(String::new(), |t| fmt(t[0])),
                th.map_or(String::new(), |t| fmt(t[1])),
                th.map_or(String::new(), |t| fmt(t[2])),
                fmt(r.tracking_residual),
                r.bits_cum.to_string(),
                r.kx.to_string(),
                r.ky.to_string(),
                u8::from(r.saturated).to_string(),
            ];
            if let Some(d) = acc_dim {
                match &r.accumulation {
                    Some((sum, gap)) => {
                        row.extend(sum.iter().map(|&s| fmt(s)));
                        row.push(fmt(*gap));
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), d + 1)),
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
