//! Quantization-level schedules `K_x(k)`, `K_y(k)` for rounds `k ≥ 1`.

use serde::{Deserialize, Serialize};

use super::ConstantsBundle;
use crate::error::{check_positive, Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Theorem1Exact,
    RemarkRecursive,
    Fixed(u64),
}

/// Inputs shared by both schedule rules.
#[derive(Debug, Clone, Copy)]
pub struct ScheduleParams<'a> {
    pub consts: &'a ConstantsBundle,
    pub c: f64,
    pub xi: f64,
    /// `‖Θ(1)‖₂`
    pub c_theta: f64,
    /// `max_i ‖x_i(1)‖∞`
    pub x1_inf: f64,
    /// `max_i ‖y_i(1)‖∞`
    pub y1_inf: f64,
    /// Number of rounds covered; index 0 of the output is round 1.
    pub horizon: usize,
}

impl ScheduleParams<'_> {
    fn validate(&self) -> Result<()> {
        check_positive("C", self.c)?;
        check_positive("C_Theta", self.c_theta)?;
        let rho_hat = self.consts.rho_hat();
        if !(self.xi > rho_hat && self.xi < 1.0) {
            return Err(Error::OutOfRange {
                name: "xi",
                value: self.xi,
                expected: "in (rho_hat, 1)",
            });
        }
        if self.horizon == 0 {
            return Err(Error::OutOfRange {
                name: "horizon",
                value: 0.0,
                expected: "at least 1",
            });
        }
        Ok(())
    }

    fn ratio(&self) -> f64 {
        self.consts.rho_hat() / self.xi
    }

    /// `φ` with `ς̄(l) = ξ^(l-2) φ`.
    pub fn phi(&self) -> [f64; 3] {
        let b = self.consts;
        let net = &b.network;
        let e = &net.equivalence;
        let n = b.problem.n as f64;
        let m = b.problem.m as f64;
        let (eta, beta, l, c, xi) = (b.eta, net.beta, b.problem.l, self.c, self.xi);
        let smn = (m * n).sqrt();
        let nsm_beta_c = n * m.sqrt() * beta * c;
        [
            0.5 * b.eta_tilde * nsm_beta_c,
            0.5 * eta * net.kappa1 * net.kappa2 * nsm_beta_c
                + 0.5 * smn * e.delta_a2 * net.kappa4 * c * xi,
            0.5 * e.delta_b2 * net.kappa3 * nsm_beta_c * (1.0 + xi + eta * l * net.kappa5)
                + 0.5 * e.delta_a2 * e.delta_b2 * net.kappa3 * net.kappa4 * l * smn * c,
        ]
    }

    pub fn phi_norm(&self) -> f64 {
        let p = self.phi();
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }

    /// `ς̂(l) = ‖ς̄(l)‖₂`.
    pub fn varsigma_hat(&self, l: usize) -> f64 {
        self.xi.powi(l as i32 - 2) * self.phi_norm()
    }

    fn kx1(&self) -> f64 {
        self.x1_inf / self.c - 0.5
    }

    fn ky1(&self) -> f64 {
        self.y1_inf / self.c - 0.5
    }

    fn kx2(&self) -> f64 {
        let b = self.consts;
        let n = b.problem.n as f64;
        SQRT3 * b.kappa7 * self.c_theta / (self.c * self.xi)
            + (2.0 * b.network.alpha * n + 1.0) / (2.0 * self.xi)
            - 0.5
    }

    /// Constant part of the `K_x(k)` bound for `k ≥ 3`.
    fn sx(&self) -> f64 {
        let b = self.consts;
        let n = b.problem.n as f64;
        let xi = self.xi;
        (2.0 * b.network.alpha * n + 1.0) / (2.0 * xi) + n * b.eta * b.network.beta / (2.0 * xi * xi)
            - 0.5
    }

    /// Constant part of the `K_y(k)` bound for `k ≥ 2`, with `√m`.
    fn sy(&self) -> f64 {
        let b = self.consts;
        let n = b.problem.n as f64;
        let m = b.problem.m as f64;
        (n * m.sqrt() * b.network.beta + 1.0) / (2.0 * self.xi) - 0.5
    }

    fn ax(&self) -> f64 {
        let b = self.consts;
        SQRT3 * b.kappa7 * b.pi.pi * self.c_theta / (self.c * self.xi)
    }

    fn ay(&self) -> f64 {
        let b = self.consts;
        SQRT3 * b.kappa8 * b.pi.pi * self.c_theta / self.c
    }

    /// `‖φ‖ / (C_Θ ξ²)`: coefficient of the forcing sums inside `Υ`.
    fn forcing(&self) -> f64 {
        self.phi_norm() / (self.c_theta * self.xi * self.xi)
    }

    /// `Υ₁(k)` for `k ≥ 3`.
    pub fn upsilon1(&self, k: usize) -> f64 {
        assert!(k >= 3);
        self.upsilon(k - 2, k - 3)
    }

    /// `Υ₂(k)` for `k ≥ 2`.
    pub fn upsilon2(&self, k: usize) -> f64 {
        assert!(k >= 2);
        self.upsilon(k - 1, k - 2)
    }

    // r^p + ‖φ‖/(C_Θ ξ²) (Σ_{j=1..s} r^j + 1/Π)
    fn upsilon(&self, p: usize, s: usize) -> f64 {
        let r = self.ratio();
        let geom = if s == 0 { 0.0 } else { r * (1.0 - r.powi(s as i32)) / (1.0 - r) };
        r.powi(p as i32) + self.forcing() * (geom + 1.0 / self.consts.pi.pi)
    }

    /// Recursion offsets `(v₁, v₂)`.
    pub fn offsets(&self) -> (f64, f64) {
        let b = self.consts;
        let (xi, rho_hat, pi) = (self.xi, b.rho_hat(), b.pi.pi);
        let r = self.ratio();
        let common = (xi - rho_hat + pi * rho_hat) * self.phi_norm() / self.c;
        let v1 = (1.0 - r) * self.sx() + SQRT3 * b.kappa7 * common / xi.powi(4);
        let v2 = (1.0 - r) * self.sy() + SQRT3 * b.kappa8 * common / xi.powi(3);
        (v1, v2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSchedule {
    pub mode: ScheduleMode,
    /// `kx[k - 1] = K_x(k)`
    pub kx: Vec<u64>,
    pub ky: Vec<u64>,
    pub v1: f64,
    pub v2: f64,
}

impl LevelSchedule {
    pub fn len(&self) -> usize {
        self.kx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kx.is_empty()
    }

    /// Levels for round `k ≥ 1`; past the horizon the last value is held.
    pub fn levels(&self, k: usize) -> (u64, u64) {
        let i = k.saturating_sub(1).min(self.kx.len() - 1);
        (self.kx[i], self.ky[i])
    }

    pub fn max_levels(&self) -> (u64, u64) {
        (
            self.kx.iter().copied().max().unwrap_or(1),
            self.ky.iter().copied().max().unwrap_or(1),
        )
    }
}

fn level(bound: f64) -> u64 {
    if bound.is_finite() {
        bound.ceil().max(1.0) as u64
    } else {
        u64::MAX
    }
}

pub fn level_schedule_theorem1(p: &ScheduleParams) -> Result<LevelSchedule> {
    p.validate()?;
    let (v1, v2) = p.offsets();
    let (ax, ay, sx, sy) = (p.ax(), p.ay(), p.sx(), p.sy());
    let mut kx = Vec::with_capacity(p.horizon);
    let mut ky = Vec::with_capacity(p.horizon);
    for k in 1..=p.horizon {
        kx.push(level(match k {
            1 => p.kx1(),
            2 => p.kx2(),
            _ => ax * p.upsilon1(k) + sx,
        }));
        ky.push(level(match k {
            1 => p.ky1(),
            _ => ay * p.upsilon2(k) + sy,
        }));
    }
    Ok(LevelSchedule {
        mode: ScheduleMode::Theorem1Exact,
        kx,
        ky,
        v1,
        v2,
    })
}

pub fn level_schedule_remark(p: &ScheduleParams) -> Result<LevelSchedule> {
    p.validate()?;
    let (v1, v2) = p.offsets();
    let r = p.ratio();
    let mut kx = Vec::with_capacity(p.horizon);
    let mut ky = Vec::with_capacity(p.horizon);
    for k in 1..=p.horizon {
        let x = match k {
            1 => level(p.kx1()),
            2 => level(p.kx2()),
            _ => level(r * kx[k - 2] as f64 + v1),
        };
        let y = match k {
            1 => level(p.ky1()),
            _ => level(r * ky[k - 2] as f64 + v2),
        };
        kx.push(x);
        ky.push(y);
    }
    Ok(LevelSchedule {
        mode: ScheduleMode::RemarkRecursive,
        kx,
        ky,
        v1,
        v2,
    })
}

pub fn level_schedule_fixed(levels: u64, horizon: usize) -> Result<LevelSchedule> {
    if levels == 0 || horizon == 0 {
        return Err(Error::OutOfRange {
            name: "K",
            value: levels as f64,
            expected: "K ≥ 1 over a nonempty horizon",
        });
    }
    Ok(LevelSchedule {
        mode: ScheduleMode::Fixed(levels),
        kx: vec![levels; horizon],
        ky: vec![levels; horizon],
        v1: f64::NAN,
        v2: f64::NAN,
    })
}

/// Uniform-in-`k` bounds on `Ω_x`, `Ω_y` and the one-bit lower bound on `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem3Check {
    /// `Ξ` built from `ℋ`.
    pub xi_param: f64,
    pub h_param: f64,
    /// `‖φ‖`, the β-dependent forcing level.
    pub varsigma_tilde: f64,
    pub omega_x: f64,
    /// `Ω_y` bound with the `(nβ + 1)` offset.
    pub omega_y: f64,
    /// `Ω_y` bound with the `(n√m β + 1)` offset used by the schedules.
    pub omega_y_sqrt_m: f64,
    pub c_lower_bound: f64,
}

impl Theorem3Check {
    /// `K_x = K_y = 1` is implied for every `k ≥ 3` (x) and `k ≥ 2` (y).
    pub fn omegas_within_one(&self) -> bool {
        self.omega_x <= 1.0 && self.omega_y <= 1.0 && self.omega_y_sqrt_m <= 1.0
    }
}

/// Evaluates the one-bit bounds. The `Ω` bounds use the larger of `‖φ‖`
/// and `ℋ` as the forcing level, so they dominate both displayed forms.
pub fn theorem3_omega(p: &ScheduleParams) -> Result<Theorem3Check> {
    p.validate()?;
    let b = p.consts;
    let net = &b.network;
    let e = &net.equivalence;
    let n = b.problem.n as f64;
    let m = b.problem.m as f64;
    let (xi, rho_hat, pi, c, ct) = (p.xi, b.rho_hat(), b.pi.pi, p.c, p.c_theta);

    let h = (m * n).sqrt() * e.delta_a2 * net.kappa4 * c / (2.0 * xi * xi)
        * (xi * xi + (e.delta_b2 * net.kappa3 * b.problem.l).powi(2)).sqrt();
    let upsilon_bound = |f: f64| 1.0 + rho_hat * f / (ct * xi * xi * (xi - rho_hat)) + f / (pi * ct * xi * xi);
    let xi_param = upsilon_bound(h);
    let st = p.phi_norm();
    let u = upsilon_bound(st.max(h));

    let omega_x = p.ax() * u + p.sx();
    let omega_y = p.ay() * u + (n * net.beta + 1.0) / (2.0 * xi) - 0.5;
    let omega_y_sqrt_m = p.ay() * u + p.sy();
    let c_lower_bound = [
        2.0 / 3.0 * p.x1_inf,
        2.0 / 3.0 * p.y1_inf,
        SQRT3 * b.kappa7 * ct / xi,
        SQRT3 * b.kappa7 * pi * ct / xi,
        SQRT3 * b.kappa8 * pi * ct,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    debug_assert!(m >= 1.0);
    Ok(Theorem3Check {
        xi_param,
        h_param: h,
        varsigma_tilde: st,
        omega_x,
        omega_y,
        omega_y_sqrt_m,
        c_lower_bound,
    })
}
