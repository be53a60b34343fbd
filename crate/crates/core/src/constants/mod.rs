//! Numerical realization of the analysis constants: contraction norms,
//! σ_A/σ_B, δ- and κ-constants, the 3×3 comparison matrix `G`, the
//! step-size bound, `Π`/`ρ̂`, and the quantization-level schedules.

mod norm;
mod one_bit;
mod schedule;

use std::io::Write;

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

pub use norm::{contraction_norm, equivalence_constants, Equivalence, NormMethod, WeightedNorm};
pub use one_bit::{one_bit_params, OneBitOutcome, OneBitParams, OneBitSearch};
pub use schedule::{
    level_schedule_fixed, level_schedule_remark, level_schedule_theorem1, theorem3_omega,
    LevelSchedule, ScheduleMode, ScheduleParams, Theorem3Check,
};

use crate::digraph::{PerronVectors, WeightPair};
use crate::error::{check_positive, Error, Result};
use crate::linalg;

pub const DEFAULT_NORM_MARGIN: f64 = 0.02;
pub const PI_SAFETY: f64 = 1.1;
pub const PI_MIN_HORIZON: usize = 200;
const PI_MAX_HORIZON: usize = 200_000;

/// Problem-side scalars the analysis needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemScalars {
    pub mu: f64,
    pub l: f64,
    pub n: usize,
    pub m: usize,
}

impl ProblemScalars {
    pub fn validate(&self) -> Result<()> {
        check_positive("mu", self.mu)?;
        check_positive("L", self.l)?;
        if self.mu > self.l {
            return Err(Error::OutOfRange {
                name: "mu",
                value: self.mu,
                expected: "at most L",
            });
        }
        if self.n == 0 || self.m == 0 {
            return Err(Error::Dimension("n and m must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub norm_margin: f64,
    pub norm_method: NormMethod,
    /// Margin ϖ in `ρ̂ = ρ(G) + ϖ`; `None` means `0.01 (1 − ρ(G))`.
    pub varpi: Option<f64>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            norm_margin: DEFAULT_NORM_MARGIN,
            norm_method: NormMethod::default(),
            varpi: None,
        }
    }
}

/// Constants that depend only on the weights (not on η or the objective).
#[derive(Debug, Clone)]
pub struct NetworkConstants {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub norm_a: WeightedNorm,
    pub norm_b: WeightedNorm,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub equivalence: Equivalence,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    pub kappa5: f64,
    pub kappa6: f64,
    /// `π_Aᵀ π_B`
    pub pi_inner: f64,
}

impl NetworkConstants {
    pub fn compute(w: &WeightPair, pv: &PerronVectors, opts: &AnalysisOptions) -> Result<Self> {
        let n = w.n();
        let ones = linalg::ones(n);
        let ma = &w.a_alpha - &ones * pv.pi_a.transpose();
        let mb = &w.b_beta - &pv.pi_b * ones.transpose();
        let (norm_a, sigma_a) = contraction_norm(&ma, opts.norm_margin, opts.norm_method)?;
        let (norm_b, sigma_b) = contraction_norm(&mb, opts.norm_margin, opts.norm_method)?;
        // σ = 0 happens for n = 1; the analysis only needs σ < 1
        if sigma_a >= 1.0 || sigma_b >= 1.0 {
            return Err(Error::NotContractive(sigma_a.max(sigma_b)));
        }
        let equivalence = equivalence_constants(&norm_a, &norm_b)?;
        let k = kappas(w, pv, &norm_a, &norm_b);
        Ok(Self {
            n,
            alpha: w.alpha,
            beta: w.beta,
            sigma_a,
            sigma_b,
            equivalence,
            kappa1: k[0],
            kappa2: k[1],
            kappa3: k[2],
            kappa4: k[3],
            kappa5: k[4],
            kappa6: k[5],
            pi_inner: pv.inner(),
            norm_a,
            norm_b,
        })
    }
}

/// κ₁..κ₆, the weight-dependent κ's.
pub fn kappas(
    w: &WeightPair,
    pv: &PerronVectors,
    norm_a: &WeightedNorm,
    norm_b: &WeightedNorm,
) -> [f64; 6] {
    let n = w.n();
    let ones = linalg::ones(n);
    let id = DMatrix::<f64>::identity(n, n);
    [
        norm_a.induced(&(&id - &ones * pv.pi_a.transpose())),
        norm_a.vector(&pv.pi_b),
        norm_b.induced(&(&id - &pv.pi_b * ones.transpose())),
        linalg::norm2(&(&w.a_alpha - &id)),
        pv.pi_b.norm(),
        pv.pi_a.norm(),
    ]
}

pub fn kappa7(n: usize, alpha: f64, eta: f64, l: f64) -> f64 {
    let nf = n as f64;
    let a = std::f64::consts::SQRT_2 * (nf + 0.5) * alpha + eta * nf.sqrt() * l;
    a.max(eta).max(eta * nf * l)
}

pub fn kappa8(n: usize, l: f64) -> f64 {
    let nf = n as f64;
    1f64.max(nf.sqrt() * l).max(nf * l)
}

/// The comparison matrix `G` with `Θ(k+1) ≤ G Θ(k) + ς(k)`.
pub fn build_g(p: &ProblemScalars, eta: f64, c: &NetworkConstants) -> Result<Matrix3<f64>> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::OutOfRange {
            name: "eta",
            value: eta,
            expected: "nonnegative and finite",
        });
    }
    let eta_tilde = eta * c.pi_inner;
    let bound = 1.0 / (p.mu + p.l);
    if eta_tilde > bound * (1.0 + 1e-12) {
        return Err(Error::StepSize { eta_tilde, bound });
    }
    let n = p.n as f64;
    let sn = n.sqrt();
    let l = p.l;
    let e = &c.equivalence;
    Ok(Matrix3::new(
        1.0 - eta_tilde * p.mu,
        sn * eta_tilde,
        eta * c.kappa6,
        n * eta * l * c.kappa1 * c.kappa2,
        c.sigma_a + sn * eta * l * c.kappa1 * c.kappa2,
        eta * e.delta_ab * c.kappa1,
        e.delta_b2 * n * eta * l * l * c.kappa3 * c.kappa5,
        e.delta_b2 * c.kappa3 * (l * c.kappa4 + sn * eta * l * l * c.kappa5),
        c.sigma_b + e.delta_b2 * eta * l * c.kappa3,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepBoundTerm {
    Smoothness,
    ConsensusA,
    ConsensusB,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSizeBound {
    pub eta_max: f64,
    pub terms: [f64; 4],
    pub binding: StepBoundTerm,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

pub fn max_step_size(p: &ProblemScalars, c: &NetworkConstants) -> StepSizeBound {
    let n = p.n as f64;
    let sn = n.sqrt();
    let (mu, l) = (p.mu, p.l);
    let pp = c.pi_inner;
    let e = &c.equivalence;
    let (k1, k2, k3, k4, k5, k6) = (c.kappa1, c.kappa2, c.kappa3, c.kappa4, c.kappa5, c.kappa6);
    let (sa, sb) = (c.sigma_a, c.sigma_b);

    let gamma1 = e.delta_ab * e.delta_b2 * sn * l * l * pp * k1 * k3 * k5 * (n + mu);
    let gamma2 = e.delta_b2 * n * l * l * k1 * k2 * k3 * k4 * k6
        + e.delta_b2 * n * l * l * k3 * k5 * k6 * (1.0 - sa)
        + n.powf(1.5) * l * pp * k1 * k2 * (1.0 - sb)
        + e.delta_ab * e.delta_b2 * l * pp * mu * k1 * k3 * k4;
    let gamma3 = 0.25 * pp * mu * (1.0 - sa) * (1.0 - sb);

    let terms = [
        1.0 / ((mu + l) * pp),
        (1.0 - sa) / (2.0 * sn * k1 * k2 * l),
        (1.0 - sb) / (2.0 * e.delta_b2 * k3 * l),
        2.0 * gamma3 / (gamma2 + (gamma2 * gamma2 + 4.0 * gamma1 * gamma3).sqrt()),
    ];
    let kinds = [
        StepBoundTerm::Smoothness,
        StepBoundTerm::ConsensusA,
        StepBoundTerm::ConsensusB,
        StepBoundTerm::Quadratic,
    ];
    let (idx, eta_max) = terms
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, t)| if t < acc.1 { (i, t) } else { acc });
    StepSizeBound {
        eta_max,
        terms,
        binding: kinds[idx],
        gamma1,
        gamma2,
        gamma3,
    }
}

/// `ρ(G)` for a 3×3 matrix.
pub fn spectral_radius3(g: &Matrix3<f64>) -> f64 {
    g.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PiBound {
    pub pi: f64,
    pub rho: f64,
    pub rho_hat: f64,
    /// Largest power checked.
    pub horizon: usize,
    /// `cond(T)` for a norm with `‖G‖_T ≤ ρ̂`; bounds `‖Gᵏ‖₂/ρ̂ᵏ` for every `k`.
    pub pi_norm: f64,
}

/// `Π` with `‖Gᵏ‖₂ ≤ Π ρ̂ᵏ`, certified by direct powers.
///
/// With `M = G/ρ̂`, once `‖Mᵏ‖₂ ≤ 1` every later power satisfies
/// `‖Mʲ‖₂ ≤ ‖Mʲ⁻ᵏ‖₂`, so the running maximum over `0..=k` bounds all `k`.
/// If that never happens before the cap the norm-based bound is used.
pub fn pi_bound(g: &Matrix3<f64>, margin: f64) -> Result<PiBound> {
    let rho = spectral_radius3(g);
    if rho >= 1.0 {
        return Err(Error::NotContractive(rho));
    }
    if !(margin > 0.0 && margin < 1.0 - rho) {
        return Err(Error::OutOfRange {
            name: "varpi",
            value: margin,
            expected: "in (0, 1 - rho(G))",
        });
    }
    let rho_hat = rho + margin;
    let gd = DMatrix::from_column_slice(3, 3, g.as_slice());
    let pi_norm = contraction_norm(&gd, margin, NormMethod::Lyapunov)
        .map(|(t, _)| t.condition())
        .unwrap_or(f64::INFINITY);

    let scaled = g / rho_hat;
    let mut pow = Matrix3::<f64>::identity();
    let mut best = 1.0f64;
    let mut k = 0usize;
    loop {
        k += 1;
        pow *= scaled;
        let r = opnorm3(&pow);
        best = best.max(r);
        if k >= PI_MIN_HORIZON && r <= 1.0 {
            break;
        }
        if k >= PI_MAX_HORIZON {
            return Ok(PiBound {
                pi: PI_SAFETY * best.max(pi_norm),
                rho,
                rho_hat,
                horizon: k,
                pi_norm,
            });
        }
    }
    Ok(PiBound {
        pi: PI_SAFETY * best,
        rho,
        rho_hat,
        horizon: k,
        pi_norm,
    })
}

fn opnorm3(m: &Matrix3<f64>) -> f64 {
    m.singular_values().max()
}

/// Everything the schedules and reports need, at a fixed step size.
#[derive(Debug, Clone)]
pub struct ConstantsBundle {
    pub problem: ProblemScalars,
    pub network: NetworkConstants,
    pub step: StepSizeBound,
    pub eta: f64,
    pub eta_tilde: f64,
    pub kappa7: f64,
    pub kappa8: f64,
    pub g: Matrix3<f64>,
    pub pi: PiBound,
    pub varpi: f64,
}

impl ConstantsBundle {
    /// `eta = None` selects `eta_max`. A supplied `eta` above `eta_max` is
    /// rejected.
    pub fn new(
        w: &WeightPair,
        pv: &PerronVectors,
        problem: ProblemScalars,
        eta: Option<f64>,
        opts: &AnalysisOptions,
    ) -> Result<Self> {
        let network = NetworkConstants::compute(w, pv, opts)?;
        Self::from_network(network, problem, eta, opts)
    }

    pub fn from_network(
        network: NetworkConstants,
        problem: ProblemScalars,
        eta: Option<f64>,
        opts: &AnalysisOptions,
    ) -> Result<Self> {
        problem.validate()?;
        if problem.n != network.n {
            return Err(Error::Dimension(format!(
                "problem has {} nodes, weights have {}",
                problem.n, network.n
            )));
        }
        let step = max_step_size(&problem, &network);
        let eta = eta.unwrap_or(step.eta_max);
        check_positive("eta", eta)?;
        if eta > step.eta_max * (1.0 + 1e-12) {
            return Err(Error::OutOfRange {
                name: "eta",
                value: eta,
                expected: "at most eta_max",
            });
        }
        let g = build_g(&problem, eta, &network)?;
        let rho = spectral_radius3(&g);
        if rho >= 1.0 {
            return Err(Error::NotContractive(rho));
        }
        let varpi = opts.varpi.unwrap_or(0.01 * (1.0 - rho));
        let pi = pi_bound(&g, varpi)?;
        Ok(Self {
            eta_tilde: eta * network.pi_inner,
            kappa7: kappa7(problem.n, network.alpha, eta, problem.l),
            kappa8: kappa8(problem.n, problem.l),
            problem,
            network,
            step,
            eta,
            g,
            pi,
            varpi,
        })
    }

    pub fn rho_hat(&self) -> f64 {
        self.pi.rho_hat
    }

    /// Audit dump, one `name,value,definition` row per constant.
    pub fn write_report<W: Write>(&self, out: W) -> Result<()> {
        let c = &self.network;
        let e = &c.equivalence;
        let mut rows: Vec<(String, f64, &str)> = vec![
            ("n".into(), self.problem.n as f64, "number of nodes"),
            ("m".into(), self.problem.m as f64, "per-node dimension"),
            ("mu".into(), self.problem.mu, "strong convexity modulus"),
            ("L".into(), self.problem.l, "gradient Lipschitz constant"),
            ("alpha".into(), c.alpha, "consensus smoothing"),
            ("beta".into(), c.beta, "tracking smoothing"),
            ("eta".into(), self.eta, "step size"),
            ("eta_tilde".into(), self.eta_tilde, "eta * pi_A' pi_B"),
            ("pi_inner".into(), c.pi_inner, "pi_A' pi_B"),
            ("sigma_A".into(), c.sigma_a, "||A_alpha - 1 pi_A'||_A"),
            ("sigma_B".into(), c.sigma_b, "||B_beta - pi_B 1'||_B"),
            ("delta_A2".into(), e.delta_a2, "||T_A||_2"),
            ("delta_B2".into(), e.delta_b2, "||T_B||_2"),
            ("delta_AB".into(), e.delta_ab, "||T_A T_B^-1||_2"),
            ("delta_BA".into(), e.delta_ba, "||T_B T_A^-1||_2"),
            ("kappa1".into(), c.kappa1, "||I - 1 pi_A'||_A"),
            ("kappa2".into(), c.kappa2, "||pi_B||_A"),
            ("kappa3".into(), c.kappa3, "||I - pi_B 1'||_B"),
            ("kappa4".into(), c.kappa4, "||A_alpha - I||_2"),
            ("kappa5".into(), c.kappa5, "||pi_B||_2"),
            ("kappa6".into(), c.kappa6, "||pi_A||_2"),
            ("kappa7".into(), self.kappa7, "max{sqrt2 (n+1/2) alpha + eta sqrt(n) L, eta, eta n L}"),
            ("kappa8".into(), self.kappa8, "max{1, sqrt(n) L, n L}"),
            ("gamma1".into(), self.step.gamma1, "step-size quadratic, constant term"),
            ("gamma2".into(), self.step.gamma2, "step-size quadratic, linear term"),
            ("gamma3".into(), self.step.gamma3, "1/4 pi_A' pi_B mu (1 - sigma_A)(1 - sigma_B)"),
            ("eta_bound_smoothness".into(), self.step.terms[0], "1/((mu+L) pi_A' pi_B)"),
            ("eta_bound_consensus_a".into(), self.step.terms[1], "(1-sigma_A)/(2 sqrt(n) kappa1 kappa2 L)"),
            ("eta_bound_consensus_b".into(), self.step.terms[2], "(1-sigma_B)/(2 delta_B2 kappa3 L)"),
            ("eta_bound_quadratic".into(), self.step.terms[3], "2 gamma3/(gamma2 + sqrt(gamma2^2 + 4 gamma1 gamma3))"),
            ("eta_max".into(), self.step.eta_max, "min of the four bounds"),
            ("rho_G".into(), self.pi.rho, "spectral radius of G"),
            ("varpi".into(), self.varpi, "rho_hat - rho(G)"),
            ("rho_hat".into(), self.pi.rho_hat, "rho(G) + varpi"),
            ("Pi".into(), self.pi.pi, "1.1 max_k ||G^k||_2 / rho_hat^k"),
            ("Pi_horizon".into(), self.pi.horizon as f64, "largest power checked"),
            ("Pi_norm".into(), self.pi.pi_norm, "cond(T) with ||G||_T <= rho_hat"),
        ];
        for i in 0..3 {
            for j in 0..3 {
                rows.push((format!("G{}{}", i + 1, j + 1), self.g[(i, j)], "comparison matrix entry"));
            }
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["name", "value", "definition"])?;
        for (name, value, def) in rows {
            w.write_record([name.as_str(), &format!("{value:e}"), def])?;
        }
        w.flush()?;
        Ok(())
    }
}
