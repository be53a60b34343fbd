//! Explicit weighted 2-norms `‖v‖ = ‖T v‖₂` under which a matrix with
//! spectral radius below one becomes a contraction.
//!
//! For an `n×p` matrix `X` the norm is the column-stacked one,
//! `‖X‖ = ‖T X‖_F`, and the induced norm of a square `M` is `‖T M T⁻¹‖₂`.
//! Every transform is rescaled so that its smallest singular value is one,
//! which gives `‖X‖₂ ≤ ‖X‖` for free.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{check_positive, Error, Result};
use crate::linalg;

const INVERSE_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNorm {
    t: DMatrix<f64>,
    t_inv: DMatrix<f64>,
}

impl WeightedNorm {
    pub fn identity(n: usize) -> Self {
        Self {
            t: DMatrix::identity(n, n),
            t_inv: DMatrix::identity(n, n),
        }
    }

    /// Normalizes `t` to unit smallest singular value and checks that its
    /// inverse is accurate.
    pub fn from_transform(t: DMatrix<f64>) -> Result<Self> {
        if !t.is_square() {
            return Err(Error::Dimension("norm transform must be square".into()));
        }
        let smin = linalg::min_singular_value(&t);
        if !(smin > 0.0) || !smin.is_finite() {
            return Err(Error::Singular("norm transform"));
        }
        let t = t / smin;
        let t_inv = linalg::inverse(&t, "norm transform")?;
        let n = t.nrows();
        let resid = linalg::norm2(&(&t * &t_inv - DMatrix::<f64>::identity(n, n)));
        if resid > INVERSE_RESIDUAL_TOL {
            return Err(Error::Singular("norm transform (ill-conditioned)"));
        }
        Ok(Self { t, t_inv })
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn transform(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn inverse_transform(&self) -> &DMatrix<f64> {
        &self.t_inv
    }

    pub fn vector(&self, v: &DVector<f64>) -> f64 {
        (&self.t * v).norm()
    }

    /// Column-stacked norm of an `n×p` matrix.
    pub fn matrix(&self, x: &DMatrix<f64>) -> f64 {
        (&self.t * x).norm()
    }

    /// Induced norm of a square matrix.
    pub fn induced(&self, m: &DMatrix<f64>) -> f64 {
        linalg::norm2(&(&self.t * m * &self.t_inv))
    }

    /// Condition number of the transform, `‖T‖₂‖T⁻¹‖₂`.
    pub fn condition(&self) -> f64 {
        linalg::norm2(&self.t) * linalg::norm2(&self.t_inv)
    }
}

/// How the contraction norm is constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    /// Complex Schur form `M = U R U*` with graded diagonal scaling
    /// `D_t = diag(t, t², …, tⁿ)`, `t` as small as the margin allows.
    Schur,
    /// Weight from the discrete Lyapunov (Stein) series
    /// `P = Σ_k (M/r)ᵀᵏ (M/r)ᵏ`, `r = ρ(M) + margin`.
    #[default]
    Lyapunov,
}

/// Returns a norm with `‖M‖ ≤ ρ(M) + margin` and the achieved value of
/// `‖M‖` under it.
pub fn contraction_norm(
    m: &DMatrix<f64>,
    margin: f64,
    method: NormMethod,
) -> Result<(WeightedNorm, f64)> {
    check_positive("margin", margin)?;
    if !m.is_square() {
        return Err(Error::Dimension("contraction_norm needs a square matrix".into()));
    }
    let rho = linalg::spectral_radius(m);
    if rho >= 1.0 {
        return Err(Error::NotContractive(rho));
    }
    let target = rho + margin;
    let t = match method {
        NormMethod::Schur => schur_transform(m, target)?,
        NormMethod::Lyapunov => lyapunov_transform(m, target)?,
    };
    let norm = WeightedNorm::from_transform(t)?;
    let sigma = norm.induced(m);
    if sigma > target * (1.0 + 1e-9) {
        return Err(Error::NoConvergence {
            what: "contraction norm construction",
            iterations: 0,
        });
    }
    Ok((norm, sigma))
}

fn schur_transform(m: &DMatrix<f64>, target: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mc: DMatrix<Complex<f64>> = m.map(|x| Complex::new(x, 0.0));
    let (u, r) = mc.schur().unpack();

    let scaled_norm = |t: f64| -> f64 {
        let mut s = r.clone();
        for i in 0..n {
            for j in 0..n {
                // (D R D⁻¹)_ij = r_ij t^(i-j); only the upper triangle survives
                s[(i, j)] *= t.powi(i as i32 - j as i32);
            }
        }
        s.singular_values().max()
    };

    let mut hi = 1.0;
    if scaled_norm(hi) > target {
        let mut lo = hi;
        while scaled_norm(hi) > target {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::NoConvergence {
                    what: "Schur diagonal scaling",
                    iterations: 40,
                });
            }
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if scaled_norm(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let t = hi;
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        (0..n).map(|i| Complex::new(t.powi(i as i32), 0.0)),
    ));
    let tc = d * u.adjoint();
    // on real vectors ‖T_c v‖² = vᵀ Re(T_c* T_c) v
    let p = (tc.adjoint() * &tc).map(|z| z.re);
    linalg::spd_sqrt(&p)
}

fn lyapunov_transform(m: &DMatrix<f64>, target: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    // Smith doubling for P = Σ_k Wᵀᵏ Wᵏ, W = M / target
    let mut w = m / target;
    let mut p = DMatrix::<f64>::identity(n, n);
    for _ in 0..64 {
        p = &p + w.transpose() * &p * &w;
        w = &w * &w;
        if w.norm() < 1e-17 {
            return linalg::spd_sqrt(&p);
        }
        if !p.iter().all(|x| x.is_finite()) {
            break;
        }
    }
    Err(Error::NoConvergence {
        what: "Stein series",
        iterations: 64,
    })
}

/// Norm-equivalence constants between two weighted norms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Equivalence {
    /// `‖X‖_A ≤ δ_A2 ‖X‖₂`
    pub delta_a2: f64,
    /// `‖X‖_B ≤ δ_B2 ‖X‖₂`
    pub delta_b2: f64,
    /// `‖X‖_A ≤ δ_AB ‖X‖_B`
    pub delta_ab: f64,
    /// `‖X‖_B ≤ δ_BA ‖X‖_A`
    pub delta_ba: f64,
}

pub fn equivalence_constants(norm_a: &WeightedNorm, norm_b: &WeightedNorm) -> Result<Equivalence> {
    if norm_a.dim() != norm_b.dim() {
        return Err(Error::Dimension(format!(
            "norms over dimensions {} and {}",
            norm_a.dim(),
            norm_b.dim()
        )));
    }
    Ok(Equivalence {
        delta_a2: linalg::norm2(&norm_a.t),
        delta_b2: linalg::norm2(&norm_b.t),
        delta_ab: linalg::norm2(&(&norm_a.t * &norm_b.t_inv)),
        delta_ba: linalg::norm2(&(&norm_b.t * &norm_a.t_inv)),
    })
}
