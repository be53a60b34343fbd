//! Strongly convex quadratic objectives: sensor fusion and synthetic
//! fixtures with closed-form optima.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_positive, Error, Result};

/// A sum of per-node objectives `f = Σ f_i` over `ℝᵐ`.
pub trait Objective: Send + Sync {
    fn nodes(&self) -> usize;
    fn dim(&self) -> usize;
    fn value(&self, i: usize, x: &DVector<f64>) -> f64;
    fn gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64>;
    /// Strong-convexity modulus shared by every `f_i`.
    fn mu(&self) -> f64;
    /// Gradient Lipschitz constant shared by every `f_i`.
    fn l(&self) -> f64;
    fn x_star(&self) -> Option<&DVector<f64>>;

    /// Row `i` of the result is `∇f_i(x_i)`, where `x_i` is row `i` of `x`.
    fn stacked_gradient(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(x.nrows(), x.ncols());
        for i in 0..x.nrows() {
            let gi = self.gradient(i, &x.row(i).transpose());
            g.set_row(i, &gi.transpose());
        }
        g
    }

    /// `Σ_i ∇f_i(x)` at a common point.
    fn total_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (0..self.nodes()).fold(DVector::zeros(self.dim()), |acc, i| acc + self.gradient(i, x))
    }
}

/// `f_i(x) = ½ xᵀQ_i x − b_iᵀx + c_i` with `Q_i` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    q: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
    c: Vec<f64>,
    mu: f64,
    l: f64,
    x_star: DVector<f64>,
}

impl QuadraticObjective {
    pub fn new(q: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>, c: Vec<f64>) -> Result<Self> {
        let n = q.len();
        if n == 0 || b.len() != n || c.len() != n {
            return Err(Error::Dimension("need one (Q, b, c) triple per node".into()));
        }
        let m = q[0].nrows();
        if q.iter().any(|qi| qi.shape() != (m, m)) || b.iter().any(|bi| bi.len() != m) {
            return Err(Error::Dimension("inconsistent quadratic shapes".into()));
        }
        let mut mu = f64::INFINITY;
        let mut l = 0.0f64;
        for qi in &q {
            if (qi - qi.transpose()).amax() > 1e-12 * (1.0 + qi.amax()) {
                return Err(Error::Config("quadratic Hessian is not symmetric".into()));
            }
            let eig = qi.clone().symmetric_eigen().eigenvalues;
            mu = mu.min(eig.min());
            l = l.max(eig.max());
        }
        if !(mu > 0.0) {
            return Err(Error::OutOfRange {
                name: "mu",
                value: mu,
                expected: "positive (every f_i strongly convex)",
            });
        }
        let h: DMatrix<f64> = q.iter().sum();
        let rhs: DVector<f64> = b.iter().sum();
        let x_star = h
            .cholesky()
            .ok_or(Error::Singular("sum of Hessians"))?
            .solve(&rhs);
        Ok(Self { q, b, c, mu, l, x_star })
    }

    pub fn hessian(&self, i: usize) -> &DMatrix<f64> {
        &self.q[i]
    }

    pub fn linear(&self, i: usize) -> &DVector<f64> {
        &self.b[i]
    }

    /// Plain-text dump; see [`parse_matrices`] for the block format.
    pub fn to_text(&self) -> String {
        let mut out = format!("quadratic {} {}\n", self.q.len(), self.x_star.len());
        for i in 0..self.q.len() {
            write_matrix(&mut out, &self.q[i]);
            write_matrix(&mut out, &DMatrix::from_row_slice(1, self.b[i].len(), self.b[i].as_slice()));
            write_matrix(&mut out, &DMatrix::from_element(1, 1, self.c[i]));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (header, blocks) = parse_matrices(text)?;
        let (n, m) = parse_header(&header, "quadratic", 2).map(|v| (v[0] as usize, v[1] as usize))?;
        if blocks.len() != 3 * n {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected {} matrix blocks, found {}", 3 * n, blocks.len()),
            });
        }
        let mut q = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        for chunk in blocks.chunks(3) {
            if chunk[0].shape() != (m, m) || chunk[1].shape() != (1, m) || chunk[2].shape() != (1, 1) {
                return Err(Error::Parse {
                    line: 1,
                    msg: "quadratic block shapes do not match header".into(),
                });
            }
            q.push(chunk[0].clone());
            b.push(chunk[1].transpose().column(0).into_owned());
            c.push(chunk[2][(0, 0)]);
        }
        Self::new(q, b, c)
    }
}

impl Objective for QuadraticObjective {
    fn nodes(&self) -> usize {
        self.q.len()
    }

    fn dim(&self) -> usize {
        self.x_star.len()
    }

    fn value(&self, i: usize, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q[i] * x)) - self.b[i].dot(x) + self.c[i]
    }

    fn gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.q[i] * x - &self.b[i]
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn l(&self) -> f64 {
        self.l
    }

    fn x_star(&self) -> Option<&DVector<f64>> {
        Some(&self.x_star)
    }

    fn stacked_gradient(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(x.nrows(), x.ncols());
        for i in 0..x.nrows() {
            let gi = &self.q[i] * x.row(i).transpose() - &self.b[i];
            g.set_row(i, &gi.transpose());
        }
        g
    }
}

/// Measurements `ζ_i ≈ M_i x` with the ridge term split evenly over nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFusionInstance {
    pub measurements: Vec<DMatrix<f64>>,
    pub observations: Vec<DVector<f64>>,
    pub lambda: f64,
}

impl SensorFusionInstance {
    /// Standard-normal `M_i`, ground truth, and observation noise.
    pub fn random(n: usize, s: usize, m: usize, lambda: f64, seed: u64) -> Result<Self> {
        check_positive("lambda", lambda)?;
        if n == 0 || s == 0 || m == 0 {
            return Err(Error::Dimension("n, s and m must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = move || -> f64 { rng.sample(StandardNormal) };
        let truth = DVector::from_fn(m, |_, _| normal());
        let mut measurements = Vec::with_capacity(n);
        let mut observations = Vec::with_capacity(n);
        for _ in 0..n {
            let mi = DMatrix::from_fn(s, m, |_, _| normal());
            let noise = DVector::from_fn(s, |_, _| normal());
            observations.push(&mi * &truth + noise);
            measurements.push(mi);
        }
        Ok(Self {
            measurements,
            observations,
            lambda,
        })
    }

    pub fn nodes(&self) -> usize {
        self.measurements.len()
    }

    pub fn to_text(&self) -> String {
        let n = self.nodes();
        let (s, m) = self.measurements[0].shape();
        let mut out = format!("sensor_fusion {n} {s} {m} {:e}\n", self.lambda);
        for (mi, zi) in self.measurements.iter().zip(&self.observations) {
            write_matrix(&mut out, mi);
            write_matrix(&mut out, &DMatrix::from_row_slice(1, zi.len(), zi.as_slice()));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (header, blocks) = parse_matrices(text)?;
        let v = parse_header(&header, "sensor_fusion", 4)?;
        let (n, s, m, lambda) = (v[0] as usize, v[1] as usize, v[2] as usize, v[3]);
        if blocks.len() != 2 * n {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected {} matrix blocks, found {}", 2 * n, blocks.len()),
            });
        }
        let mut measurements = Vec::with_capacity(n);
        let mut observations = Vec::with_capacity(n);
        for chunk in blocks.chunks(2) {
            if chunk[0].shape() != (s, m) || chunk[1].shape() != (1, s) {
                return Err(Error::Parse {
                    line: 1,
                    msg: "sensor block shapes do not match header".into(),
                });
            }
            measurements.push(chunk[0].clone());
            observations.push(chunk[1].transpose().column(0).into_owned());
        }
        Ok(Self {
            measurements,
            observations,
            lambda,
        })
    }
}

/// `f_i(x) = ‖M_i x − ζ_i‖² + (λ/2n)‖x‖²`.
pub fn sensor_fusion(inst: &SensorFusionInstance) -> Result<QuadraticObjective> {
    check_positive("lambda", inst.lambda)?;
    let n = inst.nodes();
    if n == 0 || inst.observations.len() != n {
        return Err(Error::Dimension("one observation per measurement matrix".into()));
    }
    let m = inst.measurements[0].ncols();
    let reg = inst.lambda / n as f64;
    let mut q = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    for (mi, zi) in inst.measurements.iter().zip(&inst.observations) {
        if mi.ncols() != m || mi.nrows() != zi.len() {
            return Err(Error::Dimension("sensor shapes are inconsistent".into()));
        }
        let mtm = mi.transpose() * mi;
        q.push((&mtm + mtm.transpose()) + DMatrix::identity(m, m) * reg);
        b.push(mi.transpose() * zi * 2.0);
        c.push(zi.norm_squared());
    }
    QuadraticObjective::new(q, b, c)
}

/// `f_i(x) = ½ (x − c_i)ᵀ H_i (x − c_i)` with `spec(H_i) ⊂ [1, 5]`.
pub fn quadratic_fixture(n: usize, m: usize, seed: u64) -> Result<QuadraticObjective> {
    quadratic_fixture_scaled(n, m, seed, 1.0)
}

/// As [`quadratic_fixture`] with every Hessian multiplied by `scale`.
pub fn quadratic_fixture_scaled(n: usize, m: usize, seed: u64, scale: f64) -> Result<QuadraticObjective> {
    check_positive("scale", scale)?;
    if n == 0 || m == 0 {
        return Err(Error::Dimension("n and m must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    for _ in 0..n {
        let raw = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let basis = raw.qr().q();
        let eig = DVector::from_fn(m, |_, _| rng.random_range(1.0..=5.0));
        let h = &basis * DMatrix::from_diagonal(&eig) * basis.transpose();
        let h = (&h + h.transpose()) * (0.5 * scale);
        let center = DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
        b.push(&h * &center);
        c.push(0.5 * center.dot(&(&h * &center)));
        q.push(h);
    }
    QuadraticObjective::new(q, b, c)
}

fn write_matrix(out: &mut String, m: &DMatrix<f64>) {
    out.push_str(&format!("matrix {} {}\n", m.nrows(), m.ncols()));
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

/// Parses a header line followed by `matrix R C` blocks of `R` row-major
/// lines. Blank lines and `#` comments are ignored.
pub fn parse_matrices(text: &str) -> Result<(String, Vec<DMatrix<f64>>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty input".into(),
    })?;
    let mut blocks = Vec::new();
    while let Some((ln, line)) = lines.next() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 3 || tok[0] != "matrix" {
            return Err(Error::Parse {
                line: ln,
                msg: format!("expected `matrix R C`, found `{line}`"),
            });
        }
        let dims: Vec<usize> = tok[1..]
            .iter()
            .map(|t| t.parse().map_err(|_| Error::Parse { line: ln, msg: format!("bad dimension `{t}`") }))
            .collect::<Result<_>>()?;
        let (r, c) = (dims[0], dims[1]);
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r {
            let (ln, row) = lines.next().ok_or(Error::Parse {
                line: ln,
                msg: "truncated matrix block".into(),
            })?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Parse { line: ln, msg: format!("bad number `{t}`") }))
                .collect::<Result<_>>()?;
            if vals.len() != c {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected {c} entries, found {}", vals.len()),
                });
            }
            data.extend(vals);
        }
        blocks.push(DMatrix::from_row_slice(r, c, &data));
    }
    Ok((header.to_string(), blocks))
}

fn parse_header(header: &str, tag: &str, count: usize) -> Result<Vec<f64>> {
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != count + 1 || tok[0] != tag {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected `{tag}` header with {count} fields"),
        });
    }
    tok[1..]
        .iter()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { line: 1, msg: format!("bad header field `{t}`") }))
        .collect()
}
