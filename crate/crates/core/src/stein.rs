//! Ornstein-Uhlenbeck smoothing of polytope indicators, derivatives of the
//! Stein solution, and the kernel discrepancy for Gaussian comparison.
//!
//! With `h = 1_A`, `sigma_s = sqrt(1 - e^{-2s})` and `h_s(y) = P(y + sigma_s Z in A)`,
//! the smoothed test function is `T_s h~(w) = h_s(e^{-s} w) - P(Z in A)` and
//!
//! ```text
//! psi_t(w)            = -int_t^inf T_s h~(w) ds
//! D^r psi_t(w)        = -int_t^inf e^{-rs} (D^r h_s)(e^{-s} w) ds
//! (D^r h_s)(y)        = (-1)^r sigma_s^{-r} int_{(A - y) / sigma_s} D^r phi_d
//! ```
//!
//! The last integral is evaluated by the face decompositions in
//! [`crate::gaussint`], so no finite differences are involved.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussint::{FaceTable, Tensor3};
use crate::polytope::{derived_normal_pair, dot, Polytope};
use crate::rng::{self, chunked_moments};
use crate::stats::{cdf, McEstimate};

const MAX_NODES: usize = 1024;
const MAX_STEIN_DIM: usize = 4;

/// Quadrature rule for the time integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadSpec {
    pub rule: String,
    pub nodes: usize,
    /// Upper limit of the time integral; the tail beyond it is dropped.
    pub s_cap: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { rule: "gauss-legendre".to_string(), nodes: 64, s_cap: 40.0 }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Nodes `s_i` and weights for `int_t^{s_cap} f(s) ds` after substituting
/// `q = e^{-(s - t)}`, so `ds = dq / q` on `[e^{-(s_cap - t)}, 1]`.
pub fn time_nodes(t: f64, quad: &QuadSpec) -> Result<Vec<(f64, f64)>> {
    if quad.rule != "gauss-legendre" {
        return Err(Error::InvalidArgument(format!("unknown quadrature rule {:?}", quad.rule)));
    }
    if quad.nodes == 0 || quad.nodes > MAX_NODES {
        return Err(Error::QuadratureBudgetExceeded(format!("{} nodes (allowed 1..={MAX_NODES})", quad.nodes)));
    }
    if t >= quad.s_cap {
        return Ok(Vec::new());
    }
    let q_min = (-(quad.s_cap - t)).exp();
    let half = 0.5 * (1.0 - q_min);
    let (x, w) = gauss_legendre(quad.nodes);
    Ok(x.iter()
        .zip(&w)
        .map(|(xi, wi)| {
            let q = q_min + half * (xi + 1.0);
            (t - q.ln(), wi * half / q)
        })
        .collect())
}

pub fn sigma_of(s: f64) -> f64 {
    (-(-2.0 * s).exp_m1()).sqrt()
}

/// `E[1_A(e^{-t} x + sigma_t Z)] - E[1_A(Z)]` with both terms on the same draws.
pub fn ou_smooth(a: &Polytope, t: f64, x: &DVector<f64>, n: usize, seed: u64) -> Result<McEstimate> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("OU time must be positive".into()));
    }
    let d = a.dim;
    let decay = (-t).exp();
    let sig = sigma_of(t);
    let fin = a.finite();
    let normals: Vec<&[f64]> = fin.iter().map(|&j| a.normals[j].as_slice()).collect();
    let offsets: Vec<f64> = fin.iter().map(|&j| a.offsets[j]).collect();
    // v . (e^{-t} x + sigma Z) <= b  <=>  v . Z <= (b - e^{-t} v . x) / sigma
    let moved: Vec<f64> = fin.iter().map(|&j| (a.offsets[j] - decay * a.normals[j].dot(x)) / sig).collect();
    match fin.len() {
        0 => return Ok(McEstimate::exact(0.0, n, seed)),
        1 => return Ok(McEstimate::exact(cdf(moved[0]) - cdf(offsets[0]), n, seed)),
        _ => {}
    }
    let m = chunked_moments(n, seed, &[0x0C5], || vec![0.0; d], |z, r| {
        for v in z.iter_mut() {
            *v = r.sample(StandardNormal);
        }
        let mut in_a = true;
        let mut in_b = true;
        for (i, v) in normals.iter().enumerate() {
            let p = dot(v, z);
            in_a &= p <= moved[i];
            in_b &= p <= offsets[i];
        }
        (in_a as u8 as f64) - (in_b as u8 as f64)
    });
    Ok(m.estimate(seed))
}

/// `E[1_A(e^{-t} x + sigma_t Z)]`, the uncentred smoothing. Draws match
/// [`ou_smooth`] for the same seed, so nested polytopes give ordered values.
pub fn ou_indicator(a: &Polytope, t: f64, x: &DVector<f64>, n: usize, seed: u64) -> Result<McEstimate> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("OU time must be positive".into()));
    }
    let d = a.dim;
    let decay = (-t).exp();
    let sig = sigma_of(t);
    let fin = a.finite();
    let normals: Vec<&[f64]> = fin.iter().map(|&j| a.normals[j].as_slice()).collect();
    let moved: Vec<f64> = fin.iter().map(|&j| (a.offsets[j] - decay * a.normals[j].dot(x)) / sig).collect();
    match fin.len() {
        0 => return Ok(McEstimate::exact(1.0, n, seed)),
        1 => return Ok(McEstimate::exact(cdf(moved[0]), n, seed)),
        _ => {}
    }
    let m = chunked_moments(n, seed, &[0x0C5], || vec![0.0; d], |z, r| {
        for v in z.iter_mut() {
            *v = r.sample(StandardNormal);
        }
        normals.iter().zip(&moved).all(|(v, b)| dot(v, z) <= *b) as u8 as f64
    });
    Ok(m.estimate(seed))
}

fn unit(d: usize, j: usize) -> DVector<f64> {
    DVector::from_fn(d, |i, _| if i == j { 1.0 } else { 0.0 })
}

/// Splits a per-evaluation budget `n` across quadrature nodes in proportion
/// to the size of each node's contribution, with a floor per node.
fn node_budgets(nodes: &[(f64, f64)], drift: f64, n: usize) -> Vec<usize> {
    const FLOOR: usize = 256;
    let scale: Vec<f64> = nodes
        .iter()
        .map(|&(s, wt)| {
            let sig = sigma_of(s);
            wt * ((-2.0 * s).exp() / (sig * sig) + (-s).exp() * drift.max(1.0) / sig)
        })
        .collect();
    let total: f64 = scale.iter().sum();
    scale.iter().map(|a| ((n as f64 * a / total).round() as usize).max(FLOOR)).collect()
}

/// `D^r psi_t(x)` for a multi-index of length `r <= 3` (empty for `psi_t` itself).
///
/// `n` is the Monte Carlo budget per quadrature node.
pub fn psi_derivative(
    a: &Polytope,
    t: f64,
    x: &DVector<f64>,
    multi_index: &[usize],
    quad: &QuadSpec,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("OU time must be positive".into()));
    }
    let d = a.dim;
    let r = multi_index.len();
    if r > 3 || multi_index.iter().any(|&j| j >= d) {
        return Err(Error::InvalidArgument(format!("multi-index {multi_index:?} invalid for dimension {d}")));
    }
    let nodes = time_nodes(t, quad)?;
    let mut value = 0.0;
    let mut var = 0.0;
    for (i, &(s, w)) in nodes.iter().enumerate() {
        let node_seed = rng::derive(seed, &[0x951, i as u64]);
        let est = if r == 0 {
            ou_smooth(a, s, x, n, node_seed)?
        } else {
            let sig = sigma_of(s);
            let y = x * (-s).exp();
            let scaled = a.translate(&y).scale(sig);
            let table = FaceTable::build(&scaled, &DVector::zeros(d), r, n, node_seed)?;
            let raw = match r {
                1 => table.grad(&unit(d, multi_index[0])),
                2 => table.hessian(&(unit(d, multi_index[0]) * unit(d, multi_index[1]).transpose())),
                _ => table.third(&Tensor3::outer(
                    &unit(d, multi_index[0]),
                    &unit(d, multi_index[1]),
                    &unit(d, multi_index[2]),
                ))?,
            };
            let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
            raw.scaled(sign * (-(r as f64) * s).exp() / sig.powi(r as i32))
        };
        value += w * est.value;
        var += (w * est.stderr).powi(2);
    }
    Ok(McEstimate { value: -value, stderr: var.sqrt(), n_samples: n, seed })
}

/// `<I, D^2 psi_t(w)> - w . D psi_t(w) - T_t h~(w)`, which vanishes for the
/// exact solution. `n` is the Monte Carlo budget for the whole evaluation,
/// spread over quadrature nodes by contribution size; `T_t h~` gets the
/// full budget.
pub fn stein_residual(a: &Polytope, t: f64, w: &DVector<f64>, quad: &QuadSpec, n: usize, seed: u64) -> Result<McEstimate> {
    let d = a.dim;
    if d > MAX_STEIN_DIM {
        return Err(Error::DimensionTooLarge { got: d, max: MAX_STEIN_DIM });
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("OU time must be positive".into()));
    }
    let nodes = time_nodes(t, quad)?;
    let budget = node_budgets(&nodes, w.norm(), n);
    let id = DMatrix::identity(d, d);
    let mut value = 0.0;
    let mut var = 0.0;
    for (i, &(s, wt)) in nodes.iter().enumerate() {
        let node_seed = rng::derive(seed, &[0x57E, i as u64]);
        let n_node = budget[i];
        let sig = sigma_of(s);
        let y = w * (-s).exp();
        let scaled = a.translate(&y).scale(sig);
        let table = FaceTable::build(&scaled, &DVector::zeros(d), 2, n_node, node_seed)?;
        // The Laplacian and drift terms share face integrals, so their
        // coefficients are merged before the standard error is formed.
        let mut coef = table.grad_coefficients(w, (-s).exp() / sig);
        table.add_hessian(&mut coef, &id, (-2.0 * s).exp() / (sig * sig));
        let both = table.combine(&coef);
        value += wt * both.value;
        var += (wt * both.stderr).powi(2);
    }
    let smooth = ou_smooth(a, t, w, n, rng::derive(seed, &[0x57F]))?;
    Ok(McEstimate {
        value: -value - smooth.value,
        stderr: (var + smooth.stderr.powi(2)).sqrt(),
        n_samples: n,
        seed,
    })
}

/// Admissible ordered pairs `(j, k, v_jk)` of a set of unit normals.
fn pair_normals(normals: &[DVector<f64>]) -> Vec<(usize, usize, DVector<f64>)> {
    let mut out = Vec::new();
    for j in 0..normals.len() {
        for k in 0..normals.len() {
            if j == k {
                continue;
            }
            if let Ok(w) = derived_normal_pair(&normals[j], &normals[k]) {
                out.push((j, k, w));
            }
        }
    }
    out
}

/// Mean over kernel samples `M` of `max_{j,k} (|v_j' M v_j| + |v_j' M v_jk| + |v_jk' M v_jk|)`.
pub fn kernel_delta(samples: &[DMatrix<f64>], normals: &[DVector<f64>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no kernel samples".into()));
    }
    let pairs = pair_normals(normals);
    if pairs.is_empty() {
        return Err(Error::EmptyPairSet);
    }
    let total: f64 = samples
        .iter()
        .map(|m| {
            pairs
                .iter()
                .map(|(j, _, w)| {
                    let v = &normals[*j];
                    v.dot(&(m * v)).abs() + v.dot(&(m * w)).abs() + w.dot(&(m * w)).abs()
                })
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(total / samples.len() as f64)
}

/// Per-coordinate and per-pair discrepancy terms between two correlation matrices.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaTerms {
    pub diag_term: Vec<f64>,
    pub cross_term: Vec<Vec<f64>>,
    pub pair_term: Vec<Vec<f64>>,
}

impl DeltaTerms {
    /// `max_{j != k} (|diag_j| + |cross_jk| + |pair_jk|)`.
    pub fn max_sum(&self) -> f64 {
        let d = self.diag_term.len();
        let mut mx: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                if j != k {
                    mx = mx.max(self.diag_term[j].abs() + self.cross_term[j][k].abs() + self.pair_term[j][k].abs());
                }
            }
        }
        mx
    }

    fn max_gap(&self, other: &DeltaTerms) -> f64 {
        let mut g: f64 = 0.0;
        for (a, b) in self.diag_term.iter().zip(&other.diag_term) {
            g = g.max((a - b).abs());
        }
        for (ra, rb) in self.cross_term.iter().zip(&other.cross_term).chain(self.pair_term.iter().zip(&other.pair_term)) {
            for (a, b) in ra.iter().zip(rb) {
                g = g.max((a - b).abs());
            }
        }
        g
    }
}

/// Bilinear-form evaluation next to the closed-form expressions.
#[derive(Debug, Clone, Serialize)]
pub struct GaussDeltaTerms {
    pub direct: DeltaTerms,
    pub closed: DeltaTerms,
    /// Largest entrywise disagreement between the two paths.
    pub max_gap: f64,
    /// `V Sigma1 V' - I` with `V` the inverse Cholesky factor of `sigma`.
    #[serde(skip)]
    pub kernel: DMatrix<f64>,
}

/// Discrepancy terms of `sigma1` relative to unit-diagonal `sigma`, computed
/// both as bilinear forms in the frame of `sigma` and by closed formulas.
pub fn gauss_delta_terms(sigma1: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<GaussDeltaTerms> {
    let d = sigma.nrows();
    if sigma.shape() != sigma1.shape() || sigma.ncols() != d {
        return Err(Error::ShapeMismatch("covariance shapes differ".into()));
    }
    if (0..d).any(|j| (sigma[(j, j)] - 1.0).abs() > 1e-12) {
        return Err(Error::InvalidArgument("reference matrix must have unit diagonal".into()));
    }
    let chol = nalgebra::Cholesky::new(sigma.clone()).ok_or(Error::SingularMatrix)?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or(Error::SingularMatrix)?;
    let kernel = &l_inv * sigma1 * l_inv.transpose() - DMatrix::identity(d, d);
    let normals: Vec<DVector<f64>> = (0..d).map(|j| l.row(j).transpose()).collect();

    let mut direct = DeltaTerms { diag_term: vec![0.0; d], cross_term: vec![vec![0.0; d]; d], pair_term: vec![vec![0.0; d]; d] };
    let mut closed = direct.clone();
    let delta = sigma1 - sigma;
    for j in 0..d {
        let v = &normals[j];
        direct.diag_term[j] = v.dot(&(&kernel * v));
        closed.diag_term[j] = delta[(j, j)];
        for k in 0..d {
            if j == k {
                continue;
            }
            let r = sigma[(j, k)];
            let det = 1.0 - r * r;
            if det <= 0.0 {
                return Err(Error::DegeneratePair(j, k));
            }
            let w = derived_normal_pair(v, &normals[k])?;
            direct.cross_term[j][k] = v.dot(&(&kernel * &w));
            direct.pair_term[j][k] = w.dot(&(&kernel * &w));
            closed.cross_term[j][k] = (delta[(j, k)] - delta[(j, j)] * r) / det.sqrt();
            closed.pair_term[j][k] = (delta[(k, k)] + r * r * delta[(j, j)] - 2.0 * r * delta[(j, k)]) / det;
        }
    }
    let max_gap = direct.max_gap(&closed);
    Ok(GaussDeltaTerms { direct, closed, max_gap, kernel })
}
