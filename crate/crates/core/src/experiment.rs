//! Simulation harness: data with a prescribed correlation, normalized sums,
//! truncation, the Gaussian multiplier bootstrap, and empirical Kolmogorov
//! distances over finite rectangle families.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{self, BoundInputs};
use crate::corr::CorrelationModel;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{self, cdf, linear_fit, quantile, quantile_of};

/// Unit-variance symmetric laws for the coordinates of `eps_i` in `X_i = L eps_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Innovation {
    Rademacher,
    /// Uniform on `[-sqrt 3, sqrt 3]`.
    UniformPm,
    /// Laplace with scale `1/sqrt 2`.
    LaplaceUnit,
    /// Standard normal conditioned on `|x| <= c`, rescaled to unit variance.
    TruncatedNormal { c: f64 },
    Gaussian,
}

impl Innovation {
    fn truncated_sd(c: f64) -> f64 {
        let mass = 2.0 * cdf(c) - 1.0;
        (1.0 - 2.0 * c * stats::phi(c) / mass).sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, r: &mut R) -> f64 {
        match *self {
            Innovation::Rademacher => {
                if r.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Innovation::UniformPm => 3f64.sqrt() * r.random_range(-1.0..1.0),
            Innovation::LaplaceUnit => {
                let e: f64 = Exp1.sample(r);
                let s = if r.random::<bool>() { 1.0 } else { -1.0 };
                s * e * std::f64::consts::FRAC_1_SQRT_2
            }
            Innovation::TruncatedNormal { c } => {
                let lo = cdf(-c);
                let u = lo + (1.0 - 2.0 * lo) * r.random::<f64>();
                quantile(u).clamp(-c, c) / Self::truncated_sd(c)
            }
            Innovation::Gaussian => r.sample(StandardNormal),
        }
    }

    /// Largest possible magnitude, if the law is bounded.
    pub fn max_abs(&self) -> Option<f64> {
        match *self {
            Innovation::Rademacher => Some(1.0),
            Innovation::UniformPm => Some(3f64.sqrt()),
            Innovation::TruncatedNormal { c } => Some(c / Self::truncated_sd(c)),
            Innovation::LaplaceUnit | Innovation::Gaussian => None,
        }
    }

    /// `E exp(a |eps|)`.
    fn abs_mgf(&self, a: f64) -> f64 {
        match *self {
            Innovation::Rademacher => a.exp(),
            Innovation::UniformPm => {
                let m = 3f64.sqrt();
                if a * m < 1e-8 { 1.0 + a * m / 2.0 } else { (a * m).exp_m1() / (a * m) }
            }
            Innovation::LaplaceUnit => {
                let rate = std::f64::consts::SQRT_2;
                if a >= rate { f64::INFINITY } else { rate / (rate - a) }
            }
            Innovation::TruncatedNormal { c } => {
                // For |Z| <= c: E e^{b|Z|} = 2 e^{b^2/2} (Phi(c - b) - Phi(-b)) / (2 Phi(c) - 1).
                let b = a / Self::truncated_sd(c);
                2.0 * (0.5 * b * b).exp() * (cdf(c - b) - cdf(-b)) / (2.0 * cdf(c) - 1.0)
            }
            Innovation::Gaussian => 2.0 * (0.5 * a * a).exp() * cdf(a),
        }
    }

    /// Smallest `B` with `E exp(|eps| / B) <= 2`.
    pub fn orlicz_scale(&self) -> f64 {
        match *self {
            Innovation::Rademacher => 1.0 / std::f64::consts::LN_2,
            Innovation::LaplaceUnit => std::f64::consts::SQRT_2,
            _ => {
                let mut hi = 1.0;
                while self.abs_mgf(hi) < 2.0 {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.abs_mgf(mid) < 2.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                1.0 / (0.5 * (lo + hi))
            }
        }
    }
}

impl fmt::Display for Innovation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Innovation::Rademacher => write!(f, "rademacher"),
            Innovation::UniformPm => write!(f, "uniform"),
            Innovation::LaplaceUnit => write!(f, "laplace"),
            Innovation::TruncatedNormal { c } => write!(f, "truncnorm:{c}"),
            Innovation::Gaussian => write!(f, "gaussian"),
        }
    }
}

impl FromStr for Innovation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "rademacher" => return Ok(Innovation::Rademacher),
            "uniform" | "uniform_pm" => return Ok(Innovation::UniformPm),
            "laplace" | "laplace_unit" => return Ok(Innovation::LaplaceUnit),
            "gaussian" | "normal" => return Ok(Innovation::Gaussian),
            _ => {}
        }
        if let Some(c) = s.strip_prefix("truncnorm:").or_else(|| s.strip_prefix("truncated_normal:")) {
            let c: f64 = c.parse().map_err(|_| Error::Parse(format!("bad truncation level in {s:?}")))?;
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Parse(format!("truncation level must be positive, got {c}")));
            }
            return Ok(Innovation::TruncatedNormal { c });
        }
        Err(Error::Parse(format!("unknown innovation law {s:?}")))
    }
}

/// `L` with `L L' = Sigma`: the Cholesky factor when it exists, otherwise a
/// symmetric square root from the eigendecomposition.
pub fn covariance_factor(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = nalgebra::Cholesky::new(sigma.clone()) {
        return c.l();
    }
    let eig = nalgebra::SymmetricEigen::new(sigma.clone());
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * root * eig.eigenvectors.transpose()
}

/// Data model `X_i = L eps_i` with iid innovations, so `Cov(X_i) = Sigma`.
#[derive(Debug, Clone, Serialize)]
pub struct DataModel {
    pub dim: usize,
    pub sigma: CorrelationModel,
    pub innovation: Innovation,
    /// Sub-exponential scale of one coordinate of `X_i`.
    pub b_effective: f64,
    #[serde(skip)]
    pub factor: DMatrix<f64>,
}

impl DataModel {
    pub fn new(sigma: CorrelationModel, innovation: Innovation) -> Self {
        let factor = covariance_factor(&sigma.sigma);
        let row_l1 = (0..sigma.dim).map(|j| factor.row(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        DataModel { dim: sigma.dim, b_effective: innovation.orlicz_scale() * row_l1, sigma, innovation, factor }
    }

    fn draw_x<R: Rng>(&self, r: &mut R, eps: &mut DVector<f64>, out: &mut DVector<f64>) {
        for v in eps.iter_mut() {
            *v = self.innovation.sample(r);
        }
        out.gemv(1.0, &self.factor, eps, 0.0);
    }

    /// One dataset of `n` rows `X_i`.
    pub fn simulate_x(&self, n: usize, seed: u64) -> DMatrix<f64> {
        let d = self.dim;
        let mut r = rng::stream(seed, &[0xDA7A]);
        let mut x = DMatrix::zeros(n, d);
        let mut eps = DVector::zeros(d);
        let mut row = DVector::zeros(d);
        for i in 0..n {
            self.draw_x(&mut r, &mut eps, &mut row);
            x.set_row(i, &row.transpose());
        }
        x
    }

    /// `reps` independent draws of `W = n^{-1/2} sum_i X_i`.
    pub fn simulate_w(&self, n: usize, reps: usize, seed: u64) -> Vec<DVector<f64>> {
        let d = self.dim;
        (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut r = rng::stream(seed, &[0x5157, rep as u64]);
                let mut total = DVector::zeros(d);
                for _ in 0..n {
                    for v in total.iter_mut() {
                        *v += self.innovation.sample(&mut r);
                    }
                }
                &self.factor * total / (n as f64).sqrt()
            })
            .collect()
    }

    /// `reps` draws of `N(0, Sigma)`.
    pub fn simulate_gaussian(&self, reps: usize, seed: u64) -> Vec<DVector<f64>> {
        gaussian_draws(&self.factor, reps, seed)
    }
}

/// `reps` draws of `L Z`.
pub fn gaussian_draws(factor: &DMatrix<f64>, reps: usize, seed: u64) -> Vec<DVector<f64>> {
    let d = factor.ncols();
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut r = rng::stream(seed, &[0x6A55, rep as u64]);
            let z = DVector::from_fn(d, |_, _| r.sample(StandardNormal));
            factor * z
        })
        .collect()
}

/// `n^{-1/2} sum_i g(X_ij)` column by column.
fn scaled_column_sums(x: &DMatrix<f64>, g: impl Fn(f64) -> f64) -> DVector<f64> {
    let n = x.nrows();
    let root = (n as f64).sqrt();
    DVector::from_fn(x.ncols(), |j, _| {
        let mut s = 0.0;
        for i in 0..n {
            s += g(x[(i, j)]);
        }
        s / root
    })
}

#[derive(Debug, Clone)]
pub struct TruncatedSum {
    pub w: DVector<f64>,
    pub w_hat: DVector<f64>,
    pub kappa_n: f64,
    /// Entries with `|X_ij| > kappa_n`.
    pub truncated_entries: usize,
    pub recentering: DVector<f64>,
}

/// `E[X_ij 1{|X_ij| <= kappa}]` per coordinate. Every coordinate of `L eps`
/// is symmetric about 0 because the innovations are, so this is exactly 0.
pub fn recentering_constant(model: &DataModel, _kappa: f64) -> DVector<f64> {
    DVector::zeros(model.dim)
}

/// Truncated and recentered sum for a dataset whose rows are `X_i`.
pub fn truncate_hat(model: &DataModel, x: &DMatrix<f64>) -> Result<TruncatedSum> {
    let n = x.nrows();
    if x.ncols() != model.dim {
        return Err(Error::ShapeMismatch(format!("dataset has {} columns, model has {}", x.ncols(), model.dim)));
    }
    let t = bounds::truncation_params(n.max(3) as f64, model.dim as f64, model.b_effective)?;
    let kappa = t.kappa_n;
    let centre = recentering_constant(model, kappa);
    let w = scaled_column_sums(x, |v| v);
    let truncated_entries = x.iter().filter(|v| v.abs() > kappa).count();
    let w_hat = if truncated_entries == 0 && centre.iter().all(|&c| c == 0.0) {
        w.clone()
    } else {
        let mut out = scaled_column_sums(x, |v| if v.abs() <= kappa { v } else { 0.0 });
        for j in 0..model.dim {
            out[j] -= (n as f64).sqrt() * centre[j];
        }
        out
    };
    Ok(TruncatedSum { w, w_hat, kappa_n: kappa, truncated_entries, recentering: centre })
}

#[derive(Debug, Clone)]
pub struct BootstrapDraws {
    pub draws: Vec<DVector<f64>>,
    pub sigma_n: DMatrix<f64>,
    pub delta_n_star: f64,
}

/// Empirical covariance `n^{-1} sum (X_i - mean)(X_i - mean)'`.
pub fn empirical_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let c = centered(x);
    c.transpose() * &c / n
}

fn centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c
}

/// Gaussian multiplier bootstrap `W^xi = n^{-1/2} sum xi_i (X_i - mean)`.
pub fn multiplier_bootstrap(x: &DMatrix<f64>, sigma: &DMatrix<f64>, n_boot: usize, seed: u64) -> Result<BootstrapDraws> {
    let n = x.nrows();
    if n < 3 {
        return Err(Error::InvalidArgument("bootstrap needs at least 3 observations".into()));
    }
    if sigma.shape() != (x.ncols(), x.ncols()) {
        return Err(Error::ShapeMismatch("reference covariance does not match the data".into()));
    }
    let c = centered(x);
    let sigma_n = c.transpose() * &c / n as f64;
    let delta_n_star = (&sigma_n - sigma).amax();
    let ct = c.transpose();
    let root = (n as f64).sqrt();
    let draws = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, &[0xB007, b as u64]);
            let xi = DVector::from_fn(n, |_, _| r.sample(StandardNormal));
            &ct * xi / root
        })
        .collect();
    Ok(BootstrapDraws { draws, sigma_n, delta_n_star })
}

/// Finite family of rectangles `{a <= x <= b}` (lower corner optional).
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RectangleFamily {
    /// All one-sided rectangles `{x <= b}` with each `b_j` on a common threshold list.
    Grid { dim: usize, thresholds: Vec<f64> },
    Listed {
        dim: usize,
        #[serde(skip)]
        lower: Option<Vec<DVector<f64>>>,
        #[serde(skip)]
        upper: Vec<DVector<f64>>,
    },
}

/// Largest dimension for which a full product grid is materialized.
pub const MAX_GRID_DIM: usize = 6;
pub const GRID_THRESHOLDS: usize = 13;
pub const RANDOM_MEMBERS: usize = 2000;

impl RectangleFamily {
    pub fn grid(dim: usize, k: usize, lo: f64, hi: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_GRID_DIM {
            return Err(Error::DimensionTooLarge { got: dim, max: MAX_GRID_DIM });
        }
        if k < 1 || !(hi >= lo) {
            return Err(Error::InvalidArgument("grid needs at least one threshold and lo <= hi".into()));
        }
        let thresholds = if k == 1 {
            vec![lo]
        } else {
            (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
        };
        Ok(RectangleFamily::Grid { dim, thresholds })
    }

    /// `m` upper corners drawn from `N(0, Sigma)`.
    pub fn random(sigma: &DMatrix<f64>, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("empty rectangle family".into()));
        }
        let upper = gaussian_draws(&covariance_factor(sigma), m, rng::derive(seed, &[0xFA41]));
        Ok(RectangleFamily::Listed { dim: sigma.nrows(), lower: None, upper })
    }

    pub fn listed(upper: Vec<DVector<f64>>, lower: Option<Vec<DVector<f64>>>) -> Result<Self> {
        let dim = upper.first().map(|b| b.len()).ok_or_else(|| Error::InvalidArgument("empty rectangle family".into()))?;
        if upper.iter().any(|b| b.len() != dim) || lower.as_ref().is_some_and(|a| a.len() != upper.len() || a.iter().any(|v| v.len() != dim)) {
            return Err(Error::ShapeMismatch("rectangle corners disagree in shape".into()));
        }
        Ok(RectangleFamily::Listed { dim, lower, upper })
    }

    /// Grid of 13 thresholds on `[-3, 3]` for `d <= 3`, otherwise 2000 random corners.
    pub fn default_for(sigma: &DMatrix<f64>, seed: u64) -> Result<Self> {
        let d = sigma.nrows();
        if d <= 3 {
            Self::grid(d, GRID_THRESHOLDS, -3.0, 3.0)
        } else {
            Self::random(sigma, RANDOM_MEMBERS, seed)
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            RectangleFamily::Grid { dim, .. } | RectangleFamily::Listed { dim, .. } => *dim,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            RectangleFamily::Grid { dim, thresholds } => thresholds.len().pow(*dim as u32),
            RectangleFamily::Listed { upper, .. } => upper.len(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RectangleFamily::Grid { .. } => "grid",
            RectangleFamily::Listed { .. } => "listed",
        }
    }

    /// Corners `(lower, upper)` of member `m`.
    pub fn member(&self, m: usize) -> (Option<DVector<f64>>, DVector<f64>) {
        match self {
            RectangleFamily::Grid { dim, thresholds } => {
                let k = thresholds.len();
                let mut rest = m;
                let b = DVector::from_fn(*dim, |_, _| {
                    let t = thresholds[rest % k];
                    rest /= k;
                    t
                });
                (None, b)
            }
            RectangleFamily::Listed { lower, upper, .. } => (lower.as_ref().map(|a| a[m].clone()), upper[m].clone()),
        }
    }

    pub fn contains(&self, m: usize, x: &DVector<f64>) -> bool {
        let (a, b) = self.member(m);
        x.iter().zip(b.iter()).all(|(v, hi)| v <= hi) && a.is_none_or(|a| x.iter().zip(a.iter()).all(|(v, lo)| v >= lo))
    }

    fn restrict(&self, keep: &[usize]) -> Option<RectangleFamily> {
        match self {
            RectangleFamily::Grid { .. } => None,
            RectangleFamily::Listed { dim, lower, upper } => Some(RectangleFamily::Listed {
                dim: *dim,
                lower: lower.as_ref().map(|a| keep.iter().map(|&m| a[m].clone()).collect()),
                upper: keep.iter().map(|&m| upper[m].clone()).collect(),
            }),
        }
    }

    /// First `m` members of a listed family.
    pub fn truncated(&self, m: usize) -> Option<RectangleFamily> {
        self.restrict(&(0..m.min(self.size())).collect::<Vec<_>>())
    }
}

/// Per-sample classification against a family, from which weighted member
/// frequencies can be re-evaluated cheaply.
enum Classified {
    Grid { dim: usize, k: usize, cells: Vec<u32> },
    Listed { members: Vec<Vec<u32>> },
}

fn grid_cell(x: &DVector<f64>, thresholds: &[f64]) -> u32 {
    let base = thresholds.len() + 1;
    let mut cell = 0usize;
    for j in (0..x.len()).rev() {
        let c = thresholds.partition_point(|t| *t < x[j]);
        cell = cell * base + c;
    }
    cell as u32
}

fn classify(family: &RectangleFamily, samples: &[DVector<f64>]) -> Result<Classified> {
    if samples.iter().any(|x| x.len() != family.dim()) {
        return Err(Error::ShapeMismatch("sample dimension differs from the family".into()));
    }
    Ok(match family {
        RectangleFamily::Grid { dim, thresholds } => Classified::Grid {
            dim: *dim,
            k: thresholds.len(),
            cells: samples.par_iter().map(|x| grid_cell(x, thresholds)).collect(),
        },
        RectangleFamily::Listed { .. } => Classified::Listed {
            members: samples
                .par_iter()
                .map(|x| (0..family.size()).filter(|&m| family.contains(m, x)).map(|m| m as u32).collect())
                .collect(),
        },
    })
}

/// Cumulative sums along every axis of a `(k+1)^d` array, turning cell
/// masses into masses of `{x <= b}` for each grid corner.
fn cumulate(acc: &mut [f64], dim: usize, base: usize) {
    let mut stride = 1;
    for _ in 0..dim {
        let block = stride * base;
        for start in (0..acc.len()).step_by(block) {
            for off in 0..stride {
                let mut run = 0.0;
                for c in 0..base {
                    let i = start + off + c * stride;
                    run += acc[i];
                    acc[i] = run;
                }
            }
        }
        stride = block;
    }
}

/// Grid member index for the flat cell index `cell`, if no axis sits in the overflow cell.
fn grid_member(cell: usize, dim: usize, k: usize) -> Option<usize> {
    let base = k + 1;
    let mut rest = cell;
    let mut m = 0;
    let mut scale = 1;
    for _ in 0..dim {
        let c = rest % base;
        if c == k {
            return None;
        }
        rest /= base;
        m += c * scale;
        scale *= k;
    }
    Some(m)
}

/// Weighted member masses `sum_r w_r 1{x_r in R}` for every member.
fn member_masses(family: &RectangleFamily, c: &Classified, w: &[f64]) -> Vec<f64> {
    match c {
        Classified::Grid { dim, k, cells } => {
            let base = k + 1;
            let mut acc = vec![0.0; base.pow(*dim as u32)];
            for (c, w) in cells.iter().zip(w) {
                acc[*c as usize] += w;
            }
            cumulate(&mut acc, *dim, base);
            let mut out = vec![0.0; family.size()];
            for (cell, v) in acc.iter().enumerate() {
                if let Some(m) = grid_member(cell, *dim, *k) {
                    out[m] = *v;
                }
            }
            out
        }
        Classified::Listed { members } => {
            let mut out = vec![0.0; family.size()];
            for (ms, w) in members.iter().zip(w) {
                for &m in ms {
                    out[m as usize] += w;
                }
            }
            out
        }
    }
}

/// Signed member masses `P_p(R) - P_q(R)` under the given sample weights.
/// The two sides are accumulated separately so identical inputs cancel exactly.
fn signed_masses(family: &RectangleFamily, cp: &Classified, wp: &[f64], cq: &Classified, wq: &[f64]) -> Vec<f64> {
    let a = member_masses(family, cp, wp);
    let b = member_masses(family, cq, wq);
    a.iter().zip(&b).map(|(x, y)| x - y).collect()
}

fn argmax_abs(v: &[f64]) -> (usize, f64) {
    v.iter().enumerate().fold((0, 0.0), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
}

/// How standard errors treat the two samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    Independent,
    /// Sample `r` of `p` and of `q` come from one coupled draw.
    Paired,
}

#[derive(Debug, Clone, Serialize)]
pub struct RhoEstimate {
    pub rho_hat: f64,
    pub argmax_member: usize,
    pub argmax_upper: Vec<f64>,
    pub argmax_lower: Option<Vec<f64>>,
    pub stderr_at_argmax: f64,
    pub family_size: usize,
}

/// `max_R |P_p(R) - P_q(R)|` over the family, each sample classified once.
pub fn rho_estimate(p: &[DVector<f64>], q: &[DVector<f64>], family: &RectangleFamily, pairing: Pairing) -> Result<RhoEstimate> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    if pairing == Pairing::Paired && p.len() != q.len() {
        return Err(Error::ShapeMismatch("paired samples must have equal sizes".into()));
    }
    let cp = classify(family, p)?;
    let cq = classify(family, q)?;
    let wp = vec![1.0 / p.len() as f64; p.len()];
    let wq = vec![1.0 / q.len() as f64; q.len()];
    let masses = signed_masses(family, &cp, &wp, &cq, &wq);
    let (m, rho_hat) = argmax_abs(&masses);
    let stderr = member_stderr(family, m, p, q, pairing);
    let (a, b) = family.member(m);
    Ok(RhoEstimate {
        rho_hat,
        argmax_member: m,
        argmax_upper: b.iter().copied().collect(),
        argmax_lower: a.map(|a| a.iter().copied().collect()),
        stderr_at_argmax: stderr,
        family_size: family.size(),
    })
}

fn member_stderr(family: &RectangleFamily, m: usize, p: &[DVector<f64>], q: &[DVector<f64>], pairing: Pairing) -> f64 {
    let hit = |x: &DVector<f64>| family.contains(m, x) as u8 as f64;
    match pairing {
        Pairing::Paired => {
            let mut mo = stats::Moments::default();
            for (x, y) in p.iter().zip(q) {
                mo.push(hit(x) - hit(y));
            }
            mo.estimate(0).stderr
        }
        Pairing::Independent => {
            let pp = p.iter().map(hit).sum::<f64>() / p.len() as f64;
            let pq = q.iter().map(hit).sum::<f64>() / q.len() as f64;
            (pp * (1.0 - pp) / p.len() as f64 + pq * (1.0 - pq) / q.len() as f64).sqrt()
        }
    }
}

/// Which rectangle family a study uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyChoice {
    /// Grid for `d <= 3`, random corners otherwise.
    Auto,
    Grid,
    Random,
}

impl FromStr for FamilyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(FamilyChoice::Auto),
            "grid" => Ok(FamilyChoice::Grid),
            "random" => Ok(FamilyChoice::Random),
            _ => Err(Error::Parse(format!("unknown family {s:?} (auto, grid, random)"))),
        }
    }
}

impl FamilyChoice {
    pub fn build(&self, sigma: &DMatrix<f64>, seed: u64) -> Result<RectangleFamily> {
        match self {
            FamilyChoice::Auto => RectangleFamily::default_for(sigma, seed),
            FamilyChoice::Grid => RectangleFamily::grid(sigma.nrows(), GRID_THRESHOLDS, -3.0, 3.0),
            FamilyChoice::Random => RectangleFamily::random(sigma, RANDOM_MEMBERS, seed),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub rho_hat: f64,
    pub stderr: f64,
    pub main_bound: Option<f64>,
    pub quarter_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateStudy {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `log rho_hat` on `log n`; absent when some `rho_hat` is 0.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// 95% percentile interval from resampling replicates.
    pub slope_ci: Option<(f64, f64)>,
    pub noise_dominated: bool,
    /// `quantile` when sums and Gaussians share uniforms, else `independent`.
    pub coupling: &'static str,
    pub family_kind: &'static str,
    pub family_size: usize,
    pub reps: usize,
    pub b_effective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateStudyConfig {
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub family: FamilyChoice,
    /// Resamples for the slope interval.
    pub ci_resamples: usize,
}

impl Default for RateStudyConfig {
    fn default() -> Self {
        RateStudyConfig { n_grid: (6..=12).map(|k| 1usize << k).collect(), reps: 2000, family: FamilyChoice::Auto, ci_resamples: 200 }
    }
}

/// Inverse distribution function of `Bin(n, 1/2)` as a cumulative table.
fn binomial_half_cdf(n: usize) -> Vec<f64> {
    let ln2 = std::f64::consts::LN_2;
    let lg = |x: f64| libm::lgamma(x);
    let mut acc = 0.0;
    (0..=n)
        .map(|k| {
            acc += (lg(n as f64 + 1.0) - lg(k as f64 + 1.0) - lg((n - k) as f64 + 1.0) - n as f64 * ln2).exp();
            acc
        })
        .collect()
}

fn binomial_quantile(table: &[f64], u: f64) -> usize {
    table.partition_point(|c| *c < u).min(table.len() - 1)
}

fn check_grid(n_grid: &[usize]) -> Result<()> {
    if n_grid.len() < 4 {
        return Err(Error::InvalidArgument("rate study needs at least 4 sample sizes".into()));
    }
    if n_grid[0] < 3 || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("sample sizes must be increasing and at least 3".into()));
    }
    let ratio = (n_grid[1] as f64 / n_grid[0] as f64).ln();
    if n_grid.windows(2).any(|w| ((w[1] as f64 / w[0] as f64).ln() - ratio).abs() > 0.05 * ratio) {
        return Err(Error::InvalidArgument("sample sizes must be geometrically spaced".into()));
    }
    Ok(())
}

/// Empirical Kolmogorov distance between `W` and `N(0, Sigma)` along an
/// `n` grid, with a log-log slope fit.
///
/// Replicate `r` draws one vector of uniforms `U_r`; the Gaussian is
/// `L Phi^{-1}(U_r)`. For Rademacher innovations each coordinate sum is the
/// binomial quantile at `U_r`, and for Gaussian innovations it is
/// `sqrt(n) Phi^{-1}(U_r)`, so both sides share the same randomness. Other
/// laws are simulated directly with nested prefix sums across `n`.
pub fn rate_study(model: &DataModel, cfg: &RateStudyConfig, seed: u64) -> Result<RateStudy> {
    check_grid(&cfg.n_grid)?;
    if cfg.reps < 2 {
        return Err(Error::InvalidArgument("rate study needs at least 2 replicates".into()));
    }
    let d = model.dim;
    let family = cfg.family.build(&model.sigma.sigma, seed)?;
    let l = &model.factor;
    let reps = cfg.reps;
    let uniforms: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut s = rng::stream(seed, &[0x7A7E, r as u64]);
            (0..d).map(|_| s.random_range(f64::MIN_POSITIVE..1.0)).collect()
        })
        .collect();
    let gauss: Vec<DVector<f64>> = uniforms.iter().map(|u| l * DVector::from_iterator(d, u.iter().map(|&p| quantile(p)))).collect();
    let coupled = matches!(model.innovation, Innovation::Rademacher | Innovation::Gaussian);

    let sums: Vec<Vec<DVector<f64>>> = if coupled {
        cfg.n_grid
            .iter()
            .map(|&n| {
                let root = (n as f64).sqrt();
                match model.innovation {
                    Innovation::Rademacher => {
                        let table = binomial_half_cdf(n);
                        uniforms
                            .par_iter()
                            .map(|u| {
                                let s = DVector::from_iterator(d, u.iter().map(|&p| 2.0 * binomial_quantile(&table, p) as f64 - n as f64));
                                l * s / root
                            })
                            .collect()
                    }
                    _ => gauss.clone(),
                }
            })
            .collect()
    } else {
        let n_max = *cfg.n_grid.last().expect("checked non-empty");
        let per_rep: Vec<Vec<DVector<f64>>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut s = rng::stream(seed, &[0x7A7F, r as u64]);
                let mut total = DVector::zeros(d);
                let mut out = Vec::with_capacity(cfg.n_grid.len());
                let mut next = 0;
                for i in 1..=n_max {
                    for v in total.iter_mut() {
                        *v += model.innovation.sample(&mut s);
                    }
                    if i == cfg.n_grid[next] {
                        out.push(l * &total / (i as f64).sqrt());
                        next += 1;
                    }
                }
                out
            })
            .collect();
        (0..cfg.n_grid.len()).map(|k| per_rep.iter().map(|v| v[k].clone()).collect()).collect()
    };

    let cg = classify(&family, &gauss)?;
    let classified: Vec<Classified> = sums.iter().map(|w| classify(&family, w)).collect::<Result<_>>()?;
    let rho_for = |weights: &[f64]| -> Vec<f64> {
        classified.iter().map(|cw| argmax_abs(&signed_masses(&family, cw, weights, &cg, weights)).1).collect()
    };
    let uniform_w = vec![1.0 / reps as f64; reps];
    let rhos = rho_for(&uniform_w);

    let inputs = |n: usize| BoundInputs {
        n: n as f64,
        d: d.max(3) as f64,
        b_scale: model.b_effective,
        alpha_sq: model.sigma.alpha_sq.clamp(f64::MIN_POSITIVE, 1.0),
        beta_sq: model.sigma.beta_sq.clamp(0.0, 1.0),
        ..BoundInputs::default()
    };
    let mut rows = Vec::new();
    for (k, &n) in cfg.n_grid.iter().enumerate() {
        let masses = signed_masses(&family, &classified[k], &uniform_w, &cg, &uniform_w);
        let (m, _) = argmax_abs(&masses);
        rows.push(RateRow {
            n,
            rho_hat: rhos[k],
            stderr: member_stderr(&family, m, &sums[k], &gauss, Pairing::Paired),
            main_bound: bounds::main_bound(&inputs(n)).ok(),
            quarter_rate: bounds::prior_bounds(&inputs(n), model.sigma.sigma_star_sq).quarter_rate,
        });
    }

    let xs: Vec<f64> = cfg.n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let any_zero = rhos.iter().any(|&r| r <= 0.0);
    let weak = rows.iter().filter(|r| r.rho_hat < 3.0 * r.stderr).count();
    let noise_dominated = any_zero || 2 * weak >= rows.len();
    let (slope, intercept, slope_ci) = if any_zero {
        (None, None, None)
    } else {
        let ys: Vec<f64> = rhos.iter().map(|r| r.ln()).collect();
        let (a, s) = linear_fit(&xs, &ys);
        let mut slopes = Vec::with_capacity(cfg.ci_resamples);
        for b in 0..cfg.ci_resamples {
            let mut r = rng::stream(seed, &[0xC1, b as u64]);
            let mut w = vec![0.0; reps];
            for _ in 0..reps {
                w[r.random_range(0..reps)] += 1.0 / reps as f64;
            }
            let rb = rho_for(&w);
            if rb.iter().all(|&v| v > 0.0) {
                let yb: Vec<f64> = rb.iter().map(|v| v.ln()).collect();
                slopes.push(linear_fit(&xs, &yb).1);
            }
        }
        let ci = (!slopes.is_empty()).then(|| (quantile_of(&slopes, 0.025), quantile_of(&slopes, 0.975)));
        (Some(s), Some(a), ci)
    };

    Ok(RateStudy {
        rows,
        slope,
        intercept,
        slope_ci,
        noise_dominated,
        coupling: if coupled { "quantile" } else { "independent" },
        family_kind: family.kind(),
        family_size: family.size(),
        reps,
        b_effective: model.b_effective,
    })
}

/// Median of `||Sigma_n - Sigma||_inf` over `datasets` simulated datasets for each `n`.
pub fn covariance_error_medians(model: &DataModel, n_grid: &[usize], datasets: usize, seed: u64) -> Vec<(usize, f64)> {
    n_grid
        .iter()
        .map(|&n| {
            let errs: Vec<f64> = (0..datasets)
                .into_par_iter()
                .map(|k| {
                    let x = model.simulate_x(n, rng::derive(seed, &[0xD5, n as u64, k as u64]));
                    (empirical_covariance(&x) - &model.sigma.sigma).amax()
                })
                .collect();
            (n, stats::median(&errs))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapStudyConfig {
    pub n: usize,
    pub datasets: usize,
    pub n_boot: usize,
    pub gamma: f64,
    /// Datasets used only to calibrate the covariance-error envelope.
    pub pilot: usize,
    pub family: FamilyChoice,
}

impl Default for BootstrapStudyConfig {
    fn default() -> Self {
        BootstrapStudyConfig { n: 500, datasets: 200, n_boot: 2000, gamma: 0.1, pilot: 50, family: FamilyChoice::Auto }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapDataset {
    pub delta_n_star: f64,
    pub rho_xi_hat: f64,
    pub rho_stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapStudy {
    pub datasets: Vec<BootstrapDataset>,
    /// Constant `C` in the envelope `C B^2 sqrt(log(d / gamma) / n)`.
    pub envelope_constant: f64,
    pub envelope: f64,
    pub exceedance_fraction: f64,
    /// `gamma + 3 sqrt(gamma (1 - gamma) / datasets)`.
    pub exceedance_limit: f64,
    pub rho_xi_quantile: f64,
    pub bootstrap_bound: f64,
    pub bootstrap_bound_vacuous: bool,
    pub b_effective: f64,
}

/// Bootstrap accuracy over many datasets: covariance error against a
/// pilot-calibrated envelope, and distance of `W^xi` from `N(0, Sigma)`.
pub fn bootstrap_study(model: &DataModel, cfg: &BootstrapStudyConfig, seed: u64) -> Result<BootstrapStudy> {
    if cfg.n_boot == 0 || cfg.datasets == 0 || cfg.pilot == 0 {
        return Err(Error::InvalidArgument("n_boot, datasets and pilot must be positive".into()));
    }
    if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
        return Err(Error::InvalidArgument("gamma must lie in (0, 1)".into()));
    }
    if cfg.n < 3 {
        return Err(Error::InvalidArgument("n must be at least 3".into()));
    }
    let d = model.dim as f64;
    let scale = bounds::bootstrap_envelope(cfg.n as f64, d, model.b_effective, cfg.gamma, 1.0);
    let pilot: Vec<f64> = (0..cfg.pilot)
        .into_par_iter()
        .map(|k| {
            let x = model.simulate_x(cfg.n, rng::derive(seed, &[0x9170, k as u64]));
            (empirical_covariance(&x) - &model.sigma.sigma).amax() / scale
        })
        .collect();
    let constant = quantile_of(&pilot, 1.0 - cfg.gamma / 2.0);
    let envelope = constant * scale;
    let family = cfg.family.build(&model.sigma.sigma, seed)?;

    let mut rows = Vec::with_capacity(cfg.datasets);
    for k in 0..cfg.datasets {
        let ds = rng::derive(seed, &[0xB5, k as u64]);
        let x = model.simulate_x(cfg.n, ds);
        let boot = multiplier_bootstrap(&x, &model.sigma.sigma, cfg.n_boot, ds)?;
        let reference = gaussian_draws(&model.factor, cfg.n_boot, rng::derive(ds, &[1]));
        let rho = rho_estimate(&boot.draws, &reference, &family, Pairing::Independent)?;
        rows.push(BootstrapDataset { delta_n_star: boot.delta_n_star, rho_xi_hat: rho.rho_hat, rho_stderr: rho.stderr_at_argmax });
    }
    let exceed = rows.iter().filter(|r| r.delta_n_star > envelope).count() as f64 / rows.len() as f64;
    let rhos: Vec<f64> = rows.iter().map(|r| r.rho_xi_hat).collect();
    let inp = BoundInputs {
        n: cfg.n as f64,
        d: d.max(3.0),
        b_scale: model.b_effective,
        alpha_sq: model.sigma.alpha_sq.clamp(f64::MIN_POSITIVE, 1.0),
        beta_sq: model.sigma.beta_sq.clamp(0.0, 1.0),
        gamma: cfg.gamma,
        ..BoundInputs::default()
    };
    let bb = bounds::bootstrap_bound(&inp)?;
    Ok(BootstrapStudy {
        envelope_constant: constant,
        envelope,
        exceedance_fraction: exceed,
        exceedance_limit: cfg.gamma + 3.0 * (cfg.gamma * (1.0 - cfg.gamma) / rows.len() as f64).sqrt(),
        rho_xi_quantile: quantile_of(&rhos, 1.0 - cfg.gamma),
        bootstrap_bound: bb,
        bootstrap_bound_vacuous: bb > 1.0,
        b_effective: model.b_effective,
        datasets: rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussianComparison {
    pub delta_inf: f64,
    pub rho: RhoEstimate,
}

/// Empirical distance between `N(0, sigma)` and `N(0, sigma1)` with both
/// sides driven by the same standard normal draws.
pub fn compare_gaussians(sigma: &DMatrix<f64>, sigma1: &DMatrix<f64>, family: &RectangleFamily, n: usize, seed: u64) -> Result<GaussianComparison> {
    if sigma.shape() != sigma1.shape() {
        return Err(Error::ShapeMismatch("covariances differ in shape".into()));
    }
    let a = gaussian_draws(&covariance_factor(sigma), n, seed);
    let b = gaussian_draws(&covariance_factor(sigma1), n, seed);
    Ok(GaussianComparison { delta_inf: (sigma1 - sigma).amax(), rho: rho_estimate(&a, &b, family, Pairing::Paired)? })
}

/// Writes a dataset as CSV with header `x1,...,xd`, one row per observation.
pub fn write_dataset(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=x.ncols()).map(|j| format!("x{j}")))?;
    for row in x.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let d = r.headers()?.len();
    let mut data = Vec::new();
    let mut n = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != d {
            return Err(Error::Parse(format!("row {} has {} fields, expected {d}", n + 1, rec.len())));
        }
        for f in rec.iter() {
            data.push(f.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number {f:?} in row {}", n + 1)))?);
        }
        n += 1;
    }
    Ok(DMatrix::from_row_slice(n, d, &data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model(d: usize, rho: f64, innovation: Innovation) -> DataModel {
        DataModel::new(CorrelationModel::equicorrelated(d, rho).unwrap(), innovation)
    }

    #[test]
    fn innovations_have_unit_variance() {
        for inn in [
            Innovation::Rademacher,
            Innovation::UniformPm,
            Innovation::LaplaceUnit,
            Innovation::TruncatedNormal { c: 1.5 },
            Innovation::Gaussian,
        ] {
            let mut r = rng::stream(1, &[]);
            let n = 200_000;
            let mut m = stats::Moments::default();
            for _ in 0..n {
                let v = inn.sample(&mut r);
                m.push(v * v);
                if let Some(b) = inn.max_abs() {
                    assert!(v.abs() <= b + 1e-12);
                }
            }
            let e = m.estimate(0);
            assert!((e.value - 1.0).abs() <= 4.0 * e.stderr, "{inn}: {e:?}");
        }
    }

    #[test]
    fn orlicz_scales_solve_the_defining_equation() {
        assert_abs_diff_eq!(Innovation::Rademacher.orlicz_scale(), 1.0 / 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(Innovation::LaplaceUnit.orlicz_scale(), 2f64.sqrt(), epsilon = 1e-15);
        for inn in [Innovation::UniformPm, Innovation::TruncatedNormal { c: 2.0 }, Innovation::Gaussian, Innovation::Rademacher] {
            let b = inn.orlicz_scale();
            assert_abs_diff_eq!(inn.abs_mgf(1.0 / b), 2.0, epsilon = 1e-9);
        }
        // E e^{|Z|/B} for the standard normal, by a direct Riemann sum.
        let b = Innovation::Gaussian.orlicz_scale();
        let step = 1e-4;
        let direct: f64 = (0..200_000).map(|i| {
            let z = -10.0 + (i as f64 + 0.5) * step;
            (z.abs() / b).exp() * stats::phi(z) * step
        }).sum();
        assert_abs_diff_eq!(direct, 2.0, epsilon = 1e-6);
        let m = model(3, 0.0, Innovation::Rademacher);
        assert_abs_diff_eq!(m.b_effective, 1.0 / 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn innovation_names_round_trip() {
        for s in ["rademacher", "uniform", "laplace", "truncnorm:1.5", "gaussian"] {
            assert_eq!(s.parse::<Innovation>().unwrap().to_string(), s);
        }
        assert!("cauchy".parse::<Innovation>().is_err());
        assert!("truncnorm:-1".parse::<Innovation>().is_err());
    }

    #[test]
    fn sums_have_the_target_covariance() {
        let m = model(3, 0.5, Innovation::Rademacher);
        let w = m.simulate_w(20, 50_000, 3);
        for a in 0..3 {
            for b in 0..3 {
                let mut mo = stats::Moments::default();
                for v in &w {
                    mo.push(v[a] * v[b]);
                }
                let e = mo.estimate(0);
                assert!((e.value - m.sigma.sigma[(a, b)]).abs() <= 4.0 * e.stderr, "{a}{b}: {e:?}");
            }
        }
        let one = m.simulate_w(1, 1, 9);
        assert!(one[0].iter().all(|v| v.is_finite()));
    }

    #[test]
    fn truncation_is_identity_for_bounded_data() {
        let m = model(3, 0.3, Innovation::Rademacher);
        let x = m.simulate_x(200, 5);
        let t = truncate_hat(&m, &x).unwrap();
        assert_eq!(t.truncated_entries, 0);
        assert!(t.w.iter().zip(t.w_hat.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn laplace_truncation_clips_without_recentering() {
        let m = DataModel::new(CorrelationModel::validate_and_normalize(&DMatrix::identity(1, 1)).unwrap(), Innovation::LaplaceUnit);
        let mut x = m.simulate_x(50, 6);
        let kappa = bounds::truncation_params(50.0, 1.0, m.b_effective).unwrap().kappa_n;
        x[(0, 0)] = 3.0 * kappa;
        let t = truncate_hat(&m, &x).unwrap();
        assert_eq!(t.recentering[0], 0.0);
        assert!(t.truncated_entries >= 1);
        let clipped: f64 = x.column(0).iter().map(|&v| if v.abs() <= kappa { v } else { 0.0 }).sum::<f64>() / 50f64.sqrt();
        assert_abs_diff_eq!(t.w_hat[0], clipped, epsilon = 1e-12);
    }

    #[test]
    fn bootstrap_of_constant_data_is_zero() {
        let x = DMatrix::from_fn(10, 2, |_, j| j as f64 + 1.0);
        let b = multiplier_bootstrap(&x, &DMatrix::identity(2, 2), 5, 1).unwrap();
        assert_eq!(b.sigma_n, DMatrix::zeros(2, 2));
        assert!(b.draws.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert_abs_diff_eq!(b.delta_n_star, 1.0);
    }

    #[test]
    fn identical_samples_have_zero_distance() {
        let m = model(2, 0.2, Innovation::Gaussian);
        let s = m.simulate_gaussian(3000, 7);
        let fam = RectangleFamily::default_for(&m.sigma.sigma, 7).unwrap();
        let r = rho_estimate(&s, &s, &fam, Pairing::Paired).unwrap();
        assert_eq!(r.rho_hat, 0.0);
    }

    #[test]
    fn one_dimensional_shift_distance() {
        let mut r = rng::stream(8, &[]);
        let n = 400_000;
        let z: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let p: Vec<DVector<f64>> = z.iter().map(|&v| DVector::from_element(1, v)).collect();
        let q: Vec<DVector<f64>> = z.iter().map(|&v| DVector::from_element(1, v + 0.1)).collect();
        let fam = RectangleFamily::grid(1, 121, -3.0, 3.0).unwrap();
        let e = rho_estimate(&p, &q, &fam, Pairing::Paired).unwrap();
        let want = cdf(0.05) - cdf(-0.05);
        assert_abs_diff_eq!(want, 0.0399, epsilon = 1e-4);
        assert!((e.rho_hat - want).abs() <= 4.0 * e.stderr_at_argmax + 1e-3, "{e:?}");
    }

    #[test]
    fn grid_masses_match_direct_counting() {
        let m = model(3, 0.4, Innovation::Gaussian);
        let p = m.simulate_gaussian(500, 1);
        let q = m.simulate_w(5, 400, 2);
        let fam = RectangleFamily::grid(3, 4, -1.0, 1.0).unwrap();
        let cp = classify(&fam, &p).unwrap();
        let cq = classify(&fam, &q).unwrap();
        let masses = signed_masses(&fam, &cp, &vec![1.0 / 500.0; 500], &cq, &vec![1.0 / 400.0; 400]);
        for mem in 0..fam.size() {
            let fp = p.iter().filter(|x| fam.contains(mem, x)).count() as f64 / 500.0;
            let fq = q.iter().filter(|x| fam.contains(mem, x)).count() as f64 / 400.0;
            assert_abs_diff_eq!(masses[mem], fp - fq, epsilon = 1e-12);
        }
    }

    #[test]
    fn coarser_family_gives_smaller_distance() {
        let m = model(4, 0.3, Innovation::Rademacher);
        let p = m.simulate_w(10, 2000, 1);
        let q = m.simulate_gaussian(2000, 2);
        let fine = RectangleFamily::random(&m.sigma.sigma, 300, 3).unwrap();
        let coarse = fine.truncated(2).unwrap();
        let a = rho_estimate(&p, &q, &fine, Pairing::Independent).unwrap();
        let b = rho_estimate(&p, &q, &coarse, Pairing::Independent).unwrap();
        assert!(b.rho_hat <= a.rho_hat);
    }

    #[test]
    fn binomial_table_is_a_distribution() {
        let t = binomial_half_cdf(64);
        assert_abs_diff_eq!(*t.last().unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(binomial_quantile(&t, 0.5), 32);
        assert_eq!(binomial_quantile(&t, 1e-300), 0);
    }

    #[test]
    fn exact_gaussian_rate_study_is_noise_dominated() {
        let m = model(3, 0.5, Innovation::Gaussian);
        let cfg = RateStudyConfig { n_grid: vec![16, 32, 64, 128], reps: 300, ci_resamples: 10, ..RateStudyConfig::default() };
        let s = rate_study(&m, &cfg, 4).unwrap();
        assert!(s.noise_dominated && s.slope.is_none());
        assert!(rate_study(&m, &RateStudyConfig { n_grid: vec![16, 32, 64], ..cfg.clone() }, 4).is_err());
        assert!(rate_study(&m, &RateStudyConfig { n_grid: vec![16, 32, 64, 500], ..cfg }, 4).is_err());
    }

    #[test]
    fn dataset_csv_round_trip() {
        let m = model(3, 0.1, Innovation::LaplaceUnit);
        let x = m.simulate_x(25, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_dataset(&path, &x).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), x);
    }
}
