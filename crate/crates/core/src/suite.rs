//! Randomized verification checks on polytopes, grouped so that the command
//! line and the integration tests run the same code.
//!
//! Identity checks (divergence, cone disjointness, covariance-discrepancy
//! algebra) are hard: a failure means a bug. Inequalities with an unspecified
//! absolute constant are reported as ratios against the unit-constant form.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::corr::CorrelationModel;
use crate::error::{Error, Result};
use crate::gaussint::{
    aht_bound_rhs, corner_cone_inequality_check, mc_region_measure, nazarov_check, random_symmetric_tensor,
    shifted_grad_integral, shifted_third_integral, vanish_bound_rhs, volume_integral_oracle, CheckRecord,
    DerivativeCoefficient, FaceTable, Region, Tensor3, VanishCoeff, Verdict,
};
use crate::polytope::{ConeTester, Polytope};
use crate::rng::{self, Stream};
use crate::stats::McEstimate;
use crate::stein::{gauss_delta_terms, kernel_delta};

/// Divergence checks pass when the two estimates agree within this many standard errors.
pub const Z_LIMIT: f64 = 4.0;
/// Combined standard error, relative to the coefficient's Frobenius norm,
/// above which an identity check is inconclusive.
pub const WIDE_STDERR: f64 = 0.02;
/// Harness budget for empirical constants.
pub const CONSTANT_BUDGET: f64 = 30.0;
pub const ALGEBRA_TOL: f64 = 1e-9;

fn record(check_id: String, lhs: McEstimate, rhs: f64, ratio: f64, verdict: Verdict) -> CheckRecord {
    CheckRecord { check_id, lhs: lhs.value, lhs_stderr: lhs.stderr, rhs, ratio, n_samples: lhs.n_samples, seed: lhs.seed, verdict }
}

/// A random polytope with `d` constraints, offsets in `[-2, 2]`, and Gaussian
/// measure at least 1%, so that its faces carry mass.
pub fn suite_polytope(d: usize, rng: &mut Stream) -> Result<Polytope> {
    for attempt in 0..100u64 {
        let p = Polytope::random(d, d, 2.0, rng)?;
        let mass = mc_region_measure(&Region::Polytope(&p), &DVector::zeros(d), 4000, attempt)?;
        if mass.value >= 0.01 {
            return Ok(p);
        }
    }
    Err(Error::InvalidArgument(format!("no polytope with visible mass in dimension {d}")))
}

fn random_unit(d: usize, rng: &mut Stream) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize()
}

/// Outcome of comparing one decomposition against the direct estimate.
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeCase {
    pub order: usize,
    pub decomposition: McEstimate,
    pub oracle: McEstimate,
    pub z: f64,
    pub coeff_norm: f64,
    /// `|decomposition| / RHS` of the unit-constant derivative bound.
    pub bound_ratio: f64,
}

impl DerivativeCase {
    pub fn verdict(&self) -> Verdict {
        let se = self.decomposition.stderr.hypot(self.oracle.stderr);
        // A sampled oracle with no observed spread says nothing about its error.
        if self.oracle.stderr == 0.0 || se > WIDE_STDERR * self.coeff_norm.max(1.0) {
            Verdict::Inconclusive
        } else if self.z <= Z_LIMIT {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// Random coefficients of orders 1 to 3: a unit vector, a `+-1` matrix, and a
/// symmetric Gaussian tensor.
pub fn random_coefficients(d: usize, rng: &mut Stream) -> [DerivativeCoefficient; 3] {
    let u = random_unit(d, rng);
    let m = DMatrix::from_fn(d, d, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
    let t = random_symmetric_tensor(d, rng);
    [DerivativeCoefficient::Vector(u), DerivativeCoefficient::Matrix(m), DerivativeCoefficient::Tensor(t)]
}

fn coeff_norm(c: &DerivativeCoefficient) -> f64 {
    match c {
        DerivativeCoefficient::Vector(u) => u.norm(),
        DerivativeCoefficient::Matrix(m) => m.norm(),
        DerivativeCoefficient::Tensor(t) => {
            let d = t.dim;
            let mut s = 0.0;
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        s += t.get(a, b, c).powi(2);
                    }
                }
            }
            s.sqrt()
        }
    }
}

/// Facet decompositions of orders 1 to 3 against the direct estimate, plus
/// their ratios to the unit-constant derivative bounds.
pub fn derivative_cases(p: &Polytope, coeffs: &[DerivativeCoefficient; 3], n: usize, seed: u64) -> Result<Vec<DerivativeCase>> {
    let d = p.dim;
    let zero = DVector::zeros(d);
    let table = FaceTable::build(p, &zero, 3, n, rng::derive(seed, &[1]))?;
    let (alpha, beta) = p.angle_floors();
    let mut out = Vec::with_capacity(3);
    for coeff in coeffs {
        let dec = match coeff {
            DerivativeCoefficient::Vector(u) => table.grad(u),
            DerivativeCoefficient::Matrix(m) => table.hessian(m),
            DerivativeCoefficient::Tensor(t) => table.third(t)?,
        };
        let oracle = volume_integral_oracle(p, coeff, &zero, n, rng::derive(seed, &[2]))?;
        let bound_ratio = match aht_bound_rhs(p, &table.derived, coeff, alpha, beta) {
            Ok(rhs) if rhs > 0.0 => dec.value.abs() / rhs,
            Ok(_) => 0.0,
            // A zero angle floor makes the right-hand side infinite.
            Err(Error::ZeroAngle) => 0.0,
            Err(e) => return Err(e),
        };
        out.push(DerivativeCase { order: coeff.order(), z: dec.z_score(&oracle), decomposition: dec, oracle, coeff_norm: coeff_norm(coeff), bound_ratio });
    }
    Ok(out)
}

/// Number of sampled points lying in two or more outer cones of the same level.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapCount {
    pub level: usize,
    pub cones: usize,
    pub points: usize,
    pub points_in_some_cone: usize,
    pub violations: usize,
}

/// Samples `n` points from `N(0, 4 I)` and counts, per face level, points in
/// more than one outer cone.
pub fn cone_overlaps(p: &Polytope, n: usize, seed: u64) -> Result<Vec<OverlapCount>> {
    let faces = p.faces(3);
    let mut out = Vec::new();
    for level in 1..=3 {
        let testers: Vec<ConeTester> = faces
            .iter()
            .filter(|f| f.level() == level)
            .map(|f| {
                let dirs: Vec<DVector<f64>> = f.indices().iter().map(|&m| p.normals[m].clone()).collect();
                ConeTester::new(p, f, &dirs)
            })
            .collect::<Result<_>>()?;
        let mut r = rng::stream(seed, &[0xC0E, level as u64]);
        let mut x = vec![0.0; p.dim];
        let (mut hit, mut bad) = (0, 0);
        for _ in 0..n {
            for v in x.iter_mut() {
                *v = 2.0 * r.sample::<f64, _>(StandardNormal);
            }
            let k = testers.iter().filter(|t| t.contains(&x)).count();
            hit += (k >= 1) as usize;
            bad += (k >= 2) as usize;
        }
        out.push(OverlapCount { level, cones: testers.len(), points: n, points_in_some_cone: hit, violations: bad });
    }
    Ok(out)
}

/// A point outside the band `A(kappa) \ A(-kappa)` drawn from `N(0, 4 I)` by rejection.
pub fn out_of_band_point(p: &Polytope, kappa: f64, rng: &mut Stream) -> Option<DVector<f64>> {
    for _ in 0..10_000 {
        let x = DVector::from_fn(p.dim, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
        if !p.band_contains(kappa, &x) {
            return Some(x);
        }
    }
    None
}

#[derive(Debug, Clone, Serialize)]
pub struct VanishCase {
    pub order: usize,
    pub kappa: f64,
    pub lhs: McEstimate,
    pub rhs: f64,
}

impl VanishCase {
    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 { self.lhs.value.abs() / self.rhs } else if self.lhs.value == 0.0 { 0.0 } else { f64::INFINITY }
    }

    pub fn within(&self) -> bool {
        self.lhs.value.abs() <= self.rhs + Z_LIMIT * self.lhs.stderr
    }
}

/// Gradient and rank-one third-order integrals recentred at out-of-band points.
pub fn vanish_cases(p: &Polytope, kappas: &[f64], points: usize, n: usize, seed: u64) -> Result<Vec<VanishCase>> {
    let d = p.dim;
    let mut r = rng::stream(seed, &[0x7A4]);
    let mut out = Vec::new();
    for &kappa in kappas {
        for i in 0..points {
            let Some(x) = out_of_band_point(p, kappa, &mut r) else { break };
            let s = rng::derive(seed, &[kappa.to_bits(), i as u64]);
            let u = random_unit(d, &mut r);
            let lhs = shifted_grad_integral(p, &u, &x, n, s)?;
            out.push(VanishCase { order: 1, kappa, lhs, rhs: vanish_bound_rhs(p, kappa, &VanishCoeff::Grad(u)) });
            let (u1, u2, u3) = (random_unit(d, &mut r), random_unit(d, &mut r), random_unit(d, &mut r));
            let lhs = shifted_third_integral(p, &Tensor3::outer(&u1, &u2, &u3), &x, n, s)?;
            out.push(VanishCase { order: 3, kappa, lhs, rhs: vanish_bound_rhs(p, kappa, &VanishCoeff::Rank1Third(u1, u2, u3)) });
        }
    }
    Ok(out)
}

/// Largest disagreement between the bilinear and closed-form discrepancy
/// terms for a random pair of correlation matrices, and between the kernel
/// discrepancy and the closed-form maximum.
pub fn algebra_gap(d: usize, rng: &mut Stream) -> Result<(f64, f64)> {
    let sigma = CorrelationModel::random(d, rng)?;
    let sigma1 = CorrelationModel::random(d, rng)?;
    let terms = gauss_delta_terms(&sigma1.sigma, &sigma.sigma)?;
    let frame = sigma.unit_frame()?;
    let kd = kernel_delta(std::slice::from_ref(&terms.kernel), &frame.normals)?;
    Ok((terms.max_gap, (kd - terms.closed.max_sum()).abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub dim: usize,
    pub suite_size: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { dim: 3, suite_size: 10, samples: 200_000, seed: 0 }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EmpiricalConstants {
    /// Largest `|LHS| / RHS` of the derivative bounds, orders 1 to 3.
    pub derivative_bound: [f64; 3],
    pub vanish_order1: f64,
    pub vanish_order3: f64,
    pub corner: f64,
    pub nazarov: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub checks: Vec<CheckRecord>,
    pub constants: EmpiricalConstants,
    pub hard_failures: usize,
    pub soft_failures: usize,
    pub inconclusive: usize,
}

const NAZAROV_EPS: [f64; 3] = [0.01, 0.05, 0.1];
const VANISH_KAPPAS: [f64; 3] = [1.0, 2.0, 3.0];

/// Runs every check on `suite_size` random polytopes in dimension `dim`.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let d = cfg.dim;
    if !(3..=10).contains(&d) {
        return Err(Error::InvalidArgument(format!("suite dimension must lie in 3..=10, got {d}")));
    }
    let n = cfg.samples.max(1);
    let mut r = rng::stream(cfg.seed, &[0x5017E]);
    let mut checks = Vec::new();
    let mut consts = EmpiricalConstants::default();
    let mut hard = 0;
    let mut soft = 0;

    for i in 0..cfg.suite_size {
        let p = suite_polytope(d, &mut r)?;
        let seed = rng::derive(cfg.seed, &[i as u64]);
        let coeffs = random_coefficients(d, &mut r);
        for c in derivative_cases(&p, &coeffs, n, seed)? {
            let v = c.verdict();
            hard += (v == Verdict::Fail) as usize;
            checks.push(record(format!("divergence/p{i}/order{}", c.order), c.decomposition, c.oracle.value, c.z, v));
            let slot = &mut consts.derivative_bound[c.order - 1];
            *slot = slot.max(c.bound_ratio);
            let bv = if c.bound_ratio <= CONSTANT_BUDGET { Verdict::Pass } else { Verdict::Fail };
            soft += (bv == Verdict::Fail) as usize;
            checks.push(record(format!("derivative-bound/p{i}/order{}", c.order), c.decomposition, f64::NAN, c.bound_ratio, bv));
        }

        for o in cone_overlaps(&p, n.min(100_000), seed)? {
            let v = if o.violations == 0 { Verdict::Pass } else { Verdict::Fail };
            hard += (v == Verdict::Fail) as usize;
            let lhs = McEstimate::exact(o.violations as f64, o.points, seed);
            checks.push(record(format!("disjointness/p{i}/level{}", o.level), lhs, 0.0, o.violations as f64, v));
        }

        let offsets: Vec<f64> = p.offsets.clone();
        for &eps in &NAZAROV_EPS {
            let c = nazarov_check(&p.normals, &offsets, eps, n, seed)?;
            let v = if c.lhs.value <= c.rhs + Z_LIMIT * c.lhs.stderr { Verdict::Pass } else { Verdict::Fail };
            soft += (v == Verdict::Fail) as usize;
            let ratio = c.lhs.value / c.rhs;
            consts.nazarov = consts.nazarov.max(ratio);
            checks.push(record(format!("nazarov/p{i}/eps{eps}"), c.lhs, c.rhs, ratio, v));
        }

        let vanish_n = (n / 10).max(1000);
        for c in vanish_cases(&p, &VANISH_KAPPAS, 5, vanish_n, seed)? {
            let ratio = c.ratio();
            let v = if c.order == 1 {
                consts.vanish_order1 = consts.vanish_order1.max(ratio);
                if c.within() { Verdict::Pass } else { Verdict::Fail }
            } else {
                consts.vanish_order3 = consts.vanish_order3.max(ratio);
                if ratio <= CONSTANT_BUDGET { Verdict::Pass } else { Verdict::Fail }
            };
            soft += (v == Verdict::Fail) as usize;
            checks.push(record(format!("vanish/p{i}/order{}/kappa{}", c.order, c.kappa), c.lhs, c.rhs, ratio, v));
        }

        let (alpha, beta) = p.angle_floors();
        for f in p.faces(3).into_iter().filter(|f| f.level() == 3) {
            let id = format!("corner/p{i}/{f}");
            match corner_cone_inequality_check(&p, &f, alpha, beta, n, seed) {
                Ok(c) if c.applicable => {
                    if c.ratio.is_finite() {
                        consts.corner = consts.corner.max(c.ratio);
                    }
                    checks.push(record(id, c.lhs, c.rhs.value, c.ratio, Verdict::Pass));
                }
                Ok(c) => checks.push(record(id, c.lhs, 0.0, f64::NAN, Verdict::Skipped)),
                Err(Error::ZeroAngle) => checks.push(record(id, McEstimate::exact(0.0, 0, seed), f64::INFINITY, 0.0, Verdict::Skipped)),
                Err(e) => return Err(e),
            }
        }

        let (gap, kgap) = algebra_gap(d, &mut r)?;
        let v = if gap <= ALGEBRA_TOL && kgap <= ALGEBRA_TOL { Verdict::Pass } else { Verdict::Fail };
        hard += (v == Verdict::Fail) as usize;
        checks.push(record(format!("delta-algebra/p{i}"), McEstimate::exact(gap.max(kgap), 0, seed), ALGEBRA_TOL, gap.max(kgap), v));
    }
    let inconclusive = checks.iter().filter(|c| c.verdict == Verdict::Inconclusive).count();
    Ok(SuiteReport { checks, constants: consts, hard_failures: hard, soft_failures: soft, inconclusive })
}
