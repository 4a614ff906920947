//! Gaussian measures of polytopes and of their faces, and the facet/ridge/corner
//! decompositions of `int_A <coeff, D^r phi_d>` for `r = 1, 2, 3`.
//!
//! A face `F` cut out by active constraints `S` has the affine hull
//! `{x : v_m . x = b_m, m in S}` with foot point `x0` (closest to the origin).
//! Along the hull, `phi_d(x0 + y) = (2 pi)^{-r/2} exp(-|x0|^2 / 2) phi_{d-r}(y)`, so
//!
//! ```text
//! int_F phi_d = (2 pi)^{-r/2} exp(-|x0|^2 / 2) * P(x0 + P g satisfies the other constraints)
//! ```
//!
//! where `P` projects onto the orthogonal complement of `span{v_m : m in S}` and
//! `g ~ N(0, I_d)`. Only the last probability is sampled.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::polytope::{dot, orthonormal_basis, ConeTester, DerivedNormals, FacetIndex, Polytope};
use crate::rng::{self, chunked_moments};
use crate::stats::{phi, McEstimate};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Dense `d x d x d` tensor, row-major in `(a, b, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Tensor3 { dim, data: vec![0.0; dim * dim * dim] }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dim);
        for a in 0..dim {
            for b in 0..dim {
                for c in 0..dim {
                    t.data[(a * dim + b) * dim + c] = f(a, b, c);
                }
            }
        }
        t
    }

    /// `u (x) v (x) w`.
    pub fn outer(u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> Self {
        Self::from_fn(u.len(), |a, b, c| u[a] * v[b] * w[c])
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.dim + b) * self.dim + c]
    }

    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.dim + b) * self.dim + c] = v;
    }

    /// `T(x, y, z) = sum T_abc x_a y_b z_c`.
    pub fn contract(&self, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for a in 0..d {
            if x[a] == 0.0 {
                continue;
            }
            let mut sa = 0.0;
            for b in 0..d {
                if y[b] == 0.0 {
                    continue;
                }
                let row = &self.data[(a * d + b) * d..(a * d + b + 1) * d];
                sa += y[b] * dot(row, z);
            }
            s += x[a] * sa;
        }
        s
    }

    /// Matrix `T(x, ., .)`.
    pub fn first_slot(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |b, c| (0..d).map(|a| x[a] * self.get(a, b, c)).sum())
    }

    /// `t_a = sum_b (T_abb + T_bab + T_bba)`, the trace vector entering the
    /// third Hermite contraction.
    pub fn trace_vector(&self) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|a| (0..d).map(|b| self.get(a, b, b) + self.get(b, a, b) + self.get(b, b, a)).sum())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }
}

/// Coefficient contracted against `D^r phi_d`.
#[derive(Debug, Clone, PartialEq)]
pub enum DerivativeCoefficient {
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
    Tensor(Tensor3),
}

impl DerivativeCoefficient {
    pub fn order(&self) -> usize {
        match self {
            DerivativeCoefficient::Vector(_) => 1,
            DerivativeCoefficient::Matrix(_) => 2,
            DerivativeCoefficient::Tensor(_) => 3,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DerivativeCoefficient::Vector(u) => u.len(),
            DerivativeCoefficient::Matrix(m) => m.nrows(),
            DerivativeCoefficient::Tensor(t) => t.dim,
        }
    }
}

/// Integral of `phi_d` over one face, with the foot point of its affine hull.
#[derive(Debug, Clone)]
pub struct FaceValue {
    pub estimate: McEstimate,
    pub foot: DVector<f64>,
}

/// Sampling plan for one face: the remaining constraints expressed in an
/// orthonormal basis of the hull's direction space.
struct FacePlan {
    density: f64,
    /// Each row: coordinates of `P v_m` in the complement basis, then the slack.
    rows: Vec<(Vec<f64>, f64)>,
    /// False when a constraint with `P v_m = 0` is violated at the foot point.
    feasible: bool,
}

fn face_plan(p: &Polytope, f: &FacetIndex) -> Result<(FacePlan, DVector<f64>)> {
    let active = f.indices();
    for &m in active {
        if !p.offsets[m].is_finite() {
            return Err(Error::InfiniteOffset(m));
        }
    }
    let d = p.dim;
    let r = active.len();
    let span = orthonormal_basis(active.iter().map(|&m| &p.normals[m]))?;
    let foot = p.hull_foot(f)?;
    // Complete the span to an orthonormal basis of R^d.
    let mut comp: Vec<DVector<f64>> = Vec::with_capacity(d - r);
    for i in 0..d {
        if comp.len() == d - r {
            break;
        }
        let mut w = DVector::from_fn(d, |a, _| if a == i { 1.0 } else { 0.0 });
        for _ in 0..2 {
            for e in span.iter().chain(comp.iter()) {
                w -= e * e.dot(&w);
            }
        }
        let n = w.norm();
        if n > 1e-6 {
            comp.push(w / n);
        }
    }
    let log_density = -0.5 * r as f64 * LN_2PI - 0.5 * foot.norm_squared();
    let mut rows = Vec::new();
    let mut feasible = true;
    for m in 0..p.n_constraints() {
        if active.contains(&m) || !p.offsets[m].is_finite() {
            continue;
        }
        let slack = p.offsets[m] - p.normals[m].dot(&foot);
        let coords: Vec<f64> = comp.iter().map(|e| e.dot(&p.normals[m])).collect();
        if coords.iter().all(|c| c.abs() < 1e-12) {
            if slack < 0.0 {
                feasible = false;
            }
            continue;
        }
        rows.push((coords, slack));
    }
    Ok((FacePlan { density: log_density.exp(), rows, feasible }, foot))
}

fn face_path(f: &FacetIndex) -> Vec<u64> {
    let mut path = vec![0xFACE, f.level() as u64];
    path.extend(f.indices().iter().map(|&i| i as u64));
    path
}

/// `int_F phi_d` over the face `f` of `p` (no shift; translate first).
pub fn face_integral(p: &Polytope, f: &FacetIndex, n: usize, seed: u64) -> Result<FaceValue> {
    let (plan, foot) = face_plan(p, f)?;
    let k = p.dim - f.level();
    let estimate = if !plan.feasible || plan.density == 0.0 {
        McEstimate::exact(0.0, n, seed)
    } else if plan.rows.is_empty() {
        McEstimate::exact(plan.density, n, seed)
    } else if k == 0 {
        let inside = plan.rows.iter().all(|(_, s)| *s >= 0.0);
        McEstimate::exact(if inside { plan.density } else { 0.0 }, n, seed)
    } else {
        let rows = &plan.rows;
        let m = chunked_moments(
            n,
            seed,
            &face_path(f),
            || vec![0.0; k],
            |g, rng| {
                for x in g.iter_mut() {
                    *x = rng.sample(StandardNormal);
                }
                if rows.iter().all(|(a, s)| dot(a, g) <= *s) { 1.0 } else { 0.0 }
            },
        );
        m.estimate(seed).scaled(plan.density)
    };
    Ok(FaceValue { estimate, foot })
}

/// `int_{F_j} phi_d(z - shift) dH^{d-1}`.
pub fn facet_surface_integral(a: &Polytope, j: usize, shift: &DVector<f64>, n: usize, seed: u64) -> Result<McEstimate> {
    if !a.offsets[j].is_finite() {
        return Err(Error::InfiniteOffset(j));
    }
    Ok(face_integral(&a.translate(shift), &FacetIndex::facet(j), n, seed)?.estimate)
}

/// `int_F phi_d(z - shift)` over a ridge or corner `F`.
pub fn ridge_surface_integral(a: &Polytope, f: &FacetIndex, shift: &DVector<f64>, n: usize, seed: u64) -> Result<McEstimate> {
    Ok(face_integral(&a.translate(shift), f, n, seed)?.estimate)
}

/// Face integrals of a translated polytope, shared by the three decompositions.
#[derive(Debug, Clone)]
pub struct FaceTable {
    /// The polytope as seen from the shift point.
    pub poly: Polytope,
    pub derived: DerivedNormals,
    pub faces: BTreeMap<FacetIndex, FaceValue>,
    pub n_samples: usize,
    pub seed: u64,
}

impl FaceTable {
    /// Integrates every face up to `max_level` of `a` translated by `shift`.
    pub fn build(a: &Polytope, shift: &DVector<f64>, max_level: usize, n: usize, seed: u64) -> Result<Self> {
        let poly = a.translate(shift);
        let list = poly.faces(max_level);
        let values = list
            .par_iter()
            .map(|f| face_integral(&poly, f, n, seed))
            .collect::<Result<Vec<_>>>()?;
        let faces = list.into_iter().zip(values).collect();
        let derived = poly.derived_normals();
        Ok(FaceTable { poly, derived, faces, n_samples: n, seed })
    }

    pub fn get(&self, f: &FacetIndex) -> Option<&FaceValue> {
        self.faces.get(f)
    }

    /// `sum_F c_F int_F phi` with per-face standard errors added in quadrature.
    pub fn combine(&self, coef: &BTreeMap<FacetIndex, f64>) -> McEstimate {
        let mut value = 0.0;
        let mut var = 0.0;
        for (f, c) in coef {
            if let Some(fv) = self.faces.get(f) {
                value += c * fv.estimate.value;
                var += (c * fv.estimate.stderr).powi(2);
            }
        }
        McEstimate { value, stderr: var.sqrt(), n_samples: self.n_samples, seed: self.seed }
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize, &DVector<f64>, FacetIndex)> + '_ {
        self.derived.pair.iter().filter_map(|(&(j, k), w)| {
            let f = FacetIndex::ridge(j, k).ok()?;
            self.faces.contains_key(&f).then_some((j, k, w, f))
        })
    }

    /// `sum_j (u . v_j) int_{F_j} phi`.
    pub fn grad(&self, u: &DVector<f64>) -> McEstimate {
        self.combine(&self.grad_coefficients(u, 1.0))
    }

    pub fn grad_coefficients(&self, u: &DVector<f64>, scale: f64) -> BTreeMap<FacetIndex, f64> {
        let mut coef = BTreeMap::new();
        self.add_grad(&mut coef, u, scale);
        coef
    }

    pub fn add_grad(&self, coef: &mut BTreeMap<FacetIndex, f64>, u: &DVector<f64>, scale: f64) {
        for j in self.poly.finite() {
            *coef.entry(FacetIndex::facet(j)).or_insert(0.0) += scale * u.dot(&self.poly.normals[j]);
        }
    }

    /// Facet terms `(v_j' M v_j)(-b_j) int_{F_j} phi` plus ridge terms
    /// `(v_j' M v_jk) int_{F_jk} phi` over ordered pairs.
    pub fn hessian(&self, m: &DMatrix<f64>) -> McEstimate {
        let mut coef = BTreeMap::new();
        self.add_hessian(&mut coef, m, 1.0);
        self.combine(&coef)
    }

    pub fn add_hessian(&self, coef: &mut BTreeMap<FacetIndex, f64>, m: &DMatrix<f64>, scale: f64) {
        let p = &self.poly;
        for j in p.finite() {
            let v = &p.normals[j];
            *coef.entry(FacetIndex::facet(j)).or_insert(0.0) += -scale * p.offsets[j] * v.dot(&(m * v));
        }
        for (j, _k, w, f) in self.pairs() {
            *coef.entry(f).or_insert(0.0) += scale * p.normals[j].dot(&(m * w));
        }
    }

    /// Facet, ridge and corner terms for a third-order coefficient.
    ///
    /// On `F_j` the second normal derivative of `phi` is `(b_j^2 - 1) phi`; on
    /// `F_jk` the derivatives along `v_j` and `v_jk` are `-b_j phi` and
    /// `-c_jk phi`, with `c_jk = v_jk . x0` constant on the hull.
    pub fn third(&self, t: &Tensor3) -> Result<McEstimate> {
        let p = &self.poly;
        let mut coef = BTreeMap::new();
        for j in p.finite() {
            let v = p.normals[j].as_slice();
            let b = p.offsets[j];
            *coef.entry(FacetIndex::facet(j)).or_insert(0.0) += t.contract(v, v, v) * (b * b - 1.0);
        }
        for (j, _k, w, f) in self.pairs() {
            let v = p.normals[j].as_slice();
            let w = w.as_slice();
            let b = p.offsets[j];
            let c = dot(w, self.faces[&f].foot.as_slice());
            let val = -b * (t.contract(v, v, w) + t.contract(v, w, v)) - c * t.contract(v, w, w);
            *coef.entry(f).or_insert(0.0) += val;
        }
        for f in self.faces.keys().filter(|f| f.level() == 3) {
            let idx = f.indices();
            for (j, k, l) in permutations3(idx[0], idx[1], idx[2]) {
                let vjk = self.derived.pair.get(&(j, k));
                let vjkl = self.derived.triple.get(&(j, k, l));
                let (Some(vjk), Some(vjkl)) = (vjk, vjkl) else {
                    return Err(Error::MissingTripleNormal(j, k, l));
                };
                let val = t.contract(p.normals[j].as_slice(), vjk.as_slice(), vjkl.as_slice());
                *coef.entry(f.clone()).or_insert(0.0) += val;
            }
        }
        Ok(self.combine(&coef))
    }
}

fn permutations3(a: usize, b: usize, c: usize) -> [(usize, usize, usize); 6] {
    [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
}

/// `int_A <u, D phi_d(z - shift)> dz` through the facet decomposition.
pub fn grad_integral(a: &Polytope, u: &DVector<f64>, shift: &DVector<f64>, n: usize, seed: u64) -> Result<McEstimate> {
    Ok(FaceTable::build(a, shift, 1, n, seed)?.grad(u))
}

/// `int_A <M, D^2 phi_d> dz` through facet and ridge terms.
pub fn hessian_integral(a: &Polytope, m: &DMatrix<f64>, n: usize, seed: u64) -> Result<McEstimate> {
    shifted_hessian_integral(a, m, &DVector::zeros(a.dim), n, seed)
}

pub fn shifted_hessian_integral(a: &Polytope, m: &DMatrix<f64>, x: &DVector<f64>, n: usize, seed: u64) -> Result<McEstimate> {
    Ok(FaceTable::build(a, x, 2, n, seed)?.hessian(m))
}

/// `int_A <T, D^3 phi_d> dz` through facet, ridge and corner terms.
pub fn third_integral(a: &Polytope, t: &Tensor3, n: usize, seed: u64) -> Result<McEstimate> {
    shifted_third_integral(a, t, &DVector::zeros(a.dim), n, seed)
}

/// Same as [`grad_integral`] with the density recentred at `x`.
pub fn shifted_grad_integral(a: &Polytope, u: &DVector<f64>, x: &DVector<f64>, n: usize, seed: u64) -> Result<McEstimate> {
    grad_integral(a, u, x, n, seed)
}

pub fn shifted_third_integral(a: &Polytope, t: &Tensor3, x: &DVector<f64>, n: usize, seed: u64) -> Result<McEstimate> {
    FaceTable::build(a, x, 3, n, seed)?.third(t)
}

/// Direct estimate `E[1_A(Z + shift) h(Z)]` with `h` the Hermite contraction
/// `D^r phi / phi` against the coefficient.
pub fn volume_integral_oracle(
    a: &Polytope,
    coeff: &DerivativeCoefficient,
    shift: &DVector<f64>,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    let d = a.dim;
    if coeff.dim() != d || shift.len() != d {
        return Err(Error::ShapeMismatch("coefficient and polytope dimensions differ".into()));
    }
    let poly = a.translate(shift);
    let fin = poly.finite();
    let normals: Vec<&[f64]> = fin.iter().map(|&j| poly.normals[j].as_slice()).collect();
    let offsets: Vec<f64> = fin.iter().map(|&j| poly.offsets[j]).collect();
    let inside = |z: &[f64]| normals.iter().zip(&offsets).all(|(v, b)| dot(v, z) <= *b);
    let path = [0x0AC1E, coeff.order() as u64];
    let m = match coeff {
        DerivativeCoefficient::Vector(u) => {
            let u = u.as_slice();
            chunked_moments(n, seed, &path, || vec![0.0; d], |z, r| {
                fill_normal(z, r);
                if inside(z) { -dot(u, z) } else { 0.0 }
            })
        }
        DerivativeCoefficient::Matrix(mat) => {
            let tr = mat.trace();
            let flat: Vec<f64> = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| mat[(i, j)]).collect();
            chunked_moments(n, seed, &path, || vec![0.0; d], |z, r| {
                fill_normal(z, r);
                if !inside(z) {
                    return 0.0;
                }
                let q: f64 = (0..d).map(|i| z[i] * dot(&flat[i * d..(i + 1) * d], z)).sum();
                q - tr
            })
        }
        DerivativeCoefficient::Tensor(t) => {
            let tv = t.trace_vector();
            chunked_moments(n, seed, &path, || vec![0.0; d], |z, r| {
                fill_normal(z, r);
                if !inside(z) {
                    return 0.0;
                }
                -(t.contract(z, z, z) - dot(&tv, z))
            })
        }
    };
    Ok(m.estimate(seed))
}

fn fill_normal(z: &mut [f64], r: &mut rng::Stream) {
    for x in z.iter_mut() {
        *x = r.sample(StandardNormal);
    }
}

/// Regions whose standard Gaussian measure can be sampled.
#[derive(Debug, Clone)]
pub enum Region<'a> {
    Polytope(&'a Polytope),
    /// `A(kappa) \ A(-kappa)`.
    Band(&'a Polytope, f64),
    /// Outer cone `S_F` along the active normals.
    Cone(&'a Polytope, FacetIndex),
    /// Cone along caller-supplied directions.
    Wedge(&'a Polytope, FacetIndex, Vec<DVector<f64>>),
}

/// `P(Z + shift in region)` for `Z ~ N(0, I_d)`.
pub fn mc_region_measure(region: &Region<'_>, shift: &DVector<f64>, n: usize, seed: u64) -> Result<McEstimate> {
    let (poly, tag) = match region {
        Region::Polytope(p) => (*p, 1u64),
        Region::Band(p, _) => (*p, 2),
        Region::Cone(p, _) => (*p, 3),
        Region::Wedge(p, _, _) => (*p, 4),
    };
    let d = poly.dim;
    let sh = shift.as_slice().to_vec();
    let fin = poly.finite();
    let normals: Vec<&[f64]> = fin.iter().map(|&j| poly.normals[j].as_slice()).collect();
    let offsets: Vec<f64> = fin.iter().map(|&j| poly.offsets[j]).collect();
    let excess = |x: &[f64]| {
        normals.iter().zip(&offsets).map(|(v, b)| dot(v, x) - b).fold(f64::NEG_INFINITY, f64::max)
    };
    let tester = match region {
        Region::Cone(p, f) => {
            let dirs: Vec<DVector<f64>> = f.indices().iter().map(|&m| p.normals[m].clone()).collect();
            Some(ConeTester::new(p, f, &dirs)?)
        }
        Region::Wedge(p, f, dirs) => {
            p.check_directions(f, dirs)?;
            Some(ConeTester::new(p, f, dirs)?)
        }
        _ => None,
    };
    let test = |x: &[f64]| -> bool {
        match region {
            Region::Polytope(_) => excess(x) <= 0.0,
            Region::Band(_, k) => {
                let e = excess(x);
                e <= *k && e > -*k
            }
            _ => tester.as_ref().is_some_and(|t| t.contains(x)),
        }
    };
    let m = chunked_moments(n, seed, &[0x5E61, tag], || vec![0.0; d], |z, r| {
        for (x, s) in z.iter_mut().zip(&sh) {
            *x = r.sample::<f64, _>(StandardNormal) + s;
        }
        if test(z) { 1.0 } else { 0.0 }
    });
    Ok(m.estimate(seed))
}

fn ln_dim(d: usize) -> f64 {
    (d as f64).ln()
}

/// Right-hand sides of the polytope derivative bounds with unit constant.
///
/// Order 1: `sqrt(log d) max_j |u . v_j|`. Order 2: `log d` times the largest
/// `|v_j' M v_j| + |v_j' M v_jk| + |v_jk' M v_jk|`. Order 3:
/// `(log d)^{3/2} / (alpha beta)` times the largest `|T(v1, v2, v3)|` with
/// `v1` a normal, `v2` a normal or pair conormal, `v3` any of the three kinds.
pub fn aht_bound_rhs(
    a: &Polytope,
    derived: &DerivedNormals,
    coeff: &DerivativeCoefficient,
    alpha_angle: f64,
    beta_angle: f64,
) -> Result<f64> {
    let d = a.dim;
    let fin = a.finite();
    let v1: Vec<&DVector<f64>> = fin.iter().map(|&j| &a.normals[j]).collect();
    match coeff {
        DerivativeCoefficient::Vector(u) => {
            let mx = v1.iter().map(|v| u.dot(v).abs()).fold(0.0, f64::max);
            Ok(ln_dim(d).sqrt() * mx)
        }
        DerivativeCoefficient::Matrix(m) => {
            let diag = |v: &DVector<f64>| v.dot(&(m * v)).abs();
            let mut mx = v1.iter().map(|v| diag(v)).fold(0.0, f64::max);
            for (&(j, _), w) in &derived.pair {
                let v = &a.normals[j];
                mx = mx.max(diag(v) + v.dot(&(m * w)).abs() + diag(w));
            }
            Ok(ln_dim(d) * mx)
        }
        DerivativeCoefficient::Tensor(t) => {
            if !(alpha_angle > 0.0 && beta_angle > 0.0) {
                return Err(Error::ZeroAngle);
            }
            let v2: Vec<&DVector<f64>> = v1.iter().copied().chain(derived.pair.values()).collect();
            let v3: Vec<&DVector<f64>> = v2.iter().copied().chain(derived.triple.values()).collect();
            let mut mx: f64 = 0.0;
            for x in &v1 {
                let tm = t.first_slot(x.as_slice());
                for y in &v2 {
                    let row = tm.transpose() * *y;
                    for z in &v3 {
                        mx = mx.max(row.dot(z).abs());
                    }
                }
            }
            Ok(ln_dim(d).powf(1.5) / (alpha_angle * beta_angle) * mx)
        }
    }
}

/// Coefficient forms accepted by [`vanish_bound_rhs`].
#[derive(Debug, Clone)]
pub enum VanishCoeff {
    Grad(DVector<f64>),
    Rank1Third(DVector<f64>, DVector<f64>, DVector<f64>),
}

/// Right-hand side for integrals recentred outside the band `A(kappa) \ A(-kappa)`.
///
/// The facet count `m` (finite constraints) plays the role of the dimension:
/// order 1 gives `m phi(kappa) max_j |u . v_j|`, and the third-order form
/// `m^3 exp(-kappa^2 / 4)` times the product of the largest projections.
pub fn vanish_bound_rhs(a: &Polytope, kappa: f64, coeff: &VanishCoeff) -> f64 {
    let fin = a.finite();
    let m = fin.len() as f64;
    let v1: Vec<&DVector<f64>> = fin.iter().map(|&j| &a.normals[j]).collect();
    let best = |u: &DVector<f64>, set: &[&DVector<f64>]| set.iter().map(|v| u.dot(v).abs()).fold(0.0, f64::max);
    match coeff {
        VanishCoeff::Grad(u) => m * phi(kappa) * best(u, &v1),
        VanishCoeff::Rank1Third(u1, u2, u3) => {
            let dn = a.derived_normals();
            let v2: Vec<&DVector<f64>> = v1.iter().copied().chain(dn.pair.values()).collect();
            let v3: Vec<&DVector<f64>> = v2.iter().copied().chain(dn.triple.values()).collect();
            m.powi(3) * (-kappa * kappa / 4.0).exp() * best(u1, &v1) * best(u2, &v2) * best(u3, &v3)
        }
    }
}

/// Band probability against the anti-concentration bound.
#[derive(Debug, Clone, Serialize)]
pub struct NazarovCheck {
    pub lhs: McEstimate,
    pub rhs: f64,
    /// Smallest normal length; the bound is divided by it.
    pub sigma_floor: f64,
}

impl NazarovCheck {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs.value
    }
}

/// `P(max_j (w_j . Z - b_j) in (0, eps])` against `eps (sqrt(2 log m) + 2) / min_j |w_j|`.
/// Normals need not be unit vectors.
pub fn nazarov_check(normals: &[DVector<f64>], offsets: &[f64], eps: f64, n: usize, seed: u64) -> Result<NazarovCheck> {
    if normals.is_empty() || normals.len() != offsets.len() {
        return Err(Error::ShapeMismatch("normals and offsets differ in length".into()));
    }
    let d = normals[0].len();
    let sigma_floor = normals.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    if !(sigma_floor > 0.0) {
        return Err(Error::InvalidArgument("zero normal".into()));
    }
    let m = normals.len() as f64;
    let rhs = eps * ((2.0 * m.ln().max(0.0)).sqrt() + 2.0) / sigma_floor;
    if eps <= 0.0 {
        return Ok(NazarovCheck { lhs: McEstimate::exact(0.0, n, seed), rhs, sigma_floor });
    }
    let flat: Vec<&[f64]> = normals.iter().map(|v| v.as_slice()).collect();
    let lhs = chunked_moments(n, seed, &[0x4A2A], || vec![0.0; d], |z, r| {
        fill_normal(z, r);
        let e = flat.iter().zip(offsets).map(|(v, b)| dot(v, z) - b).fold(f64::NEG_INFINITY, f64::max);
        if e > 0.0 && e <= eps { 1.0 } else { 0.0 }
    })
    .estimate(seed);
    Ok(NazarovCheck { lhs, rhs, sigma_floor })
}

/// Corner integral against the Gaussian measure of its outer cone.
#[derive(Debug, Clone, Serialize)]
pub struct CornerCheck {
    pub applicable: bool,
    pub distance: f64,
    pub lhs: McEstimate,
    pub rhs: McEstimate,
    pub ratio: f64,
}

/// `int_{F_jkl} phi_d` versus `(log d)^{3/2} / (alpha beta) * gamma_d(S_jkl)`.
/// Skipped when the corner's hull is farther than `sqrt(6 log d)` from the origin.
pub fn corner_cone_inequality_check(
    a: &Polytope,
    f: &FacetIndex,
    alpha_angle: f64,
    beta_angle: f64,
    n: usize,
    seed: u64,
) -> Result<CornerCheck> {
    if f.level() != 3 {
        return Err(Error::InvalidArgument("corner check needs a level-3 face".into()));
    }
    if !(alpha_angle > 0.0 && beta_angle > 0.0) {
        return Err(Error::ZeroAngle);
    }
    let d = a.dim;
    let distance = a.hull_foot(f)?.norm();
    let zero = McEstimate::exact(0.0, n, seed);
    if distance > (6.0 * ln_dim(d)).sqrt() {
        return Ok(CornerCheck { applicable: false, distance, lhs: zero, rhs: zero, ratio: f64::NAN });
    }
    let lhs = face_integral(a, f, n, seed)?.estimate;
    let cone = mc_region_measure(&Region::Cone(a, f.clone()), &DVector::zeros(d), n, seed)?;
    let rhs = cone.scaled(ln_dim(d).powf(1.5) / (alpha_angle * beta_angle));
    let ratio = if rhs.value > 0.0 { lhs.value / rhs.value } else { f64::INFINITY };
    Ok(CornerCheck { applicable: true, distance, lhs, rhs, ratio })
}

/// One line of a verification report.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub check_id: String,
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
    Skipped,
}

/// Random symmetric tensor with iid standard normal entries before symmetrization.
pub fn random_symmetric_tensor<R: Rng>(d: usize, rng: &mut R) -> Tensor3 {
    let raw = Tensor3::from_fn(d, |_, _, _| rng.sample(StandardNormal));
    Tensor3::from_fn(d, |a, b, c| {
        (raw.get(a, b, c) + raw.get(a, c, b) + raw.get(b, a, c) + raw.get(b, c, a) + raw.get(c, a, b) + raw.get(c, b, a))
            / 6.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const PHI0: f64 = 0.398_942_280_401_432_7;

    fn e(d: usize, j: usize) -> DVector<f64> {
        DVector::from_fn(d, |i, _| if i == j { 1.0 } else { 0.0 })
    }

    fn zero(d: usize) -> DVector<f64> {
        DVector::zeros(d)
    }

    fn within(est: &McEstimate, target: f64, k: f64) {
        let tol = k * est.stderr + 1e-12;
        assert!((est.value - target).abs() <= tol, "{} vs {} (stderr {})", est.value, target, est.stderr);
    }

    #[test]
    fn region_measures() {
        let h = Polytope::half_space(3, 0.0);
        within(&mc_region_measure(&Region::Polytope(&h), &zero(3), 20_000, 1).unwrap(), 0.5, 4.0);
        let o = Polytope::orthant(3, 0.0);
        within(&mc_region_measure(&Region::Polytope(&o), &zero(3), 20_000, 2).unwrap(), 0.125, 4.0);
        let f = FacetIndex::ridge(0, 1).unwrap();
        within(&mc_region_measure(&Region::Cone(&o, f), &zero(3), 20_000, 3).unwrap(), 0.125, 4.0);
    }

    #[test]
    fn facet_values_on_orthant() {
        let o = Polytope::orthant(3, 0.0);
        within(&facet_surface_integral(&o, 0, &zero(3), 50_000, 4).unwrap(), PHI0 / 4.0, 4.0);
        let h = Polytope::half_space(3, 0.0);
        let full = facet_surface_integral(&h, 0, &zero(3), 1000, 4).unwrap();
        assert_abs_diff_eq!(full.value, PHI0, epsilon = 1e-15);
        assert_eq!(full.stderr, 0.0);
        let far = facet_surface_integral(&o, 0, &DVector::from_column_slice(&[10.0, 0.0, 0.0]), 1000, 4).unwrap();
        assert!(far.value <= phi(10.0));
        assert_eq!(facet_surface_integral(&h, 1, &zero(3), 1000, 4), Err(Error::InfiniteOffset(1)));
    }

    #[test]
    fn ridge_and_corner_values_on_orthant() {
        let o = Polytope::orthant(3, 0.0);
        let r = ridge_surface_integral(&o, &FacetIndex::ridge(0, 1).unwrap(), &zero(3), 50_000, 5).unwrap();
        within(&r, PHI0 * PHI0 / 2.0, 4.0);
        let c = ridge_surface_integral(&o, &FacetIndex::corner(0, 1, 2).unwrap(), &zero(3), 10, 5).unwrap();
        assert_abs_diff_eq!(c.value, PHI0.powi(3), epsilon = 1e-15);
        let deep = Polytope::orthant(3, -6.0);
        let c = ridge_surface_integral(&deep, &FacetIndex::corner(0, 1, 2).unwrap(), &zero(3), 10, 5).unwrap();
        assert!(c.value <= phi(6.0).powi(3) * (1.0 + 1e-12));
    }

    #[test]
    fn grad_decomposition_examples() {
        let o = Polytope::orthant(3, 0.0);
        within(&grad_integral(&o, &e(3, 0), &zero(3), 50_000, 6).unwrap(), PHI0 / 4.0, 4.0);
        let ones = DVector::from_element(3, 1.0);
        within(&grad_integral(&o, &ones, &zero(3), 50_000, 6).unwrap(), 3.0 * PHI0 / 4.0, 4.0);
        let h = Polytope::half_space(3, 0.0);
        assert_eq!(grad_integral(&h, &e(3, 1), &zero(3), 1000, 6).unwrap().value, 0.0);
        let shifted = shifted_grad_integral(&h, &e(3, 0), &DVector::from_column_slice(&[2.0, 0.0, 0.0]), 1000, 6).unwrap();
        assert_abs_diff_eq!(shifted.value, phi(2.0), epsilon = 1e-15);
        let x0 = grad_integral(&o, &ones, &zero(3), 5000, 9).unwrap();
        let x1 = shifted_grad_integral(&o, &ones, &zero(3), 5000, 9).unwrap();
        assert_eq!(x0.value.to_bits(), x1.value.to_bits());
    }

    #[test]
    fn hessian_decomposition_examples() {
        let o = Polytope::orthant(3, 0.0);
        let id = DMatrix::identity(3, 3);
        assert_abs_diff_eq!(hessian_integral(&o, &id, 20_000, 7).unwrap().value, 0.0, epsilon = 1e-15);
        let m = &e(3, 0) * e(3, 1).transpose();
        within(&hessian_integral(&o, &m, 50_000, 7).unwrap(), PHI0 * PHI0 / 2.0, 4.0);
        let z = DMatrix::zeros(3, 3);
        assert_eq!(hessian_integral(&o, &z, 1000, 7).unwrap().value, 0.0);
    }

    #[test]
    fn third_decomposition_examples() {
        let o = Polytope::orthant(3, 0.0);
        // Each one-dimensional factor integrates phi' over (-inf, 0], giving +phi(0).
        let t = Tensor3::outer(&e(3, 0), &e(3, 1), &e(3, 2));
        let v = third_integral(&o, &t, 10_000, 8).unwrap();
        assert_abs_diff_eq!(v.value, PHI0.powi(3), epsilon = 1e-15);
        let t = Tensor3::outer(&e(3, 0), &e(3, 0), &e(3, 0));
        within(&third_integral(&o, &t, 50_000, 8).unwrap(), -PHI0 / 4.0, 4.0);
        assert_eq!(third_integral(&o, &Tensor3::zeros(3), 1000, 8).unwrap().value, 0.0);
    }

    #[test]
    fn oracle_examples() {
        let h = Polytope::half_space(3, 0.0);
        let g = volume_integral_oracle(&h, &DerivativeCoefficient::Vector(e(3, 0)), &zero(3), 100_000, 9).unwrap();
        within(&g, PHI0, 4.0);
        let o = Polytope::orthant(3, 0.0);
        let m = DerivativeCoefficient::Matrix(&e(3, 0) * e(3, 1).transpose());
        within(&volume_integral_oracle(&o, &m, &zero(3), 100_000, 9).unwrap(), PHI0 * PHI0 / 2.0, 4.0);
        let z = DerivativeCoefficient::Tensor(Tensor3::zeros(3));
        assert_eq!(volume_integral_oracle(&o, &z, &zero(3), 1000, 9).unwrap().value, 0.0);
    }

    #[test]
    fn decompositions_match_oracle_on_random_polytopes() {
        let mut r = rng::stream(21, &[]);
        for d in [3usize, 4, 5] {
            let normals: Vec<DVector<f64>> = (0..d).map(|_| DVector::from_fn(d, |_, _| r.sample(StandardNormal))).collect();
            let offsets: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
            let p = Polytope::new(normals, offsets).unwrap().regularize(&mut r, 1e-7).unwrap();
            let u = DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal)).normalize();
            let m = DMatrix::from_fn(d, d, |_, _| if r.random::<bool>() { 1.0 } else { -1.0 });
            let t = random_symmetric_tensor(d, &mut r);
            let table = FaceTable::build(&p, &zero(d), 3, 60_000, 5).unwrap();
            let cases = [
                (table.grad(&u), DerivativeCoefficient::Vector(u.clone())),
                (table.hessian(&m), DerivativeCoefficient::Matrix(m.clone())),
                (table.third(&t).unwrap(), DerivativeCoefficient::Tensor(t.clone())),
            ];
            for (dec, coeff) in cases {
                let orc = volume_integral_oracle(&p, &coeff, &zero(d), 60_000, 6).unwrap();
                assert!(dec.z_score(&orc) <= 4.0, "d={d} order={} {} vs {}", coeff.order(), dec.value, orc.value);
            }
        }
    }

    #[test]
    fn estimates_are_reproducible() {
        let o = Polytope::orthant(4, 0.3);
        let a = grad_integral(&o, &e(4, 1), &zero(4), 40_000, 77).unwrap();
        let b = grad_integral(&o, &e(4, 1), &zero(4), 40_000, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bound_right_hand_sides() {
        let o = Polytope::orthant(3, 0.0);
        let dn = o.derived_normals();
        let r1 = aht_bound_rhs(&o, &dn, &DerivativeCoefficient::Vector(e(3, 0)), 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(r1, 3f64.ln().sqrt(), epsilon = 1e-12);
        let r2 = aht_bound_rhs(&o, &dn, &DerivativeCoefficient::Matrix(DMatrix::identity(3, 3)), 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(r2, 2.0 * 3f64.ln(), epsilon = 1e-12);
        let r0 = aht_bound_rhs(&o, &dn, &DerivativeCoefficient::Vector(zero(3)), 1.0, 1.0).unwrap();
        assert_eq!(r0, 0.0);
        let t = DerivativeCoefficient::Tensor(Tensor3::outer(&e(3, 0), &e(3, 1), &e(3, 2)));
        assert_eq!(aht_bound_rhs(&o, &dn, &t, 0.0, 1.0), Err(Error::ZeroAngle));
        let q = std::f64::consts::FRAC_PI_2;
        let r3 = aht_bound_rhs(&o, &dn, &t, q, q).unwrap();
        assert_abs_diff_eq!(r3, 3f64.ln().powf(1.5) / (q * q), epsilon = 1e-12);

        let v = vanish_bound_rhs(&o, 1.0, &VanishCoeff::Grad(e(3, 0)));
        assert_abs_diff_eq!(v, 3.0 * 0.241_970_724_519_143_37, epsilon = 1e-12);
        assert!(vanish_bound_rhs(&o, 40.0, &VanishCoeff::Grad(e(3, 0))) < 1e-300);
        assert_eq!(vanish_bound_rhs(&o, 1.0, &VanishCoeff::Grad(zero(3))), 0.0);
    }

    #[test]
    fn nazarov_identity_frame() {
        let normals: Vec<DVector<f64>> = (0..3).map(|j| e(3, j)).collect();
        let c = nazarov_check(&normals, &[0.0; 3], 0.1, 200_000, 10).unwrap();
        let exact = crate::stats::cdf(0.1).powi(3) - 0.125;
        within(&c.lhs, exact, 4.0);
        assert_abs_diff_eq!(c.rhs, 0.1 * ((2.0 * 3f64.ln()).sqrt() + 2.0), epsilon = 1e-12);
        assert!(c.lhs.value <= c.rhs);
        let z = nazarov_check(&normals, &[0.0; 3], 0.0, 1000, 10).unwrap();
        assert_eq!(z.lhs.value, 0.0);
    }

    #[test]
    fn corner_check_on_orthant() {
        let o = Polytope::orthant(3, 0.0);
        let q = std::f64::consts::FRAC_PI_2;
        let f = FacetIndex::corner(0, 1, 2).unwrap();
        let c = corner_cone_inequality_check(&o, &f, q, q, 200_000, 11).unwrap();
        assert!(c.applicable);
        assert_abs_diff_eq!(c.lhs.value, PHI0.powi(3), epsilon = 1e-15);
        let rhs = 3f64.ln().powf(1.5) / (q * q) * 0.125;
        within(&c.rhs, rhs, 4.0);
        assert!((c.ratio - 1.09).abs() < 0.05);
        let deep = Polytope::orthant(3, -5.0);
        assert!(!corner_cone_inequality_check(&deep, &f, q, q, 1000, 11).unwrap().applicable);
    }
}
