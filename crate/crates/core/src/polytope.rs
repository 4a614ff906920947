//! Convex polytopes `{x : v_j . x <= b_j}` with unit normals, their faces,
//! derived conormals, and the outer cones attached to faces.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::corr::UnitFrame;
use crate::error::{Error, Result};

/// Incidence tolerance for "lies on a facet hyperplane".
pub const FACE_TOL: f64 = 1e-9;
const COLLINEAR_TOL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-10;
const MAX_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub dim: usize,
    pub normals: Vec<DVector<f64>>,
    /// Offsets; `f64::INFINITY` drops the constraint.
    pub offsets: Vec<f64>,
}

/// A face selected by 1, 2 or 3 active constraints (sorted indices).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FacetIndex {
    indices: Vec<usize>,
}

impl FacetIndex {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() || indices.len() > 3 {
            return Err(Error::InvalidArgument(format!("face level must be 1..=3, got {}", indices.len())));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("face indices must be distinct".into()));
        }
        Ok(FacetIndex { indices })
    }

    pub fn facet(j: usize) -> Self {
        FacetIndex { indices: vec![j] }
    }

    pub fn ridge(j: usize, k: usize) -> Result<Self> {
        Self::new(vec![j, k])
    }

    pub fn corner(j: usize, k: usize, l: usize) -> Result<Self> {
        Self::new(vec![j, k, l])
    }

    pub fn level(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

impl fmt::Display for FacetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.indices.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "F{}", s.join(","))
    }
}

/// Conormals `v_jk` (ordered pairs) and `v_jkl` (ordered triples, symmetric in the
/// first two slots).
#[derive(Debug, Clone, Default)]
pub struct DerivedNormals {
    pub pair: BTreeMap<(usize, usize), DVector<f64>>,
    pub triple: BTreeMap<(usize, usize, usize), DVector<f64>>,
    /// Ordered pairs skipped because the two normals are collinear.
    pub excluded_pairs: Vec<(usize, usize)>,
    /// Triples whose normals do not span three dimensions.
    pub excluded_triples: Vec<(usize, usize, usize)>,
}

/// Component of `v_k` orthogonal to `v_j`, normalized.
pub fn derived_normal_pair(vj: &DVector<f64>, vk: &DVector<f64>) -> Result<DVector<f64>> {
    let c = vj.dot(vk);
    if c.abs() > 1.0 - COLLINEAR_TOL {
        return Err(Error::CollinearNormals);
    }
    let w = vk - vj * c;
    Ok(w.normalize())
}

/// Component of `v_l` orthogonal to `span{v_j, v_k}`, normalized, with positive
/// inner product against `v_l`.
pub fn derived_normal_triple(vj: &DVector<f64>, vk: &DVector<f64>, vl: &DVector<f64>) -> Result<DVector<f64>> {
    let m = DMatrix::from_columns(&[vj.clone(), vk.clone(), vl.clone()]);
    let sv = m.singular_values();
    if sv.min() <= RANK_TOL {
        return Err(Error::DegenerateTriple);
    }
    let e1 = vj.normalize();
    let w = vk - &e1 * e1.dot(vk);
    let e2 = w.normalize();
    let r = vl - &e1 * e1.dot(vl) - &e2 * e2.dot(vl);
    let r = r.normalize();
    Ok(if r.dot(vl) < 0.0 { -r } else { r })
}

impl Polytope {
    pub fn new(normals: Vec<DVector<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if normals.is_empty() {
            return Err(Error::InvalidArgument("polytope needs at least one constraint".into()));
        }
        if normals.len() != offsets.len() {
            return Err(Error::ShapeMismatch(format!("{} normals vs {} offsets", normals.len(), offsets.len())));
        }
        let dim = normals[0].len();
        if dim == 0 || normals.iter().any(|v| v.len() != dim) {
            return Err(Error::ShapeMismatch("normals of unequal length".into()));
        }
        if offsets.iter().any(|b| b.is_nan() || *b == f64::NEG_INFINITY) {
            return Err(Error::InvalidArgument("offsets must be finite or +inf".into()));
        }
        let normals = normals
            .into_iter()
            .map(|v| {
                let n = v.norm();
                if n == 0.0 || !n.is_finite() {
                    Err(Error::InvalidArgument("zero normal".into()))
                } else {
                    Ok(v / n)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Polytope { dim, normals, offsets })
    }

    pub fn from_frame(frame: &UnitFrame, offsets: Vec<f64>) -> Result<Self> {
        Self::new(frame.normals.clone(), offsets)
    }

    /// Negative orthant `{x <= b 1}` in dimension `d`.
    pub fn orthant(d: usize, b: f64) -> Self {
        let normals = (0..d).map(|j| DVector::from_fn(d, |i, _| if i == j { 1.0 } else { 0.0 })).collect();
        Polytope { dim: d, normals, offsets: vec![b; d] }
    }

    /// Half-space `{x_1 <= b}` embedded in `R^d` as a polytope with one finite facet.
    pub fn half_space(d: usize, b: f64) -> Self {
        let mut p = Self::orthant(d, f64::INFINITY);
        p.offsets[0] = b;
        p
    }

    /// `m` Gaussian-direction constraints with offsets uniform on
    /// `[-offset_range, offset_range]`, regularized.
    pub fn random<R: Rng>(d: usize, m: usize, offset_range: f64, rng: &mut R) -> Result<Polytope> {
        let normals = (0..m).map(|_| DVector::from_fn(d, |_, _| rng.sample(StandardNormal))).collect();
        let offsets = (0..m).map(|_| rng.random_range(-offset_range..=offset_range)).collect();
        Polytope::new(normals, offsets)?.regularize(rng, 1e-7)
    }

    pub fn n_constraints(&self) -> usize {
        self.normals.len()
    }

    /// Indices of constraints with finite offsets.
    pub fn finite(&self) -> Vec<usize> {
        (0..self.n_constraints()).filter(|&j| self.offsets[j].is_finite()).collect()
    }

    pub fn inflate(&self, t: f64) -> Polytope {
        Polytope { offsets: self.offsets.iter().map(|b| b + t).collect(), ..self.clone() }
    }

    /// The polytope seen from `shift`: `{z : z + shift in A}`.
    pub fn translate(&self, shift: &DVector<f64>) -> Polytope {
        let offsets = self.normals.iter().zip(&self.offsets).map(|(v, b)| b - v.dot(shift)).collect();
        Polytope { offsets, ..self.clone() }
    }

    /// `{x / s : x in A}` for `s > 0`.
    pub fn scale(&self, s: f64) -> Polytope {
        Polytope { offsets: self.offsets.iter().map(|b| b / s).collect(), ..self.clone() }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.normals.iter().zip(&self.offsets).all(|(v, b)| v.dot(x) <= *b)
    }

    /// Membership in `A(kappa) \ A(-kappa)`.
    pub fn band_contains(&self, kappa: f64, x: &DVector<f64>) -> bool {
        let excess = self.max_excess(x);
        excess <= kappa && excess > -kappa
    }

    /// `max_j (v_j . x - b_j)`, or `-inf` when every constraint is vacuous.
    pub fn max_excess(&self, x: &DVector<f64>) -> f64 {
        self.normals
            .iter()
            .zip(&self.offsets)
            .map(|(v, b)| v.dot(x) - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn antipodal(&self, j: usize, k: usize) -> bool {
        self.normals[j].dot(&self.normals[k]) < -1.0 + COLLINEAR_TOL
    }

    /// Conormals for all ordered pairs and triples of finite constraints.
    pub fn derived_normals(&self) -> DerivedNormals {
        let fin = self.finite();
        let mut out = DerivedNormals::default();
        for &j in &fin {
            for &k in &fin {
                if j == k {
                    continue;
                }
                match derived_normal_pair(&self.normals[j], &self.normals[k]) {
                    Ok(v) => {
                        out.pair.insert((j, k), v);
                    }
                    Err(_) => out.excluded_pairs.push((j, k)),
                }
            }
        }
        for &j in &fin {
            for &k in &fin {
                if !out.pair.contains_key(&(j, k)) {
                    continue;
                }
                for &l in &fin {
                    if l == j || l == k {
                        continue;
                    }
                    match derived_normal_triple(&self.normals[j], &self.normals[k], &self.normals[l]) {
                        Ok(v) => {
                            out.triple.insert((j, k, l), v);
                        }
                        Err(_) => out.excluded_triples.push((j, k, l)),
                    }
                }
            }
        }
        out
    }

    /// Angle floors over the finite constraints, excluding antipodal pairs.
    pub fn angle_floors(&self) -> (f64, f64) {
        let normals: Vec<DVector<f64>> = self.finite().into_iter().map(|j| self.normals[j].clone()).collect();
        crate::corr::angle_floors(&normals)
    }

    /// Active sets of size 2..=4 whose normals are linearly dependent while
    /// the equality system `v_m . x = b_m` is still solvable.
    pub fn rank_violations(&self) -> Vec<Vec<usize>> {
        let fin = self.finite();
        let mut out = Vec::new();
        let mut subset = Vec::new();
        for size in 2..=4usize.min(fin.len()) {
            subsets(&fin, size, 0, &mut subset, &mut |s| {
                if self.dependent_but_consistent(s) {
                    out.push(s.to_vec());
                }
            });
        }
        out
    }

    fn dependent_but_consistent(&self, s: &[usize]) -> bool {
        let r = s.len();
        let m = DMatrix::from_fn(r, self.dim, |i, c| self.normals[s[i]][c]);
        let svd = m.clone().svd(true, true);
        let rank = svd.singular_values.iter().filter(|&&x| x > RANK_TOL).count();
        if rank == r {
            return false;
        }
        let b = DVector::from_iterator(r, s.iter().map(|&j| self.offsets[j]));
        match svd.solve(&b, RANK_TOL) {
            Ok(x) => (&m * x - &b).amax() <= FACE_TOL,
            Err(_) => false,
        }
    }

    /// Nudges offsets upward by independent `U(0, eps)` draws until no
    /// dependent active set has a consistent equality system.
    pub fn regularize<R: Rng>(&self, rng: &mut R, eps: f64) -> Result<Polytope> {
        if !(eps > 0.0 && eps <= 1e-6) {
            return Err(Error::InvalidArgument(format!("regularization eps {eps} outside (0, 1e-6]")));
        }
        let mut p = self.clone();
        for _ in 0..MAX_RETRIES {
            let bad = p.rank_violations();
            if bad.is_empty() {
                return Ok(p);
            }
            let mut touched = vec![false; p.n_constraints()];
            for s in &bad {
                for &j in s {
                    touched[j] = true;
                }
            }
            for (j, t) in touched.iter().enumerate() {
                if *t {
                    p.offsets[j] += eps * rng.random_range(f64::MIN_POSITIVE..1.0);
                }
            }
        }
        if p.rank_violations().is_empty() {
            Ok(p)
        } else {
            Err(Error::RegularizationFailed(MAX_RETRIES))
        }
    }

    /// True iff `x` is on every hyperplane of `f` and strictly inside the others.
    pub fn facet_relint_test(&self, f: &FacetIndex, x: &DVector<f64>, tol: f64) -> bool {
        let active = f.indices();
        (0..self.n_constraints()).all(|m| {
            let g = self.normals[m].dot(x) - self.offsets[m];
            if active.contains(&m) {
                g.abs() <= tol
            } else {
                g < -tol
            }
        })
    }

    /// Membership in the outer cone `{y + sum s_m v_m : y in relint F, s_m > 0}`.
    pub fn outer_cone_membership(&self, f: &FacetIndex, x: &DVector<f64>) -> Result<bool> {
        let dirs: Vec<DVector<f64>> = f.indices().iter().map(|&m| self.normals[m].clone()).collect();
        self.cone_test(f, &dirs, x)
    }

    /// Membership in `{y + sum s_i u_i : y in relint F, s_i > 0}` for
    /// caller-supplied directions spanning the normal space of `F`.
    pub fn wedge_cone_membership(&self, f: &FacetIndex, directions: &[DVector<f64>], x: &DVector<f64>) -> Result<bool> {
        self.check_directions(f, directions)?;
        self.cone_test(f, directions, x)
    }

    pub fn check_directions(&self, f: &FacetIndex, dirs: &[DVector<f64>]) -> Result<()> {
        if dirs.len() != f.level() {
            return Err(Error::BadDirections(format!("{} directions for a level-{} face", dirs.len(), f.level())));
        }
        let basis = orthonormal_basis(f.indices().iter().map(|&m| &self.normals[m]))?;
        for u in dirs {
            if (u.norm() - 1.0).abs() > 1e-8 {
                return Err(Error::BadDirections("direction is not a unit vector".into()));
            }
            let mut r = u.clone();
            for e in &basis {
                r -= e * e.dot(u);
            }
            if r.norm() > 1e-8 {
                return Err(Error::BadDirections("direction leaves the span of the active normals".into()));
            }
        }
        Ok(())
    }

    fn cone_test(&self, f: &FacetIndex, dirs: &[DVector<f64>], x: &DVector<f64>) -> Result<bool> {
        Ok(ConeTester::new(self, f, dirs)?.contains(x.as_slice()))
    }

    /// Point of the affine hull of `F` closest to the origin.
    pub fn hull_foot(&self, f: &FacetIndex) -> Result<DVector<f64>> {
        let active = f.indices();
        let r = active.len();
        let g = DMatrix::from_fn(r, r, |a, b| self.normals[active[a]].dot(&self.normals[active[b]]));
        let b = DVector::from_fn(r, |a, _| self.offsets[active[a]]);
        let c = g.lu().solve(&b).ok_or(Error::SingularGram)?;
        let mut x = DVector::zeros(self.dim);
        for (a, &m) in active.iter().enumerate() {
            x += &self.normals[m] * c[a];
        }
        Ok(x)
    }

    /// Directions `u +- u_perp` (normalized) spanning the wedge attached to a ridge,
    /// with `u` pointing from the origin to the ridge's affine hull.
    pub fn pair_wedge_directions(&self, f: &FacetIndex) -> Result<Vec<DVector<f64>>> {
        if f.level() != 2 {
            return Err(Error::InvalidArgument("pair wedge needs a level-2 face".into()));
        }
        let (j, k) = (f.indices()[0], f.indices()[1]);
        let basis = orthonormal_basis([&self.normals[j], &self.normals[k]])?;
        let foot = self.hull_foot(f)?;
        let u = if foot.norm() > 1e-12 { foot.normalize() } else { self.normals[j].clone() };
        // Of the two basis vectors, the one less aligned with u gives the
        // better-conditioned orthogonal complement.
        let pick = if basis[0].dot(&u).abs() <= basis[1].dot(&u).abs() { &basis[0] } else { &basis[1] };
        let perp = (pick - &u * u.dot(pick)).normalize();
        Ok(vec![(&u + &perp).normalize(), (&u - &perp).normalize()])
    }

    /// Three equiangular directions tilted toward the corner's foot point.
    pub fn triple_wedge_directions(&self, f: &FacetIndex) -> Result<Vec<DVector<f64>>> {
        if f.level() != 3 {
            return Err(Error::InvalidArgument("triple wedge needs a level-3 face".into()));
        }
        let idx = f.indices();
        let basis = orthonormal_basis(idx.iter().map(|&m| &self.normals[m]))?;
        let foot = self.hull_foot(f)?;
        let u = if foot.norm() > 1e-12 { foot.normalize() } else { self.normals[idx[0]].clone() };
        let mut rest: Vec<DVector<f64>> = Vec::new();
        for e in &basis {
            let mut w = e - &u * u.dot(e);
            for p in &rest {
                w -= p * p.dot(&w);
            }
            if w.norm() > 1e-6 {
                rest.push(w.normalize());
            }
            if rest.len() == 2 {
                break;
            }
        }
        let (w1, w2) = (&rest[0], &rest[1]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s3 = 3f64.sqrt() / 2.0;
        Ok(vec![
            (w1 + &u * h).normalize(),
            (w1 * -0.5 + w2 * s3 + &u * h).normalize(),
            (w1 * -0.5 - w2 * s3 + &u * h).normalize(),
        ])
    }

    /// Faces of level 1..=`max_level` over finite constraints whose normals are
    /// linearly independent.
    pub fn faces(&self, max_level: usize) -> Vec<FacetIndex> {
        let fin = self.finite();
        let mut out = Vec::new();
        let mut subset = Vec::new();
        for size in 1..=max_level.min(3).min(fin.len()) {
            subsets(&fin, size, 0, &mut subset, &mut |s| {
                if size > self.dim {
                    return;
                }
                if size >= 2 && s.iter().enumerate().any(|(a, &j)| s[a + 1..].iter().any(|&k| self.antipodal(j, k))) {
                    return;
                }
                let m = DMatrix::from_fn(size, self.dim, |i, c| self.normals[s[i]][c]);
                if m.singular_values().min() > RANK_TOL {
                    out.push(FacetIndex { indices: s.to_vec() });
                }
            });
        }
        out
    }

    pub fn from_literal(text: &str) -> Result<Self> {
        text.parse()
    }

    pub fn read(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn to_literal(&self) -> String {
        let mut s = format!("{}\n", self.dim);
        for (v, b) in self.normals.iter().zip(&self.offsets) {
            let mut row: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            row.push(if b.is_finite() { format!("{b:?}") } else { "inf".to_string() });
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}

impl FromStr for Polytope {
    type Err = Error;

    /// First line `d`, then one line `v_1 ... v_d b` per constraint; `inf`
    /// is accepted as an offset.
    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let d: usize = lines
            .next()
            .ok_or_else(|| Error::Parse("empty polytope literal".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("dimension: {e}")))?;
        let mut normals = Vec::new();
        let mut offsets = Vec::new();
        for (i, line) in lines.enumerate() {
            let vals = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| match t {
                    "inf" | "+inf" | "Inf" | "infinity" => Ok(f64::INFINITY),
                    _ => t.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {t:?}: {e}", i + 2))),
                })
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != d + 1 {
                return Err(Error::Parse(format!("line {}: expected {} numbers, got {}", i + 2, d + 1, vals.len())));
            }
            if vals[..d].iter().any(|x| !x.is_finite()) {
                return Err(Error::Parse(format!("line {}: normal entries must be finite", i + 2)));
            }
            normals.push(DVector::from_column_slice(&vals[..d]));
            offsets.push(vals[d]);
        }
        Polytope::new(normals, offsets)
    }
}

/// Precomputed membership test for `{y + sum s_i u_i : y in relint F, s_i > 0}`.
///
/// Writing `x = y + sum s_i u_i` with `y` on the affine hull of `F` gives the
/// square system `N s = (v_m . x - b_m)_{m in F}` with `N_mi = v_m . u_i`; the
/// remaining constraints are then checked on `y` through `v_m . u_i`.
#[derive(Debug, Clone)]
pub struct ConeTester {
    dim: usize,
    face: FacetIndex,
    normals: Vec<f64>,
    offsets: Vec<f64>,
    /// `v_m . u_i`, row-major `m x r`.
    cross: Vec<f64>,
    /// Inverse of `N`, row-major `r x r`.
    inv: Vec<f64>,
}

impl ConeTester {
    pub fn new(p: &Polytope, f: &FacetIndex, dirs: &[DVector<f64>]) -> Result<Self> {
        let active = f.indices();
        for &m in active {
            if !p.offsets[m].is_finite() {
                return Err(Error::InfiniteOffset(m));
            }
        }
        let r = active.len();
        if dirs.len() != r {
            return Err(Error::BadDirections(format!("{} directions for a level-{r} face", dirs.len())));
        }
        let g = DMatrix::from_fn(r, r, |a, b| p.normals[active[a]].dot(&dirs[b]));
        let sv = g.singular_values();
        if sv.min() <= RANK_TOL * sv.max().max(1.0) {
            return Err(Error::SingularGram);
        }
        let inv = g.try_inverse().ok_or(Error::SingularGram)?;
        let m = p.n_constraints();
        let mut cross = Vec::with_capacity(m * r);
        for v in &p.normals {
            for u in dirs {
                cross.push(v.dot(u));
            }
        }
        Ok(ConeTester {
            dim: p.dim,
            face: f.clone(),
            normals: p.normals.iter().flat_map(|v| v.iter().copied()).collect(),
            offsets: p.offsets.clone(),
            cross,
            inv: (0..r).flat_map(|a| (0..r).map(move |b| (a, b))).map(|(a, b)| inv[(a, b)]).collect(),
        })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let d = self.dim;
        let active = self.face.indices();
        let r = active.len();
        let mut rhs = [0.0; 3];
        for (a, &m) in active.iter().enumerate() {
            rhs[a] = dot(&self.normals[m * d..(m + 1) * d], x) - self.offsets[m];
        }
        let mut s = [0.0; 3];
        for a in 0..r {
            s[a] = (0..r).map(|b| self.inv[a * r + b] * rhs[b]).sum();
            if !(s[a] > 0.0) {
                return false;
            }
        }
        for m in 0..self.offsets.len() {
            let b = self.offsets[m];
            if !b.is_finite() {
                continue;
            }
            let vx = dot(&self.normals[m * d..(m + 1) * d], x);
            let vy = vx - (0..r).map(|i| s[i] * self.cross[m * r + i]).sum::<f64>();
            let g = vy - b;
            let ok = if active.contains(&m) { g.abs() <= FACE_TOL } else { g < -FACE_TOL };
            if !ok {
                return false;
            }
        }
        true
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gram-Schmidt basis of the span of the given vectors; errors if dependent.
pub fn orthonormal_basis<'a, I>(vs: I) -> Result<Vec<DVector<f64>>>
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    let mut out: Vec<DVector<f64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for e in &out {
            w -= e * e.dot(&w);
        }
        for e in &out {
            w -= e * e.dot(&w);
        }
        let n = w.norm();
        if n < RANK_TOL {
            return Err(Error::SingularGram);
        }
        out.push(w / n);
    }
    Ok(out)
}

fn subsets(items: &[usize], size: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if cur.len() == size {
        f(cur);
        return;
    }
    for i in start..items.len() {
        cur.push(items[i]);
        subsets(items, size, i + 1, cur, f);
        cur.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use rand_distr::StandardNormal;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn e(d: usize, j: usize) -> DVector<f64> {
        DVector::from_fn(d, |i, _| if i == j { 1.0 } else { 0.0 })
    }

    #[test]
    fn inflation_is_additive() {
        let a = Polytope::orthant(3, 0.0);
        assert_eq!(a.inflate(0.0), a);
        assert_eq!(a.inflate(1.0).offsets, vec![1.0; 3]);
        let h = Polytope::half_space(3, 0.0);
        assert_eq!(h.inflate(2.0).offsets[1], f64::INFINITY);
        let p = Polytope::new(vec![v(&[1.0, 1.0]), v(&[0.0, -1.0])], vec![0.3, 1.7]).unwrap();
        let two = p.inflate(0.25).inflate(0.5);
        let one = p.inflate(0.75);
        for (x, y) in two.offsets.iter().zip(&one.offsets) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn containment_and_band() {
        let a = Polytope::orthant(3, 0.0);
        let x = v(&[-1.0, -1.0, -1.0]);
        assert!(a.contains(&x));
        assert!(!a.band_contains(0.5, &x));
        assert!(a.band_contains(0.5, &v(&[0.2, -1.0, -1.0])));
        let h = Polytope::half_space(3, 0.0);
        assert!(!h.band_contains(0.5, &v(&[0.6, 0.0, 0.0])));
    }

    #[test]
    fn pair_conormals() {
        assert_eq!(derived_normal_pair(&e(3, 0), &e(3, 1)).unwrap(), e(3, 1));
        let th: f64 = 0.7;
        let w = derived_normal_pair(&v(&[1.0, 0.0]), &v(&[th.cos(), th.sin()])).unwrap();
        assert_abs_diff_eq!(w[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 1.0, epsilon = 1e-15);
        assert_eq!(derived_normal_pair(&e(3, 0), &(-e(3, 0))), Err(Error::CollinearNormals));
    }

    #[test]
    fn triple_conormals() {
        assert_eq!(derived_normal_triple(&e(3, 0), &e(3, 1), &e(3, 2)).unwrap(), e(3, 2));
        let w = derived_normal_triple(&e(3, 0), &e(3, 1), &v(&[1.0, 1.0, 1.0]).normalize()).unwrap();
        assert_abs_diff_eq!((w - e(3, 2)).norm(), 0.0, epsilon = 1e-14);
        let inplane = v(&[0.6, 0.8, 0.0]);
        assert_eq!(derived_normal_triple(&e(3, 0), &e(3, 1), &inplane), Err(Error::DegenerateTriple));
    }

    #[test]
    fn conormal_sign_conventions_hold() {
        let mut s = rng::stream(1, &[]);
        let normals: Vec<DVector<f64>> =
            (0..5).map(|_| DVector::from_fn(4, |_, _| s.sample::<f64, _>(StandardNormal))).collect();
        let p = Polytope::new(normals, vec![0.5; 5]).unwrap();
        let dn = p.derived_normals();
        for (&(j, k), w) in &dn.pair {
            assert_abs_diff_eq!(w.dot(&p.normals[j]), 0.0, epsilon = 1e-10);
            assert!(w.dot(&p.normals[k]) > 0.0);
        }
        for (&(j, k, l), w) in &dn.triple {
            assert_abs_diff_eq!(w.dot(&p.normals[j]), 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(w.dot(&p.normals[k]), 0.0, epsilon = 1e-10);
            assert!(w.dot(&p.normals[l]) > 0.0);
            assert_abs_diff_eq!((w - &dn.triple[&(k, j, l)]).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn regularize_leaves_generic_polytopes_alone() {
        let mut s = rng::stream(2, &[]);
        let normals: Vec<DVector<f64>> =
            (0..4).map(|_| DVector::from_fn(4, |_, _| s.sample::<f64, _>(StandardNormal))).collect();
        let p = Polytope::new(normals, vec![0.1, -0.3, 0.7, 1.1]).unwrap();
        assert_eq!(p.regularize(&mut s, 1e-7).unwrap(), p);
        let o = Polytope::orthant(3, 0.0);
        assert_eq!(o.regularize(&mut s, 1e-6).unwrap(), o);
    }

    #[test]
    fn regularize_breaks_consistent_dependence() {
        let v4 = (e(4, 0) + e(4, 1) + e(4, 2)).normalize();
        let mut normals: Vec<DVector<f64>> = (0..3).map(|j| e(4, j)).collect();
        normals.push(v4);
        // All four hyperplanes pass through the origin.
        let p = Polytope::new(normals, vec![0.0; 4]).unwrap();
        assert!(!p.rank_violations().is_empty());
        let mut s = rng::stream(3, &[]);
        let eps = 1e-6;
        let r = p.regularize(&mut s, eps).unwrap();
        assert!(r.rank_violations().is_empty());
        for (a, b) in r.offsets.iter().zip(&p.offsets) {
            assert!(a - b >= 0.0 && a - b < eps);
        }
    }

    #[test]
    fn relint_tests_on_orthant() {
        let a = Polytope::orthant(3, 0.0);
        let f1 = FacetIndex::facet(0);
        let f12 = FacetIndex::ridge(0, 1).unwrap();
        assert!(a.facet_relint_test(&f1, &v(&[0.0, -1.0, -1.0]), 1e-9));
        assert!(a.facet_relint_test(&f12, &v(&[0.0, 0.0, -1.0]), 1e-9));
        assert!(!a.facet_relint_test(&f12, &v(&[0.0, 0.0, 0.0]), 1e-9));
        assert!(!a.facet_relint_test(&f1, &v(&[0.0, 0.0, -1.0]), 1e-9));
    }

    #[test]
    fn outer_cones_on_orthant() {
        let a = Polytope::orthant(3, 0.0);
        let all: Vec<FacetIndex> = a.faces(3);
        assert_eq!(all.len(), 7);
        let hits = |x: &DVector<f64>| -> Vec<String> {
            all.iter().filter(|f| a.outer_cone_membership(f, x).unwrap()).map(|f| f.to_string()).collect()
        };
        assert_eq!(hits(&v(&[1.0, -1.0, -1.0])), vec!["F1"]);
        assert_eq!(hits(&v(&[1.0, 1.0, -1.0])), vec!["F1,2"]);
        assert_eq!(hits(&v(&[1.0, 1.0, 1.0])), vec!["F1,2,3"]);
        assert!(hits(&v(&[-0.5, -1.0, -2.0])).is_empty());
    }

    #[test]
    fn pair_wedge_equals_outer_cone_on_orthant() {
        let a = Polytope::orthant(3, 0.0);
        let f = FacetIndex::ridge(0, 1).unwrap();
        let u = (e(3, 0) + e(3, 1)).normalize();
        let up = (e(3, 0) - e(3, 1)).normalize();
        let dirs = vec![(&u + &up).normalize(), (&u - &up).normalize()];
        let mut s = rng::stream(4, &[]);
        for _ in 0..2000 {
            let x = DVector::from_fn(3, |_, _| 2.0 * s.sample::<f64, _>(StandardNormal));
            assert_eq!(a.wedge_cone_membership(&f, &dirs, &x).unwrap(), a.outer_cone_membership(&f, &x).unwrap());
        }
        assert!(!a.wedge_cone_membership(&f, &dirs, &v(&[-3.0, -3.0, -3.0])).unwrap());
        let y = v(&[0.0, 0.0, -0.5]);
        let built = a.pair_wedge_directions(&f).unwrap();
        assert!(a.wedge_cone_membership(&f, &built, &(&y + &built[0] * 0.3 + &built[1] * 0.2)).unwrap());
        let bad = vec![e(3, 2), e(3, 0)];
        assert!(matches!(a.wedge_cone_membership(&f, &bad, &y), Err(Error::BadDirections(_))));
    }

    #[test]
    fn triple_wedge_directions_are_equiangular() {
        let a = Polytope::orthant(3, -0.4);
        let f = FacetIndex::corner(0, 1, 2).unwrap();
        let d = a.triple_wedge_directions(&f).unwrap();
        let c01 = d[0].dot(&d[1]);
        assert_abs_diff_eq!(c01, d[1].dot(&d[2]), epsilon = 1e-12);
        assert_abs_diff_eq!(c01, d[0].dot(&d[2]), epsilon = 1e-12);
        let corner = v(&[-0.4, -0.4, -0.4]);
        let x = &corner + &d[0] * 0.1 + &d[1] * 0.2 + &d[2] * 0.3;
        assert!(a.wedge_cone_membership(&f, &d, &x).unwrap());
    }

    #[test]
    fn literal_round_trip() {
        let text = "3\n1 0 0 0.5\n0 1 0 inf\n0 0 1 -1\n";
        let p: Polytope = text.parse().unwrap();
        assert_eq!(p.offsets, vec![0.5, f64::INFINITY, -1.0]);
        let back: Polytope = p.to_literal().parse().unwrap();
        assert_eq!(back, p);
        assert!("2\n1 0\n".parse::<Polytope>().is_err());
    }

    #[test]
    fn antipodal_pairs_are_not_faces() {
        let p = Polytope::new(vec![e(2, 0), -e(2, 0), e(2, 1)], vec![1.0, 1.0, 0.0]).unwrap();
        let faces: Vec<String> = p.faces(3).iter().map(|f| f.to_string()).collect();
        assert_eq!(faces, vec!["F1", "F2", "F3", "F1,3", "F2,3"]);
        let dn = p.derived_normals();
        assert!(dn.excluded_pairs.contains(&(0, 1)));
    }
}
