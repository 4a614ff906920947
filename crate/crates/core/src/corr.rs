//! Correlation matrices, their two- and three-coordinate degeneracy floors,
//! and the unit-normal frame obtained from the Cholesky factor.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

const SYM_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-8;
const PAIR_DET_FLOOR: f64 = 1e-14;

/// A unit-diagonal correlation matrix together with its degeneracy floors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationModel {
    pub dim: usize,
    #[serde(serialize_with = "serialize_matrix")]
    pub sigma: DMatrix<f64>,
    /// Smallest 2x2 principal minor, `min (1 - sigma_jk^2)`.
    pub alpha_sq: f64,
    /// Smallest ratio of a 3x3 principal minor to one of its 2x2 minors.
    pub beta_sq: f64,
    /// Smallest eigenvalue (clipped at 0).
    pub sigma_star_sq: f64,
    /// Pairs whose 2x2 minor vanishes; triple ratios over them are reported as 0.
    pub degenerate_pairs: Vec<(usize, usize)>,
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    rows.serialize(s)
}

/// Flat diagnostics record used by the command line.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub dim: usize,
    pub alpha_sq: f64,
    pub beta_sq: f64,
    pub sigma_star_sq: f64,
    pub min_angle_pair: Option<f64>,
    pub min_angle_triple: Option<f64>,
}

/// Unit normals `v_j` (rows of the lower Cholesky factor) with `v_j . v_k = sigma_jk`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitFrame {
    pub dim: usize,
    pub normals: Vec<DVector<f64>>,
    pub chol: DMatrix<f64>,
}

fn det2(s: &DMatrix<f64>, j: usize, k: usize) -> f64 {
    s[(j, j)] * s[(k, k)] - s[(j, k)] * s[(k, j)]
}

fn det3(s: &DMatrix<f64>, j: usize, k: usize, l: usize) -> f64 {
    let m = DMatrix::from_fn(3, 3, |a, b| {
        let idx = [j, k, l];
        s[(idx[a], idx[b])]
    });
    m.determinant()
}

impl CorrelationModel {
    /// Validates a symmetric PSD matrix and rescales it to unit diagonal.
    pub fn validate_and_normalize(matrix: &DMatrix<f64>) -> Result<Self> {
        let d = matrix.nrows();
        if matrix.ncols() != d {
            return Err(Error::ShapeMismatch(format!("{}x{} matrix is not square", d, matrix.ncols())));
        }
        if d == 0 {
            return Err(Error::DimensionTooSmall { got: 0, min: 1 });
        }
        let asym = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| (matrix[(i, j)] - matrix[(j, i)]).abs())
            .fold(0.0, f64::max);
        if asym > SYM_TOL {
            return Err(Error::NonSymmetric(asym));
        }
        if let Some(j) = (0..d).find(|&j| !(matrix[(j, j)] > 0.0)) {
            return Err(Error::ZeroDiagonal(j));
        }
        let scale: Vec<f64> = (0..d).map(|j| matrix[(j, j)].sqrt()).collect();
        let mut sigma = DMatrix::from_fn(d, d, |i, j| {
            let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            v / (scale[i] * scale[j])
        });
        for j in 0..d {
            sigma[(j, j)] = 1.0;
        }
        let lam_min = smallest_eigenvalue(&sigma);
        if lam_min < -PSD_TOL {
            return Err(Error::NonPsd(lam_min));
        }
        Ok(Self::with_diagnostics(sigma, lam_min.max(0.0)))
    }

    fn with_diagnostics(sigma: DMatrix<f64>, sigma_star_sq: f64) -> Self {
        let d = sigma.nrows();
        let mut alpha_sq: f64 = 1.0;
        let mut degenerate_pairs = Vec::new();
        for j in 0..d {
            for k in j + 1..d {
                let det = det2(&sigma, j, k);
                alpha_sq = alpha_sq.min(det);
                if det <= PAIR_DET_FLOOR {
                    degenerate_pairs.push((j, k));
                }
            }
        }
        let alpha_sq = alpha_sq.clamp(0.0, 1.0);
        let beta_sq = if d < 3 {
            alpha_sq
        } else {
            let mut b: f64 = 1.0;
            for j in 0..d {
                for k in j + 1..d {
                    for l in k + 1..d {
                        for (p, q, r) in [(j, k, l), (j, l, k), (k, l, j)] {
                            b = b.min(ratio_or_zero(&sigma, p, q, r));
                        }
                    }
                }
            }
            b.clamp(0.0, 1.0)
        };
        CorrelationModel { dim: d, sigma, alpha_sq, beta_sq, sigma_star_sq, degenerate_pairs }
    }

    /// `det(Sigma^{jkl}) / det(Sigma^{jk})`.
    pub fn triple_ratio(&self, j: usize, k: usize, l: usize) -> Result<f64> {
        let d = self.dim;
        if j >= d || k >= d || l >= d {
            return Err(Error::InvalidArgument(format!("index out of range for dimension {d}")));
        }
        if j == k || j == l || k == l {
            return Err(Error::InvalidArgument("triple indices must be distinct".into()));
        }
        let den = det2(&self.sigma, j, k);
        if den <= PAIR_DET_FLOOR {
            return Err(Error::DegeneratePair(j, k));
        }
        Ok((det3(&self.sigma, j, k, l) / den).max(0.0))
    }

    pub fn is_pair_degenerate(&self) -> bool {
        !self.degenerate_pairs.is_empty()
    }

    pub fn unit_frame(&self) -> Result<UnitFrame> {
        let chol = nalgebra::Cholesky::new(self.sigma.clone()).ok_or(Error::SingularMatrix)?;
        let l = chol.l();
        if (0..self.dim).any(|j| l[(j, j)].abs() < 1e-300) {
            return Err(Error::SingularMatrix);
        }
        let normals = (0..self.dim).map(|j| l.row(j).transpose()).collect();
        Ok(UnitFrame { dim: self.dim, normals, chol: l })
    }

    /// Convex blend `(Sigma + eps^2 I) / (1 + eps^2)`; keeps the diagonal at 1.
    pub fn perturb_to_full_rank(&self, eps: f64) -> Self {
        let e2 = eps.max(1e-12).powi(2);
        let d = self.dim;
        let mut s = DMatrix::from_fn(d, d, |i, j| {
            if i == j { 1.0 } else { self.sigma[(i, j)] / (1.0 + e2) }
        });
        for j in 0..d {
            s[(j, j)] = 1.0;
        }
        let lam = smallest_eigenvalue(&s).max(0.0);
        Self::with_diagnostics(s, lam)
    }

    pub fn diagnostics(&self) -> Diagnostics {
        let angles = if self.dim >= 3 && self.sigma_star_sq > 1e-10 {
            self.unit_frame().ok().and_then(|f| f.min_angles().ok())
        } else {
            None
        };
        Diagnostics {
            dim: self.dim,
            alpha_sq: self.alpha_sq,
            beta_sq: self.beta_sq,
            sigma_star_sq: self.sigma_star_sq,
            min_angle_pair: angles.map(|a| a.0),
            min_angle_triple: angles.map(|a| a.1),
        }
    }

    /// Equicorrelated matrix with off-diagonal entries `rho`.
    pub fn equicorrelated(d: usize, rho: f64) -> Result<Self> {
        let m = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho });
        Self::validate_and_normalize(&m)
    }

    /// Two equicorrelated blocks (`within` inside a block, `across` between).
    pub fn two_block(d: usize, split: usize, within: f64, across: f64) -> Result<Self> {
        let m = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                1.0
            } else if (i < split) == (j < split) {
                within
            } else {
                across
            }
        });
        Self::validate_and_normalize(&m)
    }

    /// Rank-`r` Gaussian factor matrix plus `ridge * I`, renormalized. The
    /// smallest eigenvalue is of order `ridge` while two- and three-coordinate
    /// minors stay bounded away from zero when `r >= 3`.
    pub fn low_rank_ridge<R: Rng>(d: usize, r: usize, ridge: f64, rng: &mut R) -> Result<Self> {
        let f = DMatrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m = &f * f.transpose() + DMatrix::identity(d, d) * ridge;
        Self::validate_and_normalize(&m)
    }

    /// Random correlation matrix from `d` Gaussian factors, full rank almost surely.
    pub fn random<R: Rng>(d: usize, rng: &mut R) -> Result<Self> {
        let f = DMatrix::from_fn(d, d + 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self::validate_and_normalize(&(&f * f.transpose()))
    }
}

fn ratio_or_zero(s: &DMatrix<f64>, j: usize, k: usize, l: usize) -> f64 {
    let den = det2(s, j, k);
    if den <= PAIR_DET_FLOOR {
        0.0
    } else {
        (det3(s, j, k, l) / den).max(0.0)
    }
}

pub fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

impl UnitFrame {
    /// Smallest acute angle between two normals, and smallest angle between a
    /// normal and the plane spanned by two others.
    pub fn min_angles(&self) -> Result<(f64, f64)> {
        if self.dim < 3 {
            return Err(Error::DimensionTooSmall { got: self.dim, min: 3 });
        }
        Ok(angle_floors(&self.normals))
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |i, j| self.normals[i].dot(&self.normals[j]))
    }
}

/// Acute angle between the lines through two unit vectors.
pub fn line_angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let c = a.dot(b).abs().min(1.0);
    (1.0 - c * c).max(0.0).sqrt().atan2(c)
}

/// Angle between unit `v` and `span{a, b}`; zero when `a` and `b` are parallel.
pub fn plane_angle(a: &DVector<f64>, b: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let e1 = a.normalize();
    let w = b - &e1 * e1.dot(b);
    let wn = w.norm();
    if wn < 1e-12 {
        return 0.0;
    }
    let e2 = w / wn;
    let r = v - &e1 * e1.dot(v) - &e2 * e2.dot(v);
    let s = r.norm().min(1.0);
    s.atan2((1.0 - s * s).max(0.0).sqrt())
}

/// `(alpha_angle, beta_angle)` over a set of unit normals, skipping antipodal pairs.
pub fn angle_floors(normals: &[DVector<f64>]) -> (f64, f64) {
    let m = normals.len();
    let antipodal = |j: usize, k: usize| (normals[j].dot(&normals[k]) + 1.0).abs() < 1e-10;
    let mut alpha = std::f64::consts::FRAC_PI_2;
    let mut beta = std::f64::consts::FRAC_PI_2;
    for j in 0..m {
        for k in 0..m {
            if j == k || antipodal(j, k) {
                continue;
            }
            if j < k {
                alpha = alpha.min(line_angle(&normals[j], &normals[k]));
            }
            for l in 0..m {
                if l == j || l == k || antipodal(j, l) || antipodal(k, l) {
                    continue;
                }
                beta = beta.min(plane_angle(&normals[j], &normals[k], &normals[l]));
            }
        }
    }
    (alpha, beta)
}

/// Entrywise maximum absolute difference.
pub fn cov_gap(cov_w: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    if cov_w.shape() != sigma.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", cov_w.shape(), sigma.shape())));
    }
    Ok(cov_w.iter().zip(sigma.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Reads a dense header-free CSV matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    matrix_from_rows(&rows)
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Parse("empty matrix".into()));
    }
    let c = rows[0].len();
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::ShapeMismatch("ragged rows".into()));
    }
    Ok(DMatrix::from_fn(n, c, |i, j| rows[i][j]))
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}
