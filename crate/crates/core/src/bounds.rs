//! Closed-form evaluators for the Kolmogorov-distance bounds.
//!
//! Unspecified absolute constants are set to `c_user` (1 unless overridden),
//! and every logarithm is natural. Values above 1 are returned unchanged;
//! [`Evaluated::vacuous`] marks them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters shared by the bound evaluators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: f64,
    pub d: f64,
    /// Sub-exponential scale `B`, in units of the data.
    pub b_scale: f64,
    pub alpha_sq: f64,
    pub beta_sq: f64,
    /// `||Cov(W) - Sigma||_inf`.
    pub cov_gap: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub c_user: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for BoundInputs {
    fn default() -> Self {
        BoundInputs { n: 1e4, d: 10.0, b_scale: 1.0, alpha_sq: 1.0, beta_sq: 1.0, cov_gap: 0.0, gamma: 0.1, c_user: 1.0 }
    }
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.n >= 3.0) || !(self.d >= 3.0) {
            return bad("n and d must be at least 3");
        }
        if !(self.b_scale > 0.0) {
            return bad("B must be positive");
        }
        if !(self.alpha_sq > 0.0 && self.alpha_sq <= 1.0) {
            return bad("alpha_sq must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.beta_sq) {
            return bad("beta_sq must lie in [0, 1]");
        }
        if !(self.cov_gap >= 0.0) {
            return bad("cov_gap must be nonnegative");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.c_user > 0.0) {
            return bad("c_user must be positive");
        }
        Ok(())
    }
}

/// A bound value with its vacuity flag and the constant used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluated {
    pub value: f64,
    pub vacuous: bool,
    pub c_user: f64,
}

impl Evaluated {
    pub fn new(value: f64, c_user: f64) -> Self {
        Evaluated { value, vacuous: value > 1.0, c_user }
    }
}

fn log_floor(x: f64) -> f64 {
    x.ln().abs().max(1.0)
}

/// Split of the main bound into its covariance-mismatch and sampling parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MainBoundParts {
    pub cov_term: f64,
    pub rate_term: f64,
    pub bound: f64,
}

pub fn main_bound_parts(inp: &BoundInputs) -> Result<MainBoundParts> {
    inp.validate()?;
    if inp.beta_sq <= 0.0 {
        return Err(Error::ZeroBeta);
    }
    let (n, d, c) = (inp.n, inp.d, inp.c_user);
    let (ld, ln) = (d.ln(), n.ln());
    let cov_term = c * inp.cov_gap * ld * ln / inp.alpha_sq;
    let rate_term = c * inp.b_scale.powi(3) * ld * ld * (d * n).ln().sqrt() * ln.powi(4)
        / (inp.alpha_sq * inp.beta_sq * n.sqrt());
    Ok(MainBoundParts { cov_term, rate_term, bound: cov_term + rate_term })
}

/// Main bound for sums of independent sub-exponential vectors.
pub fn main_bound(inp: &BoundInputs) -> Result<f64> {
    Ok(main_bound_parts(inp)?.bound)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundedCase {
    pub delta0: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub t0: f64,
    pub t: f64,
    pub kappa: f64,
    pub bound: f64,
    /// `t0` hit its cap of 1/2.
    pub t0_clamped: bool,
}

/// Bound under `|X_i . v_j| / sqrt(n) <= delta`, with all intermediate quantities.
pub fn bounded_case_bound(delta: f64, inp: &BoundInputs) -> Result<BoundedCase> {
    inp.validate()?;
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    if inp.beta_sq <= 0.0 {
        return Err(Error::ZeroBeta);
    }
    let ld = inp.d.ln();
    let ab = inp.alpha_sq * inp.beta_sq;
    let c = inp.c_user;
    let delta0 = ld * inp.cov_gap;
    let delta1 = ld.powf(1.5) * inp.n * delta.powi(3);
    let delta2 = (delta1 / ab).powi(2) + delta * delta * ld;
    let raw_t0 = (2.0 * c * delta1 / ab).powi(2);
    let t0 = raw_t0.min(0.5);
    let t = t0 + delta * delta * ld;
    let kappa = (12.0 * ld - 2.0 * (-(-t).exp_m1()).ln()).sqrt() + 1.0 / (2.0 * ld).sqrt();
    let l2 = log_floor(delta2);
    let bound = c
        * (delta0 / inp.alpha_sq * l2
            + delta1 / ab * (ld * l2 + ld.sqrt() * l2.powf(1.5))
            + delta * ld.powf(1.5));
    Ok(BoundedCase { delta0, delta1, delta2, t0, t, kappa, bound, t0_clamped: raw_t0 >= 0.5 })
}

/// Kolmogorov distance bound between two centered Gaussians whose
/// covariances differ by `delta_inf` in sup norm.
pub fn gauss_comparison_bound(delta_inf: f64, d: f64, alpha_sq: f64, c_user: f64) -> Result<f64> {
    if !(alpha_sq > 0.0) {
        return Err(Error::ZeroAlpha);
    }
    if !(delta_inf >= 0.0) {
        return Err(Error::InvalidArgument("delta_inf must be nonnegative".into()));
    }
    if delta_inf == 0.0 {
        return Ok(0.0);
    }
    Ok(c_user * delta_inf * d.ln() * log_floor(delta_inf) / alpha_sq)
}

/// Multiplier bootstrap bound holding with probability at least `1 - gamma`.
pub fn bootstrap_bound(inp: &BoundInputs) -> Result<f64> {
    if !(inp.alpha_sq > 0.0) {
        return Err(Error::ZeroAlpha);
    }
    inp.validate()?;
    Ok(inp.c_user * inp.b_scale.powi(2) * (inp.d / inp.gamma).ln().powf(1.5) * inp.n.ln()
        / (inp.alpha_sq * inp.n.sqrt()))
}

/// Scale of `||Sigma_n - Sigma||_inf` used to envelope bootstrap covariance error.
pub fn bootstrap_envelope(n: f64, d: f64, b_scale: f64, gamma: f64, constant: f64) -> f64 {
    constant * b_scale * b_scale * ((d / gamma).ln() / n).sqrt()
}

/// Earlier bounds, for overlays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriorBounds {
    pub quarter_rate: f64,
    /// Absent when the smallest eigenvalue is not positive.
    pub eigen_floor: Option<f64>,
}

pub fn prior_bounds(inp: &BoundInputs, sigma_star_sq: f64) -> PriorBounds {
    let (n, d, c, b) = (inp.n, inp.d, inp.c_user, inp.b_scale);
    let quarter_rate = c * b.sqrt() * (d * n).ln().powf(1.25) / n.powf(0.25);
    let eigen_floor = (sigma_star_sq > 0.0).then(|| c * b * d.ln().powf(1.5) * n.ln() / (sigma_star_sq * n.sqrt()));
    PriorBounds { quarter_rate, eigen_floor }
}

/// Like [`prior_bounds`] but fails when only the `eigen_floor` value is wanted.
pub fn eigen_floor_bound(inp: &BoundInputs, sigma_star_sq: f64) -> Result<f64> {
    prior_bounds(inp, sigma_star_sq).eigen_floor.ok_or(Error::ZeroSigmaStar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    pub kappa_n: f64,
    pub shift: f64,
    pub tail_prob_bound: f64,
}

/// Truncation level for the unbounded case and the price paid for it.
pub fn truncation_params(n: f64, d: f64, b_scale: f64) -> Result<Truncation> {
    if !(n >= 3.0) || !(b_scale > 0.0) || !(d >= 1.0) {
        return Err(Error::InvalidArgument("need n >= 3, d >= 1 and B > 0".into()));
    }
    let ln = n.ln();
    Ok(Truncation {
        kappa_n: 2.0 * b_scale * ln,
        shift: 32.0 * b_scale * ln * (d * n).ln() / n.sqrt(),
        tail_prob_bound: 2.0 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    // Rounded reference figures are compared loosely; the exact expressions
    // next to them are compared tightly.
    fn unit_inputs(n: f64, d: f64) -> BoundInputs {
        BoundInputs { n, d, ..BoundInputs::default() }
    }

    #[test]
    fn main_bound_reference_value() {
        let v = main_bound(&unit_inputs(1e4, 10.0)).unwrap();
        let l10 = 10f64.ln();
        let want = l10 * l10 * 1e5f64.ln().sqrt() * 1e4f64.ln().powi(4) / 100.0;
        assert_abs_diff_eq!(v, want, epsilon = 1e-9);
        assert_relative_eq!(v, 1295.1, max_relative = 2e-3);
        assert!(Evaluated::new(v, 1.0).vacuous);
        let zero_beta = BoundInputs { beta_sq: 0.0, ..unit_inputs(1e4, 10.0) };
        assert_eq!(main_bound(&zero_beta), Err(Error::ZeroBeta));
    }

    #[test]
    fn covariance_term_is_linear() {
        let a = main_bound_parts(&BoundInputs { cov_gap: 0.01, ..unit_inputs(500.0, 5.0) }).unwrap();
        let b = main_bound_parts(&BoundInputs { cov_gap: 0.02, ..unit_inputs(500.0, 5.0) }).unwrap();
        assert_abs_diff_eq!(b.cov_term, 2.0 * a.cov_term, epsilon = 1e-15);
        assert_eq!(a.rate_term, b.rate_term);
    }

    #[test]
    fn rate_term_has_half_power_after_polylog() {
        let ns: Vec<f64> = (0..8).map(|k| 1e3 * 4f64.powi(k)).collect();
        let ys: Vec<f64> = ns
            .iter()
            .map(|&n| {
                let raw = main_bound(&unit_inputs(n, 10.0)).unwrap();
                (raw / ((10.0 * n).ln().sqrt() * n.ln().powi(4))).ln()
            })
            .collect();
        let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
        let (_, s) = crate::stats::linear_fit(&xs, &ys);
        assert!((s + 0.5).abs() < 0.02);
        let far = main_bound(&unit_inputs(1e40, 10.0)).unwrap();
        assert!(far < 1e-10);
    }

    #[test]
    fn bounded_case_record() {
        let r = bounded_case_bound(0.05, &unit_inputs(100.0, 3.0)).unwrap();
        assert_abs_diff_eq!(r.delta1, 3f64.ln().powf(1.5) * 100.0 * 1.25e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(r.delta1, 0.01440, epsilon = 1e-5);
        assert_abs_diff_eq!(r.delta2, 2.954e-3, epsilon = 1e-6);
        assert!(r.kappa >= 1.0 && !r.t0_clamped);
        assert_abs_diff_eq!(r.t, r.t0 + 0.0025 * 3f64.ln(), epsilon = 1e-15);
        let tiny = bounded_case_bound(1e-9, &unit_inputs(100.0, 3.0)).unwrap();
        assert!(tiny.bound < 1e-6);
        let big = bounded_case_bound(0.5, &unit_inputs(100.0, 3.0)).unwrap();
        assert!(big.t0_clamped);
        assert!(2.0 * 2f64.sqrt() * big.delta1 >= 1.0);
    }

    #[test]
    fn gaussian_comparison_values() {
        assert_eq!(gauss_comparison_bound(0.0, 10.0, 0.75, 1.0).unwrap(), 0.0);
        let v = gauss_comparison_bound(0.01, 10.0, 0.75, 1.0).unwrap();
        assert_abs_diff_eq!(v, 0.01 * 10f64.ln() * 100f64.ln() / 0.75, epsilon = 1e-14);
        assert_relative_eq!(v, 0.14135, max_relative = 2e-3);
        assert_eq!(gauss_comparison_bound(0.01, 10.0, 0.0, 1.0), Err(Error::ZeroAlpha));
        let grid: Vec<f64> = (1..=100).map(|k| k as f64 / 100.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&x| gauss_comparison_bound(x, 10.0, 0.75, 1.0).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bootstrap_values() {
        let v = bootstrap_bound(&unit_inputs(1e4, 10.0)).unwrap();
        assert_abs_diff_eq!(v, 100f64.ln().powf(1.5) * 1e4f64.ln() / 100.0, epsilon = 1e-14);
        assert_relative_eq!(v, 0.9098, max_relative = 2e-3);
        let v4 = bootstrap_bound(&unit_inputs(4e4, 10.0)).unwrap();
        assert_abs_diff_eq!(v4 / v, 4e4f64.ln() / 1e4f64.ln() / 2.0, epsilon = 1e-12);
        let g = bootstrap_bound(&BoundInputs { gamma: 0.5, ..unit_inputs(1e4, 10.0) }).unwrap();
        assert!(g < v);
    }

    #[test]
    fn prior_values() {
        let p = prior_bounds(&unit_inputs(1e4, 10.0), 1.0);
        assert_abs_diff_eq!(p.quarter_rate, 1e5f64.ln().powf(1.25) / 10.0, epsilon = 1e-14);
        assert_relative_eq!(p.quarter_rate, 2.1240, max_relative = 2e-3);
        assert_abs_diff_eq!(p.eigen_floor.unwrap(), 0.3218, epsilon = 1e-4);
        let z = prior_bounds(&unit_inputs(1e4, 10.0), 0.0);
        assert!(z.eigen_floor.is_none() && z.quarter_rate > 0.0);
        assert_eq!(eigen_floor_bound(&unit_inputs(1e4, 10.0), 0.0), Err(Error::ZeroSigmaStar));
    }

    #[test]
    fn truncation_values() {
        let t = truncation_params(100.0, 10.0, 1.0).unwrap();
        assert_abs_diff_eq!(t.kappa_n, 9.2103, epsilon = 1e-4);
        assert_abs_diff_eq!(t.shift, 101.79, epsilon = 0.01);
        assert_abs_diff_eq!(t.tail_prob_bound, 0.02);
        let t2 = truncation_params(100.0, 10.0, 2.0).unwrap();
        assert_abs_diff_eq!(t2.kappa_n, 2.0 * t.kappa_n, epsilon = 1e-12);
        assert_abs_diff_eq!(t2.shift, 2.0 * t.shift, epsilon = 1e-12);
    }

    #[test]
    fn input_validation() {
        assert!(BoundInputs { gamma: 1.0, ..BoundInputs::default() }.validate().is_err());
        assert!(BoundInputs { n: 2.0, ..BoundInputs::default() }.validate().is_err());
        assert!(BoundInputs::default().validate().is_ok());
    }
}
