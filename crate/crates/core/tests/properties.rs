//! Randomized invariants across modules.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng as _;
use steinclt::bounds::{bootstrap_bound, bounded_case_bound, main_bound_parts, gauss_comparison_bound, prior_bounds, BoundInputs};
use steinclt::corr::CorrelationModel;
use steinclt::experiment::{rho_estimate, truncate_hat, DataModel, Innovation, Pairing, RectangleFamily};
use steinclt::gaussint::{grad_integral, mc_region_measure, Region};
use steinclt::polytope::{derived_normal_pair, FacetIndex, Polytope};
use steinclt::rng;
use steinclt::stein::{gauss_delta_terms, ou_indicator, ou_smooth};

fn correlation(d: usize, seed: u64) -> CorrelationModel {
    CorrelationModel::random(d, &mut rng::stream(seed, &[])).unwrap()
}

fn inputs() -> impl Strategy<Value = BoundInputs> {
    (1e3..1e9f64, 3.0..500.0f64, 0.2..5.0f64, 0.05..1.0f64, 0.05..1.0f64, 0.0..0.5f64, 0.01..0.5f64).prop_map(
        |(n, d, b_scale, alpha_sq, beta_sq, cov_gap, gamma)| BoundInputs {
            n,
            d,
            b_scale,
            alpha_sq,
            beta_sq: beta_sq.min(alpha_sq),
            cov_gap,
            gamma,
            c_user: 1.0,
        },
    )
}

proptest! {
    #[test]
    fn pair_floor_is_one_minus_largest_squared_correlation(d in 2usize..9, seed in any::<u64>()) {
        let m = correlation(d, seed);
        let mut worst: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                if j != k {
                    worst = worst.max(m.sigma[(j, k)].powi(2));
                }
            }
        }
        prop_assert!((m.alpha_sq - (1.0 - worst)).abs() <= 1e-15);
    }

    #[test]
    fn frame_gram_reproduces_sigma(d in 2usize..9, seed in any::<u64>()) {
        let m = correlation(d, seed);
        let frame = m.unit_frame().unwrap();
        prop_assert!((frame.gram() - &m.sigma).amax() <= 1e-10);
    }

    #[test]
    fn perturbation_keeps_unit_diagonal(d in 2usize..9, seed in any::<u64>(), eps in 1e-6..0.5f64) {
        let p = correlation(d, seed).perturb_to_full_rank(eps);
        prop_assert!((0..d).all(|j| p.sigma[(j, j)] == 1.0));
    }

    #[test]
    fn pair_conormals_lie_in_the_span(seed in any::<u64>(), d in 2usize..7) {
        let m = correlation(d, seed);
        let f = m.unit_frame().unwrap();
        let (vj, vk) = (&f.normals[0], &f.normals[1]);
        for w in [derived_normal_pair(vj, vk).unwrap(), derived_normal_pair(vk, vj).unwrap()] {
            let g = DMatrix::from_columns(&[vj.clone(), vk.clone()]);
            let coef = (g.transpose() * &g).lu().solve(&(g.transpose() * &w)).unwrap();
            prop_assert!((&g * coef - &w).norm() <= 1e-10);
            prop_assert!((w.norm() - 1.0).abs() <= 1e-12);
        }
        prop_assert!(derived_normal_pair(vj, vk).unwrap().dot(vj).abs() <= 1e-12);
        prop_assert!(derived_normal_pair(vj, vk).unwrap().dot(vk) > 0.0);
    }

    #[test]
    fn inflation_is_monotone(seed in any::<u64>(), s in -1.0..1.0f64, ds in 0.0..1.0f64) {
        let mut r = rng::stream(seed, &[]);
        let p = Polytope::random(3, 4, 1.0, &mut r).unwrap();
        let (small, big) = (p.inflate(s), p.inflate(s + ds));
        for _ in 0..200 {
            let x = DVector::from_fn(3, |_, _| 2.0 * r.sample::<f64, _>(rand_distr::StandardNormal));
            prop_assert!(!small.contains(&x) || big.contains(&x));
        }
    }

    #[test]
    fn bounds_are_monotone(inp in inputs(), up in 1.0..3.0f64) {
        let f = |i: &BoundInputs| main_bound_parts(i).unwrap().bound;
        let larger_b = BoundInputs { b_scale: inp.b_scale * up, ..inp.clone() };
        let larger_gap = BoundInputs { cov_gap: inp.cov_gap * up + 1e-3, ..inp.clone() };
        let larger_alpha = BoundInputs { alpha_sq: (inp.alpha_sq * up).min(1.0), ..inp.clone() };
        let larger_beta = BoundInputs { beta_sq: (inp.beta_sq * up).min(1.0), ..inp.clone() };
        prop_assert!(f(&larger_b) >= f(&inp));
        prop_assert!(f(&larger_gap) >= f(&inp));
        prop_assert!(f(&larger_alpha) <= f(&inp));
        prop_assert!(f(&larger_beta) <= f(&inp));
        prop_assert!(bootstrap_bound(&larger_b).unwrap() >= bootstrap_bound(&inp).unwrap());
        prop_assert!(bootstrap_bound(&larger_alpha).unwrap() <= bootstrap_bound(&inp).unwrap());
        let pb = |i: &BoundInputs, s: f64| prior_bounds(i, s);
        prop_assert!(pb(&larger_b, 0.1).quarter_rate >= pb(&inp, 0.1).quarter_rate);
        prop_assert!(pb(&inp, 0.1 * up).eigen_floor.unwrap() <= pb(&inp, 0.1).eigen_floor.unwrap());
        let gap = 1e-4 * up;
        let g = |x: f64| gauss_comparison_bound(x, inp.d, inp.alpha_sq, 1.0).unwrap();
        prop_assert!(g(gap * up) >= g(gap));
        prop_assert!(bounded_case_bound(1e-3, &larger_gap).unwrap().bound >= bounded_case_bound(1e-3, &inp).unwrap().bound);
    }

    #[test]
    fn bounds_decrease_in_n_past_the_polylog_peak(inp in inputs(), up in 1.0..10.0f64) {
        // The sampling part carries (log n)^4 and only turns down for large n;
        // the covariance part grows like log n, so the comparison uses a zero gap.
        let base = BoundInputs { n: inp.n.max(1e6) * 1e2, cov_gap: 0.0, ..inp };
        let more = BoundInputs { n: base.n * up, ..base.clone() };
        prop_assert!(main_bound_parts(&more).unwrap().bound <= main_bound_parts(&base).unwrap().bound);
        prop_assert!(bootstrap_bound(&more).unwrap() <= bootstrap_bound(&base).unwrap());
        prop_assert!(prior_bounds(&more, 0.2).quarter_rate <= prior_bounds(&base, 0.2).quarter_rate);
    }

    #[test]
    fn clamped_start_time_means_vacuous_bounded_case(delta in 1e-3..0.5f64, inp in inputs()) {
        let b = bounded_case_bound(delta, &inp).unwrap();
        if b.t0_clamped {
            prop_assert!(2.0 * 2f64.sqrt() * b.delta1 / (inp.alpha_sq * inp.beta_sq) >= 1.0);
        }
    }

    #[test]
    fn delta_term_paths_agree(d in 2usize..8, s1 in any::<u64>(), s2 in any::<u64>()) {
        let t = gauss_delta_terms(&correlation(d, s1).sigma, &correlation(d, s2).sigma).unwrap();
        prop_assert!(t.max_gap <= 1e-9);
    }

    #[test]
    fn truncation_leaves_bounded_data_unchanged(seed in any::<u64>(), n in 20usize..200) {
        let model = DataModel::new(CorrelationModel::equicorrelated(3, 0.4).unwrap(), Innovation::UniformPm);
        let x = model.simulate_x(n, seed);
        let t = truncate_hat(&model, &x).unwrap();
        if t.truncated_entries == 0 {
            prop_assert!(t.w.iter().zip(t.w_hat.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn distance_is_symmetric_and_shrinks_on_subfamilies(seed in any::<u64>()) {
        let model = DataModel::new(CorrelationModel::equicorrelated(2, 0.3).unwrap(), Innovation::Rademacher);
        let p = model.simulate_w(8, 400, seed);
        let q = model.simulate_gaussian(400, seed ^ 1);
        let grid = RectangleFamily::grid(2, 13, -3.0, 3.0).unwrap();
        let a = rho_estimate(&p, &q, &grid, Pairing::Independent).unwrap();
        let b = rho_estimate(&q, &p, &grid, Pairing::Independent).unwrap();
        prop_assert_eq!(a.rho_hat, b.rho_hat);
        let coarse = RectangleFamily::grid(2, 7, -3.0, 3.0).unwrap();
        let c = rho_estimate(&p, &q, &coarse, Pairing::Independent).unwrap().rho_hat;
        // Masses are cumulated in a different order on the two grids.
        prop_assert!(c <= a.rho_hat + 1e-12, "{} > {}", c, a.rho_hat);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn smoothing_is_bounded_and_monotone_in_the_set(seed in any::<u64>(), t in 0.05..3.0f64, grow in 0.0..1.0f64) {
        let mut r = rng::stream(seed, &[]);
        let p = Polytope::random(3, 3, 1.5, &mut r).unwrap();
        let x = DVector::from_fn(3, |_, _| r.sample::<f64, _>(rand_distr::StandardNormal));
        let s = ou_smooth(&p, t, &x, 4000, seed).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s.value));
        let inner = ou_indicator(&p, t, &x, 4000, seed).unwrap();
        let outer = ou_indicator(&p.inflate(grow), t, &x, 4000, seed).unwrap();
        prop_assert!(inner.value <= outer.value);
    }

    #[test]
    fn estimates_are_bit_reproducible(seed in any::<u64>(), n in 100usize..5000) {
        let mut r = rng::stream(seed, &[]);
        let p = Polytope::random(4, 4, 1.0, &mut r).unwrap();
        let u = DVector::from_element(4, 0.5);
        let zero = DVector::zeros(4);
        let a = grad_integral(&p, &u, &zero, n, seed).unwrap();
        let b = grad_integral(&p, &u, &zero, n, seed).unwrap();
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        prop_assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn level_one_cone_masses_sum_below_one(seed in any::<u64>()) {
        let mut r = rng::stream(seed, &[]);
        let p = Polytope::random(3, 5, 1.0, &mut r).unwrap();
        let zero = DVector::zeros(3);
        let mut total = 0.0;
        let mut var = 0.0;
        for j in p.finite() {
            let m = mc_region_measure(&Region::Cone(&p, FacetIndex::facet(j)), &zero, 20_000, seed).unwrap();
            total += m.value;
            var += m.stderr * m.stderr;
        }
        prop_assert!(total <= 1.0 + 4.0 * var.sqrt());
    }
}

#[test]
fn smallest_eigenvalue_below_pair_floor() {
    for k in 0..1000u64 {
        let m = correlation(2 + (k as usize % 8), k);
        assert!(m.sigma_star_sq <= m.alpha_sq + 1e-12, "seed {k}: {} > {}", m.sigma_star_sq, m.alpha_sq);
    }
}
