//! Main bound, bounded-summand bound and two earlier bounds across sample
//! sizes. Values above 1 are flagged rather than clipped.

use steinclt::bounds::{bounded_case_bound, main_bound_parts, prior_bounds, BoundInputs};

fn main() -> steinclt::Result<()> {
    println!("{:>9} {:>12} {:>12} {:>12} {:>12}", "n", "main", "bounded", "quarter-rate", "eigen-floor");
    for k in 2..=9 {
        let inp = BoundInputs { n: 10f64.powi(k), d: 20.0, alpha_sq: 0.75, beta_sq: 0.6, ..BoundInputs::default() };
        let main = main_bound_parts(&inp)?;
        let bounded = bounded_case_bound(1.0 / inp.n.sqrt(), &inp)?;
        let prior = prior_bounds(&inp, 0.05);
        let flag = |v: f64| if v > 1.0 { "*" } else { " " };
        println!(
            "{:>9.0e} {:>11.4}{} {:>11.4}{} {:>11.4}{} {:>11.4}{}",
            inp.n,
            main.bound,
            flag(main.bound),
            bounded.bound,
            flag(bounded.bound),
            prior.quarter_rate,
            flag(prior.quarter_rate),
            prior.eigen_floor.unwrap_or(f64::NAN),
            flag(prior.eigen_floor.unwrap_or(0.0)),
        );
    }
    println!("* vacuous at this scale");
    Ok(())
}
