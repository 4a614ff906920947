//! Pair and triple floors for a few correlation structures, including one
//! whose smallest eigenvalue is tiny while every small marginal is healthy.

use steinclt::corr::CorrelationModel;
use steinclt::rng;

fn main() -> steinclt::Result<()> {
    let mut r = rng::stream(11, &[]);
    let models = [
        ("equicorrelated 0.5", CorrelationModel::equicorrelated(6, 0.5)?),
        ("two blocks", CorrelationModel::two_block(6, 3, 0.8, 0.1)?),
        ("rank 4 + 1e-6 ridge", CorrelationModel::low_rank_ridge(6, 4, 1e-6, &mut r)?),
        ("rank 2", CorrelationModel::low_rank_ridge(6, 2, 0.0, &mut r)?),
    ];
    println!("{:<22} {:>9} {:>9} {:>11}", "model", "alpha^2", "beta^2", "lambda_min");
    for (name, m) in &models {
        let d = m.diagnostics();
        println!("{name:<22} {:>9.5} {:>9.5} {:>11.3e}", d.alpha_sq, d.beta_sq, d.sigma_star_sq);
    }
    Ok(())
}
