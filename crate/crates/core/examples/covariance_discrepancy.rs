//! Discrepancy terms between two correlation matrices, computed both as
//! bilinear forms in the frame and in closed form.

use steinclt::corr::CorrelationModel;
use steinclt::stein::gauss_delta_terms;

fn main() -> steinclt::Result<()> {
    let sigma = CorrelationModel::equicorrelated(4, 0.4)?;
    let mut perturbed = sigma.sigma.clone();
    perturbed[(0, 1)] += 0.05;
    perturbed[(1, 0)] += 0.05;
    let sigma1 = CorrelationModel::validate_and_normalize(&perturbed)?;

    let terms = gauss_delta_terms(&sigma1.sigma, &sigma.sigma)?;
    println!("diagonal terms {:?}", terms.closed.diag_term);
    println!("largest row sum {:.6}", terms.closed.max_sum());
    println!("bilinear vs closed form gap {:.2e}", terms.max_gap);

    let same = gauss_delta_terms(&sigma.sigma, &sigma.sigma)?;
    println!("identical inputs give {}", same.closed.max_sum());
    Ok(())
}
