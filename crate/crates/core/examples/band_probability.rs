//! Gaussian mass of thin bands around the boundary of a polytope built from
//! a correlation frame, against the anti-concentration bound.

use steinclt::corr::CorrelationModel;
use steinclt::gaussint::nazarov_check;

fn main() -> steinclt::Result<()> {
    let frame = CorrelationModel::equicorrelated(8, 0.3)?.unit_frame()?;
    let offsets = vec![1.0; 8];
    for eps in [0.01, 0.05, 0.1, 0.5] {
        let c = nazarov_check(&frame.normals, &offsets, eps, 400_000, 5)?;
        println!("eps {eps:<5} band {:.5} +- {:.1e}   bound {:.5}", c.lhs.value, c.lhs.stderr, c.rhs);
    }
    Ok(())
}
