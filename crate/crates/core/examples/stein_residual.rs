//! Residual of the smoothed Stein equation for a quadrant indicator, where
//! every term is computed from face integrals.

use nalgebra::DVector;
use steinclt::polytope::Polytope;
use steinclt::stein::{ou_smooth, stein_residual, QuadSpec};

fn main() -> steinclt::Result<()> {
    let p = Polytope::orthant(2, 0.5);
    let quad = QuadSpec::default();
    for t in [0.2, 1.0] {
        for w in [[0.0, 0.0], [1.0, -0.5], [-1.5, 2.0]] {
            let w = DVector::from_column_slice(&w);
            let smooth = ou_smooth(&p, t, &w, 200_000, 1)?;
            let res = stein_residual(&p, t, &w, &quad, 200_000, 2)?;
            println!(
                "t {t}  w ({:+.1}, {:+.1})  T_t h~ {:+.4}  residual {:+.2e} +- {:.1e}",
                w[0], w[1], smooth.value, res.value, res.stderr
            );
        }
    }
    Ok(())
}
