//! Compares facet decompositions of derivative integrals with a direct
//! Monte Carlo estimate over the polytope, on a random polytope read from
//! the text literal format.

use nalgebra::DVector;
use steinclt::gaussint::{volume_integral_oracle, DerivativeCoefficient, FaceTable};
use steinclt::polytope::Polytope;
use steinclt::rng;
use steinclt::suite::random_coefficients;

fn main() -> steinclt::Result<()> {
    let mut r = rng::stream(3, &[]);
    let p = Polytope::random(4, 4, 1.5, &mut r)?;
    let text = p.to_literal();
    println!("{text}");
    let p: Polytope = text.parse()?;

    let zero = DVector::zeros(4);
    let table = FaceTable::build(&p, &zero, 3, 200_000, 1)?;
    for coeff in random_coefficients(4, &mut r) {
        let dec = match &coeff {
            DerivativeCoefficient::Vector(u) => table.grad(u),
            DerivativeCoefficient::Matrix(m) => table.hessian(m),
            DerivativeCoefficient::Tensor(t) => table.third(t)?,
        };
        let direct = volume_integral_oracle(&p, &coeff, &zero, 200_000, 2)?;
        println!(
            "order {}: faces {:+.5} ({:.1e})  direct {:+.5} ({:.1e})  z = {:.2}",
            coeff.order(),
            dec.value,
            dec.stderr,
            direct.value,
            direct.stderr,
            dec.z_score(&direct)
        );
    }
    Ok(())
}
