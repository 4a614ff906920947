//! Facet, ridge and corner decompositions on the negative orthant, where the
//! integrals factor into one-dimensional pieces.

use nalgebra::DVector;
use steinclt::gaussint::{FaceTable, Tensor3};
use steinclt::polytope::Polytope;
use steinclt::stats::phi;

fn unit(d: usize, j: usize) -> DVector<f64> {
    DVector::from_fn(d, |i, _| if i == j { 1.0 } else { 0.0 })
}

fn main() -> steinclt::Result<()> {
    let p = Polytope::orthant(3, 0.0);
    let table = FaceTable::build(&p, &DVector::zeros(3), 3, 1_000_000, 1)?;
    let p0 = phi(0.0);
    let (e1, e2, e3) = (unit(3, 0), unit(3, 1), unit(3, 2));

    let g = table.grad(&e1);
    let h = table.hessian(&(&e1 * e2.transpose()));
    let t = table.third(&Tensor3::outer(&e1, &e2, &e3))?;
    println!("gradient  {:.7} +- {:.1e}   closed form {:.7}", g.value, g.stderr, p0 / 4.0);
    println!("hessian   {:.7} +- {:.1e}   closed form {:.7}", h.value, h.stderr, p0 * p0 / 2.0);
    println!("third     {:.7} +- {:.1e}   closed form {:.7}", t.value, t.stderr, p0.powi(3));
    Ok(())
}
