//! Outer cones of faces at the same level never overlap; count how much of
//! the space each level covers.

use steinclt::polytope::Polytope;
use steinclt::rng;
use steinclt::suite::cone_overlaps;

fn main() -> steinclt::Result<()> {
    let mut r = rng::stream(8, &[]);
    let p = Polytope::random(5, 6, 1.0, &mut r)?;
    for c in cone_overlaps(&p, 100_000, 1)? {
        println!(
            "level {}: {} cones, {:.3} of points covered, {} in two or more",
            c.level,
            c.cones,
            c.points_in_some_cone as f64 / c.points as f64,
            c.violations
        );
    }
    Ok(())
}
