//! Classification and closed-form integration of timelike geodesics.
use reldiff::geodesics::*;

fn main() -> reldiff::Result<()> {
    // bound orbit: energy midway between the well bottom and 1, started at the well bottom
    let c = critical_points(4.5, 1.0).expect("b above the last stable orbit");
    let bound = ((0.5 * (c.p2 + 1.0)).sqrt(), 4.5, 1.0 / c.u2, true);
    for (a, b, r0, outward) in [(0.95, 0.0, 10.0, false), bound, (1.05, 6.0, 20.0, false)] {
        let orbit = TimelikeOrbit::new(a, b, r0, 1.0, outward)?;
        println!("a = {a}, b = {b}, r0 = {r0}: case {} {:?}", orbit.class.case.tag(), orbit.class.motion);
        for p in orbit.path(60.0, 4)? {
            println!("  s = {:>6.2}  r = {:>8.4}  phi = {:>7.4}", p.s, p.r, p.phi);
        }
    }
    Ok(())
}
