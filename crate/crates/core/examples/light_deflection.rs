//! Null geodesics: turning radii and the swing angle of confined light.
use reldiff::geodesics::*;

fn main() -> reldiff::Result<()> {
    let alpha = 0.3;
    let c = classify_null(alpha, 1.0)?;
    println!("alpha = {alpha}: {} rho = {:?} rho' = {:?}", c.case.tag(), c.rho, c.rho_prime);
    for rho in [1.0, 1.1, 1.25, 1.4, 1.49] {
        println!(
            "rho = {rho:<5} quadrature {:.10}  elliptic {:.10}",
            deflection_integral(rho, 1.0)?,
            deflection_integral_elliptic(rho, 1.0)?
        );
    }
    Ok(())
}
