//! Asymptotic directions of the flat diffusion against the exact density.
use reldiff::minkowski::*;
use reldiff::rng::NoiseStream;

fn main() -> reldiff::Result<()> {
    let start = MinkowskiState::boosted(0.8, &[1.0, 0.0])?;
    let mut angles = Vec::new();
    for i in 0..400 {
        let mut noise = NoiseStream::new(7, i);
        let path = simulate(&start, 1.0, 2e-3, 1e3, 200.0, 0, &mut noise)?;
        let rep = asymptotic_direction(&path, 1e3)?;
        if rep.decided {
            angles.push(rep.theta[1].atan2(rep.theta[0]));
        }
    }
    println!("{} decided directions", angles.len());
    for q in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        let empirical = angles.iter().filter(|&&a| a <= q).count() as f64 / angles.len() as f64;
        println!("angle {q:>5.1}: empirical {empirical:.3}  exact {:.3}", scattering_cdf_2d(&start.p, q));
    }
    Ok(())
}
