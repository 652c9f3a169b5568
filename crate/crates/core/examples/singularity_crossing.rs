//! Events of a trajectory that falls in, reaches the singularity and re-emerges.
use reldiff::harness::{run_trajectory, EnsembleConfig};

fn main() -> anyhow::Result<()> {
    let cfg = EnsembleConfig {
        r0: 1.4,
        t0: -2.0,
        horizon: 50.0,
        max_crossings: Some(3),
        ..EnsembleConfig::default()
    };
    let path = run_trajectory(&cfg, 0)?;
    for e in &path.events {
        println!("{:<18} s = {:>8.4}  r = {:.3e}  b = {:.4}", e.kind.name(), e.s, e.r, e.b);
    }
    for x in &path.excursions {
        println!(
            "excursion {}: slope {:.4}, T r^3/2 ratio {:.4}, top radius {:?}",
            x.index, x.fit.slope, x.fit.t_r32_ratio, x.top_radius
        );
    }
    println!("termination: {:?}", path.termination);
    Ok(())
}
