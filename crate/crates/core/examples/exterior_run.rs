//! One reduced trajectory started outside the hole, with its fate.
use reldiff::harness::{classify_fate, run_trajectory, EnsembleConfig};

fn main() -> anyhow::Result<()> {
    let cfg = EnsembleConfig { r0: 3.0, t0: 2.0, horizon: 200.0, ..EnsembleConfig::default() };
    for i in 0..5 {
        let path = run_trajectory(&cfg, i)?;
        let fate = classify_fate(&path, &cfg);
        println!(
            "trajectory {i}: {:?} ({:?}) after s = {:.2}, captured {}, {} crossings, residual swing {:.3}, max residual {:.1e}",
            fate.tag, fate.termination, fate.final_s, fate.captured, fate.crossings, fate.residual_swing.unwrap_or(f64::NAN), path.max_residual
        );
    }
    Ok(())
}
