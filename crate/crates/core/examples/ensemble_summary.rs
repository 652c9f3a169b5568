//! Parallel ensemble of capture runs, exported as JSON.
use reldiff::harness::export::to_json;
use reldiff::harness::{run_ensemble, EnsembleConfig};

fn main() -> anyhow::Result<()> {
    let cfg = EnsembleConfig {
        n: 64,
        r0: 1.4,
        t0: -2.0,
        horizon: 20.0,
        max_crossings: Some(4),
        ..EnsembleConfig::default()
    };
    let mut s = run_ensemble(&cfg)?;
    println!(
        "captured {}/{} (95% CI {:.3}..{:.3})",
        s.captured.successes, s.captured.trials, s.captured.lower, s.captured.upper
    );
    s.records.truncate(2);
    println!("{}", to_json(&s)?);
    Ok(())
}
