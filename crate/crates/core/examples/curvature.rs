//! Ricci curvature of each chart at a few sample points.
use reldiff::geometry::{Chart, MetricProvider};

fn main() -> reldiff::Result<()> {
    let charts = [
        Chart::SchwarzschildSpherical,
        Chart::EddingtonFinkelsteinInward,
        Chart::EddingtonFinkelsteinOutward,
    ];
    for chart in charts {
        let p = MetricProvider::schwarzschild(chart, 1.0);
        for r in [0.5, 3.0, 10.0] {
            let x = [0.0, r, 1.1, 0.3];
            if p.check_domain(&x).is_err() {
                continue;
            }
            let ric = p.ricci(&x, 1e-4)?;
            let worst = ric.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            println!("{:<32} r = {r:<5} max |Ric| = {worst:.2e}", chart.name());
        }
    }
    Ok(())
}
