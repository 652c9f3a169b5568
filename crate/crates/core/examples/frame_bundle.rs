//! Noisy frame flow around a Schwarzschild hole, checking the frame stays orthonormal.
use std::f64::consts::FRAC_PI_2;

use reldiff::frame_flow::{ito_frame_step, FrameState};
use reldiff::geometry::{Chart, MetricProvider};
use reldiff::rng::NoiseStream;

fn main() -> reldiff::Result<()> {
    let p = MetricProvider::schwarzschild(Chart::SchwarzschildSpherical, 1.0);
    let r: f64 = 8.0;
    let f = 1.0 - 1.0 / r;
    let (a, b) = (1.02, 3.0);
    let rdot = (a * a - f * (1.0 + b * b / (r * r))).sqrt();
    let mut st = FrameState::new(&p, [0.0, r, FRAC_PI_2, 0.0], [a / f, rdot, 0.0, b / (r * r)])?;
    let mut noise = NoiseStream::new(1, 0);
    for k in 1..=20_000 {
        st = ito_frame_step(&st, &p, 0.3, 1e-3, &noise.next_normals())?;
        if k % 4000 == 0 {
            let x = st.x();
            println!(
                "s = {:>5.1}  r = {:>7.3}  defect = {:.1e}",
                k as f64 * 1e-3,
                x[1],
                st.frame.orthonormality_defect(&p)?
            );
        }
    }
    Ok(())
}
