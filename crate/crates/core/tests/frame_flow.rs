use std::f64::consts::FRAC_PI_2;

use approx::assert_relative_eq;
use proptest::prelude::*;
use reldiff::frame_flow::*;
use reldiff::geometry::*;
use reldiff::rng::NoiseStream;
use reldiff::Error;

fn sph() -> MetricProvider {
    MetricProvider::schwarzschild(Chart::SchwarzschildSpherical, 1.0)
}

/// Equatorial unit velocity with energy `a` and angular momentum `b` at `r`.
fn equatorial(r: f64, a: f64, b: f64, outward: bool) -> V4 {
    let f = 1.0 - 1.0 / r;
    let t2 = a * a - f * (1.0 + b * b / (r * r));
    let rdot = if outward { t2.max(0.0).sqrt() } else { -t2.max(0.0).sqrt() };
    [a / f, rdot, 0.0, b / (r * r)]
}

#[test]
fn flat_geodesics_are_straight() {
    let p = MetricProvider::minkowski(3);
    let v = [1.25, 0.75, 0.0, 0.0];
    let mut st = FrameState::new(&p, [0.0; 4], v).unwrap();
    let e_start = st.frame.e;
    for _ in 0..100 {
        st = ito_frame_step(&st, &p, 0.0, 0.01, &[0.0; 3]).unwrap();
    }
    for k in 0..4 {
        assert_relative_eq!(st.x()[k], v[k], epsilon = 1e-12);
        for j in 0..4 {
            assert_relative_eq!(st.frame.e[j][k], e_start[j][k], epsilon = 1e-12);
        }
    }
}

#[test]
fn circular_orbit_stays_circular() {
    // b² = R r²/(2r − 3R), a² = (1 − R/r)² · 2r/(2r − 3R)
    let r: f64 = 6.0;
    let b = (r * r / (2.0 * r - 3.0)).sqrt();
    let a = ((1.0 - 1.0 / r) * (1.0 - 1.0 / r) * 2.0 * r / (2.0 * r - 3.0)).sqrt();
    let p = sph();
    let mut frame = frame_from_velocity(&p, &[0.0, r, FRAC_PI_2, 0.0], &equatorial(r, a, b, true)).unwrap();
    for _ in 0..20_000 {
        frame = geodesic_frame_step(&p, &frame, 1e-2).unwrap();
    }
    assert_relative_eq!(frame.x[1], r, epsilon = 1e-6);
    assert_relative_eq!(frame.x[2], FRAC_PI_2, epsilon = 1e-12);
    // period in proper time: 2π r²/b
    let angle = b / (r * r) * 200.0;
    assert_relative_eq!(frame.x[3], angle, epsilon = 1e-6);
}

#[test]
fn energy_and_momentum_are_conserved() {
    let p = sph();
    let (r0, a, b) = (8.0, 1.1, 3.9);
    let mut frame = frame_from_velocity(&p, &[0.0, r0, FRAC_PI_2, 0.0], &equatorial(r0, a, b, false)).unwrap();
    for _ in 0..5000 {
        frame = geodesic_frame_step(&p, &frame, 5e-3).unwrap();
        let r = frame.x[1];
        let v = frame.e[0];
        assert_relative_eq!((1.0 - 1.0 / r) * v[0], a, epsilon = 1e-9);
        assert_relative_eq!(r * r * v[3], b, epsilon = 1e-9);
    }
    assert!(frame.orthonormality_defect(&p).unwrap() < 1e-9);
}

#[test]
fn radial_infall_through_the_inward_chart() {
    // From rest at r0 the proper time to the centre is (π/2) r0^{3/2}/√R.
    let p = MetricProvider::schwarzschild(Chart::EddingtonFinkelsteinInward, 1.0);
    let r0: f64 = 3.0;
    let a = (1.0 - 1.0 / r0).sqrt();
    let v = [a / (1.0 - 1.0 / r0), 0.0, 0.0, 0.0];
    let mut frame = frame_from_velocity(&p, &[0.0, r0, FRAC_PI_2, 0.0], &v).unwrap();
    let h = 1e-4;
    let mut s = 0.0;
    while frame.x[1] > 0.05 {
        frame = geodesic_frame_step(&p, &frame, h).unwrap();
        s += h;
    }
    // cycloid: r = r0 (1 + cos η)/2, s = √(r0³/R) (η + sin η)/2
    let eta = (2.0 * frame.x[1] / r0 - 1.0).acos();
    let exact = (r0.powi(3)).sqrt() * (eta + eta.sin()) / 2.0;
    assert_relative_eq!(s, exact, epsilon = 2e-4);
}

#[test]
fn step_errors() {
    let p = sph();
    let st = FrameState::new(&p, [0.0, 1.02, FRAC_PI_2, 0.0], [1.0 / (1.0 - 1.0 / 1.02f64).sqrt(), 0.0, 0.0, 0.0]).unwrap();
    assert!(matches!(ito_frame_step(&st, &p, 1.0, 0.01, &[0.0; 2]), Err(Error::DimensionMismatch { .. })));
    // a large inward step leaves the exterior chart
    let fall = FrameState::new(&p, [0.0, 1.02, FRAC_PI_2, 0.0], [10.0, -0.99 * 10.0 * 0.98, 0.0, 0.0]);
    if let Ok(f) = fall {
        let out = ito_frame_step(&f, &p, 0.0, 1.0, &[0.0; 3]);
        assert!(matches!(out, Err(Error::OutsideChart { .. }) | Err(Error::DegenerateFrame(_))));
    }
    assert!(development_check(&[], &p, 1.0).is_err());
}

#[test]
fn covariation_annihilates_the_velocity() {
    let p = sph();
    let frame = frame_from_velocity(&p, &[0.0, 4.0, 1.1, 0.2], &equatorial(4.0, 1.1, 2.0, true)).unwrap();
    let k = vertical_covariation(&frame, &p, 0.7).unwrap();
    let g = p.metric(&frame.x).unwrap();
    let ge0 = mat_vec(&g, &frame.e[0]);
    for i in 0..4 {
        let v: f64 = (0..4).map(|j| k[i][j] * ge0[j]).sum();
        assert!(v.abs() < 1e-12);
        for j in 0..4 {
            assert_relative_eq!(k[i][j], k[j][i], epsilon = 1e-15);
        }
    }
}

#[test]
fn flat_development_is_the_velocity() {
    let p = MetricProvider::minkowski(3);
    let mut st = FrameState::new(&p, [0.0; 4], [1.0, 0.0, 0.0, 0.0]).unwrap();
    let mut noise = NoiseStream::new(3, 0);
    let mut path = vec![st];
    for _ in 0..20_000 {
        st = ito_frame_step(&st, &p, 1.0, 1e-4, &noise.next_normals()).unwrap();
        path.push(st);
    }
    let rep = development_check(&path, &p, 1.0).unwrap();
    assert!(rep.max_norm_drift < 1e-10);
    assert!(rep.max_development_defect < 1e-12);
    assert!(rep.relative_variation_error < 0.15, "{}", rep.relative_variation_error);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noisy_steps_keep_the_frame(seed in 0u64..500, r in 3.0f64..12.0, sigma in 0.2f64..1.5) {
        let p = sph();
        let mut st = FrameState::new(&p, [0.0, r, 1.2, 0.4], equatorial(r, 1.05, 1.5, true)).unwrap();
        let mut noise = NoiseStream::new(seed, 0);
        for _ in 0..200 {
            st = ito_frame_step(&st, &p, sigma, 1e-3, &noise.next_normals()).unwrap();
            prop_assert!(st.frame.orthonormality_defect(&p).unwrap() < 1e-10);
            prop_assert!(st.frame.is_future_directed());
        }
        let g0 = st.g0;
        prop_assert!((bilinear(&g0, &st.zeta, &st.zeta) - 1.0).abs() < 1e-8);
    }
}
