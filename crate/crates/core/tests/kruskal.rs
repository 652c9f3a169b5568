use std::f64::consts::{FRAC_PI_2, PI};

use approx::assert_relative_eq;
use proptest::prelude::*;
use reldiff::geometry::Chart;
use reldiff::kruskal::*;
use reldiff::rng::NoiseStream;
use reldiff::schwarzschild::{ReducedConfig, ReducedState};

const R: f64 = 1.0;
const E1: [f64; 3] = [1.0, 0.0, 0.0];
const E2: [f64; 3] = [0.0, 1.0, 0.0];

fn rstar(r: f64) -> f64 {
    r + R * (r / R - 1.0).abs().ln()
}

/// `∫₀^{r_top} g(r) r^{3/2} dr / √(a²r³ + (R − r)(r² + b²))` with `r = r_top y²`, midpoint rule.
fn inside_integral<G: Fn(f64) -> f64>(r_top: f64, a: f64, b: f64, g: G) -> f64 {
    let n = 400_000;
    let mut acc = 0.0;
    for i in 0..n {
        let y = (i as f64 + 0.5) / n as f64;
        let r = r_top * y * y;
        let den = (a * a * r.powi(3) + (R - r) * (r * r + b * b)).sqrt();
        acc += g(r) * r.powf(1.5) / den * 2.0 * r_top * y / n as f64;
    }
    acc
}

fn exterior(r: f64, t: f64, b: f64) -> ReducedState {
    ReducedState::from_constraint(r, t, b, 1.0, E1, E2, R).unwrap()
}

fn icfg(sigma: f64) -> InteriorConfig {
    InteriorConfig {
        r_s: R,
        sigma,
        r_stop: 1e-6,
        record_all: true,
    }
}

#[test]
fn kruskal_coordinates_of_the_exterior() {
    for (t, r) in [(0.0, 2.0), (3.0, 1.5), (-7.0, 10.0)] {
        let (u, v) = ks_from_schwarzschild(t, r, R).unwrap();
        assert_relative_eq!(u * u - v * v, (r / R - 1.0) * (r / R).exp(), max_relative = 1e-12);
        assert_relative_eq!(v / u, (t / (2.0 * R)).tanh(), epsilon = 1e-14);
        assert_eq!(Region::of(u, v), Some(Region::Exterior));
        let (um, up) = ef_coordinates(u, v, R);
        assert_relative_eq!(um.unwrap(), t + rstar(r), epsilon = 1e-10);
        assert_relative_eq!(up.unwrap(), t - rstar(r), epsilon = 1e-10);
    }
    assert!(ks_from_schwarzschild(0.0, 0.5, R).is_err());
}

#[test]
fn regions() {
    assert_eq!(Region::of(0.0, 1.0), Some(Region::BlackHole));
    assert_eq!(Region::of(-1.0, 0.0), Some(Region::MirrorExterior));
    assert_eq!(Region::of(0.0, -1.0), Some(Region::WhiteHole));
    assert_eq!(Region::of(1.0, 1.0), None);
    for reg in [Region::Exterior, Region::BlackHole, Region::MirrorExterior, Region::WhiteHole] {
        let (p, q) = reg.signs();
        let (u, v) = (0.5 * (p * 0.3 + q * 0.7), 0.5 * (p * 0.3 - q * 0.7));
        assert_eq!(Region::of(u, v), Some(reg));
    }
}

#[test]
fn clock_reproduces_kruskal_point() {
    for (t, r, big_t) in [(1.0, 3.0, -0.5), (1.0, 3.0, 0.5), (-2.0, 1.2, 0.1)] {
        let st = exterior(r, big_t, 1.0);
        let mut clock = EfClock::exterior(t, r, st.a, big_t, R);
        let (u, v) = ks_from_schwarzschild(t, r, R).unwrap();
        let (ku, kv) = clock.kruskal(r, R).unwrap();
        assert_relative_eq!(ku, u, max_relative = 1e-12);
        assert_relative_eq!(kv, v, max_relative = 1e-12, epsilon = 1e-14);
        let (um, up) = clock.both(r, R);
        assert_relative_eq!(um.unwrap() - up.unwrap(), 2.0 * rstar(r), epsilon = 1e-12);
        // retracking keeps the point
        clock.retrack(st.a, -big_t, r, R);
        let (ku2, kv2) = clock.kruskal(r, R).unwrap();
        assert_relative_eq!(ku2, u, max_relative = 1e-12);
        assert_relative_eq!(kv2, v, max_relative = 1e-12, epsilon = 1e-14);
    }
}

#[test]
fn clock_rate_gives_back_the_energy() {
    let st = exterior(2.5, -0.4, 1.7);
    for tr in [Tracked::UMinus, Tracked::UPlus] {
        assert_relative_eq!(energy_from_clock(tr, st.r, st.a, st.b, st.t, R), st.a, max_relative = 1e-12);
    }
}

#[test]
fn chi_grid_shape() {
    let stop = chi_of_r(1e-6, R);
    assert_relative_eq!(R * stop.sin().powi(2), 1e-6, max_relative = 1e-12);
    let g = chi_grid(stop);
    assert_eq!(g[0], FRAC_PI_2);
    assert_eq!(*g.last().unwrap(), stop);
    for w in g.windows(2) {
        assert!(w[1] < w[0] && w[0] - w[1] <= PI / 256.0 + 1e-15);
    }
    assert_eq!(chi_of_r(2.0, R), FRAC_PI_2);
}

#[test]
fn sliver_integrals_against_quadrature() {
    for (r_stop, a, b) in [(1e-3, 0.8, 1.0), (0.1, 2.0, 0.3), (0.5, 0.1, 3.0)] {
        let (s, th, _) = sliver_integrals(r_stop, a, b, R, Tracked::UMinus, -1.0);
        assert_relative_eq!(s, inside_integral(r_stop, a, b, |_| 1.0), max_relative = 1e-7);
        assert_relative_eq!(th, inside_integral(r_stop, a, b, |r| b / (r * r)), max_relative = 1e-6);
    }
    let (r, b) = (1e-4, 0.7);
    let (s, _, _) = sliver_integrals(r, 0.9, b, R, Tracked::UMinus, -1.0);
    assert_relative_eq!(singularity_time_two_term(r, b, R), s, max_relative = 1e-7);
}

#[test]
fn noiseless_inbound_leg() {
    let (a, b) = (1.3, 0.6);
    let start = ReducedState {
        r: R,
        a,
        b,
        t: -a,
        theta: E1,
        n: E2,
        s: 5.0,
    };
    let clock = EfClock::exterior(0.0, 2.0, a, -0.1, R);
    let mut noise = NoiseStream::new(1, 0);
    let (leg, bp, fit) = inbound_leg(&start, clock, &icfg(0.0), &mut noise).unwrap();
    assert_eq!((bp.a, bp.b), (a, b));
    assert_relative_eq!(bp.d_prime - 5.0, inside_integral(R, a, b, |_| 1.0), max_relative = 1e-8);
    assert_relative_eq!(leg.swing, inside_integral(R, a, b, |r| b / (r * r)), max_relative = 1e-6);
    assert!(bp.d_prime - 5.0 <= FRAC_PI_2 * R);
    assert!((fit.slope - 0.4).abs() < 1e-3, "{fit:?}");
    assert!((fit.t_r32_ratio - 1.0).abs() < 1e-3, "{fit:?}");
    assert!(leg.max_orthogonality_defect < 1e-12);
    // the in-plane rotation is about the plane normal
    assert_relative_eq!(bp.plane[2], 1.0, epsilon = 1e-12);
    assert_relative_eq!(bp.theta[0], leg.swing.cos(), epsilon = 1e-9);
}

#[test]
fn noiseless_regeneration_mirrors_the_inbound_leg() {
    let (a, b) = (0.7, 1.1);
    let start = ReducedState {
        r: R,
        a,
        b,
        t: -a,
        theta: E1,
        n: E2,
        s: 0.0,
    };
    let clock = EfClock::exterior(0.0, 2.0, a, -0.1, R);
    let mut noise = NoiseStream::new(1, 0);
    let (inb, bp, _) = inbound_leg(&start, clock, &icfg(0.0), &mut noise).unwrap();
    let (out_leg, out, ef) = regenerate(&bp, &icfg(0.0), &mut noise).unwrap();
    assert_relative_eq!(out.s - bp.d_prime, bp.d_prime, max_relative = 1e-12);
    assert_relative_eq!(out_leg.swing, inb.swing, max_relative = 1e-12);
    assert_eq!((out.r, out.a, out.b, out.t), (R, a, b, a));
    assert_eq!(ef.region, Region::Exterior);
}

#[test]
fn transport_series_converges_to_the_rotation() {
    let bp = BoundaryPoint {
        a: 0.9,
        b: 0.8,
        theta: E1,
        n: E2,
        plane: [0.0, 0.0, 1.0],
        u_minus: 0.0,
        u_plus: 0.0,
        d_prime: 0.0,
    };
    let mut noise = NoiseStream::new(9, 4);
    let (leg, _, _) = regenerate(&bp, &icfg(0.7), &mut noise).unwrap();
    let v0 = frame_matrix(&E1, &E2);
    let exact = *angular_transport_solve(&leg.increments, &v0).last().unwrap();
    assert!(rotation_defect(&exact) < 1e-12);
    let gap = |k| {
        let s = transport_series(&leg.increments, &v0, k);
        (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).fold(0.0f64, |m, (i, j)| m.max((s[i][j] - exact[i][j]).abs()))
    };
    let (g4, g40) = (gap(4), gap(40));
    assert!(g40 < g4);
    assert!(g40 < 0.05, "{g40}");
    assert!(series_constant(&leg.increments) > 0.0);
    assert!(series_tail_bound(1.0, 1.0, 10) > series_tail_bound(1.0, 1.0, 20));
}

#[test]
fn spherical_state_to_reduced() {
    let r: f64 = 4.0;
    let f = 1.0 - R / r;
    // equatorial, moving in ψ with angular rate 0.05 and outward 0.2
    let (vr, vps) = (0.2, 0.05);
    let vt = ((1.0 + vr * vr / f + r * r * vps * vps) / f).sqrt();
    let cs = ChartState {
        chart: Chart::SchwarzschildSpherical,
        x: [1.5, r, FRAC_PI_2, 0.0],
        velocity: [vt, vr, 0.0, vps],
    };
    let (st, t) = reduced_from_spherical(&cs, R, 1e-8).unwrap();
    assert_eq!(t, 1.5);
    assert_relative_eq!(st.a, f * vt, max_relative = 1e-12);
    assert_relative_eq!(st.b, r * r * vps, max_relative = 1e-12);
    assert_relative_eq!(st.theta[0], 1.0, epsilon = 1e-12);
    assert_relative_eq!(st.plane()[2], 1.0, epsilon = 1e-12);
    let mut bad = cs;
    bad.chart = Chart::EddingtonFinkelsteinInward;
    assert!(reduced_from_spherical(&bad, R, 1e-8).is_err());
}

#[test]
fn ef_step_follows_radial_infall_through_the_horizon() {
    let r0: f64 = 3.0;
    let cfg = ReducedConfig::new(R, 0.0);
    let st = exterior(r0, 0.0, 1e-6);
    let a = st.a;
    let mut state = EfState {
        reduced: st,
        ef: EfClock::exterior(0.0, r0, a, -1.0, R),
    };
    let h = 1e-4;
    while state.reduced.r > 0.3 {
        state = ef_step(&state, &cfg, h, &[0.0; 4]).unwrap();
        let x = &state.reduced;
        if (x.r - R).abs() > 1e-3 {
            assert_relative_eq!(energy_from_clock(state.ef.tracked, x.r, x.a, x.b, x.t, R), a, max_relative = 1e-8);
        }
    }
    assert_eq!(state.ef.region, Region::BlackHole);
    let eta = (2.0 * state.reduced.r / r0 - 1.0).acos();
    let exact = (r0.powi(3) / R).sqrt() * (eta + eta.sin()) / 2.0;
    assert_relative_eq!(state.reduced.s, exact, max_relative = 1e-4);
}

/// Apex of the plunge, `a² = (1 − R/r)(1 + b²/r²)`.
fn apex(a: f64, b: f64) -> f64 {
    let g = |r: f64| (1.0 - R / r) * (1.0 + b * b / (r * r)) - a * a;
    let (mut lo, mut hi) = (R, 100.0);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if g(m) < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    lo
}

#[test]
fn noiseless_trajectory_repeats_its_excursion() {
    let cfg = ReducedConfig::new(R, 0.0);
    let st = exterior(3.0, -0.1, 1.0);
    let mut policy = ExtendPolicy::new(R, 200.0);
    policy.max_crossings = Some(3);
    policy.h0 = 2e-3;
    let mut noise = NoiseStream::new(0, 0);
    let path = extend_trajectory(&st, 0.0, &cfg, &policy, &mut noise).unwrap();
    assert_eq!(path.termination, Termination::CrossingBudget);
    assert_eq!(path.singularity_hits, 3);
    let kinds: Vec<EventKind> = path.events.iter().map(|e| e.kind).collect();
    assert_eq!(
        kinds,
        [
            EventKind::HorizonFirst,
            EventKind::Singularity,
            EventKind::HorizonOut,
            EventKind::HorizonIn,
            EventKind::Singularity,
            EventKind::HorizonOut,
            EventKind::HorizonIn,
            EventKind::Singularity,
        ]
    );
    let top = apex(st.a, st.b);
    let e0 = &path.excursions[0];
    let e1 = &path.excursions[1];
    assert_relative_eq!(e0.top_radius.unwrap(), top, max_relative = 1e-5);
    assert_relative_eq!(e0.upswing.unwrap(), e0.downswing.unwrap(), max_relative = 1e-3);
    // identical excursions
    assert_relative_eq!(e1.d_singularity - e1.d_in, e0.d_singularity - e0.d_in, max_relative = 1e-9);
    let e2 = &path.excursions[2];
    assert_relative_eq!(e2.d_in - e1.d_out.unwrap(), e1.d_in - e0.d_out.unwrap(), max_relative = 1e-4);
    for e in &path.excursions[..2] {
        assert!(e.d_singularity - e.d_in <= FRAC_PI_2 * R);
        assert!(e.d_out.unwrap() - e.d_singularity <= FRAC_PI_2 * R);
        assert_eq!(e.a_out, Some(st.a));
    }
    assert!(path.max_residual < 1e-12);
}

#[test]
fn runs_are_reproducible() {
    let cfg = ReducedConfig::new(R, 1.0);
    let st = exterior(1.4, -2.0, 1.0);
    let mut policy = ExtendPolicy::new(R, 30.0);
    policy.max_crossings = Some(5);
    policy.record_every = 10;
    let run = |traj| extend_trajectory(&st, 0.0, &cfg, &policy, &mut NoiseStream::new(42, traj)).unwrap();
    let (p, q) = (run(3), run(3));
    assert_eq!(p, q);
    assert_ne!(p.final_state, run(4).final_state);
    let mut bad = st;
    bad.r = 0.5;
    assert!(extend_trajectory(&bad, 0.0, &cfg, &policy, &mut NoiseStream::new(0, 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn inside_halves_are_short(seed in 0u64..1000, a in 0.05f64..5.0, b in 0.05f64..5.0, sigma in 0.0f64..2.0) {
        let start = ReducedState { r: R, a, b, t: -a, theta: E1, n: E2, s: 0.0 };
        let clock = EfClock::exterior(0.0, 2.0, a, -0.1, R);
        let mut noise = NoiseStream::new(seed, 0);
        let cfg = InteriorConfig { record_all: false, ..icfg(sigma) };
        let (inb, bp, fit) = inbound_leg(&start, clock, &cfg, &mut noise).unwrap();
        prop_assert!(bp.d_prime <= FRAC_PI_2 * R * (1.0 + 1e-9));
        prop_assert!((fit.slope - 0.4).abs() < 0.01);
        prop_assert!(inb.max_orthogonality_defect < 1e-12);
        let (out_leg, out, _) = regenerate(&bp, &cfg, &mut noise).unwrap();
        prop_assert!(out.s - bp.d_prime <= FRAC_PI_2 * R * (1.0 + 1e-9));
        prop_assert!(out_leg.max_orthogonality_defect < 1e-12);
        prop_assert!(out.b > 0.0);
    }
}
