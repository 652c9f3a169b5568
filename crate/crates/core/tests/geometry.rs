use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;
use reldiff::geometry::*;
use reldiff::Error;

fn sph(r_s: f64) -> MetricProvider {
    MetricProvider::schwarzschild(Chart::SchwarzschildSpherical, r_s)
}

#[test]
fn minkowski_inner_examples() {
    assert_eq!(minkowski_inner(&[1.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
    assert_eq!(minkowski_inner(&[1.0, 1.0, 0.0, 0.0], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 0.0);
    assert_eq!(minkowski_inner(&[0.0, 1.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]).unwrap(), -1.0);
    assert!(matches!(
        minkowski_inner(&[1.0, 0.0], &[1.0, 0.0, 0.0]),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn spherical_christoffel_closed_forms() {
    let p = sph(1.0);
    let g = p.christoffel(&[0.0, 2.0, PI / 2.0, 0.3]).unwrap();
    assert_relative_eq!(g[1][2][2], -1.0, epsilon = 1e-15);
    assert_relative_eq!(g[0][1][0], 0.25, epsilon = 1e-15);
    assert_relative_eq!(g[0][0][1], 0.25, epsilon = 1e-15);
    assert_relative_eq!(g[1][1][1], -0.25, epsilon = 1e-15);
    let mk = MetricProvider::minkowski(3);
    let z = mk.christoffel(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert!(z.iter().flatten().flatten().all(|v| *v == 0.0));
}

#[test]
fn chart_domain_errors() {
    let p = sph(1.0);
    assert!(matches!(p.christoffel(&[0.0, 1.0, 1.0, 0.0]), Err(Error::OutsideChart { .. })));
    assert!(matches!(p.christoffel(&[0.0, 2.0, 0.0, 0.0]), Err(Error::OutsideChart { .. })));
    let ef = MetricProvider::schwarzschild(Chart::EddingtonFinkelsteinInward, 1.0);
    assert!(ef.christoffel(&[0.0, 0.5, 1.0, 0.0]).is_ok());
    assert!(ef.christoffel(&[0.0, -0.1, 1.0, 0.0]).is_err());
    let ks = MetricProvider::schwarzschild(Chart::Kruskal, 1.0);
    assert!(ks.christoffel(&[1.2, 0.1, 1.0, 0.0]).is_err());
}

fn sample_point(chart: Chart, t: f64, r: f64, phi: f64, psi: f64) -> V4 {
    match chart {
        Chart::Kruskal => {
            // spread over exterior and interior: w = (r/R − 1)e^{r}, pick v then u
            let w = (r - 1.0) * r.exp();
            let v = 0.3 * t;
            let u = (w + v * v).max(0.0).sqrt();
            [v, u, phi, psi]
        }
        Chart::Minkowski => [t, r, phi, psi],
        _ => [t, r, phi, psi],
    }
}

/// Christoffels recomputed from finite differences of the metric.
fn fd_christoffel(p: &MetricProvider, x: &V4, h: f64) -> Gamma {
    let gi = p.metric_inverse(x).unwrap();
    let mut dg = [[[0.0; 4]; 4]; 4];
    for k in 0..4 {
        let mut a = *x;
        let mut b = *x;
        a[k] += h;
        b[k] -= h;
        let ga = p.metric(&a).unwrap();
        let gb = p.metric(&b).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                dg[k][i][j] = (ga[i][j] - gb[i][j]) / (2.0 * h);
            }
        }
    }
    let mut out = [[[0.0; 4]; 4]; 4];
    for k in 0..4 {
        for i in 0..4 {
            for j in 0..4 {
                out[k][i][j] = 0.5
                    * (0..4)
                        .map(|l| gi[k][l] * (dg[i][l][j] + dg[j][l][i] - dg[l][i][j]))
                        .sum::<f64>();
            }
        }
    }
    out
}

#[test]
fn frozen_christoffels_match_finite_differences() {
    let pts: [(Chart, V4); 5] = [
        (Chart::SchwarzschildSpherical, [0.3, 3.0, 1.0, 0.2]),
        (Chart::EddingtonFinkelsteinInward, [0.3, 0.5, 1.0, 0.2]),
        (Chart::EddingtonFinkelsteinInward, [0.3, 4.0, 2.0, 0.2]),
        (Chart::EddingtonFinkelsteinOutward, [0.3, 0.7, 1.3, 0.2]),
        (Chart::Kruskal, [0.4, 0.9, 1.1, 0.2]),
    ];
    for (chart, x) in pts {
        let p = MetricProvider::schwarzschild(chart, 1.0);
        let a = p.christoffel(&x).unwrap();
        let b = fd_christoffel(&p, &x, 1e-5);
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    assert!(
                        (a[k][i][j] - b[k][i][j]).abs() < 1e-7 * (1.0 + b[k][i][j].abs()),
                        "{chart:?} Γ^{k}_{i}{j}: {} vs {}",
                        a[k][i][j],
                        b[k][i][j]
                    );
                    assert_eq!(a[k][i][j], a[k][j][i]);
                }
            }
        }
    }
}

#[test]
fn metric_compatibility_all_charts() {
    let h = 1e-5;
    for chart in Chart::ALL {
        let p = if chart == Chart::Minkowski {
            MetricProvider::minkowski(3)
        } else {
            MetricProvider::schwarzschild(chart, 1.0)
        };
        let r = if matches!(chart, Chart::EddingtonFinkelsteinInward | Chart::EddingtonFinkelsteinOutward) {
            0.6
        } else {
            2.5
        };
        let x = sample_point(chart, 0.7, r, 1.2, 0.4);
        let gm = p.christoffel(&x).unwrap();
        let g = p.metric(&x).unwrap();
        for i in 0..4 {
            let mut a = x;
            let mut b = x;
            a[i] += h;
            b[i] -= h;
            let ga = p.metric(&a).unwrap();
            let gb = p.metric(&b).unwrap();
            for j in 0..4 {
                for k in 0..4 {
                    let d = (ga[j][k] - gb[j][k]) / (2.0 * h);
                    let c: f64 = (0..4).map(|l| gm[l][i][j] * g[l][k] + gm[l][i][k] * g[j][l]).sum();
                    assert!((d - c).abs() < 1e-6, "{chart:?} ∇_{i} g_{j}{k} = {}", d - c);
                }
            }
        }
    }
}

#[test]
fn ricci_vanishes() {
    let p = sph(1.0);
    let ric = p.ricci(&[0.0, 3.0, 1.0, 0.0], 1e-5).unwrap();
    assert!(ric.iter().flatten().all(|v| v.abs() <= 1e-6));
    let ef = MetricProvider::schwarzschild(Chart::EddingtonFinkelsteinInward, 1.0);
    let ric = ef.ricci(&[0.0, 0.5, 1.0, 0.0], 1e-5).unwrap();
    assert!(ric.iter().flatten().all(|v| v.abs() <= 1e-6), "{ric:?}");
    let mk = MetricProvider::minkowski(3);
    assert!(mk.ricci(&[0.0; 4], 1e-5).unwrap().iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn riemann_is_not_trivial() {
    // R^t_{rtr} = R/(r²(r−R)) in the spherical chart
    let p = sph(1.0);
    let r = 3.0;
    let riem = p.riemann(&[0.0, r, 1.0, 0.0], 1e-5).unwrap();
    let expect = 1.0 / (r * r * (r - 1.0));
    assert_relative_eq!(riem[0][1][0][1], expect, max_relative = 1e-6);
}

#[test]
fn metric_inverse_is_inverse() {
    for chart in Chart::ALL {
        let p = if chart == Chart::Minkowski {
            MetricProvider::minkowski(3)
        } else {
            MetricProvider::schwarzschild(chart, 1.3)
        };
        let x = sample_point(chart, 0.2, 2.0, 0.9, 0.0);
        let g = p.metric(&x).unwrap();
        let gi = p.metric_inverse(&x).unwrap();
        let prod = mat_mul(&g, &gi);
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i][j] - target).abs() < 1e-12);
                assert_eq!(g[i][j], g[j][i]);
            }
        }
    }
}

#[test]
fn r_of_w_examples() {
    assert_relative_eq!(r_of_w(0.0, 1.0).unwrap(), 1.0, epsilon = 1e-14);
    assert_eq!(r_of_w(-1.0, 1.0).unwrap(), 0.0);
    assert_relative_eq!(r_of_w(std::f64::consts::E.powi(2), 1.0).unwrap(), 2.0, epsilon = 1e-13);
    assert!(r_of_w(-1.5, 1.0).is_err());
}

proptest! {
    #[test]
    fn r_of_w_inverts(r in 0.0f64..40.0, rs in 0.2f64..5.0) {
        let w = (r / rs - 1.0) * (r / rs).exp();
        let back = r_of_w(w, rs).unwrap();
        let fw = (back / rs - 1.0) * (back / rs).exp();
        prop_assert!((fw - w).abs() <= 1e-13 * (1.0 + w.abs()) * 4.0);
    }

    #[test]
    fn chart_maps_preserve_pseudo_norm(
        r in 1.05f64..8.0, t in -3.0f64..3.0, phi in 0.3f64..2.8,
        vr in -1.0f64..1.0, vphi in -0.3f64..0.3, vpsi in -0.3f64..0.3,
    ) {
        let rs = 1.0;
        let sp = sph(rs);
        let x = [t, r, phi, 0.1];
        let g = sp.metric(&x).unwrap();
        // choose v0 so that the velocity is timelike and future directed
        let spatial = -(g[1][1] * vr * vr + g[2][2] * vphi * vphi + g[3][3] * vpsi * vpsi);
        let v0 = ((1.0 + spatial) / g[0][0]).sqrt();
        let v = [v0, vr, vphi, vpsi];
        let n_sph = sp.norm2(&x, &v).unwrap();
        let tol = 1e-10 * (1.0 + v0 * v0);
        for inward in [true, false] {
            let chart = if inward { Chart::EddingtonFinkelsteinInward } else { Chart::EddingtonFinkelsteinOutward };
            let (y, w) = spherical_to_ef(&x, &v, rs, inward);
            let n = MetricProvider::schwarzschild(chart, rs).norm2(&y, &w).unwrap();
            prop_assert!((n - n_sph).abs() < tol, "{chart:?}: {n} vs {n_sph}");
            let (z, q) = ef_to_kruskal(&y, &w, rs, inward);
            let n = MetricProvider::schwarzschild(Chart::Kruskal, rs).norm2(&z, &q).unwrap();
            prop_assert!((n - n_sph).abs() < tol * 10.0, "kruskal via {chart:?}: {n} vs {n_sph}");
            prop_assert!(q[0] > 0.0);
        }
        let (y, w) = spherical_to_ef(&x, &v, rs, true);
        let (y2, w2) = ef_inward_to_outward(&y, &w, rs);
        let (y3, w3) = spherical_to_ef(&x, &v, rs, false);
        for k in 0..4 {
            prop_assert!((y2[k] - y3[k]).abs() < 1e-10 && (w2[k] - w3[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn interior_ef_to_kruskal_preserves_norm(r in 0.05f64..0.95, u in -2.0f64..2.0, vr in -3.0f64..-0.1) {
        let rs = 1.0;
        let ef = MetricProvider::schwarzschild(Chart::EddingtonFinkelsteinInward, rs);
        let x = [u, r, 1.0, 0.0];
        // interior: r decreasing; pick u̇ from the unit norm with no angular motion
        // f u̇² − 2 u̇ ṙ = 1 → u̇ = (ṙ ± √(ṙ² + f))/f with f < 0
        let f = 1.0 - rs / r;
        let disc = vr * vr + f;
        prop_assume!(disc > 0.0);
        let ud = (vr + disc.sqrt()) / f;
        let v = [ud, vr, 0.0, 0.0];
        let n = ef.norm2(&x, &v).unwrap();
        prop_assert!((n - 1.0).abs() < 1e-9);
        let (z, q) = ef_to_kruskal(&x, &v, rs, true);
        let nk = MetricProvider::schwarzschild(Chart::Kruskal, rs).norm2(&z, &q).unwrap();
        prop_assert!((nk - 1.0).abs() < 1e-8, "{nk}");
    }

    #[test]
    fn renormalize_perturbed_frames(eps in prop::collection::vec(-1e-3f64..1e-3, 16), r in 1.5f64..6.0, phi in 0.5f64..2.5) {
        let p = sph(1.0);
        let x = [0.0, r, phi, 0.0];
        let f = frame_from_velocity(&p, &x, &[1.0 / (1.0 - 1.0 / r).sqrt(), 0.0, 0.0, 0.0]).unwrap();
        let mut e = f.e;
        for j in 0..4 {
            for k in 0..4 {
                e[j][k] += eps[4 * j + k];
            }
        }
        let out = renormalize_frame(&Frame { x, e }, &p).unwrap();
        prop_assert!(out.orthonormality_defect(&p).unwrap() < 1e-14);
        prop_assert!(out.is_future_directed());
        let again = renormalize_frame(&out, &p).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                prop_assert!((again.e[j][k] - out.e[j][k]).abs() < 1e-14 * (1.0 + out.e[j][k].abs()));
            }
        }
    }
}

#[test]
fn renormalize_rescales_e0() {
    let p = sph(1.0);
    let x = [0.0, 3.0, 1.0, 0.0];
    let f = frame_from_velocity(&p, &x, &[1.3, 0.2, 0.0, 0.1]).unwrap();
    let mut g = f;
    for c in g.e[0].iter_mut() {
        *c *= 1.0 + 1e-6;
    }
    let out = renormalize_frame(&g, &p).unwrap();
    for j in 0..4 {
        for k in 0..4 {
            assert!((out.e[j][k] - f.e[j][k]).abs() < 1e-14 * (1.0 + f.e[j][k].abs()));
        }
    }
}

#[test]
fn degenerate_frame_is_reported() {
    let p = sph(1.0);
    let x = [0.0, 3.0, 1.0, 0.0];
    let e = [[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, 0.0]];
    assert!(matches!(renormalize_frame(&Frame { x, e }, &p), Err(Error::DegenerateFrame(_))));
}

#[test]
fn transport_trivial_cases() {
    let mk = MetricProvider::minkowski(3);
    let m = transport_inverse_step(&mk, &IDENTITY, &[0.0; 4], &[1.0, 0.3, 0.0, 0.0], 0.1).unwrap();
    assert_eq!(m, IDENTITY);
    let p = sph(1.0);
    let m0 = [[1.0, 0.2, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.3, 1.0]];
    assert_eq!(transport_inverse_step(&p, &m0, &[0.0, 3.0, 1.0, 0.0], &[1.0, 0.1, 0.0, 0.0], 0.0).unwrap(), m0);
}

/// Transport around a small coordinate parallelogram in the (r, φ) plane.
/// Inverse transport around the loop x → x+δa → x+δa+δb → x+δb → x is
/// `I + δ² R(∂a, ∂b)` to leading order; compare against the Riemann tensor.
#[test]
fn holonomy_matches_riemann() {
    let p = sph(1.0);
    let x0 = [0.0, 3.0, 1.1, 0.0];
    let (ia, ib) = (1usize, 2usize);
    let delta = 2e-3;
    let n = 200;
    let mut m = IDENTITY;
    let mut x = x0;
    let legs = [(ia, 1.0), (ib, 1.0), (ia, -1.0), (ib, -1.0)];
    for (dir, sgn) in legs {
        let mut v = [0.0; 4];
        v[dir] = sgn * delta;
        let h = 1.0 / n as f64;
        for _ in 0..n {
            m = transport_inverse_step(&p, &m, &x, &v, h).unwrap();
            x[dir] += v[dir] * h;
        }
    }
    let riem = p.riemann(&x0, 1e-5).unwrap();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..4 {
        for l in 0..4 {
            let dev = m[i][l] - IDENTITY[i][l];
            let pred = delta * delta * riem[i][l][ia][ib];
            scale = scale.max(pred.abs());
            worst = worst.max((dev + pred).abs().min((dev - pred).abs()));
        }
    }
    assert!(scale > 1e-8);
    assert!(worst < 0.05 * scale, "holonomy mismatch {worst:e} vs scale {scale:e}");
}

#[test]
fn restore_isometry_fixes_small_defects() {
    let p = sph(1.0);
    let x0 = [0.0, 3.0, 1.0, 0.0];
    let x1 = [0.1, 3.05, 1.02, 0.01];
    let g0 = p.metric(&x0).unwrap();
    let gi1 = p.metric_inverse(&x1).unwrap();
    let g1 = p.metric(&x1).unwrap();
    // an exact isometry: orthonormal frames at both points
    let f0 = frame_from_velocity(&p, &x0, &[1.3, 0.1, 0.02, 0.0]).unwrap();
    let f1 = frame_from_velocity(&p, &x1, &[1.3, 0.1, 0.02, 0.0]).unwrap();
    // M maps f1 legs to f0 legs: M = E0 E1⁻¹
    let e0 = transpose(&f0.e);
    let e1 = transpose(&f1.e);
    let e1_inv = {
        // E1⁻¹ = diag(1,−1,−1,−1) E1ᵀ g1
        let mut eta = IDENTITY;
        for i in 1..4 {
            eta[i][i] = -1.0;
        }
        mat_mul(&eta, &mat_mul(&transpose(&e1), &g1))
    };
    let mut m = mat_mul(&e0, &e1_inv);
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] += 1e-5 * ((i * 4 + j) as f64).sin();
        }
    }
    let fixed = restore_isometry(&m, &g0, &gi1);
    let c = mat_mul(&transpose(&fixed), &mat_mul(&g0, &fixed));
    for i in 0..4 {
        for j in 0..4 {
            assert!((c[i][j] - g1[i][j]).abs() < 1e-12 * (1.0 + g1[i][j].abs()));
        }
    }
}
