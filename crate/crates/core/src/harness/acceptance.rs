//! The acceptance suite: thirteen numerical checks, each returning a
//! one-line verdict. Runs that share an ensemble reuse it.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::frame_flow::{geodesic_frame_step, FrameState};
use crate::geodesics::{
    classify_timelike, critical_points, deflection_integral, deflection_integral_elliptic, Motion, TimelikeCase,
    TimelikeOrbit,
};
use crate::geometry::{Chart, MetricProvider, V4};
use crate::kruskal::{
    angular_transport_solve, extend_trajectory, rotation_defect, series_constant, series_tail_bound,
    transport_series, AngularIncrement, ExtendPolicy, StopRule, Termination,
};
use crate::rng::NoiseStream;
use crate::schwarzschild::{covariation, f_of, reduced_step, ReducedConfig, ReducedState};

use super::config::{EnsembleConfig, Space};
use super::{classify_fate, map_trajectories, run_minkowski, ExcursionChecks, FateTag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    /// Failure expected from a recorded disagreement with the stated target.
    pub known_deviation: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        let verdict = match (self.passed, self.known_deviation) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known deviation)",
            (false, false) => "FAIL",
        };
        format!(
            "[{:>2}] {:<28} {} ({:.1} s): {}",
            self.id, self.name, verdict, self.seconds, self.detail
        )
    }
}

pub const CRITERIA: [(u8, &str); 13] = [
    (1, "constraint conservation"),
    (2, "covariation law"),
    (3, "geodesic regression"),
    (4, "escape lower bound"),
    (5, "capture lower bound"),
    (6, "singularity timing"),
    (7, "singularity exponent"),
    (8, "excursion bounds"),
    (9, "rotation-group transport"),
    (10, "confinement physics"),
    (11, "deflection integral"),
    (12, "minkowski scattering"),
    (13, "ricci vanishing"),
];

/// Constants `(a, b, r₀, outward)` of one geodesic per feasible case (`R = 1`
/// scaled by `r_s`).
pub fn case_representative(case: TimelikeCase, r_s: f64) -> (f64, f64, f64, bool) {
    let cp = |b: f64| critical_points(b * r_s, r_s).expect("b above the critical value");
    let rep = match case {
        TimelikeCase::C11 => (1.2, 1.0, 2.0, true),
        TimelikeCase::C12 => (0.8f64.sqrt(), 1.0, 1.5, true),
        TimelikeCase::C13 => ((8.0f64 / 9.0).sqrt(), 3f64.sqrt(), 2.0, true),
        TimelikeCase::C21 => (3f64.sqrt(), 4.0, 3.0, true),
        TimelikeCase::C221 => (0.9f64.sqrt(), 4.0, 1.03, true),
        TimelikeCase::C222 => (0.95f64.sqrt(), 1.8, 3.0, true),
        TimelikeCase::C23 => (cp(4.0).p1.sqrt(), 4.0, 2.0, true),
        TimelikeCase::C24 => (2f64.sqrt(), 4.0, 10.0, false),
        TimelikeCase::C251 => (cp(1.8).p1.sqrt(), 1.8, 1.5, true),
        TimelikeCase::C252 => (cp(1.8).p2.sqrt(), 1.8, 1.2, true),
        TimelikeCase::C26 => {
            let a = 0.905f64.sqrt();
            let c = classify_timelike(a, 1.8 * r_s, 3.0 * r_s, r_s).expect("valid constants");
            let mid = match (c.big_r1, c.big_r2) {
                (Some(x), Some(y)) => 0.5 * (x + y) / r_s,
                _ => 3.0,
            };
            (a, 1.8, mid, true)
        }
    };
    (rep.0, rep.1 * r_s, rep.2 * r_s, rep.3)
}

/// Capture ensemble shared by criteria 5 to 9.
#[derive(Clone, Debug, Default)]
struct CaptureData {
    runs: usize,
    failures: usize,
    captured: usize,
    excursions: usize,
    checks: ExcursionChecks,
    slopes: Vec<f64>,
    ratios: Vec<f64>,
    transports: usize,
    transport_defect: f64,
    series_checks: usize,
    series_violations: usize,
    series_worst_gap: f64,
    series_bound_min: f64,
    series_high_gap: f64,
    seconds: f64,
}

#[derive(Default)]
struct CaptureRun {
    failed: bool,
    captured: bool,
    checks: ExcursionChecks,
    fits: Vec<(f64, f64)>,
    transports: usize,
    defect: f64,
    series: Vec<(f64, f64)>,
    high_gap: f64,
}

fn mat_gap(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut w: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            w = w.max((a[i][j] - b[i][j]).abs());
        }
    }
    w
}

/// Exact transport against the truncated series over the first `window` of
/// proper time after the singularity: `(gap, tail bound)`.
fn series_check(incs: &[AngularIncrement], start: &[[f64; 3]; 3], window: f64, order: usize) -> Option<(f64, f64)> {
    let mut tau = 0.0;
    let mut k = 0;
    while k < incs.len() && tau + incs[k].ds <= window {
        tau += incs[k].ds;
        k += 1;
    }
    if k == 0 {
        return None;
    }
    let prefix = &incs[..k];
    let exact = *angular_transport_solve(prefix, start).last()?;
    let series = transport_series(prefix, start, order);
    let c = series_constant(prefix);
    Some((mat_gap(&exact, &series), series_tail_bound(c, tau, order)))
}

/// Gap between the exact transport and the series at a high order, which
/// separates truncation from discretization.
fn series_gap(incs: &[AngularIncrement], start: &[[f64; 3]; 3], window: f64, order: usize) -> f64 {
    let mut tau = 0.0;
    let k = incs
        .iter()
        .take_while(|x| {
            tau += x.ds;
            tau <= window
        })
        .count();
    let prefix = &incs[..k];
    match angular_transport_solve(prefix, start).last() {
        Some(exact) => mat_gap(exact, &transport_series(prefix, start, order)),
        None => 0.0,
    }
}

pub struct Acceptance {
    pub seed: u64,
    pub r_s: f64,
    capture: OnceLock<CaptureData>,
}

impl Acceptance {
    pub fn new(seed: u64) -> Self {
        Acceptance {
            seed,
            r_s: 1.0,
            capture: OnceLock::new(),
        }
    }

    pub fn run_all(&self) -> Vec<CriterionReport> {
        CRITERIA.iter().map(|(id, _)| self.run(*id)).collect()
    }

    pub fn run(&self, id: u8) -> CriterionReport {
        let t = Instant::now();
        let name = CRITERIA
            .iter()
            .find(|c| c.0 == id)
            .map(|c| c.1)
            .unwrap_or("unknown");
        let (passed, known, detail) = match id {
            1 => self.constraint_conservation(),
            2 => self.covariation_law(),
            3 => self.geodesic_regression(),
            4 => self.escape_bound(),
            5 => self.capture_bound(),
            6 => self.singularity_timing(),
            7 => self.singularity_exponent(),
            8 => self.excursion_bounds(),
            9 => self.rotation_transport(),
            10 => self.confinement(),
            11 => self.deflection(),
            12 => self.minkowski_scattering(),
            13 => self.ricci(),
            _ => (false, false, format!("no criterion {id}")),
        };
        CriterionReport {
            id,
            name: name.to_string(),
            passed,
            known_deviation: known && !passed,
            detail,
            seconds: t.elapsed().as_secs_f64(),
        }
    }

    fn base(&self) -> EnsembleConfig {
        EnsembleConfig {
            space: Space::Schwarzschild,
            sigma: 1.0,
            r_s: self.r_s,
            seed: self.seed,
            ..EnsembleConfig::default()
        }
    }

    fn constraint_conservation(&self) -> (bool, bool, String) {
        let mut cfg = self.base();
        cfg.n = 100;
        cfg.horizon = 20.0;
        cfg.r0 = 3.0 * self.r_s;
        cfg.b0 = 2.0 * self.r_s;
        cfg.t0 = 0.0;
        let run = |h0: f64| {
            let mut c = cfg.clone();
            c.h0 = h0;
            let out = map_trajectories(&c, |_, p| p.ok().map(|p| (p.max_residual, p.max_pre_residual)));
            let ok: Vec<(f64, f64)> = out.into_iter().flatten().collect();
            let post = ok.iter().map(|x| x.0).fold(0.0, f64::max);
            let pre = ok.iter().map(|x| x.1).sum::<f64>() / ok.len().max(1) as f64;
            (ok.len(), post, pre)
        };
        let (n1, post1, pre1) = run(1e-3);
        let (n2, post2, pre2) = run(5e-4);
        let ratio = pre1 / pre2;
        let post = post1.max(post2);
        let passed = n1 == cfg.n && n2 == cfg.n && post <= 1e-10 && (1.6..=2.5).contains(&ratio);
        (
            passed,
            false,
            format!(
                "max relative residual after projection {post:.2e}; mean pre-projection residual {pre1:.3e} → {pre2:.3e} (ratio {ratio:.2}); {n1}+{n2} runs"
            ),
        )
    }

    fn covariation_law(&self) -> (bool, bool, String) {
        let rs = self.r_s;
        let sigma = 1.0;
        let cfg = ReducedConfig::new(rs, sigma);
        let point = ReducedState::from_constraint(3.0 * rs, 0.3, 2.0 * rs, 1.0, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], rs)
            .expect("exterior point");
        let h = 1e-6;
        let n = 100_000usize;
        let mut noise = NoiseStream::new(self.seed, 0);
        let mut sum = [[0.0; 3]; 3];
        let mut sum2 = [[0.0; 3]; 3];
        for _ in 0..n {
            let z = noise.next_normals();
            let next = match reduced_step(&point, &cfg, h, &z) {
                Ok(x) => x,
                Err(e) => return (false, false, format!("step failed: {e}")),
            };
            let d = [next.a - point.a, next.b - point.b, next.t - point.t];
            for i in 0..3 {
                for j in 0..3 {
                    let x = d[i] * d[j] / h;
                    sum[i][j] += x;
                    sum2[i][j] += x * x;
                }
            }
        }
        let k = covariation(&point, rs);
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mean = sum[i][j] / n as f64;
                let var = (sum2[i][j] / n as f64 - mean * mean).max(0.0);
                let se = (var / n as f64).sqrt();
                worst = worst.max((mean - sigma * sigma * k[i][j]).abs() / se);
            }
        }
        (
            worst <= 3.0,
            false,
            format!("largest entry deviation {worst:.2} standard errors over {n} steps (h = {h:e})"),
        )
    }

    fn geodesic_regression(&self) -> (bool, bool, String) {
        let rs = self.r_s;
        let h = 1e-4;
        let results: Vec<(TimelikeCase, Result<(f64, f64), String>)> = TimelikeCase::ALL
            .par_iter()
            .map(|&case| (case, regression_case(case, rs, h)))
            .collect();
        let mut worst: f64 = 0.0;
        let mut parts = Vec::new();
        let mut ok = true;
        for (case, r) in results {
            match r {
                Ok((red, frame)) => {
                    worst = worst.max(red).max(frame);
                    parts.push(format!("{} {:.0e}/{:.0e}", case.tag(), red, frame));
                }
                Err(e) => {
                    ok = false;
                    parts.push(format!("{} error: {e}", case.tag()));
                }
            }
        }
        (
            ok && worst <= 1e-5,
            false,
            format!("worst relative r error {worst:.1e} (reduced/frame): {}", parts.join(", ")),
        )
    }

    fn escape_bound(&self) -> (bool, bool, String) {
        let mut cfg = self.base();
        let rs = self.r_s;
        cfg.n = 2000;
        cfg.horizon = 200.0;
        cfg.r0 = 3.0 * rs;
        cfg.t0 = 4.0 + 4.0 / (rs * cfg.sigma * cfg.sigma);
        cfg.b0 = rs;
        cfg.stop = StopRule::FirstHorizon;
        let out = map_trajectories(&cfg, |_, p| p.ok().map(|p| (p.termination, classify_fate(&p, &cfg).tag)));
        let ok: Vec<_> = out.into_iter().flatten().collect();
        let n = ok.len();
        let escaped = ok.iter().filter(|x| x.0 == Termination::Escaped).count();
        let settled = ok.iter().filter(|x| x.1 == FateTag::Escape).count();
        let p = escaped as f64 / n.max(1) as f64;
        let bound = 0.5 - 3.0 * (0.25 / cfg.n as f64).sqrt();
        (
            n == cfg.n && p >= bound,
            false,
            format!(
                "escape fraction {p:.4} ({escaped}/{n}, bound {bound:.3}); direction settled in {settled}"
            ),
        )
    }

    fn capture(&self) -> &CaptureData {
        self.capture.get_or_init(|| self.capture_ensemble())
    }

    fn capture_ensemble(&self) -> CaptureData {
        let t = Instant::now();
        let rs = self.r_s;
        let mut cfg = self.base();
        cfg.n = 2000;
        cfg.horizon = 200.0;
        cfg.r0 = 1.4 * rs;
        cfg.t0 = -2.0;
        cfg.b0 = rs;
        cfg.stop = StopRule::FirstExcursion;
        let init = cfg.initial_state().expect("valid start");
        let rc = cfg.reduced_config();
        let runs: Vec<CaptureRun> = (0..cfg.n)
            .into_par_iter()
            .map(|i| {
                let mut policy: ExtendPolicy = cfg.policy();
                policy.keep_regeneration = i < 200;
                let mut noise = NoiseStream::new(cfg.seed, i as u64);
                let path = match extend_trajectory(&init, 0.0, &rc, &policy, &mut noise) {
                    Ok(p) => p,
                    Err(_) => {
                        return CaptureRun {
                            failed: true,
                            ..CaptureRun::default()
                        }
                    }
                };
                let mut run = CaptureRun {
                    captured: classify_fate(&path, &cfg).captured,
                    checks: ExcursionChecks::of(&path, rs),
                    fits: path.excursions.iter().map(|x| (x.fit.slope, x.fit.t_r32_ratio)).collect(),
                    ..CaptureRun::default()
                };
                for x in &path.excursions {
                    if let (Some(start), false) = (x.regeneration_start, x.regeneration.is_empty()) {
                        run.transports += 1;
                        for v in angular_transport_solve(&x.regeneration, &start) {
                            run.defect = run.defect.max(rotation_defect(&v));
                        }
                        if let Some(g) = series_check(&x.regeneration, &start, 0.1, 8) {
                            run.series.push(g);
                        }
                        run.high_gap = run.high_gap.max(series_gap(&x.regeneration, &start, 0.1, HIGH_ORDER));
                    }
                }
                run
            })
            .collect();
        let mut d = CaptureData {
            runs: cfg.n,
            series_bound_min: f64::INFINITY,
            ..CaptureData::default()
        };
        for r in runs {
            if r.failed {
                d.failures += 1;
                continue;
            }
            d.captured += r.captured as usize;
            d.excursions += r.checks.excursions;
            d.checks = d.checks.merge(&r.checks);
            d.slopes.extend(r.fits.iter().map(|f| f.0));
            d.ratios.extend(r.fits.iter().map(|f| f.1));
            d.transports += r.transports;
            d.transport_defect = d.transport_defect.max(r.defect);
            d.series_high_gap = d.series_high_gap.max(r.high_gap);
            for (gap, bound) in r.series {
                d.series_checks += 1;
                d.series_worst_gap = d.series_worst_gap.max(gap);
                d.series_bound_min = d.series_bound_min.min(bound);
                if gap > bound {
                    d.series_violations += 1;
                }
            }
        }
        d.seconds = t.elapsed().as_secs_f64();
        d
    }

    fn capture_bound(&self) -> (bool, bool, String) {
        let d = self.capture();
        let done = d.runs - d.failures;
        let p = d.captured as f64 / done.max(1) as f64;
        let target = std::f64::consts::FRAC_1_SQRT_2;
        let se = (target * (1.0 - target) / d.runs as f64).sqrt();
        let bound = target - 3.0 * se;
        (
            d.failures == 0 && p >= bound,
            false,
            format!(
                "capture fraction {p:.4} ({}/{done}, bound {bound:.3}); shared ensemble took {:.1} s",
                d.captured, d.seconds
            ),
        )
    }

    fn singularity_timing(&self) -> (bool, bool, String) {
        let d = self.capture();
        let v = d.checks.inbound_violations;
        (
            v == 0 && d.excursions >= 500,
            false,
            format!("{v} violations of D < D′ ≤ D + πR/2 over {} captures", d.excursions),
        )
    }

    fn singularity_exponent(&self) -> (bool, bool, String) {
        let d = self.capture();
        let bad_slope = d.slopes.iter().filter(|s| !((0.38..=0.42).contains(*s))).count();
        let bad_ratio = d.ratios.iter().filter(|q| (**q - 1.0).abs() > 0.005).count();
        let lo = d.slopes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = d.slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rlo = d.ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let rhi = d.ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (
            d.slopes.len() >= 100 && bad_slope == 0 && bad_ratio == 0,
            false,
            format!(
                "{} fits: slope in [{lo:.4}, {hi:.4}], T r^3/2 / (−b√R) in [{rlo:.5}, {rhi:.5}]; {bad_slope} slope and {bad_ratio} ratio misses",
                d.slopes.len()
            ),
        )
    }

    fn excursion_bounds(&self) -> (bool, bool, String) {
        let d = self.capture();
        let c = &d.checks;
        (
            c.violations() == 0 && c.excursions > 0,
            false,
            format!(
                "{} excursions: {} inbound, {} outbound, {} duration violations",
                c.excursions, c.inbound_violations, c.outbound_violations, c.duration_violations
            ),
        )
    }

    fn rotation_transport(&self) -> (bool, bool, String) {
        let d = self.capture();
        let defect = d.transport_defect.max(d.checks.max_orthogonality_defect);
        (
            d.transports > 0 && defect <= 1e-12 && d.series_violations == 0 && d.series_checks > 0,
            false,
            format!(
                "max ‖VᵗV − I‖ {defect:.1e} over {} transports; series (K = 8) worst gap {:.1e}, smallest tail bound {:.1e}, {} of {} over; gap at K = {HIGH_ORDER} {:.1e} (discretization floor)",
                d.transports, d.series_worst_gap, d.series_bound_min, d.series_violations, d.series_checks, d.series_high_gap
            ),
        )
    }

    fn confinement(&self) -> (bool, bool, String) {
        let rs = self.r_s;
        let mut cfg = self.base();
        cfg.n = 200;
        cfg.r0 = 1.2 * rs;
        cfg.t0 = 0.0;
        cfg.b0 = 1e4 * rs;
        cfg.horizon = 500.0;
        cfg.max_crossings = Some(CONFINEMENT_CROSSINGS);
        let out = map_trajectories(&cfg, |_, p| {
            p.ok().map(|p| {
                let fate = classify_fate(&p, &cfg);
                let reached = p.final_state.s;
                (fate, reached)
            })
        });
        let ok: Vec<_> = out.into_iter().flatten().collect();
        let confined: Vec<_> = ok.iter().filter(|x| x.0.tag == FateTag::Confined).collect();
        let ell_bad = confined
            .iter()
            .filter(|x| x.0.ell_residual.map_or(true, |e| e > 0.05))
            .count();
        let drift_bad = confined
            .iter()
            .filter(|x| x.0.plane_drift.map_or(true, |e| e > 0.05))
            .count();
        let swing_bad = confined
            .iter()
            .filter(|x| {
                let devs = &x.0.swing_deviations;
                let late = &devs[devs.len().saturating_sub(5)..];
                super::stats::median(late).map_or(true, |m| m > 0.10)
            })
            .count();
        let max_s = ok.iter().map(|x| x.1).fold(0.0, f64::max);
        let ell_worst = confined.iter().filter_map(|x| x.0.ell_residual).fold(0.0, f64::max);
        let drift_worst = confined.iter().filter_map(|x| x.0.plane_drift).fold(0.0, f64::max);
        (
            !confined.is_empty() && ell_bad == 0 && drift_bad == 0 && swing_bad == 0,
            false,
            format!(
                "{}/{} confined after {CONFINEMENT_CROSSINGS} crossings (proper time ≤ {max_s:.2}); misses: ℓ {ell_bad} (worst {ell_worst:.1e}), plane {drift_bad} (worst {drift_worst:.1e}), swing {swing_bad}",
                confined.len(),
                ok.len()
            ),
        )
    }

    fn deflection(&self) -> (bool, bool, String) {
        let rs = self.r_s;
        let at_r = deflection_integral(rs, rs).unwrap_or(f64::NAN);
        let grid: Vec<f64> = (0..50).map(|k| rs * (1.0 + 0.01 * k as f64)).collect();
        let values: Vec<f64> = grid.iter().map(|&r| deflection_integral(r, rs).unwrap_or(f64::NAN)).collect();
        let increasing = values.windows(2).all(|w| w[1] > w[0]);
        let route_gap = grid
            .iter()
            .zip(&values)
            .map(|(&r, v)| (deflection_integral_elliptic(r, rs).unwrap_or(f64::NAN) - v).abs())
            .fold(0.0, f64::max);
        let at_target = (at_r - FRAC_PI_2).abs() <= 1e-6;
        (
            at_target && increasing,
            true,
            format!(
                "Ψ(R) = {at_r:.12} (π/2 target {}, π = {PI:.12}); increasing on 50 grid points: {increasing}; quadrature vs closed form {route_gap:.1e}",
                if at_target { "met" } else { "missed" }
            ),
        )
    }

    fn minkowski_scattering(&self) -> (bool, bool, String) {
        let cfg = EnsembleConfig {
            space: Space::Minkowski,
            sigma: 1.0,
            d: 2,
            rapidity: 1.0,
            n: 10_000,
            h0: 2e-3,
            p0_threshold: 1e3,
            horizon: 1e4,
            seed: self.seed,
            ..EnsembleConfig::default()
        };
        match run_minkowski(&cfg) {
            Ok(s) => {
                let ks = s.ks.expect("d = 2");
                (
                    s.decided == cfg.n && ks.p_value > 0.01,
                    false,
                    format!(
                        "KS D = {:.4}, p = {:.3} over {} directions",
                        ks.statistic, ks.p_value, ks.n
                    ),
                )
            }
            Err(e) => (false, false, format!("ensemble failed: {e}")),
        }
    }

    fn ricci(&self) -> (bool, bool, String) {
        let rs = self.r_s;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut worst: f64 = 0.0;
        let mut parts = Vec::new();
        for chart in Chart::ALL {
            let provider = match chart {
                Chart::Minkowski => MetricProvider::minkowski(3),
                c => MetricProvider::schwarzschild(c, rs),
            };
            let mut chart_worst: f64 = 0.0;
            let mut k = 0;
            while k < 100 {
                let x = random_point(chart, rs, &mut rng);
                if provider.check_domain(&x).is_err() {
                    continue;
                }
                let ric = match provider.ricci(&x, 1e-5) {
                    Ok(r) => r,
                    Err(e) => return (false, false, format!("{}: {e}", chart.name())),
                };
                for row in ric {
                    for v in row {
                        chart_worst = chart_worst.max(v.abs());
                    }
                }
                k += 1;
            }
            worst = worst.max(chart_worst);
            parts.push(format!("{} {chart_worst:.1e}", chart.name()));
        }
        (worst <= 1e-6, false, format!("max |Ric| {worst:.1e}: {}", parts.join(", ")))
    }
}

const HIGH_ORDER: usize = 40;

/// Crossing budget standing in for the proper-time horizon of criterion 10.
pub const CONFINEMENT_CROSSINGS: usize = 100;

fn random_point(chart: Chart, rs: f64, rng: &mut ChaCha8Rng) -> V4 {
    let theta = rng.gen_range(0.3..PI - 0.3);
    let phi = rng.gen_range(-PI..PI);
    // Radii below R/2 are left out: the curvature there is steep enough
    // for the finite differences to lose the 1e-6 resolution. Kruskal
    // points stay closer to the horizon and to moderate boosts for the same
    // reason (components grow with the boost parameter).
    let r = rs * rng.gen_range(0.5..10.0);
    match chart {
        Chart::Minkowski => [
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        ],
        Chart::SchwarzschildSpherical => [rng.gen_range(-10.0..10.0), rs * rng.gen_range(1.1..10.0), theta, phi],
        Chart::EddingtonFinkelsteinInward | Chart::EddingtonFinkelsteinOutward => {
            [rng.gen_range(-10.0..10.0), r, theta, phi]
        }
        Chart::Kruskal => {
            let r = rs * rng.gen_range(0.8..8.0);
            let w = (r / rs - 1.0) * (r / rs).exp();
            let eta: f64 = rng.gen_range(-1.0..1.0);
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let (v, u) = if w >= 0.0 {
                (w.sqrt() * eta.sinh(), side * w.sqrt() * eta.cosh())
            } else {
                (side * (-w).sqrt() * eta.cosh(), (-w).sqrt() * eta.sinh())
            };
            [v, u, theta, phi]
        }
    }
}

/// Worst relative radius error of the reduced RK4 step and of the
/// frame-bundle flow against the exact orbit, `(reduced, frame)`.
pub fn regression_case(case: TimelikeCase, rs: f64, h: f64) -> Result<(f64, f64), String> {
    let (a, b, r0, outward) = case_representative(case, rs);
    let orbit = TimelikeOrbit::new(a, b, r0, rs, outward).map_err(|e| e.to_string())?;
    if orbit.class.case != case || orbit.class.motion == Motion::Infeasible {
        return Err(format!("representative classified as {:?}", orbit.class.case));
    }
    let s_max = orbit.period().unwrap_or(50.0).min(50.0);
    let floor = 0.2 * rs;
    let steps = (s_max / h).round() as usize;
    let every = 1000usize;
    let sign = if outward { 1.0 } else { -1.0 };
    let f0 = f_of(r0, rs);
    let t0 = sign * (a * a - f0 * (1.0 + b * b / (r0 * r0))).max(0.0).sqrt();

    let cfg = ReducedConfig::new(rs, 0.0);
    let mut st = ReducedState {
        r: r0,
        a,
        b,
        t: t0,
        theta: [1.0, 0.0, 0.0],
        n: [0.0, 1.0, 0.0],
        s: 0.0,
    };
    let provider = MetricProvider::schwarzschild(Chart::EddingtonFinkelsteinInward, rs);
    let x0 = [0.0, r0, FRAC_PI_2, 0.0];
    let v0 = [(a + t0) / f0, t0, 0.0, b / (r0 * r0)];
    let mut fs = FrameState::new(&provider, x0, v0).map_err(|e| e.to_string())?;
    let (mut red_done, mut frame_done) = (false, false);
    let (mut red_worst, mut frame_worst): (f64, f64) = (0.0, 0.0);
    let mut k = 0usize;
    while k < steps && !(red_done && frame_done) {
        if !red_done {
            st = reduced_step(&st, &cfg, h, &[0.0; 3]).map_err(|e| e.to_string())?;
            red_done = st.r < floor;
        }
        if !frame_done {
            fs.frame = geodesic_frame_step(&provider, &fs.frame, h).map_err(|e| e.to_string())?;
            frame_done = fs.frame.x[1] < floor;
        }
        k += 1;
        if k % every == 0 {
            let s = k as f64 * h;
            let exact = match orbit.radius_at(s).map_err(|e| e.to_string())? {
                Some(r) if r >= floor => r,
                _ => break,
            };
            if !red_done {
                red_worst = red_worst.max((st.r - exact).abs() / exact);
            }
            if !frame_done {
                frame_worst = frame_worst.max((fs.frame.x[1] - exact).abs() / exact);
            }
        }
    }
    Ok((red_worst, frame_worst))
}
