//! Ensembles of independent trajectories, fate classification and summaries.
//!
//! Trajectory `i` draws its noise from stream `i` under the master seed, so
//! every summary is a pure function of the configuration.

pub mod acceptance;
pub mod config;
pub mod export;
pub mod stats;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesics::deflection_integral;
use crate::kruskal::{extend_trajectory, EventKind, ExtendedPath, Termination};
use crate::minkowski::{asymptotic_direction, simulate, MinkowskiState};
use crate::rng::NoiseStream;
use crate::schwarzschild::{cross, dot3, V3};

pub use config::{EnsembleConfig, Space};
use stats::{ks_test, moments, wilson, Histogram, KsResult, Moments, Proportion};

/// Version tag written into every JSON summary.
pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FateTag {
    Escape,
    Confined,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fate {
    pub tag: FateTag,
    pub termination: Termination,
    pub final_s: f64,
    /// Whether `r = R` was reached at least once.
    pub captured: bool,
    /// First horizon hitting time `D`.
    pub first_horizon: Option<f64>,
    /// Final direction `θ` (escape only).
    pub direction: Option<V3>,
    pub final_a: f64,
    /// Remaining angular swing estimate `b / (r |T|)` at the end.
    pub residual_swing: Option<f64>,
    /// Largest radius over the tail window.
    pub rho_hat: Option<f64>,
    /// `|a/b|` at the end of the run.
    pub ell_hat: Option<f64>,
    /// `|ℓ̂² − (1 − R/ϱ̂)/ϱ̂²| / ℓ̂²`.
    pub ell_residual: Option<f64>,
    /// Plane direction `b⃗/b` at the end.
    pub plane: V3,
    /// Largest angle between exit planes of tail excursions.
    pub plane_drift: Option<f64>,
    pub crossings: usize,
    pub tail_crossings: usize,
    /// Relative deviations `|upswing − Ψ(ϱ̂)| / Ψ(ϱ̂)` of the tail excursions.
    pub swing_deviations: Vec<f64>,
}

fn angle_between(x: &V3, y: &V3) -> f64 {
    let c = cross(x, y);
    let s = dot3(&c, &c).sqrt();
    s.atan2(dot3(x, y))
}

/// Band `[R(1 − tol), 1.5R(1 + tol)]` for the confinement radius.
pub fn in_confinement_band(rho: f64, r_s: f64, tol: f64) -> bool {
    rho >= r_s * (1.0 - tol) && rho <= 1.5 * r_s * (1.0 + tol)
}

/// Escape or confinement read off a finished path.
pub fn classify_fate(path: &ExtendedPath, cfg: &EnsembleConfig) -> Fate {
    let rs = cfg.r_s;
    let fin = &path.final_state;
    let final_s = fin.s;
    let tail_start = final_s * (1.0 - cfg.tail_fraction);
    let captured = path
        .events
        .iter()
        .any(|e| e.kind == EventKind::HorizonFirst || e.kind == EventKind::HorizonIn);
    let first_horizon = path
        .events
        .iter()
        .find(|e| e.kind == EventKind::HorizonFirst || e.kind == EventKind::HorizonIn)
        .map(|e| e.s);

    let tail: Vec<_> = path
        .excursions
        .iter()
        .filter(|x| x.d_singularity >= tail_start)
        .collect();
    let tops: Vec<f64> = tail.iter().filter_map(|x| x.top_radius).collect();
    let rho_hat = tops.iter().copied().reduce(f64::max);
    let ell_hat = (fin.b > 0.0).then(|| (fin.a / fin.b).abs());
    let ell_residual = match (rho_hat, ell_hat) {
        (Some(rho), Some(l)) if l > 0.0 => {
            let target = (1.0 - rs / rho) / (rho * rho);
            Some((l * l - target).abs() / (l * l))
        }
        _ => None,
    };
    let planes: Vec<V3> = tail.iter().filter_map(|x| x.plane_out).collect();
    let plane_drift = if planes.len() >= 2 {
        let mut worst: f64 = 0.0;
        for p in &planes {
            for q in &planes {
                worst = worst.max(angle_between(p, q));
            }
        }
        Some(worst)
    } else {
        None
    };
    let psi = rho_hat.and_then(|r| deflection_integral(r.max(rs), rs).ok());
    let swing_deviations = match psi {
        Some(psi) => tail
            .iter()
            .filter_map(|x| x.upswing)
            .map(|u| (u.abs() - psi).abs() / psi)
            .collect(),
        None => Vec::new(),
    };

    let escaped = path.termination == Termination::Escaped
        || path.events.iter().any(|e| e.kind == EventKind::EscapeDeclared);
    let residual_swing = (fin.t.abs() > 0.0).then(|| fin.b / (fin.r * fin.t.abs()));
    let tag = if escaped && fin.r > rs && residual_swing.is_some_and(|w| w < cfg.swing_tol) {
        FateTag::Escape
    } else if tail.len() >= cfg.n_min && rho_hat.is_some_and(|r| in_confinement_band(r, rs, cfg.band_tol)) {
        FateTag::Confined
    } else {
        FateTag::Undecided
    };
    Fate {
        tag,
        termination: path.termination,
        final_s,
        captured,
        first_horizon,
        direction: (tag == FateTag::Escape).then_some(fin.theta),
        final_a: fin.a,
        residual_swing,
        rho_hat,
        ell_hat,
        ell_residual,
        plane: fin.plane(),
        plane_drift,
        crossings: path.singularity_hits,
        tail_crossings: tail.len(),
        swing_deviations,
    }
}

/// One Schwarzschild trajectory of the ensemble.
pub fn run_trajectory(cfg: &EnsembleConfig, index: usize) -> Result<ExtendedPath> {
    let init = cfg.initial_state()?;
    let mut noise = NoiseStream::new(cfg.seed, index as u64);
    extend_trajectory(&init, 0.0, &cfg.reduced_config(), &cfg.policy(), &mut noise)
}

/// Apply `f` to every trajectory in parallel; results keep index order.
pub fn map_trajectories<T, F>(cfg: &EnsembleConfig, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, Result<ExtendedPath>) -> T + Sync,
{
    (0..cfg.n)
        .into_par_iter()
        .map(|i| f(i, run_trajectory(cfg, i)))
        .collect()
}

/// Per-excursion checks against the exact inside-hole bounds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExcursionChecks {
    pub excursions: usize,
    /// `D < D′ ≤ D + πR/2` on the inbound leg.
    pub inbound_violations: usize,
    /// `D′ < exit ≤ D′ + πR/2` on the outbound leg.
    pub outbound_violations: usize,
    /// Whole stay inside at most `3πR²/(4 min b)`.
    pub duration_violations: usize,
    pub max_orthogonality_defect: f64,
}

impl ExcursionChecks {
    pub fn of(path: &ExtendedPath, r_s: f64) -> Self {
        let half = std::f64::consts::FRAC_PI_2 * r_s;
        let mut c = ExcursionChecks::default();
        for x in &path.excursions {
            c.excursions += 1;
            let din = x.d_singularity - x.d_in;
            if !(din > 0.0 && din <= half * (1.0 + 1e-9)) {
                c.inbound_violations += 1;
            }
            if let Some(out) = x.d_out {
                let dout = out - x.d_singularity;
                if !(dout > 0.0 && dout <= half * (1.0 + 1e-9)) {
                    c.outbound_violations += 1;
                }
                let bound = 3.0 * std::f64::consts::PI * r_s * r_s / (4.0 * x.min_b_inside);
                if out - x.d_in > bound * (1.0 + 1e-9) {
                    c.duration_violations += 1;
                }
            }
            c.max_orthogonality_defect = c.max_orthogonality_defect.max(x.orthogonality_defect);
        }
        c
    }

    pub fn merge(mut self, o: &ExcursionChecks) -> Self {
        self.excursions += o.excursions;
        self.inbound_violations += o.inbound_violations;
        self.outbound_violations += o.outbound_violations;
        self.duration_violations += o.duration_violations;
        self.max_orthogonality_defect = self.max_orthogonality_defect.max(o.max_orthogonality_defect);
        self
    }

    pub fn violations(&self) -> usize {
        self.inbound_violations + self.outbound_violations + self.duration_violations
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub fate: Fate,
    pub checks: ExcursionChecks,
    pub max_residual: f64,
    /// Singularity fits `(slope, T r^{3/2} ratio)` of every excursion.
    pub fits: Vec<(f64, f64)>,
    pub upswings: Vec<f64>,
    pub downswings: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfinementStats {
    pub rho_hat: Option<Moments>,
    pub rho_histogram: Histogram,
    pub ell_residual: Option<Moments>,
    pub plane_drift: Option<Moments>,
    /// Relative upswing deviations from `Ψ(ϱ̂)` over tail excursions.
    pub swing_deviation: Option<Moments>,
    /// Downswings, reported without a target.
    pub downswing: Option<Moments>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub schema_version: String,
    pub config: EnsembleConfig,
    pub trajectories: usize,
    pub completed: usize,
    pub failures: Vec<TrajectoryFailure>,
    pub escape: Proportion,
    pub confined: Proportion,
    pub undecided: Proportion,
    pub captured: Proportion,
    pub confinement: ConfinementStats,
    pub slope: Option<Moments>,
    pub t_r32_ratio: Option<Moments>,
    pub excursion_checks: ExcursionChecks,
    pub max_residual: f64,
    pub records: Vec<TrajectoryRecord>,
}

fn record(cfg: &EnsembleConfig, index: usize, path: &ExtendedPath) -> TrajectoryRecord {
    TrajectoryRecord {
        index,
        fate: classify_fate(path, cfg),
        checks: ExcursionChecks::of(path, cfg.r_s),
        max_residual: path.max_residual,
        fits: path
            .excursions
            .iter()
            .map(|x| (x.fit.slope, x.fit.t_r32_ratio))
            .collect(),
        upswings: path.excursions.iter().filter_map(|x| x.upswing).collect(),
        downswings: path.excursions.iter().filter_map(|x| x.downswing).collect(),
    }
}

/// Aggregate per-trajectory records in index order.
pub fn summarize(cfg: &EnsembleConfig, results: Vec<std::result::Result<TrajectoryRecord, TrajectoryFailure>>) -> EnsembleSummary {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(x) => records.push(x),
            Err(e) => failures.push(e),
        }
    }
    let done = records.len();
    let count = |tag: FateTag| records.iter().filter(|r| r.fate.tag == tag).count();
    let confined: Vec<&TrajectoryRecord> = records.iter().filter(|r| r.fate.tag == FateTag::Confined).collect();
    let rho: Vec<f64> = confined.iter().filter_map(|r| r.fate.rho_hat).collect();
    let ell: Vec<f64> = confined.iter().filter_map(|r| r.fate.ell_residual).collect();
    let drift: Vec<f64> = confined.iter().filter_map(|r| r.fate.plane_drift).collect();
    let swing: Vec<f64> = confined.iter().flat_map(|r| r.fate.swing_deviations.iter().copied()).collect();
    let down: Vec<f64> = confined.iter().flat_map(|r| r.downswings.iter().copied()).collect();
    let slopes: Vec<f64> = records.iter().flat_map(|r| r.fits.iter().map(|f| f.0)).collect();
    let ratios: Vec<f64> = records.iter().flat_map(|r| r.fits.iter().map(|f| f.1)).collect();
    let checks = records
        .iter()
        .fold(ExcursionChecks::default(), |acc, r| acc.merge(&r.checks));
    EnsembleSummary {
        schema_version: SCHEMA_VERSION.into(),
        config: cfg.clone(),
        trajectories: cfg.n,
        completed: done,
        escape: wilson(count(FateTag::Escape), done, 1.96),
        confined: wilson(count(FateTag::Confined), done, 1.96),
        undecided: wilson(count(FateTag::Undecided), done, 1.96),
        captured: wilson(records.iter().filter(|r| r.fate.captured).count(), done, 1.96),
        confinement: ConfinementStats {
            rho_hat: moments(&rho),
            rho_histogram: Histogram::new(cfg.r_s, 1.5 * cfg.r_s, 10, &rho),
            ell_residual: moments(&ell),
            plane_drift: moments(&drift),
            swing_deviation: moments(&swing),
            downswing: moments(&down),
        },
        slope: moments(&slopes),
        t_r32_ratio: moments(&ratios),
        excursion_checks: checks,
        max_residual: records.iter().map(|r| r.max_residual).fold(0.0, f64::max),
        failures,
        records,
    }
}

/// Run a Schwarzschild ensemble; failed trajectories are counted, not fatal.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleSummary> {
    cfg.validate()?;
    if cfg.space != Space::Schwarzschild {
        return Err(Error::InvalidParameter("run_ensemble needs space = schwarzschild".into()));
    }
    let results = map_trajectories(cfg, |i, p| match p {
        Ok(path) => Ok(record(cfg, i, &path)),
        Err(e) => Err(TrajectoryFailure {
            index: i,
            error: e.to_string(),
        }),
    });
    Ok(summarize(cfg, results))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinkowskiSummary {
    pub schema_version: String,
    pub config: EnsembleConfig,
    pub trajectories: usize,
    pub decided: usize,
    pub failures: Vec<TrajectoryFailure>,
    /// Final directions `θ` in index order (decided runs only).
    pub directions: Vec<Vec<f64>>,
    /// `d = 2`: polar angles from the initial direction and the KS test
    /// against the scattering law.
    pub angles: Vec<f64>,
    pub ks: Option<KsResult>,
    /// `max |Z/t − θ|` over decided runs.
    pub max_velocity_gap: f64,
}

/// Initial state for the flat ensemble: rapidity along the first axis.
pub fn minkowski_initial(cfg: &EnsembleConfig) -> Result<MinkowskiState> {
    let mut dir = vec![0.0; cfg.d];
    dir[0] = 1.0;
    MinkowskiState::boosted(cfg.rapidity, &dir)
}

/// Flat-space ensemble of asymptotic directions.
pub fn run_minkowski(cfg: &EnsembleConfig) -> Result<MinkowskiSummary> {
    cfg.validate()?;
    let init = minkowski_initial(cfg)?;
    let h = cfg.h0;
    let outcomes: Vec<std::result::Result<(Vec<f64>, Vec<f64>, bool), TrajectoryFailure>> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let mut noise = NoiseStream::new(cfg.seed, i as u64);
            simulate(&init, cfg.sigma, h, cfg.p0_threshold, cfg.horizon, 0, &mut noise)
                .and_then(|path| asymptotic_direction(&path, cfg.p0_threshold))
                .map(|rep| (rep.theta, rep.mean_velocity, rep.decided))
                .map_err(|e| TrajectoryFailure {
                    index: i,
                    error: e.to_string(),
                })
        })
        .collect();
    let mut directions = Vec::new();
    let mut failures = Vec::new();
    let mut gap: f64 = 0.0;
    for o in outcomes {
        match o {
            Ok((theta, vel, true)) => {
                let g = theta
                    .iter()
                    .zip(&vel)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                gap = gap.max(g);
                directions.push(theta);
            }
            Ok(_) => {}
            Err(e) => failures.push(e),
        }
    }
    let (angles, ks) = if cfg.d == 2 {
        let angles: Vec<f64> = directions.iter().map(|t| t[1].atan2(t[0])).collect();
        let p0 = init.p.clone();
        let ks = ks_test(&angles, |x| crate::minkowski::scattering_cdf_2d(&p0, x));
        (angles, Some(ks))
    } else {
        (Vec::new(), None)
    };
    Ok(MinkowskiSummary {
        schema_version: SCHEMA_VERSION.into(),
        config: cfg.clone(),
        trajectories: cfg.n,
        decided: directions.len(),
        failures,
        directions,
        angles,
        ks,
        max_velocity_gap: gap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfinementTargetRow {
    pub b0: f64,
    pub confined: usize,
    pub near_target: Proportion,
    /// Fraction of recorded samples with `f(r) > |a/b|` outside the hole.
    pub mechanism_violation: f64,
}

/// Fraction of runs whose `ϱ̂` lands within `eps` of `r₀`, per `b₀`.
/// Starts at rest radially; `r₀` should lie in `(R, 3R/2)`.
pub fn confinement_target_test(base: &EnsembleConfig, b0s: &[f64], eps: f64) -> Result<Vec<ConfinementTargetRow>> {
    let mut rows = Vec::new();
    for &b0 in b0s {
        let mut cfg = base.clone();
        cfg.b0 = b0;
        cfg.t0 = 0.0;
        cfg.record_every = cfg.record_every.max(1);
        cfg.validate()?;
        let rs = cfg.r_s;
        let out = map_trajectories(&cfg, |_, p| {
            let path = p.ok()?;
            let fate = classify_fate(&path, &cfg);
            let mut bad = 0usize;
            let mut seen = 0usize;
            for smp in path.samples.iter().filter(|x| x.r >= rs && x.b > 0.0) {
                seen += 1;
                let f = (1.0 - rs / smp.r).sqrt() / smp.r;
                if f > (smp.a / smp.b).abs() * (1.0 + 1e-9) {
                    bad += 1;
                }
            }
            Some((fate, bad, seen))
        });
        let ok: Vec<_> = out.into_iter().flatten().collect();
        let confined: Vec<_> = ok.iter().filter(|x| x.0.tag == FateTag::Confined).collect();
        let near = confined
            .iter()
            .filter(|x| x.0.rho_hat.is_some_and(|r| (r - cfg.r0).abs() < eps))
            .count();
        let (bad, seen) = confined.iter().fold((0, 0), |a, x| (a.0 + x.1, a.1 + x.2));
        rows.push(ConfinementTargetRow {
            b0,
            confined: confined.len(),
            near_target: wilson(near, ok.len(), 1.96),
            mechanism_violation: if seen > 0 { bad as f64 / seen as f64 } else { 0.0 },
        });
    }
    Ok(rows)
}
