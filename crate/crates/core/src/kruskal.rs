//! The full Kruskal space: horizon crossings, singularity hits, regeneration
//! through `r = 0` and the alternating excursion process.
//!
//! Inside the hole the proper-time clock is replaced by `χ ∈ (0, π/2]` with
//! `r = R sin²χ`. Over one `χ` cell with `(a, b)` frozen, the proper time and
//! the moments `∫ ds/r`, `∫ r² ds`, `∫ ds/r²` are computed by 4-point
//! Gauss–Legendre quadrature; they give the exact Gaussian law of the
//! `(a, b)` increments to first order and the in-plane angle. Because
//! `ds/dχ ≤ 2R sin²χ`, each half of an inside excursion lasts at most `πR/2`.
//!
//! Eddington–Finkelstein bookkeeping tracks `u⁻` while `aT < 0` and `u⁺`
//! otherwise, using the regular rates `u̇⁻ = (1 + b²/r²)/(a − T)` and
//! `u̇⁺ = (1 + b²/r²)/(a + T)`; the other coordinate follows from
//! `u⁺ = u⁻ − 2r*`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{outside, Error, Result};
use crate::geometry::{tortoise, Chart, V4};
use crate::rng::NoiseStream;
use crate::schwarzschild::{
    adaptive_step, cross, dot3, exterior_step, f_of, in_plane_angle, pseudo_norm_residual, reduced_step_with,
    rotate_pair, Factorization, ReducedConfig, ReducedState, V3,
};

pub use crate::geometry::r_of_w;

const GL4_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL4_W: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// `(u, v)` of a point of the right exterior.
pub fn ks_from_schwarzschild(t: f64, r: f64, r_s: f64) -> Result<(f64, f64)> {
    if !(r > r_s) {
        return Err(outside("kruskal", format!("r = {r} ≤ R")));
    }
    let k = (r / r_s - 1.0).sqrt() * (r / (2.0 * r_s)).exp();
    let x = t / (2.0 * r_s);
    Ok((k * x.cosh(), k * x.sinh()))
}

/// `u⁻ = 2R log|u + v|`, `u⁺ = −2R log|u − v|`; `None` on the respective
/// null line.
pub fn ef_coordinates(u: f64, v: f64, r_s: f64) -> (Option<f64>, Option<f64>) {
    let p = u + v;
    let q = u - v;
    (
        (p != 0.0).then(|| 2.0 * r_s * p.abs().ln()),
        (q != 0.0).then(|| -2.0 * r_s * q.abs().ln()),
    )
}

/// The four open regions of the Kruskal plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    /// `u + v > 0`, `u − v > 0`.
    Exterior,
    /// `u + v > 0`, `u − v < 0`.
    BlackHole,
    /// `u + v < 0`, `u − v < 0`.
    MirrorExterior,
    /// `u + v < 0`, `u − v > 0`.
    WhiteHole,
}

impl Region {
    /// Signs of `(u + v, u − v)`.
    pub fn signs(self) -> (f64, f64) {
        match self {
            Region::Exterior => (1.0, 1.0),
            Region::BlackHole => (1.0, -1.0),
            Region::MirrorExterior => (-1.0, -1.0),
            Region::WhiteHole => (-1.0, 1.0),
        }
    }

    pub fn of(u: f64, v: f64) -> Option<Region> {
        let (p, q) = (u + v, u - v);
        match (p > 0.0, q > 0.0, p < 0.0, q < 0.0) {
            (true, true, _, _) => Some(Region::Exterior),
            (true, _, _, true) => Some(Region::BlackHole),
            (_, _, true, true) => Some(Region::MirrorExterior),
            (_, true, true, _) => Some(Region::WhiteHole),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tracked {
    UMinus,
    UPlus,
}

/// Eddington–Finkelstein bookkeeping carried along a path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfClock {
    pub tracked: Tracked,
    pub value: f64,
    pub region: Region,
}

impl EfClock {
    /// Starting clock in an exterior region from Schwarzschild time `t`.
    pub fn exterior(t: f64, r: f64, a: f64, big_t: f64, r_s: f64) -> Self {
        let tracked = preferred(a, big_t);
        let rs = tortoise(r, r_s);
        let value = match tracked {
            Tracked::UMinus => t + rs,
            Tracked::UPlus => t - rs,
        };
        let region = if a >= 0.0 { Region::Exterior } else { Region::MirrorExterior };
        EfClock { tracked, value, region }
    }

    /// `(u⁻, u⁺)` at radius `r` (the untracked one is undefined on `r = R`).
    pub fn both(&self, r: f64, r_s: f64) -> (Option<f64>, Option<f64>) {
        let conv = if r == r_s { None } else { Some(2.0 * tortoise(r, r_s)) };
        match self.tracked {
            Tracked::UMinus => (Some(self.value), conv.map(|c| self.value - c)),
            Tracked::UPlus => (conv.map(|c| self.value + c), Some(self.value)),
        }
    }

    /// Kruskal `(u, v)` from the tracked coordinate, radius and region.
    pub fn kruskal(&self, r: f64, r_s: f64) -> Option<(f64, f64)> {
        let w = (r / r_s - 1.0) * (r / r_s).exp();
        let (sp, sq) = self.region.signs();
        let (p, q) = match self.tracked {
            Tracked::UMinus => {
                let p = sp * (self.value / (2.0 * r_s)).exp();
                (p, w / p)
            }
            Tracked::UPlus => {
                let q = sq * (-self.value / (2.0 * r_s)).exp();
                (w / q, q)
            }
        };
        let (u, v) = (0.5 * (p + q), 0.5 * (p - q));
        (u.is_finite() && v.is_finite()).then_some((u, v))
    }

    /// Switches the tracked coordinate if `aT` changed sign (valid off `r = R`).
    pub fn retrack(&mut self, a: f64, big_t: f64, r: f64, r_s: f64) {
        let want = preferred(a, big_t);
        if want != self.tracked && r != r_s {
            let c = 2.0 * tortoise(r, r_s);
            self.value = match want {
                Tracked::UPlus => self.value - c,
                Tracked::UMinus => self.value + c,
            };
            self.tracked = want;
        }
    }
}

fn preferred(a: f64, big_t: f64) -> Tracked {
    if a * big_t < 0.0 {
        Tracked::UMinus
    } else {
        Tracked::UPlus
    }
}

/// Rate of the tracked coordinate, `(1 + b²/r²)/(a ∓ T)`.
pub fn ef_rate(tracked: Tracked, r: f64, a: f64, b: f64, big_t: f64) -> f64 {
    let num = 1.0 + b * b / (r * r);
    match tracked {
        Tracked::UMinus => num / (a - big_t),
        Tracked::UPlus => num / (a + big_t),
    }
}

/// A point on the singular boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub a: f64,
    pub b: f64,
    pub theta: V3,
    pub n: V3,
    /// Direction of `b⃗`.
    pub plane: V3,
    pub u_minus: f64,
    pub u_plus: f64,
    /// Proper time of the hit.
    pub d_prime: f64,
}

/// One sample of an inside leg.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorSample {
    pub chi: f64,
    pub s: f64,
    pub r: f64,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub theta: V3,
    pub n: V3,
    pub ef: EfClock,
    /// Proper time between the sample and the singularity hit, accumulated
    /// from the singular end so that it keeps full relative precision.
    pub tau: f64,
}

/// Increment of the angular generator over one cell: in-plane angle `phi`,
/// twist `psi` and the Itô contraction rate `q = σ² ∫r² ds/(2b²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularIncrement {
    pub ds: f64,
    pub phi: f64,
    pub psi: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorLeg {
    pub samples: Vec<InteriorSample>,
    pub increments: Vec<AngularIncrement>,
    /// Total in-plane angle swept by the leg (sliver included).
    pub swing: f64,
    /// Largest `‖VᵗV − I‖` over the leg.
    pub max_orthogonality_defect: f64,
    pub min_b: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityFit {
    /// Log–log slope of `r` against `D′ − s` over the last decade.
    pub slope: f64,
    /// `T r^{3/2} / (−b √R)` at the last sample.
    pub t_r32_ratio: f64,
    pub samples_in_decade: usize,
}

/// Proper time, moments and Eddington–Finkelstein increments of one `χ` cell.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct CellMoments {
    s: f64,
    inv_r: f64,
    r2: f64,
    inv_r2: f64,
    u: f64,
}

/// `ds/dχ` for frozen `(a, b)`, written without cancellations.
fn ds_dchi(chi: f64, a: f64, b: f64, r_s: f64) -> f64 {
    let (sn, cs) = chi.sin_cos();
    let s2 = sn * sn;
    let num = 2.0 * r_s * r_s * s2 * s2 * cs;
    let den = (a * a * r_s * r_s * s2 * s2 * s2 + cs * cs * (r_s * r_s * s2 * s2 + b * b)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// `|T|` inside the hole.
fn abs_t_inside(r: f64, a: f64, b: f64, r_s: f64) -> f64 {
    (a * a + (r_s / r - 1.0) * (1.0 + b * b / (r * r))).sqrt()
}

fn cell_moments(c0: f64, c1: f64, a: f64, b: f64, r_s: f64, tracked: Tracked, t_sign: f64) -> CellMoments {
    let mid = 0.5 * (c0 + c1);
    let half = 0.5 * (c1 - c0);
    let mut m = CellMoments::default();
    for k in 0..4 {
        let chi = mid + half * GL4_X[k];
        let w = GL4_W[k] * half.abs();
        let r = r_s * chi.sin().powi(2);
        let ds = ds_dchi(chi, a, b, r_s) * w;
        let big_t = t_sign * abs_t_inside(r, a, b, r_s);
        m.s += ds;
        m.inv_r += ds / r;
        m.r2 += ds * r * r;
        m.inv_r2 += ds / (r * r);
        m.u += ef_rate(tracked, r, a, b, big_t) * ds;
    }
    m
}

/// The `χ` grid from `π/2` down to `χ_stop`: cells of `min(π/256, 0.05 χ)`.
pub fn chi_grid(chi_stop: f64) -> Vec<f64> {
    let mut g = vec![FRAC_PI_2];
    let mut c = FRAC_PI_2;
    while c > chi_stop {
        let d = (PI / 256.0).min(0.05 * c);
        c = (c - d).max(chi_stop);
        if c - chi_stop < 0.2 * d {
            c = chi_stop;
        }
        g.push(c);
    }
    g
}

pub fn chi_of_r(r: f64, r_s: f64) -> f64 {
    (r / r_s).sqrt().min(1.0).asin()
}

/// Integrals over the sliver `r ∈ (0, r_stop)` with `(a, b)` frozen:
/// proper time, in-plane angle and the increment of the tracked coordinate
/// (with `T` of sign `t_sign`). Uses `r = r_stop y²` and 8-point
/// Gauss–Legendre, which is exact to rounding for these smooth integrands.
pub fn sliver_integrals(r_stop: f64, a: f64, b: f64, r_s: f64, tracked: Tracked, t_sign: f64) -> (f64, f64, f64) {
    const X: [f64; 8] = [
        -0.960_289_856_497_536_3,
        -0.796_666_477_413_626_7,
        -0.525_532_409_916_329_0,
        -0.183_434_642_495_649_8,
        0.183_434_642_495_649_8,
        0.525_532_409_916_329_0,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const W: [f64; 8] = [
        0.101_228_536_290_376_3,
        0.222_381_034_453_374_5,
        0.313_706_645_877_887_3,
        0.362_683_783_378_362_0,
        0.362_683_783_378_362_0,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let (mut s, mut th, mut u) = (0.0, 0.0, 0.0);
    for k in 0..8 {
        let y = 0.5 * (X[k] + 1.0);
        let w = 0.5 * W[k];
        let r = r_stop * y * y;
        if r == 0.0 {
            continue;
        }
        // dr/|T| written as r^{3/2} dr / √(a² r³ + (R − r)(r² + b²))
        let den = (a * a * r * r * r + (r_s - r) * (r * r + b * b)).sqrt();
        let ds = r * r.sqrt() / den * 2.0 * r_stop * y * w;
        let big_t = t_sign * abs_t_inside(r, a, b, r_s);
        s += ds;
        th += b / (r * r) * ds;
        u += ef_rate(tracked, r, a, b, big_t) * ds;
    }
    (s, th, u)
}

/// `τ` such that the two-term expansion `r = [⁵⁄₂ b √R τ]^{2/5} (1 − r/(7R))`
/// returns `r`; the proper time still needed to reach the centre.
pub fn singularity_time_two_term(r: f64, b: f64, r_s: f64) -> f64 {
    // τ = (2 r^{5/2} / (5 b √R)) (1 + 5r/(14R)) inverted to second order
    2.0 * r.powf(2.5) / (5.0 * b * r_s.sqrt()) * (1.0 + 5.0 * r / (14.0 * r_s))
}

/// Extrapolates the hit of `r = 0` from the tail of an inbound leg and fits
/// the approach exponent over the last decade of radii.
pub fn detect_singularity(tail: &[InteriorSample], r_s: f64) -> Result<(BoundaryPoint, SingularityFit)> {
    let last = tail
        .last()
        .ok_or_else(|| Error::InvalidParameter("empty tail".into()))?;
    if !(last.t < 0.0 && last.r < r_s) {
        return Err(Error::InvalidParameter("tail is not inside the hole moving inwards".into()));
    }
    let (ds, dth, du) = sliver_integrals(last.r, last.a, last.b, r_s, last.ef.tracked, -1.0);
    let d_prime = last.s + ds;
    // remaining times relative to the last sample, which is `ds` away
    let shift = ds - last.tau;
    let (theta, n) = rotate_pair(&last.theta, &last.n, dth, 0.0);
    let mut ef = last.ef;
    ef.value += du;
    let (um, up) = ef.both(0.0, r_s);
    let bp = BoundaryPoint {
        a: last.a,
        b: last.b,
        theta,
        n,
        plane: cross(&theta, &n),
        u_minus: um.unwrap_or(f64::NAN),
        u_plus: up.unwrap_or(f64::NAN),
        d_prime,
    };
    // regression over r ∈ [r_last, 10 r_last]
    let decade: Vec<(f64, f64)> = tail
        .iter()
        .filter(|x| x.r <= 10.0 * last.r && x.tau + shift > 0.0)
        .map(|x| ((x.tau + shift).ln(), x.r.ln()))
        .collect();
    let slope = if decade.len() >= 2 {
        let n = decade.len() as f64;
        let mx = decade.iter().map(|p| p.0).sum::<f64>() / n;
        let my = decade.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = decade.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = decade.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    let fit = SingularityFit {
        slope,
        t_r32_ratio: last.t * last.r.powf(1.5) / (-last.b * r_s.sqrt()),
        samples_in_decade: decade.len(),
    };
    Ok((bp, fit))
}

/// Settings of an inside leg.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorConfig {
    pub r_s: f64,
    pub sigma: f64,
    pub r_stop: f64,
    /// Keep every sample (otherwise only the last decade before `r_stop`).
    pub record_all: bool,
}

fn orthogonality_defect(theta: &V3, n: &V3) -> f64 {
    let m = cross(theta, n);
    let cols = [*theta, *n, m];
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot3(&cols[i], &cols[j]) - target).abs());
        }
    }
    worst
}

struct LegState {
    s: f64,
    a: f64,
    b: f64,
    theta: V3,
    n: V3,
    ef: EfClock,
    /// Proper time since the singularity (outbound legs only).
    tau: f64,
}

/// Advances `(a, b, θ, n, s, u)` over the cell `[c0, c1]` in `χ`.
fn interior_cell(st: &mut LegState, c0: f64, c1: f64, t_sign: f64, cfg: &InteriorConfig, z: &[f64]) -> AngularIncrement {
    let rs = cfg.r_s;
    let sigma = cfg.sigma;
    let (a, b) = (st.a, st.b);
    let m = cell_moments(c0, c1, a, b, rs, st.ef.tracked, t_sign);
    let phi = b * m.inv_r2;
    let mut psi = 0.0;
    if sigma != 0.0 {
        let drift = 1.5 * sigma * sigma * m.s;
        let transverse = (rs * m.inv_r - m.s).max(0.0).sqrt();
        let along = (m.s).sqrt() * z[0];
        st.a = a + drift * a + sigma * (a * along + transverse * z[2]);
        let lead = b + drift * b + sigma * (b * along + m.r2.sqrt() * z[1]);
        st.b = (lead * lead + sigma * sigma * m.r2).sqrt();
        psi = sigma / b * m.r2.sqrt() * z[3];
    }
    let (th, n) = rotate_pair(&st.theta, &st.n, phi, psi);
    st.theta = th;
    st.n = n;
    st.s += m.s;
    st.tau += m.s;
    st.ef.value += m.u;
    AngularIncrement {
        ds: m.s,
        phi,
        psi,
        q: sigma * sigma * m.r2 / (2.0 * b * b),
    }
}

fn sample(st: &LegState, chi: f64, t_sign: f64, r_s: f64) -> InteriorSample {
    let r = r_s * chi.sin().powi(2);
    InteriorSample {
        chi,
        s: st.s,
        r,
        a: st.a,
        b: st.b,
        t: t_sign * abs_t_inside(r, st.a, st.b, r_s),
        theta: st.theta,
        n: st.n,
        ef: st.ef,
        tau: st.tau,
    }
}

/// Inbound leg from the horizon (`r = R`, `T = −|a|`) to `r_stop`, then the
/// extrapolated hit of the centre.
pub fn inbound_leg(
    start: &ReducedState,
    ef: EfClock,
    cfg: &InteriorConfig,
    noise: &mut NoiseStream,
) -> Result<(InteriorLeg, BoundaryPoint, SingularityFit)> {
    let rs = cfg.r_s;
    if start.b <= 0.0 {
        return Err(Error::InvalidParameter("angular momentum must be positive".into()));
    }
    let chi_stop = chi_of_r(cfg.r_stop, rs);
    let grid = chi_grid(chi_stop);
    let mut st = LegState {
        s: start.s,
        a: start.a,
        b: start.b,
        theta: start.theta,
        n: start.n,
        ef,
        tau: 0.0,
    };
    st.ef.region = Region::BlackHole;
    let mut samples = Vec::new();
    let mut increments = Vec::with_capacity(grid.len());
    let mut swing = 0.0;
    let mut defect: f64 = 0.0;
    let mut min_b = st.b;
    let keep = |r: f64| cfg.record_all || r <= 10.0 * cfg.r_stop * 1.0001;
    // grid index of every kept sample, to fill in `tau` afterwards
    let mut at = Vec::new();
    let first = sample(&st, grid[0], -1.0, rs);
    if keep(first.r) {
        samples.push(first);
        at.push(0);
    }
    for (k, w) in grid.windows(2).enumerate() {
        let z = noise.next_normals();
        let inc = interior_cell(&mut st, w[0], w[1], -1.0, cfg, &z);
        swing += inc.phi;
        increments.push(inc);
        min_b = min_b.min(st.b);
        let smp = sample(&st, w[1], -1.0, rs);
        st.ef.retrack(st.a, smp.t, smp.r, rs);
        defect = defect.max(orthogonality_defect(&st.theta, &st.n));
        if !st.a.is_finite() || !st.b.is_finite() || st.b <= 0.0 {
            return Err(Error::Integration("non-finite energy or angular momentum inside the hole".into()));
        }
        let mut smp = smp;
        smp.ef = st.ef;
        if keep(smp.r) {
            samples.push(smp);
            at.push(k + 1);
        }
    }
    let r_last = rs * grid.last().unwrap().sin().powi(2);
    let (sliver, dth, _) = sliver_integrals(r_last, st.a, st.b, rs, st.ef.tracked, -1.0);
    let mut to_go = vec![sliver; grid.len()];
    for k in (0..increments.len()).rev() {
        to_go[k] = to_go[k + 1] + increments[k].ds;
    }
    for (x, k) in samples.iter_mut().zip(&at) {
        x.tau = to_go[*k];
    }
    let (bp, fit) = detect_singularity(&samples, rs)?;
    swing += dth;
    Ok((
        InteriorLeg {
            samples,
            increments,
            swing,
            max_orthogonality_defect: defect,
            min_b,
        },
        bp,
        fit,
    ))
}

/// Outbound leg from a boundary point: the sliver `(0, r_stop)` in closed
/// form, then the mirrored `χ` grid up to the horizon, where `T = +|a|`.
pub fn regenerate(
    bp: &BoundaryPoint,
    cfg: &InteriorConfig,
    noise: &mut NoiseStream,
) -> Result<(InteriorLeg, ReducedState, EfClock)> {
    let rs = cfg.r_s;
    if !(bp.b > 0.0) {
        return Err(Error::InvalidParameter("boundary angular momentum must be positive".into()));
    }
    let chi_stop = chi_of_r(cfg.r_stop, rs);
    let mut grid = chi_grid(chi_stop);
    grid.reverse();
    let tracked = preferred(bp.a, 1.0);
    let value = match tracked {
        Tracked::UMinus => bp.u_minus,
        Tracked::UPlus => bp.u_plus,
    };
    let mut st = LegState {
        s: bp.d_prime,
        a: bp.a,
        b: bp.b,
        theta: bp.theta,
        n: bp.n,
        ef: EfClock {
            tracked,
            value,
            region: Region::WhiteHole,
        },
        tau: 0.0,
    };
    let r_first = rs * grid[0].sin().powi(2);
    let (ds, dth, du) = sliver_integrals(r_first, st.a, st.b, rs, tracked, 1.0);
    st.s += ds;
    st.tau = ds;
    st.ef.value += du;
    let (th, n) = rotate_pair(&st.theta, &st.n, dth, 0.0);
    st.theta = th;
    st.n = n;
    let mut swing = dth;
    let mut samples = Vec::new();
    let mut increments = Vec::with_capacity(grid.len());
    let mut defect: f64 = orthogonality_defect(&st.theta, &st.n);
    let mut min_b = st.b;
    let first = sample(&st, grid[0], 1.0, rs);
    if cfg.record_all {
        samples.push(first);
    }
    for w in grid.windows(2) {
        let z = noise.next_normals();
        let inc = interior_cell(&mut st, w[0], w[1], 1.0, cfg, &z);
        swing += inc.phi;
        increments.push(inc);
        min_b = min_b.min(st.b);
        let smp = sample(&st, w[1], 1.0, rs);
        if w[1] < FRAC_PI_2 {
            st.ef.retrack(st.a, smp.t, smp.r, rs);
        }
        defect = defect.max(orthogonality_defect(&st.theta, &st.n));
        if !st.a.is_finite() || !st.b.is_finite() || st.b <= 0.0 {
            return Err(Error::Integration("non-finite energy or angular momentum inside the hole".into()));
        }
        let mut smp = smp;
        smp.ef = st.ef;
        if cfg.record_all {
            samples.push(smp);
        }
    }
    let out = ReducedState {
        r: rs,
        a: st.a,
        b: st.b,
        t: st.a.abs(),
        theta: st.theta,
        n: st.n,
        s: st.s,
    };
    let mut ef = st.ef;
    ef.region = if st.a >= 0.0 { Region::Exterior } else { Region::MirrorExterior };
    Ok((
        InteriorLeg {
            samples,
            increments,
            swing,
            max_orthogonality_defect: defect,
            min_b,
        },
        out,
        ef,
    ))
}

pub type M3 = [[f64; 3]; 3];

fn mat3_mul(a: &M3, b: &M3) -> M3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            for j in 0..3 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// `V = [θ n m]` as a matrix with those columns.
pub fn frame_matrix(theta: &V3, n: &V3) -> M3 {
    let m = cross(theta, n);
    let mut v = [[0.0; 3]; 3];
    for i in 0..3 {
        v[i][0] = theta[i];
        v[i][1] = n[i];
        v[i][2] = m[i];
    }
    v
}

/// Integrates `dV = V dA` by exact rotations, returning `V` after each
/// increment (the first entry is `v_start`).
pub fn angular_transport_solve(increments: &[AngularIncrement], v_start: &M3) -> Vec<M3> {
    let mut theta = [v_start[0][0], v_start[1][0], v_start[2][0]];
    let mut n = [v_start[0][1], v_start[1][1], v_start[2][1]];
    let mut out = Vec::with_capacity(increments.len() + 1);
    out.push(*v_start);
    for inc in increments {
        let (t2, n2) = rotate_pair(&theta, &n, inc.phi, inc.psi);
        theta = t2;
        n = n2;
        out.push(frame_matrix(&theta, &n));
    }
    out
}

/// `max ‖VᵗV − I‖` entrywise.
pub fn rotation_defect(v: &M3) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let g: f64 = (0..3).map(|k| v[k][i] * v[k][j]).sum();
            worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

/// Truncated iterated-integral series `V_start (I + Σ_{k≤K} J_k)` with the
/// Itô increments `ΔA = [[0, −Φ, 0], [Φ, −q, −ψ], [0, ψ, −q]]` and
/// `J_k(n+1) = J_k(n) + J_{k−1}(n) ΔA_n`.
pub fn transport_series(increments: &[AngularIncrement], v_start: &M3, order: usize) -> M3 {
    let mut j: Vec<M3> = vec![[[0.0; 3]; 3]; order + 1];
    j[0] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for inc in increments {
        let da = [[0.0, -inc.phi, 0.0], [inc.phi, -inc.q, -inc.psi], [0.0, inc.psi, -inc.q]];
        for k in (1..=order).rev() {
            let add = mat3_mul(&j[k - 1], &da);
            for r in 0..3 {
                for c in 0..3 {
                    j[k][r][c] += add[r][c];
                }
            }
        }
    }
    let mut sum = [[0.0; 3]; 3];
    for m in &j {
        for r in 0..3 {
            for c in 0..3 {
                sum[r][c] += m[r][c];
            }
        }
    }
    mat3_mul(v_start, &sum)
}

/// `2 Σ_{k>K} (5C)^k τ^{k/5} / √(k!)`, summed until the terms are negligible.
pub fn series_tail_bound(c: f64, tau: f64, order: usize) -> f64 {
    let x = 5.0 * c * tau.powf(0.2);
    let mut total = 0.0;
    let mut log_fact = (1..=order).map(|k| (k as f64).ln()).sum::<f64>();
    for k in order + 1..order + 400 {
        log_fact += (k as f64).ln();
        let term = (k as f64 * x.ln() - 0.5 * log_fact).exp();
        total += term;
        if term < 1e-18 * total.max(1e-300) && k > order + 10 {
            break;
        }
    }
    2.0 * total
}

/// Constant `C` with `Σ_{m≤n} ‖ΔA_m‖ ≤ C (s_n − D′)^{1/5}` along the increments.
pub fn series_constant(increments: &[AngularIncrement]) -> f64 {
    let mut acc = 0.0;
    let mut tau = 0.0;
    let mut c: f64 = 0.0;
    for inc in increments {
        acc += (inc.phi * inc.phi + inc.psi * inc.psi + 2.0 * inc.q * inc.q).sqrt();
        tau += inc.ds;
        if tau > 0.0 {
            c = c.max(acc / tau.powf(0.2));
        }
    }
    c
}

/// A chart point with velocity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartState {
    pub chart: Chart,
    pub x: V4,
    pub velocity: V4,
}

/// Reduced state plus Schwarzschild time from a spherical-chart point
/// `(t, r, φ, ψ)` with unit velocity. Zero angular momentum is replaced by
/// `b_floor` with an arbitrary plane through `θ`.
pub fn reduced_from_spherical(cs: &ChartState, r_s: f64, b_floor: f64) -> Result<(ReducedState, f64)> {
    if cs.chart != Chart::SchwarzschildSpherical {
        return Err(Error::InvalidParameter("expected a spherical-chart state".into()));
    }
    let [t, r, ph, ps] = cs.x;
    let [vt, vr, vph, vps] = cs.velocity;
    if !(r > r_s) {
        return Err(outside("schwarzschild-spherical", format!("r = {r} ≤ R")));
    }
    let (sp, cp) = ph.sin_cos();
    let (ss, css) = ps.sin_cos();
    let theta = [sp * css, sp * ss, cp];
    let e_phi = [cp * css, cp * ss, -sp];
    let e_psi = [-ss, css, 0.0];
    let thdot = [
        vph * e_phi[0] + vps * sp * e_psi[0],
        vph * e_phi[1] + vps * sp * e_psi[1],
        vph * e_phi[2] + vps * sp * e_psi[2],
    ];
    let u = dot3(&thdot, &thdot).sqrt();
    let (b, n) = if u * r * r > b_floor {
        (r * r * u, [thdot[0] / u, thdot[1] / u, thdot[2] / u])
    } else {
        (b_floor, e_phi)
    };
    let a = f_of(r, r_s) * vt;
    let mut st = ReducedState {
        r,
        a,
        b,
        t: vr,
        theta,
        n,
        s: 0.0,
    };
    if pseudo_norm_residual(&st, r_s).abs() > 1e-8 * (1.0 + a * a) {
        // re-derive the energy if the velocity was not exactly unit
        st = ReducedState::from_constraint(r, vr, b, a, theta, n, r_s)?;
    }
    Ok((st, t))
}

/// A full Eddington–Finkelstein state: reduced variables plus the clock.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfState {
    pub reduced: ReducedState,
    pub ef: EfClock,
}

/// One proper-time step valid for every `r > 0` (across the horizon), with
/// the universal noise factorization and trapezoidal clock update.
/// `z` carries `(w, β, γ, twist)`.
pub fn ef_step(state: &EfState, cfg: &ReducedConfig, h: f64, z: &[f64]) -> Result<EfState> {
    let st = &state.reduced;
    let (mut out, _) = reduced_step_with(st, cfg, h, z, Factorization::Universal)?;
    let phi = in_plane_angle(st.b, out.b, st.r, out.r, st.t, out.t, h);
    let psi = cfg.sigma * st.r / st.b * h.sqrt() * z[3];
    let (th, n) = rotate_pair(&st.theta, &st.n, phi, psi);
    out.theta = th;
    out.n = n;
    let mut ef = state.ef;
    let r0 = ef_rate(ef.tracked, st.r, st.a, st.b, st.t);
    let r1 = ef_rate(ef.tracked, out.r, out.a, out.b, out.t);
    ef.value += 0.5 * h * (r0 + r1);
    if out.r < cfg.r_s && out.t < 0.0 {
        ef.region = Region::BlackHole;
    }
    if out.r != cfg.r_s && (out.r - cfg.r_s).signum() == (st.r - cfg.r_s).signum() {
        ef.retrack(out.a, out.t, out.r, cfg.r_s);
    }
    Ok(EfState { reduced: out, ef })
}

/// `a` recomputed from the chart velocity: `(1 − R/r) u̇ ± ṙ`.
pub fn energy_from_clock(tracked: Tracked, r: f64, a: f64, b: f64, big_t: f64, r_s: f64) -> f64 {
    let ud = ef_rate(tracked, r, a, b, big_t);
    match tracked {
        Tracked::UMinus => f_of(r, r_s) * ud - big_t,
        Tracked::UPlus => f_of(r, r_s) * ud + big_t,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    HorizonFirst,
    HorizonIn,
    Singularity,
    HorizonOut,
    EscapeDeclared,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::HorizonFirst => "horizon-first",
            EventKind::HorizonIn => "horizon-in",
            EventKind::Singularity => "singularity",
            EventKind::HorizonOut => "horizon-out",
            EventKind::EscapeDeclared => "escape-declared",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub s: f64,
    pub r: f64,
    pub a: f64,
    pub b: f64,
    /// Radial velocity; `None` at the singularity where it diverges.
    #[serde(rename = "T")]
    pub t: Option<f64>,
}

/// One inside-the-hole excursion and the exterior arc that follows it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub index: usize,
    /// Horizon entry `D₃ₙ`.
    pub d_in: f64,
    /// Singularity hit `D₃ₙ₊₁`.
    pub d_singularity: f64,
    /// Horizon exit `D₃ₙ₊₂`; `None` if the run stopped inside.
    pub d_out: Option<f64>,
    pub min_b_inside: f64,
    pub a_in: f64,
    pub b_in: f64,
    pub a_out: Option<f64>,
    pub b_out: Option<f64>,
    /// Plane direction at the exit.
    pub plane_out: Option<V3>,
    pub fit: SingularityFit,
    pub boundary: BoundaryPoint,
    /// Largest radius reached after the exit (before the next entry).
    pub top_radius: Option<f64>,
    /// `a/b` at the top radius.
    pub ell_at_top: Option<f64>,
    /// In-plane angle from the singularity to the top radius.
    pub upswing: Option<f64>,
    /// In-plane angle from the top radius to the next singularity.
    pub downswing: Option<f64>,
    /// `max ‖VᵗV − I‖` over both inside legs.
    pub orthogonality_defect: f64,
    /// Inbound tail samples (last decade before `r_stop`).
    #[serde(skip)]
    pub tail: Vec<InteriorSample>,
    /// Angular increments of the regeneration leg.
    #[serde(skip)]
    pub regeneration: Vec<AngularIncrement>,
    pub regeneration_start: Option<M3>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    Never,
    FirstHorizon,
    FirstExcursion,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendPolicy {
    /// Proper-time horizon of the run.
    pub horizon: f64,
    pub h0: f64,
    pub h_min: f64,
    pub m_escape: f64,
    pub escape_margin: f64,
    pub stop_on_escape: bool,
    pub r_stop: f64,
    pub max_crossings: Option<usize>,
    pub b_max: Option<f64>,
    pub stop: StopRule,
    /// Record every `k`-th exterior step (0 keeps events only).
    pub record_every: usize,
    pub record_interior: bool,
    pub keep_regeneration: bool,
    pub max_steps: u64,
}

impl ExtendPolicy {
    pub fn new(r_s: f64, horizon: f64) -> Self {
        ExtendPolicy {
            horizon,
            h0: 1e-2,
            h_min: 1e-12,
            m_escape: 50.0 * r_s,
            escape_margin: 1e-3,
            stop_on_escape: true,
            r_stop: 1e-6 * r_s,
            max_crossings: None,
            b_max: None,
            stop: StopRule::Never,
            record_every: 0,
            record_interior: false,
            keep_regeneration: false,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Horizon,
    Escaped,
    CrossingBudget,
    AngularMomentumCap,
    StopRule,
    StepBudget,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub s: f64,
    pub r: f64,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub theta: V3,
    pub n: V3,
    pub chart: SampleChart,
    pub event: Option<EventKind>,
    pub u: Option<f64>,
    pub v: Option<f64>,
    pub u_minus: Option<f64>,
    pub u_plus: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedPath {
    pub samples: Vec<PathSample>,
    pub events: Vec<Event>,
    pub excursions: Vec<Excursion>,
    pub termination: Termination,
    pub final_state: ReducedState,
    pub final_clock: EfClock,
    /// Largest relative pseudo-norm residual after projection.
    pub max_residual: f64,
    /// Largest relative residual before projection.
    pub max_pre_residual: f64,
    /// Running maximum of `r` over the second half of the run.
    pub tail_max_r: f64,
    /// Total in-plane angle since the start.
    pub total_swing: f64,
    pub exterior_steps: u64,
    pub singularity_hits: usize,
}

/// Chart a path sample was produced in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleChart {
    SchwarzschildSpherical,
    EddingtonFinkelsteinInward,
    EddingtonFinkelsteinOutward,
    /// The outbound inside leg, parametrized by the radius.
    RadialTime,
}

impl SampleChart {
    pub fn name(self) -> &'static str {
        match self {
            SampleChart::SchwarzschildSpherical => Chart::SchwarzschildSpherical.name(),
            SampleChart::EddingtonFinkelsteinInward => Chart::EddingtonFinkelsteinInward.name(),
            SampleChart::EddingtonFinkelsteinOutward => Chart::EddingtonFinkelsteinOutward.name(),
            SampleChart::RadialTime => "radial-time",
        }
    }
}

fn chart_label(r: f64, t: f64, r_s: f64, inside_out: bool) -> SampleChart {
    if inside_out {
        SampleChart::RadialTime
    } else if r > 1.5 * r_s {
        SampleChart::SchwarzschildSpherical
    } else if t < 0.0 || r < r_s {
        SampleChart::EddingtonFinkelsteinInward
    } else {
        SampleChart::EddingtonFinkelsteinOutward
    }
}

fn path_sample(
    st: &ReducedState,
    ef: &EfClock,
    r_s: f64,
    event: Option<EventKind>,
    inside_out: bool,
) -> PathSample {
    let (um, up) = ef.both(st.r, r_s);
    let uv = ef.kruskal(st.r, r_s);
    PathSample {
        s: st.s,
        r: st.r,
        a: st.a,
        b: st.b,
        t: st.t,
        theta: st.theta,
        n: st.n,
        chart: chart_label(st.r, st.t, r_s, inside_out),
        event,
        u: uv.map(|x| x.0),
        v: uv.map(|x| x.1),
        u_minus: um.filter(|x| x.is_finite()),
        u_plus: up.filter(|x| x.is_finite()),
    }
}

fn interior_path_sample(x: &InteriorSample, r_s: f64, inside_out: bool) -> PathSample {
    let st = ReducedState {
        r: x.r,
        a: x.a,
        b: x.b,
        t: x.t,
        theta: x.theta,
        n: x.n,
        s: x.s,
    };
    path_sample(&st, &x.ef, r_s, None, inside_out)
}

/// Orchestrates exterior stepping, horizon entry, the inbound leg, the
/// singularity hit, regeneration and exit, until the policy stops the run.
pub fn extend_trajectory(
    initial: &ReducedState,
    t0: f64,
    cfg: &ReducedConfig,
    policy: &ExtendPolicy,
    noise: &mut NoiseStream,
) -> Result<ExtendedPath> {
    let rs = cfg.r_s;
    if !(initial.r > rs) {
        return Err(outside("schwarzschild-spherical", "runs must start outside the hole"));
    }
    if !(initial.b > 0.0) {
        return Err(Error::InvalidParameter("initial angular momentum must be positive".into()));
    }
    let icfg = InteriorConfig {
        r_s: rs,
        sigma: cfg.sigma,
        r_stop: policy.r_stop,
        record_all: policy.record_interior,
    };
    let mut st = *initial;
    let mut ef = EfClock::exterior(t0, st.r, st.a, st.t, rs);
    let mut samples = Vec::new();
    let mut events = Vec::new();
    let mut excursions: Vec<Excursion> = Vec::new();
    let mut max_res: f64 = 0.0;
    let mut max_pre: f64 = 0.0;
    let mut total_swing = 0.0;
    let mut steps: u64 = 0;
    let mut hits = 0usize;
    let mut tail_max_r: f64 = 0.0;
    let half = initial.s + 0.5 * policy.horizon;
    // per-exterior-arc bookkeeping for the excursion that precedes it
    let mut arc_top: f64 = 0.0;
    let mut arc_top_swing = 0.0;
    let mut arc_top_ell = 0.0;
    let mut swing_at_singularity = 0.0;
    let end = initial.s + policy.horizon;
    if policy.record_every > 0 {
        samples.push(path_sample(&st, &ef, rs, None, false));
    }
    let push_event = |events: &mut Vec<Event>, kind: EventKind, st: &ReducedState| {
        events.push(Event {
            kind,
            s: st.s,
            r: st.r,
            a: st.a,
            b: st.b,
            t: st.t.is_finite().then_some(st.t),
        });
    };

    let termination = loop {
        if st.s >= end {
            break Termination::Horizon;
        }
        if steps >= policy.max_steps {
            break Termination::StepBudget;
        }
        if let Some(cap) = policy.b_max {
            if st.b > cap {
                break Termination::AngularMomentumCap;
            }
        }
        if st.r > policy.m_escape && st.t > 0.0 && st.a * st.a - 1.0 > policy.escape_margin {
            if events.last().map(|e: &Event| e.kind) != Some(EventKind::EscapeDeclared) {
                push_event(&mut events, EventKind::EscapeDeclared, &st);
            }
            if policy.stop_on_escape {
                break Termination::Escaped;
            }
        }

        // horizon entry
        let gap = st.r - rs;
        if st.t < 0.0 && gap <= 1e-9 * rs {
            st.r = rs;
            st.t = -st.a.abs();
            let kind = if excursions.is_empty() {
                EventKind::HorizonFirst
            } else {
                EventKind::HorizonIn
            };
            push_event(&mut events, kind, &st);
            if policy.record_every > 0 {
                samples.push(path_sample(&st, &ef, rs, Some(kind), false));
            }
            // close the previous excursion's downswing
            if let Some(prev) = excursions.last_mut() {
                if prev.top_radius.is_some() {
                    prev.top_radius = Some(arc_top);
                    prev.upswing = Some(arc_top_swing - swing_at_singularity);
                    prev.ell_at_top = Some(arc_top_ell);
                }
            }
            if policy.stop == StopRule::FirstHorizon {
                break Termination::StopRule;
            }
            let d_in = st.s;
            let (a_in, b_in) = (st.a, st.b);
            ef.retrack(st.a, st.t, st.r, rs);
            let (leg, bp, fit) = inbound_leg(&st, ef, &icfg, noise)?;
            total_swing += leg.swing;
            if policy.record_interior {
                for x in &leg.samples {
                    samples.push(interior_path_sample(x, rs, false));
                }
            }
            // downswing of the previous excursion ends at this singularity
            if let Some(prev) = excursions.last_mut() {
                if prev.upswing.is_some() {
                    prev.downswing = Some(total_swing - arc_top_swing);
                }
            }
            hits += 1;
            swing_at_singularity = total_swing;
            let sing_state = ReducedState {
                r: 0.0,
                a: bp.a,
                b: bp.b,
                t: f64::NEG_INFINITY,
                theta: bp.theta,
                n: bp.n,
                s: bp.d_prime,
            };
            push_event(&mut events, EventKind::Singularity, &sing_state);
            let mut exc = Excursion {
                index: excursions.len(),
                d_in,
                d_singularity: bp.d_prime,
                d_out: None,
                min_b_inside: leg.min_b,
                a_in,
                b_in,
                a_out: None,
                b_out: None,
                plane_out: None,
                fit,
                boundary: bp,
                top_radius: None,
                ell_at_top: None,
                upswing: None,
                downswing: None,
                orthogonality_defect: leg.max_orthogonality_defect,
                tail: leg.samples.iter().filter(|x| x.r <= 10.0 * policy.r_stop * 1.0001).cloned().collect(),
                regeneration: Vec::new(),
                regeneration_start: None,
            };
            let budget_hit = policy.max_crossings.is_some_and(|m| hits >= m);
            if budget_hit && policy.stop != StopRule::FirstExcursion {
                st = sing_state;
                excursions.push(exc);
                break Termination::CrossingBudget;
            }
            let (leg2, out, ef2) = regenerate(&bp, &icfg, noise)?;
            total_swing += leg2.swing;
            exc.min_b_inside = exc.min_b_inside.min(leg2.min_b);
            exc.orthogonality_defect = exc.orthogonality_defect.max(leg2.max_orthogonality_defect);
            if policy.keep_regeneration {
                exc.regeneration = leg2.increments.clone();
                exc.regeneration_start = Some(frame_matrix(&bp.theta, &bp.n));
            }
            if policy.record_interior {
                for x in &leg2.samples {
                    samples.push(interior_path_sample(x, rs, true));
                }
            }
            st = out;
            ef = ef2;
            exc.d_out = Some(st.s);
            exc.a_out = Some(st.a);
            exc.b_out = Some(st.b);
            exc.plane_out = Some(st.plane());
            exc.top_radius = Some(st.r);
            excursions.push(exc);
            arc_top = st.r;
            arc_top_swing = total_swing;
            arc_top_ell = st.a / st.b;
            push_event(&mut events, EventKind::HorizonOut, &st);
            if policy.record_every > 0 {
                samples.push(path_sample(&st, &ef, rs, Some(EventKind::HorizonOut), false));
            }
            if st.s >= half {
                tail_max_r = tail_max_r.max(st.r);
            }
            if policy.stop == StopRule::FirstExcursion || budget_hit {
                break if budget_hit {
                    Termination::CrossingBudget
                } else {
                    Termination::StopRule
                };
            }
            continue;
        }

        let mut h = adaptive_step(&st, rs, cfg.sigma, policy.h0, policy.h_min).min(end - st.s);
        if st.t < 0.0 {
            h = h.min(0.5 * gap / st.t.abs());
        }
        let z = noise.next_normals();
        let mut attempt = 0;
        let (next, info, phi) = loop {
            match exterior_step(&st, cfg, h, &z) {
                Ok((next, info, phi)) if next.r > rs => break (next, info, phi),
                Ok(_) | Err(Error::OutsideChart { .. }) if attempt < 60 => {
                    attempt += 1;
                    h *= 0.5;
                }
                Ok(_) => return Err(Error::Integration("could not keep the exterior step outside the hole".into())),
                Err(e) => return Err(e),
            }
        };
        steps += 1;
        let scale = (next.a * next.a + next.t * next.t).max(1.0);
        max_pre = max_pre.max(info.pre_residual.abs() / scale);
        max_res = max_res.max(crate::schwarzschild::relative_residual(&next, rs));
        let r0 = ef_rate(ef.tracked, st.r, st.a, st.b, st.t);
        let r1 = ef_rate(ef.tracked, next.r, next.a, next.b, next.t);
        ef.value += 0.5 * h * (r0 + r1);
        st = next;
        ef.retrack(st.a, st.t, st.r, rs);
        total_swing += phi;
        if !excursions.is_empty() && st.r > arc_top {
            arc_top = st.r;
            arc_top_swing = total_swing;
            arc_top_ell = st.a / st.b;
        }
        if st.s >= half {
            tail_max_r = tail_max_r.max(st.r);
        }
        if policy.record_every > 0 && steps % policy.record_every as u64 == 0 {
            samples.push(path_sample(&st, &ef, rs, None, false));
        }
    };
    // finalize the last exterior arc
    if let Some(prev) = excursions.last_mut() {
        if prev.d_out.is_some() && prev.upswing.is_none() {
            prev.top_radius = Some(arc_top);
            prev.ell_at_top = Some(arc_top_ell);
            prev.upswing = Some(arc_top_swing - swing_at_singularity);
        }
    }
    if termination == Termination::Escaped && policy.record_every > 0 {
        samples.push(path_sample(&st, &ef, rs, Some(EventKind::EscapeDeclared), false));
    } else if policy.record_every > 0 && samples.last().map(|x| x.s) != Some(st.s) {
        samples.push(path_sample(&st, &ef, rs, None, false));
    }
    Ok(ExtendedPath {
        samples,
        events,
        excursions,
        termination,
        final_state: st,
        final_clock: ef,
        max_residual: max_res,
        max_pre_residual: max_pre,
        tail_max_r,
        total_swing,
        exterior_steps: steps,
        singularity_hits: hits,
    })
}
