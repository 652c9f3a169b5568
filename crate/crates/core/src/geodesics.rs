//! Free fall (`σ = 0`): the effective potential `P(u) = (1 − Ru)(1 + b²u²)`,
//! the classification of timelike radial profiles, their integration by
//! quadrature, null rays and the confined deflection angle.
//!
//! With `Q(r) = a²r³ − (r − R)(r² + b²)` the radial motion obeys
//! `ṙ² = Q(r)/r³`, so proper time is `ds = r^{3/2} dr / √Q`. Simple roots of
//! `Q` are turning points, double roots circular orbits.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::schwarzschild::radial_force;

const TIE: f64 = 1e-12;

fn ties(x: f64, y: f64) -> bool {
    (x - y).abs() <= TIE * x.abs().max(y.abs()).max(1.0)
}

pub fn effective_potential(u: f64, b: f64, r_s: f64) -> f64 {
    (1.0 - r_s * u) * (1.0 + b * b * u * u)
}

/// Extremal points `u₁ ≥ u₂` of `P` and the values there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoints {
    pub u1: f64,
    pub u2: f64,
    pub p1: f64,
    pub p2: f64,
}

/// `None` below `b = R√3`.
pub fn critical_points(b: f64, r_s: f64) -> Option<CriticalPoints> {
    let d = 1.0 - 3.0 * r_s * r_s / (b * b);
    let d = if ties(b, r_s * 3f64.sqrt()) { 0.0 } else { d };
    if d < 0.0 {
        return None;
    }
    let sq = d.sqrt();
    let ex = 2.0 / (27.0 * r_s * r_s) * (b * b - 3.0 * r_s * r_s);
    Some(CriticalPoints {
        u1: (1.0 + sq) / (3.0 * r_s),
        u2: (1.0 - sq) / (3.0 * r_s),
        p1: 8.0 / 9.0 + ex * (1.0 + sq),
        p2: 8.0 / 9.0 + ex * (1.0 - sq),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimelikeCase {
    #[serde(rename = "1.1")]
    C11,
    #[serde(rename = "1.2")]
    C12,
    #[serde(rename = "1.3")]
    C13,
    #[serde(rename = "2.1")]
    C21,
    #[serde(rename = "2.2.1")]
    C221,
    #[serde(rename = "2.2.2")]
    C222,
    #[serde(rename = "2.3")]
    C23,
    #[serde(rename = "2.4")]
    C24,
    #[serde(rename = "2.5.1")]
    C251,
    #[serde(rename = "2.5.2")]
    C252,
    #[serde(rename = "2.6")]
    C26,
}

impl TimelikeCase {
    pub const ALL: [TimelikeCase; 11] = [
        TimelikeCase::C11,
        TimelikeCase::C12,
        TimelikeCase::C13,
        TimelikeCase::C21,
        TimelikeCase::C221,
        TimelikeCase::C222,
        TimelikeCase::C23,
        TimelikeCase::C24,
        TimelikeCase::C251,
        TimelikeCase::C252,
        TimelikeCase::C26,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            TimelikeCase::C11 => "1.1",
            TimelikeCase::C12 => "1.2",
            TimelikeCase::C13 => "1.3",
            TimelikeCase::C21 => "2.1",
            TimelikeCase::C221 => "2.2.1",
            TimelikeCase::C222 => "2.2.2",
            TimelikeCase::C23 => "2.3",
            TimelikeCase::C24 => "2.4",
            TimelikeCase::C251 => "2.5.1",
            TimelikeCase::C252 => "2.5.2",
            TimelikeCase::C26 => "2.6",
        }
    }
}

/// Radial behaviour of the geodesic through `r₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Motion {
    /// Between the centre and infinity without turning.
    Monotone,
    /// Rises to `apex` and falls back through the horizon.
    Plunge { apex: f64 },
    /// Comes from infinity, turns at `periapsis`, leaves again.
    Flyby { periapsis: f64 },
    /// Periodic between `r_min` and `r_max`.
    Oscillation { r_min: f64, r_max: f64 },
    /// Winds onto the circle `level` in infinite time.
    Asymptotic { level: f64 },
    /// Leaves the circle `level`, turns at `apex`, winds back onto it.
    Homoclinic { level: f64, apex: f64 },
    Circular { radius: f64 },
    /// `r₀` is not reachable with these constants.
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelikeClass {
    pub case: TimelikeCase,
    /// Simple roots `R₀ < R₁ < R₂` where present.
    pub big_r0: Option<f64>,
    pub big_r1: Option<f64>,
    pub big_r2: Option<f64>,
    /// Radius of the multiple root, if any.
    pub multiple_root: Option<f64>,
    pub critical: Option<CriticalPoints>,
    pub motion: Motion,
}

impl TimelikeClass {
    pub fn feasible(&self) -> bool {
        self.motion != Motion::Infeasible
    }
}

/// Root of `a² − P(u)` on a bracket in `u` where it changes sign, polished by
/// Newton; returned as a radius.
fn root_in(a2: f64, b: f64, r_s: f64, mut lo: f64, mut hi: f64) -> f64 {
    let f = |u: f64| a2 - effective_potential(u, b, r_s);
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut u = 0.5 * (lo + hi);
    for _ in 0..3 {
        // P′(u) = −R + 2b²u − 3Rb²u²
        let dp = -r_s + 2.0 * b * b * u - 3.0 * r_s * b * b * u * u;
        if dp == 0.0 {
            break;
        }
        let next = u + f(u) / dp;
        if next > lo.min(hi) - (hi - lo).abs() && next < lo.max(hi) + (hi - lo).abs() {
            u = next;
        }
    }
    1.0 / u
}

/// Classification of the timelike geodesic with constants `(a, b)` through
/// `r₀`; ties within a relative `1e-12` select the degenerate case.
pub fn classify_timelike(a: f64, b: f64, r0: f64, r_s: f64) -> Result<TimelikeClass> {
    if !(r_s > 0.0) || !(b >= 0.0) || !(r0 > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParameter(format!("need R > 0, b ≥ 0, r₀ > 0 (R={r_s}, b={b}, r₀={r0})")));
    }
    let a2 = a * a;
    let u_h = 1.0 / r_s;
    let crit = critical_points(b, r_s);
    let mut out = TimelikeClass {
        case: TimelikeCase::C11,
        big_r0: None,
        big_r1: None,
        big_r2: None,
        multiple_root: None,
        critical: crit,
        motion: Motion::Monotone,
    };
    let degenerate = ties(b, r_s * 3f64.sqrt());
    match crit {
        Some(c) if !degenerate => {
            let (l1, l2) = (1.0 / c.u1, 1.0 / c.u2);
            if ties(a2, c.p2) {
                out.case = TimelikeCase::C252;
                out.big_r0 = Some(root_in(a2, b, r_s, c.u1, u_h));
                out.multiple_root = Some(l2);
            } else if a2 < c.p2 {
                out.case = TimelikeCase::C221;
                out.big_r0 = Some(root_in(a2, b, r_s, c.u1, u_h));
            } else if ties(a2, c.p1) {
                out.multiple_root = Some(l1);
                if c.p1 >= 1.0 {
                    out.case = TimelikeCase::C23;
                } else {
                    out.case = TimelikeCase::C251;
                    out.big_r2 = Some(root_in(a2, b, r_s, 0.0, c.u2));
                }
            } else if a2 > c.p1 {
                if a2 >= 1.0 {
                    out.case = TimelikeCase::C21;
                } else {
                    out.case = TimelikeCase::C222;
                    out.big_r2 = Some(root_in(a2, b, r_s, 0.0, c.u2));
                }
            } else if a2 >= 1.0 {
                out.case = TimelikeCase::C24;
                out.big_r0 = Some(root_in(a2, b, r_s, c.u1, u_h));
                out.big_r1 = Some(root_in(a2, b, r_s, c.u2, c.u1));
            } else {
                out.case = TimelikeCase::C26;
                out.big_r0 = Some(root_in(a2, b, r_s, c.u1, u_h));
                out.big_r1 = Some(root_in(a2, b, r_s, c.u2, c.u1));
                out.big_r2 = Some(root_in(a2, b, r_s, 0.0, c.u2));
            }
        }
        _ => {
            if degenerate && ties(a2, 8.0 / 9.0) {
                out.case = TimelikeCase::C13;
                out.multiple_root = Some(3.0 * r_s);
            } else if a2 >= 1.0 {
                out.case = TimelikeCase::C11;
            } else {
                out.case = TimelikeCase::C12;
                out.big_r0 = Some(root_in(a2, b, r_s, 0.0, u_h));
            }
        }
    }
    out.motion = motion_from(&out, a2, b, r0, r_s);
    Ok(out)
}

fn motion_from(c: &TimelikeClass, a2: f64, b: f64, r0: f64, r_s: f64) -> Motion {
    let at = |x: Option<f64>| x.is_some_and(|x| (r0 - x).abs() <= 1e-10 * x);
    if let Some(m) = c.multiple_root {
        if at(Some(m)) {
            return Motion::Circular { radius: m };
        }
    }
    let room = a2 - effective_potential(1.0 / r0, b, r_s);
    if room < -1e-12 * a2.max(1.0) && !at(c.big_r0) && !at(c.big_r1) && !at(c.big_r2) {
        return Motion::Infeasible;
    }
    let below = |x: Option<f64>| x.is_some_and(|x| r0 <= x * (1.0 + 1e-10));
    let above = |x: Option<f64>| x.is_some_and(|x| r0 >= x * (1.0 - 1e-10));
    use TimelikeCase::*;
    match c.case {
        C11 | C21 => Motion::Monotone,
        C12 | C221 => Motion::Plunge { apex: c.big_r0.unwrap() },
        C222 => Motion::Plunge { apex: c.big_r2.unwrap() },
        C13 | C23 => Motion::Asymptotic {
            level: c.multiple_root.unwrap(),
        },
        C24 => {
            if below(c.big_r0) {
                Motion::Plunge { apex: c.big_r0.unwrap() }
            } else if above(c.big_r1) {
                Motion::Flyby {
                    periapsis: c.big_r1.unwrap(),
                }
            } else {
                Motion::Infeasible
            }
        }
        C251 => {
            let level = c.multiple_root.unwrap();
            if r0 < level {
                Motion::Asymptotic { level }
            } else {
                Motion::Homoclinic {
                    level,
                    apex: c.big_r2.unwrap(),
                }
            }
        }
        C252 => {
            if below(c.big_r0) {
                Motion::Plunge { apex: c.big_r0.unwrap() }
            } else {
                Motion::Infeasible
            }
        }
        C26 => {
            if below(c.big_r0) {
                Motion::Plunge { apex: c.big_r0.unwrap() }
            } else if above(c.big_r1) && below(c.big_r2) {
                Motion::Oscillation {
                    r_min: c.big_r1.unwrap(),
                    r_max: c.big_r2.unwrap(),
                }
            } else {
                Motion::Infeasible
            }
        }
    }
}

/// Radii of the circular geodesics with angular momentum `b` (unstable first).
pub fn circular_orbits(b: f64, r_s: f64) -> Vec<f64> {
    match critical_points(b, r_s) {
        Some(c) if c.u1 != c.u2 => vec![1.0 / c.u1, 1.0 / c.u2],
        Some(c) => vec![1.0 / c.u1],
        None => Vec::new(),
    }
}

/// Singular behaviour at one end of a radial interval.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Sing {
    None,
    /// Simple root at the lower end.
    TurnLo,
    TurnHi,
    /// Double root just above the interval (never reached).
    DoubleHi(f64),
    DoubleLo(f64),
}

#[derive(Clone, Copy, Debug)]
struct Leg {
    from: f64,
    /// `f64::INFINITY` for legs that leave for infinity, `0` for the centre.
    to: f64,
    sing_from: bool,
    sing_to: Option<Sing>,
    duration: f64,
}

/// Quantities accumulated along a geodesic with `ds = r^{3/2} dr/√Q`.
#[derive(Clone, Copy, Debug)]
enum Weight {
    Time,
    Angle,
}

/// Exact radial motion of a timelike geodesic.
#[derive(Clone, Debug)]
pub struct TimelikeOrbit {
    pub a: f64,
    pub b: f64,
    pub r_s: f64,
    pub r0: f64,
    pub outward: bool,
    pub class: TimelikeClass,
    legs: Vec<Leg>,
    /// Half period and the phase of `r₀` for oscillations.
    period: Option<(f64, f64)>,
}

/// One point of an integrated geodesic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitPoint {
    pub s: f64,
    pub r: f64,
    /// In-plane angle swept since `s = 0`.
    pub phi: f64,
}

impl TimelikeOrbit {
    /// Starts at `r₀` moving outwards (`outward`) or inwards. At a turning
    /// point the direction is set by the radial force.
    pub fn new(a: f64, b: f64, r0: f64, r_s: f64, outward: bool) -> Result<Self> {
        let class = classify_timelike(a, b, r0, r_s)?;
        let mut orbit = TimelikeOrbit {
            a,
            b,
            r_s,
            r0,
            outward,
            class,
            legs: Vec::new(),
            period: None,
        };
        orbit.build()?;
        Ok(orbit)
    }

    fn q(&self, r: f64) -> f64 {
        (self.a * self.a - 1.0) * r * r * r + self.r_s * r * r - self.b * self.b * r + self.r_s * self.b * self.b
    }

    /// `Q(r)/(r − t)` for a root `t`.
    fn q_deflated(&self, r: f64, t: f64) -> f64 {
        let q2 = self.a * self.a - 1.0;
        let q1 = self.r_s + t * q2;
        let q0 = -self.b * self.b + t * q1;
        (q2 * r + q1) * r + q0
    }

    /// `Q(r)/(r − d)²` for a double root `d`.
    fn q_deflated2(&self, r: f64, d: f64) -> f64 {
        let q2 = self.a * self.a - 1.0;
        let q1 = self.r_s + d * q2;
        q2 * r + q1 + d * q2
    }

    fn weight(&self, w: Weight, r: f64) -> f64 {
        match w {
            Weight::Time => r * r.sqrt(),
            Weight::Angle => self.b / r.sqrt(),
        }
    }

    /// `∫_lo^hi weight · dr / √Q` with the substitution matching `sing`.
    fn piece(&self, lo: f64, hi: f64, sing: Sing, w: Weight) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        let tol = 1e-14;
        match sing {
            Sing::None if lo == 0.0 => {
                // r = y², smooth at the centre for both weights
                quad::integrate(
                    |y: f64| {
                        let r = y * y;
                        2.0 * y * self.weight(w, r) / self.q(r).max(0.0).sqrt()
                    },
                    0.0,
                    hi.sqrt(),
                    tol,
                )
            }
            Sing::None => quad::integrate(|r: f64| self.weight(w, r) / self.q(r).max(0.0).sqrt(), lo, hi, tol),
            Sing::TurnLo | Sing::TurnHi => {
                let t = if sing == Sing::TurnLo { lo } else { hi };
                // substitute over at most one root-scale, plain beyond
                let span = (hi - lo).min(t.max(self.r_s));
                let sub = quad::integrate(
                    |v: f64| {
                        let r = if sing == Sing::TurnLo { t + v * v } else { t - v * v };
                        2.0 * self.weight(w, r) / self.q_deflated(r, t).abs().sqrt()
                    },
                    0.0,
                    span.sqrt(),
                    tol,
                );
                let rest = if sing == Sing::TurnLo {
                    self.piece(lo + span, hi, Sing::None, w)
                } else {
                    self.piece(lo, hi - span, Sing::None, w)
                };
                sub + rest
            }
            Sing::DoubleHi(d) | Sing::DoubleLo(d) => {
                // y = −ln|r − d|, dr/|r − d| = dy
                let (y0, y1) = ((d - lo).abs().ln(), (d - hi).abs().ln());
                let (ya, yb) = (-y0.max(y1), -y0.min(y1));
                quad::integrate(
                    |y: f64| {
                        let dist = (-y).exp();
                        let r = if matches!(sing, Sing::DoubleHi(_)) { d - dist } else { d + dist };
                        self.weight(w, r) / self.q_deflated2(r, d).abs().sqrt()
                    },
                    ya,
                    yb,
                    tol,
                )
            }
        }
    }

    /// Accumulated weight from the leg start to radius `x`.
    fn along(&self, leg: &Leg, x: f64, w: Weight) -> f64 {
        let up = leg.to > leg.from;
        let (lo, hi) = if up { (leg.from, x) } else { (x, leg.from) };
        match leg.sing_to {
            Some(Sing::TurnHi) | Some(Sing::TurnLo) if !leg.sing_from => {
                let (lo2, hi2, s) = if up { (x, leg.to, Sing::TurnHi) } else { (leg.to, x, Sing::TurnLo) };
                let total = if matches!(w, Weight::Time) {
                    leg.duration
                } else {
                    self.leg_total(leg, w)
                };
                total - self.piece(lo2, hi2, s, w)
            }
            Some(Sing::DoubleHi(d)) | Some(Sing::DoubleLo(d)) => {
                let s = if up { Sing::DoubleHi(d) } else { Sing::DoubleLo(d) };
                self.piece(lo, hi, s, w)
            }
            _ if leg.sing_from => self.piece(lo, hi, if up { Sing::TurnLo } else { Sing::TurnHi }, w),
            _ => self.piece(lo, hi, Sing::None, w),
        }
    }

    fn leg_total(&self, leg: &Leg, w: Weight) -> f64 {
        if !leg.to.is_finite() || matches!(leg.sing_to, Some(Sing::DoubleHi(_)) | Some(Sing::DoubleLo(_))) {
            return f64::INFINITY;
        }
        let up = leg.to > leg.from;
        let (lo, hi) = if up { (leg.from, leg.to) } else { (leg.to, leg.from) };
        let sing = match (leg.sing_from, leg.sing_to.is_some()) {
            (true, _) => {
                if up {
                    Sing::TurnLo
                } else {
                    Sing::TurnHi
                }
            }
            (false, true) => {
                if up {
                    Sing::TurnHi
                } else {
                    Sing::TurnLo
                }
            }
            _ => Sing::None,
        };
        self.piece(lo, hi, sing, w)
    }

    fn push_leg(&mut self, from: f64, to: f64, sing_from: bool, sing_to: Option<Sing>) {
        let mut leg = Leg {
            from,
            to,
            sing_from,
            sing_to,
            duration: 0.0,
        };
        leg.duration = self.leg_total(&leg, Weight::Time);
        self.legs.push(leg);
    }

    fn build(&mut self) -> Result<()> {
        let r0 = self.r0;
        let at_root = |x: f64| (r0 - x).abs() <= 1e-10 * x;
        let mut out = self.outward;
        // at a turning point the force decides
        for x in [self.class.big_r0, self.class.big_r1, self.class.big_r2].into_iter().flatten() {
            if at_root(x) {
                out = radial_force(x, self.b, self.r_s) > 0.0;
            }
        }
        match self.class.motion {
            Motion::Infeasible => {
                return Err(Error::InvalidParameter(format!(
                    "r₀ = {r0} is not reachable in case {}",
                    self.class.case.tag()
                )))
            }
            Motion::Circular { .. } => {}
            Motion::Monotone => {
                self.push_leg(r0, if out { f64::INFINITY } else { 0.0 }, false, None);
            }
            Motion::Plunge { apex } => {
                if out && !at_root(apex) {
                    self.push_leg(r0, apex, false, Some(Sing::TurnHi));
                }
                let start_turn = out || at_root(apex);
                self.push_leg(if start_turn { apex } else { r0 }, 0.0, start_turn, None);
            }
            Motion::Flyby { periapsis } => {
                if !out && !at_root(periapsis) {
                    self.push_leg(r0, periapsis, false, Some(Sing::TurnLo));
                }
                let start_turn = !out || at_root(periapsis);
                self.push_leg(if start_turn { periapsis } else { r0 }, f64::INFINITY, start_turn, None);
            }
            Motion::Asymptotic { level } => {
                if (r0 < level) == out {
                    let s = if out { Sing::DoubleHi(level) } else { Sing::DoubleLo(level) };
                    self.push_leg(r0, level, false, Some(s));
                } else {
                    self.push_leg(r0, if out { f64::INFINITY } else { 0.0 }, false, None);
                }
            }
            Motion::Homoclinic { level, apex } => {
                if out {
                    if !at_root(apex) {
                        self.push_leg(r0, apex, false, Some(Sing::TurnHi));
                    }
                    let mid = 0.5 * (apex + level);
                    self.push_leg(apex, mid, true, None);
                    self.push_leg(mid, level, false, Some(Sing::DoubleLo(level)));
                } else {
                    self.push_leg(r0, level, false, Some(Sing::DoubleLo(level)));
                }
            }
            Motion::Oscillation { r_min, r_max } => {
                let mid = 0.5 * (r_min + r_max);
                let half = self.piece(r_min, mid, Sing::TurnLo, Weight::Time)
                    + self.piece(mid, r_max, Sing::TurnHi, Weight::Time);
                let rise = self.rise_time(r0, r_min, r_max, half);
                let phase = if out { rise } else { 2.0 * half - rise };
                self.period = Some((half, phase));
            }
        }
        Ok(())
    }

    /// Time from `r_min` up to `x` on an oscillation.
    fn rise_time(&self, x: f64, r_min: f64, r_max: f64, half: f64) -> f64 {
        let mid = 0.5 * (r_min + r_max);
        if x <= mid {
            self.piece(r_min, x, Sing::TurnLo, Weight::Time)
        } else {
            half - self.piece(x, r_max, Sing::TurnHi, Weight::Time)
        }
    }

    fn rise_angle(&self, x: f64, r_min: f64, r_max: f64) -> f64 {
        let mid = 0.5 * (r_min + r_max);
        if x <= mid {
            self.piece(r_min, x, Sing::TurnLo, Weight::Angle)
        } else {
            self.piece(r_min, mid, Sing::TurnLo, Weight::Angle) + self.piece(mid, r_max, Sing::TurnHi, Weight::Angle)
                - self.piece(x, r_max, Sing::TurnHi, Weight::Angle)
        }
    }

    /// Proper time of one full oscillation.
    pub fn period(&self) -> Option<f64> {
        self.period.map(|p| 2.0 * p.0)
    }

    /// Proper time until the centre is reached, if it is.
    pub fn singularity_time(&self) -> Option<f64> {
        match self.legs.last() {
            Some(l) if l.to == 0.0 => Some(self.legs.iter().map(|l| l.duration).sum()),
            _ => None,
        }
    }

    /// Radius between `from` and `to` (possibly infinite) where the time
    /// accumulated from `from`, increasing towards `to`, equals `elapsed`.
    fn invert<F: Fn(f64) -> f64>(elapsed: f64, from: f64, to: f64, time: F) -> f64 {
        let (mut lo, mut hi) = (from, to);
        if !to.is_finite() {
            let mut probe = from.max(1.0) * 2.0;
            while time(probe) < elapsed {
                probe *= 2.0;
            }
            hi = probe;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if time(mid) < elapsed {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Radius at proper time `s ≥ 0`; `None` once the centre was reached.
    pub fn radius_at(&self, s: f64) -> Result<Option<f64>> {
        Ok(self.point_at(s, false)?.map(|p| p.r))
    }

    /// Radius and swept angle at `s ≥ 0`.
    pub fn point_at(&self, s: f64, with_angle: bool) -> Result<Option<OrbitPoint>> {
        if !(s >= 0.0) {
            return Err(Error::InvalidParameter("proper time must be non-negative".into()));
        }
        let angle_rate = |r: f64| self.b / (r * r);
        if let Motion::Circular { radius } = self.class.motion {
            return Ok(Some(OrbitPoint {
                s,
                r: radius,
                phi: angle_rate(radius) * s,
            }));
        }
        if let (Some((half, phase)), Motion::Oscillation { r_min, r_max }) = (self.period, self.class.motion) {
            let total = phase + s;
            let k = (total / (2.0 * half)).floor();
            let p = total - k * 2.0 * half;
            let rising = p <= half;
            let el = if rising { p } else { 2.0 * half - p };
            let r = Self::invert(el, r_min, r_max, |x| self.rise_time(x, r_min, r_max, half));
            let mut phi = 0.0;
            if with_angle {
                let full = self.rise_angle(r_max, r_min, r_max);
                let a0 = self.rise_angle(self.r0, r_min, r_max);
                let start = if self.outward { a0 } else { 2.0 * full - a0 };
                let now = if rising {
                    self.rise_angle(r, r_min, r_max)
                } else {
                    2.0 * full - self.rise_angle(r, r_min, r_max)
                };
                phi = k * 2.0 * full + now - start;
            }
            return Ok(Some(OrbitPoint { s, r, phi }));
        }
        let mut left = s;
        let mut phi = 0.0;
        for leg in &self.legs {
            if left <= leg.duration {
                let r = Self::invert(left, leg.from, leg.to, |x| self.along(leg, x, Weight::Time));
                if with_angle {
                    phi += self.along(leg, r, Weight::Angle);
                }
                return Ok(Some(OrbitPoint { s, r, phi }));
            }
            left -= leg.duration;
            if with_angle {
                phi += self.leg_total(leg, Weight::Angle);
            }
        }
        Ok(None)
    }

    /// Samples at `n + 1` equally spaced times on `[0, s_max]`, stopping at the centre.
    pub fn path(&self, s_max: f64, n: usize) -> Result<Vec<OrbitPoint>> {
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let s = s_max * i as f64 / n.max(1) as f64;
            match self.point_at(s, true)? {
                Some(p) => out.push(p),
                None => break,
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NullCase {
    /// Critical impact parameter: the photon sphere.
    #[serde(rename = "0")]
    Critical,
    /// From the centre to infinity.
    #[serde(rename = "1")]
    Crossing,
    /// Either confined below `ϱ` or reflected above `ϱ′`.
    #[serde(rename = "2")]
    Split,
}

impl NullCase {
    pub fn tag(self) -> &'static str {
        match self {
            NullCase::Critical => "0",
            NullCase::Crossing => "1",
            NullCase::Split => "2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullClass {
    pub case: NullCase,
    pub alpha: f64,
    /// Largest radius of the confined branch.
    pub rho: Option<f64>,
    /// Smallest radius of the reflected branch.
    pub rho_prime: Option<f64>,
}

/// `2/(3√3 R)`.
pub fn critical_impact(r_s: f64) -> f64 {
    2.0 / (3.0 * 3f64.sqrt() * r_s)
}

/// Null rays by impact parameter `α = a/b`; the turning radii solve
/// `α²ϱ³ − ϱ + R = 0`.
pub fn classify_null(alpha: f64, r_s: f64) -> Result<NullClass> {
    if !(r_s > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter("need R > 0 and a finite impact parameter".into()));
    }
    let al = alpha.abs();
    let ac = critical_impact(r_s);
    let mut out = NullClass {
        case: NullCase::Crossing,
        alpha,
        rho: None,
        rho_prime: None,
    };
    if ties(al, ac) {
        out.case = NullCase::Critical;
        out.rho = Some(1.5 * r_s);
        out.rho_prime = Some(1.5 * r_s);
    } else if al < ac {
        out.case = NullCase::Split;
        let g = |x: f64| al * al * x * x * x - x + r_s;
        let bisect = |mut lo: f64, mut hi: f64| {
            let glo = g(lo);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if (g(mid) > 0.0) == (glo > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        out.rho = Some(if al == 0.0 { r_s } else { bisect(r_s, 1.5 * r_s) });
        if al > 0.0 {
            let mut hi = 3.0 * r_s;
            while g(hi) < 0.0 {
                hi *= 2.0;
            }
            out.rho_prime = Some(bisect(1.5 * r_s, hi));
        }
    }
    Ok(out)
}

fn check_rho(rho: f64, r_s: f64) -> Result<f64> {
    if !(rho >= r_s * (1.0 - 1e-15)) {
        return Err(Error::InvalidParameter(format!("ϱ = {rho} is below the horizon")));
    }
    if !(rho < 1.5 * r_s) {
        return Err(Error::InvalidParameter(format!("ϱ = {rho} ≥ 3R/2: the deflection integral diverges")));
    }
    let rho = rho.max(r_s);
    Ok((1.0 - r_s / rho) / (rho * rho))
}

/// `Ψ(ϱ) = ∫₀^ϱ dr / √((R − r + ℓ²r³) r)`, `ℓ² = (1 − R/ϱ)/ϱ²`.
///
/// With `r = ϱ sin²χ` the integrand becomes `2/√H` where
/// `H(r) = 1 − ℓ²(r² + ϱr + ϱ²)` is the cubic with its root at `ϱ` divided out.
pub fn deflection_integral(rho: f64, r_s: f64) -> Result<f64> {
    let l2 = check_rho(rho, r_s)?;
    Ok(quad::integrate(
        |chi: f64| {
            let r = rho * chi.sin().powi(2);
            2.0 / (1.0 - l2 * (r * r + rho * r + rho * rho)).sqrt()
        },
        0.0,
        FRAC_PI_2,
        1e-15,
    ))
}

/// The same integral in closed form. Dividing the root `ϱ` out of the cubic
/// leaves `ℓ²(r₊ − r)(r − r₋)` with `r₋ < 0 < ϱ < r₊`, so `Ψ` is a complete
/// elliptic integral of the first kind, evaluated by the arithmetic–geometric
/// mean. Independent of the quadrature in [`deflection_integral`].
pub fn deflection_integral_elliptic(rho: f64, r_s: f64) -> Result<f64> {
    let l2 = check_rho(rho, r_s)?;
    if l2 == 0.0 {
        return Ok(std::f64::consts::PI);
    }
    let disc = (4.0 / l2 - 3.0 * rho * rho).sqrt();
    let rp = 0.5 * (disc - rho);
    let rm = -0.5 * (disc + rho);
    let k2 = rho * (rp - rm) / (rp * (rho - rm));
    let (mut x, mut y) = (1.0, (1.0 - k2).sqrt());
    for _ in 0..64 {
        if (x - y).abs() <= 4.0 * f64::EPSILON * x {
            break;
        }
        let m = 0.5 * (x + y);
        y = (x * y).sqrt();
        x = m;
    }
    let big_k = std::f64::consts::PI / (2.0 * x);
    Ok(2.0 / (l2.sqrt() * (rp * (rho - rm)).sqrt()) * big_k)
}

/// Partial deflection `∫₀^r` along the confined ray with top radius `ϱ`.
pub fn deflection_partial(rho: f64, r: f64, r_s: f64) -> Result<f64> {
    let l2 = check_rho(rho, r_s)?;
    if !(0.0..=rho).contains(&r) {
        return Err(Error::InvalidParameter(format!("r = {r} outside [0, ϱ]")));
    }
    let chi_end = (r / rho).sqrt().min(1.0).asin();
    Ok(quad::integrate(
        |chi: f64| {
            let x = rho * chi.sin().powi(2);
            2.0 / (1.0 - l2 * (x * x + rho * x + rho * rho)).sqrt()
        },
        0.0,
        chi_end,
        1e-15,
    ))
}

/// Polar angle of the geodesic on the cylinder `r = R` with `a = 0`,
/// azimuthal constant `k` and angular momentum `b`:
/// `φ(s) = arccos(√(1 − k²/b²) sin(±b(s − s₀)/R²))`.
pub fn horizon_cylinder_geodesic(b: f64, k: f64, r_s: f64, s: f64, s0: f64, forward: bool) -> Result<f64> {
    if !(k.abs() < b) || k == 0.0 {
        return Err(Error::InvalidParameter(format!("need 0 < |k| < b (k={k}, b={b})")));
    }
    let sign = if forward { 1.0 } else { -1.0 };
    let amp = (1.0 - k * k / (b * b)).sqrt();
    Ok((amp * (sign * b * (s - s0) / (r_s * r_s)).sin()).clamp(-1.0, 1.0).acos())
}
