//! The reduced exterior diffusion `(r, a, b, T)` and its angular companion.
//!
//! A step splits into the geodesic part (RK4 on `ṙ = T`,
//! `Ṫ = (r − 3R/2) b²/r⁴ − R/(2r²)` with `a, b` frozen) and an Euler–Maruyama
//! increment for the noise and the Itô drifts. Three independent normals
//! `(w, β, γ)` drive the martingale parts:
//!
//! ```text
//! dMᵇ = σ (b dw + r dβ)
//! dMᵀ = σ (T dw + √f dγ)
//! dMᵃ = σ ((a² − f)/a dw + f b/(r a) dβ + T √f/a dγ)      f = 1 − R/r
//! ```
//!
//! which reproduces the full covariation `K′` on the constraint surface.
//! A fourth normal drives the twist of the orbital plane.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type V3 = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub r: f64,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub theta: V3,
    /// `θ̇/|θ̇|`.
    pub n: V3,
    pub s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedConfig {
    pub r_s: f64,
    pub sigma: f64,
    /// Below `eps_t · max(1, |a|)` the constraint is restored through `a`.
    pub eps_t: f64,
    pub b_floor: f64,
}

impl ReducedConfig {
    pub fn new(r_s: f64, sigma: f64) -> Self {
        ReducedConfig {
            r_s,
            sigma,
            eps_t: 1e-6,
            b_floor: 1e-8 * r_s,
        }
    }
}

pub fn f_of(r: f64, r_s: f64) -> f64 {
    1.0 - r_s / r
}

impl ReducedState {
    /// State with radial velocity `t` and angular momentum `b`; the energy
    /// takes the sign `a_sign` and its magnitude from the constraint.
    pub fn from_constraint(r: f64, t: f64, b: f64, a_sign: f64, theta: V3, n: V3, r_s: f64) -> Result<Self> {
        let a2 = t * t + f_of(r, r_s) * (1.0 + b * b / (r * r));
        if !(a2 > 0.0) {
            return Err(Error::InvalidParameter(format!("no real energy for r={r}, T={t}, b={b}")));
        }
        Ok(ReducedState {
            r,
            a: a_sign.signum() * a2.sqrt(),
            b,
            t,
            theta,
            n,
            s: 0.0,
        })
    }

    /// Plane normal `θ ∧ n` (the direction of `b⃗`).
    pub fn plane(&self) -> V3 {
        cross(&self.theta, &self.n)
    }
}

/// `T² − a² + (1 − R/r)(1 + b²/r²)`.
pub fn pseudo_norm_residual(state: &ReducedState, r_s: f64) -> f64 {
    let f = f_of(state.r, r_s);
    state.t * state.t - state.a * state.a + f * (1.0 + state.b * state.b / (state.r * state.r))
}

/// Residual scaled by `max(1, a² + T²)`; the energy grows like `e^{σ² s}` so
/// the absolute residual is not scale free.
pub fn relative_residual(state: &ReducedState, r_s: f64) -> f64 {
    pseudo_norm_residual(state, r_s).abs() / (state.a * state.a + state.t * state.t).max(1.0)
}

/// `K′ / σ²` in the order `(a, b, T)`.
pub fn covariation(state: &ReducedState, r_s: f64) -> [[f64; 3]; 3] {
    let (r, a, b, t) = (state.r, state.a, state.b, state.t);
    let f = f_of(r, r_s);
    [
        [a * a - f, a * b, a * t],
        [a * b, b * b + r * r, b * t],
        [a * t, b * t, t * t + f],
    ]
}

/// Radial acceleration of the geodesic flow.
pub fn radial_force(r: f64, b: f64, r_s: f64) -> f64 {
    (r - 1.5 * r_s) * b * b / r.powi(4) - r_s / (2.0 * r * r)
}

/// Martingale increments `(dMᵃ, dMᵇ, dMᵀ)` for unit-variance normals
/// `(w, β, γ)` scaled by `√h`.
pub fn martingale_increments(state: &ReducedState, r_s: f64, sigma: f64, h: f64, z: &[f64]) -> Result<V3> {
    let (r, a, b, t) = (state.r, state.a, state.b, state.t);
    let f = f_of(r, r_s);
    if f < 0.0 {
        return Err(Error::OutsideChart {
            chart: "reduced exterior",
            reason: format!("r = {r} < R"),
        });
    }
    let sf = f.sqrt();
    let sh = sigma * h.sqrt();
    let (w, beta, gamma) = (z[0], z[1], z[2]);
    let dmb = sh * (b * w + r * beta);
    let dmt = sh * (t * w + sf * gamma);
    let dma = if a == 0.0 {
        0.0
    } else {
        sh * ((a * a - f) / a * w + f * b / (r * a) * beta + t * sf / a * gamma)
    };
    Ok([dma, dmb, dmt])
}

/// Factorization of `K′` valid for every `r > 0`, inside the hole as well:
///
/// ```text
/// dMᵇ = σ (b dw + r dβ)
/// dMᵀ = σ (bT/(b² + r²) (b dw + r dβ) + r|a|/√(b² + r²) dγ)
/// dMᵃ = σ (ab/(b² + r²) (b dw + r dβ) + sgn(a) T r/√(b² + r²) dγ)
/// ```
pub fn martingale_increments_universal(state: &ReducedState, sigma: f64, h: f64, z: &[f64]) -> V3 {
    let (r, a, b, t) = (state.r, state.a, state.b, state.t);
    let sh = sigma * h.sqrt();
    let (w, beta, gamma) = (z[0], z[1], z[2]);
    let q = b * b + r * r;
    let lead = b * w + r * beta;
    let sgn = if a < 0.0 { -1.0 } else { 1.0 };
    let dmb = sh * lead;
    let dmt = sh * (b * t / q * lead + r * a.abs() / q.sqrt() * gamma);
    let dma = sh * (a * b / q * lead + sgn * t * r / q.sqrt() * gamma);
    [dma, dmb, dmt]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factorization {
    /// The exterior form with `√f` (requires `r ≥ R`).
    Exterior,
    /// [`martingale_increments_universal`].
    Universal,
}

/// What a step did besides producing the new state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Martingale increments `(dMᵃ, dMᵇ, dMᵀ)`.
    pub dm: V3,
    /// Residual before the constraint projection.
    pub pre_residual: f64,
    /// Whether the projection adjusted `a` instead of `T`.
    pub corrected_energy: bool,
}

/// One reduced step without projection or angular update.
fn raw_step(
    state: &ReducedState,
    cfg: &ReducedConfig,
    h: f64,
    z: &[f64],
    fact: Factorization,
) -> Result<(ReducedState, V3)> {
    let rs = cfg.r_s;
    let sigma = cfg.sigma;
    let b = state.b;
    // geodesic part, a and b frozen
    let acc = |r: f64| radial_force(r, b, rs);
    let (r0, t0) = (state.r, state.t);
    let k1 = (t0, acc(r0));
    let k2 = (t0 + 0.5 * h * k1.1, acc(r0 + 0.5 * h * k1.0));
    let k3 = (t0 + 0.5 * h * k2.1, acc(r0 + 0.5 * h * k2.0));
    let k4 = (t0 + h * k3.1, acc(r0 + h * k3.0));
    let r1 = r0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
    let t1 = t0 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    if !(r1 > 0.0) || !r1.is_finite() {
        return Err(Error::Integration(format!("radius left (0, ∞): {r1}")));
    }
    let mut out = *state;
    out.r = r1;
    out.t = t1;
    out.s = state.s + h;
    let mut dm = [0.0; 3];
    if sigma != 0.0 {
        dm = match fact {
            Factorization::Exterior => martingale_increments(state, rs, sigma, h, z)?,
            Factorization::Universal => martingale_increments_universal(state, sigma, h, z),
        };
        let drift = 1.5 * sigma * sigma * h;
        out.t += dm[2] + drift * t0;
        out.a += dm[0] + drift * state.a;
        // b through the norm form: |b + drift + b-noise|² plus the transverse
        // variance σ² r² h, which replaces the singular drift σ² r²/(2b)
        let along = b + drift * b + dm[1];
        out.b = (along * along + sigma * sigma * state.r * state.r * h).sqrt();
    }
    Ok((out, dm))
}

/// Restores the pseudo-norm relation. Returns whether `a` was adjusted.
pub fn project_constraint(state: &mut ReducedState, cfg: &ReducedConfig) -> Result<bool> {
    let f = f_of(state.r, cfg.r_s);
    let lift = f * (1.0 + state.b * state.b / (state.r * state.r));
    let t2 = state.a * state.a - lift;
    let scale = state.a.abs().max(1.0);
    if state.t.abs() >= cfg.eps_t * scale && t2 >= 0.0 {
        state.t = state.t.signum() * t2.sqrt();
        return Ok(false);
    }
    let a2 = state.t * state.t + lift;
    if !(a2 >= 0.0) {
        return Err(Error::Integration(format!(
            "cannot restore the pseudo-norm at r={} (a={}, T={})",
            state.r, state.a, state.t
        )));
    }
    let sign = if state.a == 0.0 { 1.0 } else { state.a.signum() };
    state.a = sign * a2.sqrt();
    Ok(true)
}

/// One correlated Euler–Maruyama step of `(r, a, b, T)` followed by the
/// constraint projection. `z` holds the normals `(w, β, γ)`.
pub fn reduced_step(state: &ReducedState, cfg: &ReducedConfig, h: f64, z: &[f64]) -> Result<ReducedState> {
    reduced_step_info(state, cfg, h, z).map(|(s, _)| s)
}

pub fn reduced_step_info(
    state: &ReducedState,
    cfg: &ReducedConfig,
    h: f64,
    z: &[f64],
) -> Result<(ReducedState, StepInfo)> {
    reduced_step_with(state, cfg, h, z, Factorization::Exterior)
}

/// [`reduced_step_info`] with an explicit noise factorization. The
/// universal one accepts `0 < r < R`; the sign of `a` is then free.
pub fn reduced_step_with(
    state: &ReducedState,
    cfg: &ReducedConfig,
    h: f64,
    z: &[f64],
    fact: Factorization,
) -> Result<(ReducedState, StepInfo)> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    if !(state.r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {}", state.r)));
    }
    if z.len() < 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: z.len(),
        });
    }
    let var_a = state.a * state.a - f_of(state.r, cfg.r_s);
    if fact == Factorization::Exterior && var_a < -1e-9 * state.a.abs().max(1.0) {
        return Err(Error::Integration(format!("energy variance a² − f = {var_a:e} is negative")));
    }
    let (mut out, dm) = raw_step(state, cfg, h, z, fact)?;
    if out.b < cfg.b_floor {
        return Err(Error::Integration(format!("angular momentum fell below the floor: {}", out.b)));
    }
    let pre = pseudo_norm_residual(&out, cfg.r_s);
    let corrected = project_constraint(&mut out, cfg)?;
    let outside = state.r >= cfg.r_s && out.r >= cfg.r_s;
    if outside && out.a.signum() != state.a.signum() && state.a != 0.0 {
        return Err(Error::Integration("energy changed sign outside the hole".into()));
    }
    Ok((
        out,
        StepInfo {
            dm,
            pre_residual: pre,
            corrected_energy: corrected,
        },
    ))
}

/// Default exterior step length `h₀ / (1 + |T|/r + b/r² + √(R/r³) + σ²)`,
/// floored at `h_min`.
pub fn adaptive_step(state: &ReducedState, r_s: f64, sigma: f64, h0: f64, h_min: f64) -> f64 {
    let r = state.r;
    let rate = state.t.abs() / r + state.b / (r * r) + (r_s / (r * r * r)).sqrt() + sigma * sigma;
    (h0 / (1.0 + rate)).max(h_min)
}

pub fn cross(a: &V3, b: &V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot3(a: &V3, b: &V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize3(a: &V3) -> V3 {
    let n = dot3(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Applies `V ← V exp(A)` to the frame `V = [θ n m]`, `m = θ ∧ n`, where
/// `A` rotates `θ` towards `n` by `phi` and `n` towards `m` by `psi`.
pub fn rotate_pair(theta: &V3, n: &V3, phi: f64, psi: f64) -> (V3, V3) {
    let m = cross(theta, n);
    // body-frame rotation vector: ω = (ψ, 0, Φ) in the (θ, n, m) basis
    let w = [psi, 0.0, phi];
    let ang = (psi * psi + phi * phi).sqrt();
    let cols = [*theta, *n, m];
    let mut rot = [[0.0; 3]; 3]; // exp of the skew matrix of ω, in body coordinates
    if ang == 0.0 {
        return (*theta, *n);
    }
    let k = [w[0] / ang, w[1] / ang, w[2] / ang];
    let (sa, ca) = ang.sin_cos();
    let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
    for i in 0..3 {
        for j in 0..3 {
            let kk: f64 = (0..3).map(|l| kx[i][l] * kx[l][j]).sum();
            rot[i][j] = if i == j { 1.0 } else { 0.0 } + sa * kx[i][j] + (1.0 - ca) * kk;
        }
    }
    // new columns: V · rot
    let mut out = [[0.0; 3]; 3];
    for j in 0..3 {
        for c in 0..3 {
            out[j][c] = (0..3).map(|i| cols[i][c] * rot[i][j]).sum();
        }
    }
    reorthonormalize(&out[0], &out[1])
}

/// Gram–Schmidt on the pair `(θ, n)`.
pub fn reorthonormalize(theta: &V3, n: &V3) -> (V3, V3) {
    let t = normalize3(theta);
    let p = dot3(n, &t);
    let n2 = normalize3(&[n[0] - p * t[0], n[1] - p * t[1], n[2] - p * t[2]]);
    (t, n2)
}

/// In-plane angle `∫ b/r² ds` over one exterior step, by Simpson's rule with
/// a cubic Hermite midpoint radius.
pub fn in_plane_angle(b0: f64, b1: f64, r0: f64, r1: f64, t0: f64, t1: f64, h: f64) -> f64 {
    let rm = 0.5 * (r0 + r1) + h * (t0 - t1) / 8.0;
    let bm = 0.5 * (b0 + b1);
    h / 6.0 * (b0 / (r0 * r0) + 4.0 * bm / (rm * rm) + b1 / (r1 * r1))
}

/// One rotation-exact angular step with `r`, `b` frozen at `state`:
/// in-plane rate `b/r²`, twist `(σ r/b) √h β`.
pub fn angular_step(state: &ReducedState, cfg: &ReducedConfig, h: f64, beta: f64) -> Result<(V3, V3)> {
    if !(state.b >= cfg.b_floor) {
        return Err(Error::InvalidParameter(format!("angular momentum below the floor: {}", state.b)));
    }
    let phi = state.b / (state.r * state.r) * h;
    let psi = cfg.sigma * state.r / state.b * h.sqrt() * beta;
    Ok(rotate_pair(&state.theta, &state.n, phi, psi))
}

/// Full exterior step: reduced part from `z[0..3]`, angular part from `z[3]`
/// with the Simpson in-plane angle over the step.
pub fn exterior_step(state: &ReducedState, cfg: &ReducedConfig, h: f64, z: &[f64]) -> Result<(ReducedState, StepInfo, f64)> {
    let (mut out, info) = reduced_step_info(state, cfg, h, z)?;
    let phi = in_plane_angle(state.b, out.b, state.r, out.r, state.t, out.t, h);
    let psi = cfg.sigma * state.r / state.b * h.sqrt() * z[3];
    let (th, n) = rotate_pair(&state.theta, &state.n, phi, psi);
    out.theta = th;
    out.n = n;
    Ok((out, info, phi))
}

/// Decomposition `a = exp(σ² s + σ w + η)` along a path, with `w` rebuilt
/// from `dMᵃ = σ √(a² − f) dw`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEnergyDecomposition {
    pub w: Vec<f64>,
    pub eta: Vec<f64>,
    /// Oscillation `max η − min η` over the second half of the path.
    pub tail_oscillation: f64,
}

impl LogEnergyDecomposition {
    pub fn converging(&self, tol: f64) -> bool {
        self.tail_oscillation <= tol
    }
}

/// `path[i]` are the states, `dma[i]` the `Mᵃ` increment from `path[i]` to
/// `path[i + 1]`.
pub fn log_energy_decomposition(
    path: &[ReducedState],
    dma: &[f64],
    r_s: f64,
    sigma: f64,
) -> Result<LogEnergyDecomposition> {
    if path.is_empty() {
        return Err(Error::InvalidParameter("empty path".into()));
    }
    if dma.len() + 1 < path.len() {
        return Err(Error::DimensionMismatch {
            expected: path.len() - 1,
            got: dma.len(),
        });
    }
    let sign = path[0].a.signum();
    let s0 = path[0].s;
    let mut w = Vec::with_capacity(path.len());
    let mut eta = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    for (i, st) in path.iter().enumerate() {
        if st.a.signum() != sign {
            return Err(Error::InvalidParameter("energy changes sign along the path".into()));
        }
        if i > 0 && sigma != 0.0 {
            let prev = &path[i - 1];
            let v = prev.a * prev.a - f_of(prev.r, r_s);
            if !(v > 0.0) {
                return Err(Error::Integration(format!("a² − f = {v:e} is not positive")));
            }
            acc += dma[i - 1] / (sigma * v.sqrt());
        }
        w.push(acc);
        eta.push(st.a.abs().ln() - sigma * sigma * (st.s - s0) - sigma * acc);
    }
    let half = &eta[eta.len() / 2..];
    let hi = half.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = half.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(LogEnergyDecomposition {
        w,
        eta,
        tail_oscillation: hi - lo,
    })
}

/// A smooth test function of `(r, b, T)` with coded derivatives.
pub trait TestFunction {
    fn value(&self, r: f64, b: f64, t: f64) -> f64;
    /// `(∂r, ∂b, ∂T)`.
    fn gradient(&self, r: f64, b: f64, t: f64) -> V3;
    /// Second derivatives in the order `(r, b, T)`.
    fn hessian(&self, r: f64, b: f64, t: f64) -> [[f64; 3]; 3];
}

/// The generator of `(r, b, T)` applied to `f` at a point.
pub fn reduced_generator(f: &dyn TestFunction, state: &ReducedState, r_s: f64, sigma: f64) -> f64 {
    let (r, b, t) = (state.r, state.b, state.t);
    let s2 = sigma * sigma;
    let g = f.gradient(r, b, t);
    let hs = f.hessian(r, b, t);
    let drift = [
        t,
        1.5 * s2 * b + s2 * r * r / (2.0 * b),
        1.5 * s2 * t + radial_force(r, b, r_s),
    ];
    let fr = f_of(r, r_s);
    let cov = [
        [0.0, 0.0, 0.0],
        [0.0, s2 * (b * b + r * r), s2 * b * t],
        [0.0, s2 * b * t, s2 * (t * t + fr)],
    ];
    let mut out = 0.0;
    for i in 0..3 {
        out += drift[i] * g[i];
        for j in 0..3 {
            out += 0.5 * cov[i][j] * hs[i][j];
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorReport {
    pub empirical: f64,
    pub standard_error: f64,
    pub generator: f64,
    pub residual: f64,
}

/// `|E[f(step) − f(point)]/h − 𝒢′f(point)|` from `n` one-step samples drawn
/// from `noise`.
pub fn generator_residual(
    f: &dyn TestFunction,
    point: &ReducedState,
    cfg: &ReducedConfig,
    h: f64,
    n: usize,
    noise: &mut crate::rng::NoiseStream,
) -> Result<GeneratorReport> {
    let f0 = f.value(point.r, point.b, point.t);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n {
        let z = noise.next_normals();
        let next = reduced_step(point, cfg, h, &z)?;
        let d = (f.value(next.r, next.b, next.t) - f0) / h;
        sum += d;
        sum2 += d * d;
    }
    let mean = sum / n as f64;
    let var = (sum2 / n as f64 - mean * mean).max(0.0);
    let generator = reduced_generator(f, point, cfg.r_s, cfg.sigma);
    Ok(GeneratorReport {
        empirical: mean,
        standard_error: (var / n as f64).sqrt(),
        generator,
        residual: (mean - generator).abs(),
    })
}

/// The generator of the full system `(r, a, b, T)` applied to the
/// constraint `C = T² − a² + f (1 + b²/r²)`, from the drifts and `K′`.
/// On the constraint surface it vanishes; off it, it equals `4σ² C`.
pub fn constraint_generator(state: &ReducedState, r_s: f64, sigma: f64) -> f64 {
    let (r, a, b, t) = (state.r, state.a, state.b, state.t);
    let s2 = sigma * sigma;
    let f = f_of(r, r_s);
    let fp = r_s / (r * r);
    // gradient of C in (r, a, b, T)
    let d_r = fp * (1.0 + b * b / (r * r)) - 2.0 * f * b * b / (r * r * r);
    let d_a = -2.0 * a;
    let d_b = 2.0 * f * b / (r * r);
    let d_t = 2.0 * t;
    let drift = [
        t,
        1.5 * s2 * a,
        1.5 * s2 * b + s2 * r * r / (2.0 * b),
        1.5 * s2 * t + radial_force(r, b, r_s),
    ];
    let first = drift[0] * d_r + drift[1] * d_a + drift[2] * d_b + drift[3] * d_t;
    // non-zero second derivatives: C_aa = −2, C_bb = 2f/r², C_TT = 2
    let k = covariation(state, r_s);
    let second = 0.5 * s2 * (-2.0 * k[0][0] + 2.0 * f / (r * r) * k[1][1] + 2.0 * k[2][2]);
    first + second
}
