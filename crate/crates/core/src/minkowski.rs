//! Flat relativistic diffusion: hyperbolic Brownian velocity on `ℍᵈ` and
//! its integrated position in `ℝ^{1,d}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::minkowski_inner;
use crate::rng::{NoiseStream, NORMALS_PER_STEP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinkowskiState {
    pub xi: Vec<f64>,
    pub p: Vec<f64>,
    pub s: f64,
}

impl MinkowskiState {
    /// Unit velocity with hyperbolic radius `rho` pointing along `dir`
    /// (normalized here), started at the origin.
    pub fn boosted(rho: f64, dir: &[f64]) -> Result<Self> {
        let n = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(n > 0.0) {
            return Err(Error::InvalidParameter("direction must be non-zero".into()));
        }
        let mut p = vec![rho.cosh()];
        p.extend(dir.iter().map(|c| rho.sinh() * c / n));
        Ok(MinkowskiState {
            xi: vec![0.0; p.len()],
            p,
            s: 0.0,
        })
    }

    pub fn at_rest(d: usize) -> Self {
        let mut p = vec![0.0; d + 1];
        p[0] = 1.0;
        MinkowskiState {
            xi: vec![0.0; d + 1],
            p,
            s: 0.0,
        }
    }

    pub fn d(&self) -> usize {
        self.p.len() - 1
    }

    /// Hyperbolic radius `argch p⁰`.
    pub fn rho(&self) -> f64 {
        self.p[0].max(1.0).acosh()
    }

    /// Unit spatial direction `p⃗ / √((p⁰)² − 1)`; `None` at rest.
    pub fn theta(&self) -> Option<Vec<f64>> {
        let n = self.p[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
        if n == 0.0 {
            return None;
        }
        Some(self.p[1..].iter().map(|c| c / n).collect())
    }
}

/// `Eⱼ = e₀ ⊗ eⱼ* + eⱼ ⊗ e₀*` for `j = 1..=d`.
#[derive(Clone, Debug)]
pub struct BoostGenerators {
    pub e: Vec<DMatrix<f64>>,
}

impl BoostGenerators {
    pub fn new(d: usize) -> Self {
        let e = (1..=d)
            .map(|j| {
                let mut m = DMatrix::zeros(d + 1, d + 1);
                m[(0, j)] = 1.0;
                m[(j, 0)] = 1.0;
                m
            })
            .collect();
        BoostGenerators { e }
    }

    /// `max_j ‖ᵗEⱼ η + η Eⱼ‖∞`.
    pub fn antisymmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for m in &self.e {
            let n = m.nrows();
            let mut eta = DMatrix::<f64>::identity(n, n) * -1.0;
            eta[(0, 0)] = 1.0;
            let c = m.transpose() * &eta + &eta * m;
            worst = worst.max(c.amax());
        }
        worst
    }
}

/// Column `j` (1-based) of the pure boost taking `(1,0,…,0)` to `p`:
/// `eⱼ⁰ = pʲ`, `eⱼⁱ = δᵢⱼ + pⁱpʲ/(1 + p⁰)`.
pub fn boost_leg(p: &[f64], j: usize) -> Vec<f64> {
    let d = p.len() - 1;
    let mut e = vec![0.0; d + 1];
    e[0] = p[j];
    for i in 1..=d {
        e[i] = if i == j { 1.0 } else { 0.0 } + p[i] * p[j] / (1.0 + p[0]);
    }
    e
}

/// One Itô step: `dp = σ Σⱼ eⱼ √h zⱼ + (dσ²/2) p h`, renormalized onto the
/// unit hyperboloid, then `ξ += h (p_old + p_new)/2`.
pub fn step_minkowski(state: &MinkowskiState, sigma: f64, h: f64, noise: &[f64]) -> Result<MinkowskiState> {
    let d = state.d();
    if noise.len() < d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: noise.len(),
        });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let p = &state.p;
    let mut q = p.clone();
    let drift = d as f64 * sigma * sigma / 2.0 * h;
    for k in 0..=d {
        q[k] += drift * p[k];
    }
    if sigma != 0.0 {
        let sh = sigma * h.sqrt();
        // e_j^k = δ_jk + p^k p^j/(1+p⁰) for k ≥ 1, e_j^0 = p^j
        let dot: f64 = (1..=d).map(|j| p[j] * noise[j - 1]).sum();
        q[0] += sh * dot;
        let c = dot / (1.0 + p[0]);
        for k in 1..=d {
            q[k] += sh * (noise[k - 1] + p[k] * c);
        }
    }
    let n2 = minkowski_inner(&q, &q)?;
    if !(n2 > 0.0) || q[0] <= 0.0 {
        return Err(Error::Integration(format!("velocity left the hyperboloid (⟨p,p⟩ = {n2:e})")));
    }
    let n = n2.sqrt();
    for c in q.iter_mut() {
        *c /= n;
    }
    // keep p⁰ = √(1 + |p⃗|²) exactly
    q[0] = (1.0 + q[1..].iter().map(|c| c * c).sum::<f64>()).sqrt();
    let xi = state
        .xi
        .iter()
        .zip(p.iter().zip(&q))
        .map(|(x, (a, b))| x + 0.5 * h * (a + b))
        .collect();
    Ok(MinkowskiState {
        xi,
        p: q,
        s: state.s + h,
    })
}

/// Runs the flat diffusion until `p⁰ ≥ threshold` or `s ≥ max_s`,
/// recording every `record_every`-th state (and the last one).
pub fn simulate(
    initial: &MinkowskiState,
    sigma: f64,
    h: f64,
    threshold: f64,
    max_s: f64,
    record_every: usize,
    noise: &mut NoiseStream,
) -> Result<Vec<MinkowskiState>> {
    let d = initial.d();
    let blocks = d.div_ceil(NORMALS_PER_STEP);
    let mut buf = vec![0.0; blocks * NORMALS_PER_STEP];
    let mut path = vec![initial.clone()];
    let mut st = initial.clone();
    let mut k = 0usize;
    while st.p[0] < threshold && st.s < max_s {
        for b in 0..blocks {
            buf[b * NORMALS_PER_STEP..(b + 1) * NORMALS_PER_STEP].copy_from_slice(&noise.next_normals());
        }
        st = step_minkowski(&st, sigma, h, &buf)?;
        k += 1;
        if record_every > 0 && k % record_every == 0 {
            path.push(st.clone());
        }
    }
    if path.last() != Some(&st) {
        path.push(st);
    }
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    /// `θ` at the final sample.
    pub theta: Vec<f64>,
    /// Mean Euclidean velocity `(Z(t) − Z(t₀))/(t − t₀)` at the final sample.
    pub mean_velocity: Vec<f64>,
    pub final_p0: f64,
    /// `false` when the final `p⁰` is below the threshold.
    pub decided: bool,
}

pub fn asymptotic_direction(path: &[MinkowskiState], threshold: f64) -> Result<DirectionReport> {
    let (first, last) = match (path.first(), path.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::InvalidParameter("empty path".into())),
    };
    let theta = last
        .theta()
        .ok_or_else(|| Error::InvalidParameter("velocity at rest has no direction".into()))?;
    let dt = last.xi[0] - first.xi[0];
    let mean_velocity = if dt > 0.0 {
        (1..last.xi.len()).map(|i| (last.xi[i] - first.xi[i]) / dt).collect()
    } else {
        vec![0.0; last.d()]
    };
    Ok(DirectionReport {
        theta,
        mean_velocity,
        final_p0: last.p[0],
        decided: last.p[0] >= threshold,
    })
}

/// Area of the unit sphere `𝕊^{d−1} ⊂ ℝᵈ`.
pub fn sphere_area(d: usize) -> f64 {
    use std::f64::consts::PI;
    match d {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (d as f64 - 2.0) * sphere_area(d - 2),
    }
}

/// Ball-model point `p⃗/(1 + p⁰)` of a unit velocity.
pub fn ball_point(p0: &[f64]) -> Vec<f64> {
    p0[1..].iter().map(|c| c / (1.0 + p0[0])).collect()
}

/// Density of the limiting direction on `𝕊^{d−1}`:
/// `((1 − |y|²)/|y − θ|²)^{d−1} / |𝕊^{d−1}|` with `y` the ball point of `p₀`.
pub fn scattering_density(p0: &[f64], theta: &[f64]) -> Result<f64> {
    let d = p0.len() - 1;
    if theta.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: theta.len(),
        });
    }
    let y = ball_point(p0);
    let y2: f64 = y.iter().map(|c| c * c).sum();
    let dist2: f64 = y.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
    let kernel = (1.0 - y2) / dist2;
    Ok(kernel.powi(d as i32 - 1) / sphere_area(d))
}

/// `d = 2` distribution function of the polar angle `ϑ ∈ (−π, π]`, measured
/// from the direction of `p⃗₀`, under [`scattering_density`]:
/// `1/2 + arctan(((1+ρ)/(1−ρ)) tan(ϑ/2))/π` with `ρ = |y|`.
pub fn scattering_cdf_2d(p0: &[f64], angle: f64) -> f64 {
    let y = ball_point(p0);
    let rho = (y[0] * y[0] + y[1] * y[1]).sqrt();
    if angle >= std::f64::consts::PI {
        return 1.0;
    }
    if angle <= -std::f64::consts::PI {
        return 0.0;
    }
    0.5 + ((1.0 + rho) / (1.0 - rho) * (angle / 2.0).tan()).atan() / std::f64::consts::PI
}
