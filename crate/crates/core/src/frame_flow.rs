//! The frame-bundle diffusion in local coordinates and its stochastic
//! development into the initial tangent space.
//!
//! The geodesic part of a step (`dx = e₀ ds`, `deⱼ = −Γ(e₀, eⱼ) ds`) is
//! advanced by classical RK4; the noise and Itô drifts are added by an
//! Euler–Maruyama increment. With `σ = 0` a step is therefore plain RK4 on
//! the geodesic flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    bilinear, frame_from_velocity, gamma_apply, mat_vec, renormalize_frame, restore_isometry,
    transport_inverse_step, Frame, MetricProvider, IDENTITY, M4, V4,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    pub frame: Frame,
    pub s: f64,
    /// Inverse parallel transport from the current point back to the start.
    pub transport_inv: M4,
    /// Developed velocity `ζ = ξ⃖(s) ξ̇ₛ`.
    pub zeta: V4,
    /// Metric at the starting point.
    pub g0: M4,
}

impl FrameState {
    /// Starts at `x` with unit velocity `e0` (normalized) and an arbitrary
    /// completion of the frame.
    pub fn new(provider: &MetricProvider, x: V4, e0: V4) -> Result<Self> {
        let frame = frame_from_velocity(provider, &x, &e0)?;
        Self::from_frame(provider, frame)
    }

    pub fn from_frame(provider: &MetricProvider, frame: Frame) -> Result<Self> {
        let frame = renormalize_frame(&frame, provider)?;
        let g0 = provider.metric(&frame.x)?;
        Ok(FrameState {
            frame,
            s: 0.0,
            transport_inv: IDENTITY,
            zeta: frame.e[0],
            g0,
        })
    }

    pub fn x(&self) -> V4 {
        self.frame.x
    }

    pub fn velocity(&self) -> V4 {
        self.frame.e[0]
    }
}

type Bundle = [V4; 5];

fn geodesic_rhs(provider: &MetricProvider, y: &Bundle) -> Result<Bundle> {
    let gm = provider.christoffel(&y[0])?;
    let e0 = y[1];
    let mut out = [[0.0; 4]; 5];
    out[0] = e0;
    for j in 0..4 {
        let v = gamma_apply(&gm, &e0, &y[1 + j]);
        for k in 0..4 {
            out[1 + j][k] = -v[k];
        }
    }
    Ok(out)
}

fn axpy(y: &Bundle, a: f64, k: &Bundle) -> Bundle {
    let mut out = *y;
    for i in 0..5 {
        for c in 0..4 {
            out[i][c] += a * k[i][c];
        }
    }
    out
}

/// One RK4 step of the geodesic flow on `(x, e₀, …, e₃)`.
pub fn geodesic_frame_step(provider: &MetricProvider, frame: &Frame, h: f64) -> Result<Frame> {
    let y: Bundle = [frame.x, frame.e[0], frame.e[1], frame.e[2], frame.e[3]];
    let k1 = geodesic_rhs(provider, &y)?;
    let k2 = geodesic_rhs(provider, &axpy(&y, h / 2.0, &k1))?;
    let k3 = geodesic_rhs(provider, &axpy(&y, h / 2.0, &k2))?;
    let k4 = geodesic_rhs(provider, &axpy(&y, h, &k3))?;
    let mut out = y;
    for i in 0..5 {
        for c in 0..4 {
            out[i][c] += h / 6.0 * (k1[i][c] + 2.0 * k2[i][c] + 2.0 * k3[i][c] + k4[i][c]);
        }
    }
    provider.check_domain(&out[0])?;
    Ok(Frame {
        x: out[0],
        e: [out[1], out[2], out[3], out[4]],
    })
}

/// Adds the Itô noise increments to a frame:
/// `de₀ += σ Σᵢ eᵢ √h zᵢ + (dσ²/2) e₀ h`, `deⱼ += σ e₀ √h zⱼ + (σ²/2) eⱼ h`.
pub fn add_vertical_noise(frame: &Frame, sigma: f64, h: f64, noise: &[f64]) -> Frame {
    if sigma == 0.0 {
        return *frame;
    }
    let d = 3.0;
    let sh = sigma * h.sqrt();
    let e = frame.e;
    let mut out = *frame;
    for k in 0..4 {
        let mut v = d * sigma * sigma / 2.0 * h * e[0][k];
        for i in 1..4 {
            v += sh * e[i][k] * noise[i - 1];
        }
        out.e[0][k] += v;
        for j in 1..4 {
            out.e[j][k] += sh * e[0][k] * noise[j - 1] + sigma * sigma / 2.0 * h * e[j][k];
        }
    }
    out
}

/// One step of the frame diffusion: RK4 geodesic part, Euler–Maruyama noise,
/// pseudo-Gram–Schmidt, inverse transport along the chord, isometry restoration.
///
/// A chart-domain exit surfaces as [`Error::OutsideChart`] and leaves the
/// caller's state untouched.
pub fn ito_frame_step(
    state: &FrameState,
    provider: &MetricProvider,
    sigma: f64,
    h: f64,
    noise: &[f64],
) -> Result<FrameState> {
    if noise.len() < 3 && sigma != 0.0 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: noise.len(),
        });
    }
    let geo = geodesic_frame_step(provider, &state.frame, h)?;
    let noisy = add_vertical_noise(&geo, sigma, h, noise);
    let frame = renormalize_frame(&noisy, provider)?;
    let x0 = state.frame.x;
    let mut chord = [0.0; 4];
    for k in 0..4 {
        chord[k] = (frame.x[k] - x0[k]) / h;
    }
    let m = transport_inverse_step(provider, &state.transport_inv, &x0, &chord, h)?;
    let gs_inv = provider.metric_inverse(&frame.x)?;
    let m = restore_isometry(&m, &state.g0, &gs_inv);
    let zeta = mat_vec(&m, &frame.e[0]);
    Ok(FrameState {
        frame,
        s: state.s + h,
        transport_inv: m,
        zeta,
        g0: state.g0,
    })
}

/// `K = σ² (e₀ ᵗe₀ − g⁻¹)`, the covariation rate of `e₀`.
pub fn vertical_covariation(frame: &Frame, provider: &MetricProvider, sigma: f64) -> Result<M4> {
    let gi = provider.metric_inverse(&frame.x)?;
    let e0 = frame.e[0];
    let mut k = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            k[i][j] = sigma * sigma * (e0[i] * e0[j] - gi[i][j]);
        }
    }
    Ok(k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevelopmentReport {
    /// `max |⟨ζ,ζ⟩_{g(ξ₀)} − 1|` along the path.
    pub max_norm_drift: f64,
    /// `max |ζ − ξ⃖ ξ̇|` along the path.
    pub max_development_defect: f64,
    /// Summed `Δζ Δζᵀ` over the path.
    pub quadratic_variation: M4,
    /// Flat prediction `Σ σ² (ζζᵀ − g(ξ₀)⁻¹) h`.
    pub predicted_variation: M4,
    /// `max |qv − predicted| / max |predicted|` (zero when nothing was predicted).
    pub relative_variation_error: f64,
}

pub fn development_check(path: &[FrameState], provider: &MetricProvider, sigma: f64) -> Result<DevelopmentReport> {
    let first = path
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty path".into()))?;
    let g0 = first.g0;
    let g0_inv = provider.metric_inverse(&first.frame.x)?;
    let mut drift: f64 = 0.0;
    let mut defect: f64 = 0.0;
    let mut qv = [[0.0; 4]; 4];
    let mut pred = [[0.0; 4]; 4];
    for (i, st) in path.iter().enumerate() {
        drift = drift.max((bilinear(&g0, &st.zeta, &st.zeta) - 1.0).abs());
        let dev = mat_vec(&st.transport_inv, &st.frame.e[0]);
        for k in 0..4 {
            defect = defect.max((dev[k] - st.zeta[k]).abs());
        }
        if i > 0 {
            let prev = &path[i - 1];
            let h = st.s - prev.s;
            for a in 0..4 {
                for b in 0..4 {
                    qv[a][b] += (st.zeta[a] - prev.zeta[a]) * (st.zeta[b] - prev.zeta[b]);
                    pred[a][b] += sigma * sigma * (prev.zeta[a] * prev.zeta[b] - g0_inv[a][b]) * h;
                }
            }
        }
    }
    let scale = pred.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    let err = qv
        .iter()
        .flatten()
        .zip(pred.iter().flatten())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(DevelopmentReport {
        max_norm_drift: drift,
        max_development_defect: defect,
        quadratic_variation: qv,
        predicted_variation: pred,
        relative_variation_error: if scale > 0.0 { err / scale } else { 0.0 },
    })
}
