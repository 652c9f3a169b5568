//! Pseudo-Riemannian primitives: metrics, Christoffel symbols, curvature by
//! finite differences, pseudo-orthonormal frames and inverse parallel transport.
//!
//! All curved charts are four dimensional with signature `(+,-,-,-)`.
//! Coordinate order per chart:
//!
//! | chart                 | x0   | x1  | x2 | x3 |
//! |-----------------------|------|-----|----|----|
//! | `Minkowski`           | t    | x   | y  | z  |
//! | `Spherical`           | t    | r   | φ  | ψ  |
//! | `EfInward`            | u⁻   | r   | φ  | ψ  |
//! | `EfOutward`           | u⁺   | r   | φ  | ψ  |
//! | `Kruskal`             | v    | u   | φ  | ψ  |
//!
//! The Kruskal chart puts its timelike coordinate `v` first so that "future
//! directed" means a positive zeroth component in every chart.

use serde::{Deserialize, Serialize};

use crate::error::{outside, Error, Result};

pub type V4 = [f64; 4];
pub type M4 = [[f64; 4]; 4];
/// `gamma[k][i][j]` is `Γᵏᵢⱼ`.
pub type Gamma = [[[f64; 4]; 4]; 4];
/// `riem[ρ][σ][μ][ν]` is `R^ρ_{σμν}`.
pub type Riemann = [[[[f64; 4]; 4]; 4]; 4];

const SPHERICAL_HORIZON_GUARD: f64 = 1e-9;
const POLE_GUARD: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chart {
    Minkowski,
    SchwarzschildSpherical,
    EddingtonFinkelsteinInward,
    EddingtonFinkelsteinOutward,
    Kruskal,
}

impl Chart {
    pub fn name(self) -> &'static str {
        match self {
            Chart::Minkowski => "minkowski",
            Chart::SchwarzschildSpherical => "schwarzschild-spherical",
            Chart::EddingtonFinkelsteinInward => "eddington-finkelstein-inward",
            Chart::EddingtonFinkelsteinOutward => "eddington-finkelstein-outward",
            Chart::Kruskal => "kruskal",
        }
    }

    pub const ALL: [Chart; 5] = [
        Chart::Minkowski,
        Chart::SchwarzschildSpherical,
        Chart::EddingtonFinkelsteinInward,
        Chart::EddingtonFinkelsteinOutward,
        Chart::Kruskal,
    ];
}

/// A metric in one named chart. `r_s` is the hole radius `R` (ignored for
/// Minkowski), `d` the spatial dimension (only meaningful for Minkowski).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricProvider {
    pub chart: Chart,
    pub r_s: f64,
    pub d: usize,
}

/// Minkowski pairing `x⁰y⁰ − Σ xʲyʲ` in any dimension.
pub fn minkowski_inner(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    Ok(x[0] * y[0] - x[1..].iter().zip(&y[1..]).map(|(a, b)| a * b).sum::<f64>())
}

/// Tortoise coordinate `r + R log|r/R − 1|`.
pub fn tortoise(r: f64, r_s: f64) -> f64 {
    r + r_s * (r / r_s - 1.0).abs().ln()
}

/// Inverse of `r ↦ (r/R − 1) e^{r/R}` on `r ≥ 0` (safeguarded Newton).
pub fn r_of_w(w: f64, r_s: f64) -> Result<f64> {
    if !(w >= -1.0) || !w.is_finite() {
        return Err(Error::InvalidParameter(format!("r_of_w needs w >= -1, got {w}")));
    }
    if w == -1.0 {
        return Ok(0.0);
    }
    let g = |y: f64| (y - 1.0) * y.exp() - w;
    // bracket in y = r/R
    let mut lo = 0.0_f64;
    let mut hi = if w <= 0.0 { 1.0 } else { 1.0 + (1.0 + w).ln().max(1.0) };
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut y = if w <= 0.0 { 0.5 * (lo + hi) } else { 1.0 + (1.0 + w).ln().min(hi - 1.0) * 0.5 };
    let tol = 1e-13 * (1.0 + w.abs());
    for _ in 0..200 {
        let gy = g(y);
        if gy.abs() <= tol {
            // one polishing step once inside the tolerance
            let dy = y * y.exp();
            if dy > 0.0 {
                y -= gy / dy;
            }
            break;
        }
        if gy < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let dy = y * y.exp();
        let mut next = y - gy / dy;
        if !(next > lo && next < hi) || dy == 0.0 {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-17 * y.abs().max(1.0) {
            y = next;
            break;
        }
        y = next;
    }
    Ok(y * r_s)
}

impl MetricProvider {
    pub fn minkowski(d: usize) -> Self {
        MetricProvider {
            chart: Chart::Minkowski,
            r_s: 0.0,
            d,
        }
    }

    pub fn schwarzschild(chart: Chart, r_s: f64) -> Self {
        MetricProvider { chart, r_s, d: 3 }
    }

    pub fn dim(&self) -> usize {
        match self.chart {
            Chart::Minkowski => 1 + self.d,
            _ => 4,
        }
    }

    fn require_four(&self) -> Result<()> {
        if self.dim() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: self.dim(),
            });
        }
        Ok(())
    }

    /// Areal radius at a chart point (`None` for Minkowski).
    pub fn radius(&self, x: &V4) -> Result<Option<f64>> {
        match self.chart {
            Chart::Minkowski => Ok(None),
            Chart::SchwarzschildSpherical
            | Chart::EddingtonFinkelsteinInward
            | Chart::EddingtonFinkelsteinOutward => Ok(Some(x[1])),
            Chart::Kruskal => {
                let w = x[1] * x[1] - x[0] * x[0];
                if w <= -1.0 {
                    return Err(outside("kruskal", "u² − v² ≤ −1 (beyond the singularity)"));
                }
                Ok(Some(r_of_w(w, self.r_s)?))
            }
        }
    }

    pub fn check_domain(&self, x: &V4) -> Result<()> {
        self.require_four()?;
        if x.iter().any(|c| !c.is_finite()) {
            return Err(outside(self.chart.name(), "non-finite coordinate"));
        }
        let name = self.chart.name();
        match self.chart {
            Chart::Minkowski => Ok(()),
            Chart::SchwarzschildSpherical => {
                if x[1] <= self.r_s * (1.0 + SPHERICAL_HORIZON_GUARD) {
                    return Err(outside(name, format!("r = {} ≤ R", x[1])));
                }
                pole_guard(name, x[2])
            }
            Chart::EddingtonFinkelsteinInward | Chart::EddingtonFinkelsteinOutward => {
                if x[1] <= 0.0 {
                    return Err(outside(name, format!("r = {} ≤ 0", x[1])));
                }
                pole_guard(name, x[2])
            }
            Chart::Kruskal => {
                let w = x[1] * x[1] - x[0] * x[0];
                if w <= -1.0 {
                    return Err(outside(name, "u² − v² ≤ −1"));
                }
                pole_guard(name, x[2])
            }
        }
    }

    /// Metric matrix `g_ij`.
    pub fn metric(&self, x: &V4) -> Result<M4> {
        self.check_domain(x)?;
        let mut g = [[0.0; 4]; 4];
        match self.chart {
            Chart::Minkowski => {
                g[0][0] = 1.0;
                for i in 1..4 {
                    g[i][i] = -1.0;
                }
            }
            Chart::SchwarzschildSpherical => {
                let r = x[1];
                let f = 1.0 - self.r_s / r;
                let s = x[2].sin();
                g[0][0] = f;
                g[1][1] = -1.0 / f;
                g[2][2] = -r * r;
                g[3][3] = -r * r * s * s;
            }
            Chart::EddingtonFinkelsteinInward | Chart::EddingtonFinkelsteinOutward => {
                let r = x[1];
                let eps = self.ef_sign();
                let s = x[2].sin();
                g[0][0] = 1.0 - self.r_s / r;
                g[0][1] = eps;
                g[1][0] = eps;
                g[2][2] = -r * r;
                g[3][3] = -r * r * s * s;
            }
            Chart::Kruskal => {
                let r = self.radius(x)?.unwrap();
                let big_f = kruskal_factor(r, self.r_s);
                let s = x[2].sin();
                g[0][0] = big_f;
                g[1][1] = -big_f;
                g[2][2] = -r * r;
                g[3][3] = -r * r * s * s;
            }
        }
        Ok(g)
    }

    /// `+1` for the outward chart, `−1` for the inward one (the `g_{u r}` entry).
    fn ef_sign(&self) -> f64 {
        match self.chart {
            Chart::EddingtonFinkelsteinOutward => 1.0,
            _ => -1.0,
        }
    }

    pub fn metric_inverse(&self, x: &V4) -> Result<M4> {
        let g = self.metric(x)?;
        let mut gi = [[0.0; 4]; 4];
        match self.chart {
            Chart::EddingtonFinkelsteinInward | Chart::EddingtonFinkelsteinOutward => {
                let eps = self.ef_sign();
                gi[0][1] = eps;
                gi[1][0] = eps;
                gi[1][1] = -g[0][0];
                gi[2][2] = 1.0 / g[2][2];
                gi[3][3] = 1.0 / g[3][3];
            }
            _ => {
                for i in 0..4 {
                    gi[i][i] = 1.0 / g[i][i];
                }
            }
        }
        Ok(gi)
    }

    /// `dg[k][i][j] = ∂ₖ g_ij`, coded analytically per chart.
    pub fn metric_derivatives(&self, x: &V4) -> Result<[M4; 4]> {
        self.check_domain(x)?;
        let mut dg = [[[0.0; 4]; 4]; 4];
        let (sn, cs) = x[2].sin_cos();
        let rr = self.r_s;
        match self.chart {
            Chart::Minkowski => {}
            Chart::SchwarzschildSpherical => {
                let r = x[1];
                let f = 1.0 - rr / r;
                let fp = rr / (r * r);
                dg[1][0][0] = fp;
                dg[1][1][1] = fp / (f * f);
                dg[1][2][2] = -2.0 * r;
                dg[1][3][3] = -2.0 * r * sn * sn;
                dg[2][3][3] = -2.0 * r * r * sn * cs;
            }
            Chart::EddingtonFinkelsteinInward | Chart::EddingtonFinkelsteinOutward => {
                let r = x[1];
                dg[1][0][0] = rr / (r * r);
                dg[1][2][2] = -2.0 * r;
                dg[1][3][3] = -2.0 * r * sn * sn;
                dg[2][3][3] = -2.0 * r * r * sn * cs;
            }
            Chart::Kruskal => {
                let (v, u) = (x[0], x[1]);
                let r = self.radius(x)?.unwrap();
                let big_f = kruskal_factor(r, rr);
                let dfdr = -big_f * (1.0 / r + 1.0 / rr);
                // dr/dw = R² e^{−r/R} / r, w = u² − v²
                let drdw = rr * rr * (-r / rr).exp() / r;
                let dr = [-2.0 * v * drdw, 2.0 * u * drdw];
                for k in 0..2 {
                    dg[k][0][0] = dfdr * dr[k];
                    dg[k][1][1] = -dfdr * dr[k];
                    dg[k][2][2] = -2.0 * r * dr[k];
                    dg[k][3][3] = -2.0 * r * sn * sn * dr[k];
                }
                dg[2][3][3] = -2.0 * r * r * sn * cs;
            }
        }
        Ok(dg)
    }

    /// Christoffel symbols. Spherical and Eddington-Finkelstein charts use
    /// frozen closed forms; Kruskal uses the standard formula on analytic
    /// metric derivatives.
    pub fn christoffel(&self, x: &V4) -> Result<Gamma> {
        self.check_domain(x)?;
        let mut gm = [[[0.0; 4]; 4]; 4];
        let rr = self.r_s;
        match self.chart {
            Chart::Minkowski => {}
            Chart::SchwarzschildSpherical => {
                let r = x[1];
                let (sn, cs) = x[2].sin_cos();
                let g_trt = rr / (2.0 * r * (r - rr));
                set_sym(&mut gm, 0, 0, 1, g_trt);
                gm[1][0][0] = rr * (r - rr) / (2.0 * r * r * r);
                gm[1][1][1] = -g_trt;
                gm[1][2][2] = rr - r;
                gm[1][3][3] = (rr - r) * sn * sn;
                set_sym(&mut gm, 2, 1, 2, 1.0 / r);
                gm[2][3][3] = -sn * cs;
                set_sym(&mut gm, 3, 1, 3, 1.0 / r);
                set_sym(&mut gm, 3, 2, 3, cs / sn);
            }
            Chart::EddingtonFinkelsteinInward | Chart::EddingtonFinkelsteinOutward => {
                let eps = self.ef_sign();
                let r = x[1];
                let (sn, cs) = x[2].sin_cos();
                let f = 1.0 - rr / r;
                let fp = rr / (r * r);
                gm[0][0][0] = -eps * fp / 2.0;
                gm[0][2][2] = eps * r;
                gm[0][3][3] = eps * r * sn * sn;
                gm[1][0][0] = f * fp / 2.0;
                set_sym(&mut gm, 1, 0, 1, eps * fp / 2.0);
                gm[1][2][2] = -f * r;
                gm[1][3][3] = -f * r * sn * sn;
                set_sym(&mut gm, 2, 1, 2, 1.0 / r);
                gm[2][3][3] = -sn * cs;
                set_sym(&mut gm, 3, 1, 3, 1.0 / r);
                set_sym(&mut gm, 3, 2, 3, cs / sn);
            }
            Chart::Kruskal => return self.christoffel_from_metric(x),
        }
        Ok(gm)
    }

    /// `Γᵏᵢⱼ = ½ gᵏˡ (∂ᵢ g_lj + ∂ⱼ g_li − ∂ₗ g_ij)` from the analytic derivatives.
    pub fn christoffel_from_metric(&self, x: &V4) -> Result<Gamma> {
        let gi = self.metric_inverse(x)?;
        let dg = self.metric_derivatives(x)?;
        let mut gm = [[[0.0; 4]; 4]; 4];
        for k in 0..4 {
            for i in 0..4 {
                for j in i..4 {
                    let mut acc = 0.0;
                    for l in 0..4 {
                        if gi[k][l] != 0.0 {
                            acc += gi[k][l] * (dg[i][l][j] + dg[j][l][i] - dg[l][i][j]);
                        }
                    }
                    gm[k][i][j] = 0.5 * acc;
                    gm[k][j][i] = 0.5 * acc;
                }
            }
        }
        Ok(gm)
    }

    /// Riemann tensor from Christoffels and their central differences.
    pub fn riemann(&self, x: &V4, h: f64) -> Result<Riemann> {
        let g0 = self.christoffel(x)?;
        let mut dgam = [[[[0.0; 4]; 4]; 4]; 4]; // dgam[m][k][i][j] = ∂_m Γ^k_ij
        for m in 0..4 {
            let mut xp = *x;
            let mut xm = *x;
            xp[m] += h;
            xm[m] -= h;
            let gp = self.christoffel(&xp)?;
            let gn = self.christoffel(&xm)?;
            for k in 0..4 {
                for i in 0..4 {
                    for j in 0..4 {
                        dgam[m][k][i][j] = (gp[k][i][j] - gn[k][i][j]) / (2.0 * h);
                    }
                }
            }
        }
        let mut riem = [[[[0.0; 4]; 4]; 4]; 4];
        for rho in 0..4 {
            for sig in 0..4 {
                for mu in 0..4 {
                    for nu in 0..4 {
                        let mut v = dgam[mu][rho][nu][sig] - dgam[nu][rho][mu][sig];
                        for lam in 0..4 {
                            v += g0[rho][mu][lam] * g0[lam][nu][sig]
                                - g0[rho][nu][lam] * g0[lam][mu][sig];
                        }
                        riem[rho][sig][mu][nu] = v;
                    }
                }
            }
        }
        Ok(riem)
    }

    /// Ricci tensor `R_σν = R^ρ_{σρν}` by central differences of step `h`.
    pub fn ricci(&self, x: &V4, h: f64) -> Result<M4> {
        if self.chart == Chart::Minkowski {
            self.check_domain(x)?;
            return Ok([[0.0; 4]; 4]);
        }
        let riem = self.riemann(x, h)?;
        let mut ric = [[0.0; 4]; 4];
        for s in 0..4 {
            for n in 0..4 {
                ric[s][n] = (0..4).map(|r| riem[r][s][r][n]).sum();
            }
        }
        Ok(ric)
    }

    pub fn norm2(&self, x: &V4, v: &V4) -> Result<f64> {
        let g = self.metric(x)?;
        Ok(bilinear(&g, v, v))
    }
}

fn pole_guard(name: &'static str, phi: f64) -> Result<()> {
    if phi.sin().abs() < POLE_GUARD {
        return Err(outside(name, "too close to a pole (sin φ ≈ 0)"));
    }
    Ok(())
}

fn set_sym(gm: &mut Gamma, k: usize, i: usize, j: usize, v: f64) {
    gm[k][i][j] = v;
    gm[k][j][i] = v;
}

/// `F(r) = (4R³/r) e^{−r/R}`, the conformal factor of the Kruskal metric.
pub fn kruskal_factor(r: f64, r_s: f64) -> f64 {
    4.0 * r_s.powi(3) / r * (-r / r_s).exp()
}

pub fn bilinear(g: &M4, a: &V4, b: &V4) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            s += g[i][j] * a[i] * b[j];
        }
    }
    s
}

pub fn mat_mul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            if aik != 0.0 {
                for j in 0..4 {
                    c[i][j] += aik * b[k][j];
                }
            }
        }
    }
    c
}

pub fn mat_vec(a: &M4, v: &V4) -> V4 {
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = (0..4).map(|j| a[i][j] * v[j]).sum();
    }
    out
}

pub fn transpose(a: &M4) -> M4 {
    let mut t = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            t[i][j] = a[j][i];
        }
    }
    t
}

pub const IDENTITY: M4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

/// `Γ(·, v)` as a matrix: `out[q][l] = Σ_m Γ^q_{l m} v^m`.
pub fn gamma_contract(gm: &Gamma, v: &V4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for q in 0..4 {
        for l in 0..4 {
            out[q][l] = (0..4).map(|m| gm[q][l][m] * v[m]).sum();
        }
    }
    out
}

/// `Γᵏ(a, b) = Σ Γᵏᵢⱼ aⁱ bʲ`.
pub fn gamma_apply(gm: &Gamma, a: &V4, b: &V4) -> V4 {
    let mut out = [0.0; 4];
    for k in 0..4 {
        let mut s = 0.0;
        for i in 0..4 {
            if a[i] == 0.0 {
                continue;
            }
            for j in 0..4 {
                s += gm[k][i][j] * a[i] * b[j];
            }
        }
        out[k] = s;
    }
    out
}

/// A pseudo-orthonormal frame `e₀ … e₃` at a chart point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub x: V4,
    pub e: [V4; 4],
}

impl Frame {
    /// Largest deviation of `ᵗeᵢ g eⱼ` from `diag(1,−1,−1,−1)`.
    pub fn orthonormality_defect(&self, provider: &MetricProvider) -> Result<f64> {
        let g = provider.metric(&self.x)?;
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let target = if i != j {
                    0.0
                } else if i == 0 {
                    1.0
                } else {
                    -1.0
                };
                worst = worst.max((bilinear(&g, &self.e[i], &self.e[j]) - target).abs());
            }
        }
        Ok(worst)
    }

    pub fn is_future_directed(&self) -> bool {
        self.e[0][0] > 0.0
    }

    /// Checks both frame invariants.
    pub fn validate(&self, provider: &MetricProvider, tol: f64) -> Result<()> {
        let defect = self.orthonormality_defect(provider)?;
        if defect > tol {
            return Err(Error::DegenerateFrame(format!("orthonormality defect {defect:e}")));
        }
        if !self.is_future_directed() {
            return Err(Error::DegenerateFrame("e₀ is not future directed".into()));
        }
        Ok(())
    }
}

/// Gram–Schmidt in the pseudo-metric starting from `e₀` (two passes).
pub fn renormalize_frame(frame: &Frame, provider: &MetricProvider) -> Result<Frame> {
    let g = provider.metric(&frame.x)?;
    let mut e = frame.e;
    for _pass in 0..2 {
        let n0 = bilinear(&g, &e[0], &e[0]);
        if !(n0 > 0.0) {
            return Err(Error::DegenerateFrame(format!("⟨e₀,e₀⟩ = {n0:e} is not positive")));
        }
        let s0 = n0.sqrt();
        for c in e[0].iter_mut() {
            *c /= s0;
        }
        for j in 1..4 {
            for i in 0..j {
                let sign = if i == 0 { 1.0 } else { -1.0 };
                let p = bilinear(&g, &e[j], &e[i]) * sign;
                let ei = e[i];
                for (c, b) in e[j].iter_mut().zip(ei.iter()) {
                    *c -= p * b;
                }
            }
            let nj = -bilinear(&g, &e[j], &e[j]);
            if !(nj > 0.0) {
                return Err(Error::DegenerateFrame(format!("e{j} is not spacelike after projection")));
            }
            let sj = nj.sqrt();
            for c in e[j].iter_mut() {
                *c /= sj;
            }
        }
    }
    Ok(Frame { x: frame.x, e })
}

/// A pseudo-orthonormal frame built from the coordinate basis at `x`, with
/// `e₀` along `v` (which must be timelike and future directed).
pub fn frame_from_velocity(provider: &MetricProvider, x: &V4, v: &V4) -> Result<Frame> {
    provider.check_domain(x)?;
    let mut e = [*v, [0.0; 4], [0.0; 4], [0.0; 4]];
    // seed spatial legs with the coordinate directions that are least aligned with v
    let mut seeds: Vec<usize> = (0..4).collect();
    seeds.sort_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap());
    for (j, &k) in seeds.iter().take(3).enumerate() {
        e[j + 1][k] = 1.0;
    }
    renormalize_frame(&Frame { x: *x, e }, provider)
}

/// One explicit-midpoint step of `d/ds ξ⃖ⁱ_ℓ = ξ⃖ⁱ_q Γ^q_{ℓm} ẋᵐ` with the
/// velocity frozen over the step.
pub fn transport_inverse_step(
    provider: &MetricProvider,
    m: &M4,
    x: &V4,
    v: &V4,
    h: f64,
) -> Result<M4> {
    if h == 0.0 {
        return Ok(*m);
    }
    let g1 = gamma_contract(&provider.christoffel(x)?, v);
    let k1 = mat_mul(m, &g1);
    let mut half = *m;
    for i in 0..4 {
        for j in 0..4 {
            half[i][j] += 0.5 * h * k1[i][j];
        }
    }
    let mut xm = *x;
    for i in 0..4 {
        xm[i] += 0.5 * h * v[i];
    }
    let g2 = gamma_contract(&provider.christoffel(&xm)?, v);
    let k2 = mat_mul(&half, &g2);
    let mut out = *m;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] += h * k2[i][j];
        }
    }
    Ok(out)
}

/// Pulls `m` back onto the isometries `ᵗm g₀ m = g_s` with two Newton sweeps
/// `m ← m (3I − g_s⁻¹ ᵗm g₀ m)/2`.
pub fn restore_isometry(m: &M4, g0: &M4, gs_inv: &M4) -> M4 {
    let mut out = *m;
    for _ in 0..2 {
        let c = mat_mul(gs_inv, &mat_mul(&transpose(&out), &mat_mul(g0, &out)));
        let mut corr = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                corr[i][j] = 0.5 * (if i == j { 3.0 } else { 0.0 } - c[i][j]);
            }
        }
        out = mat_mul(&out, &corr);
    }
    out
}

/// Point and velocity from the spherical chart to an Eddington-Finkelstein
/// chart (`inward` selects `u⁻ = t + r*`, otherwise `u⁺ = t − r*`).
pub fn spherical_to_ef(x: &V4, v: &V4, r_s: f64, inward: bool) -> (V4, V4) {
    let r = x[1];
    let f = 1.0 - r_s / r;
    let sgn = if inward { 1.0 } else { -1.0 };
    let y = [x[0] + sgn * tortoise(r, r_s), r, x[2], x[3]];
    let w = [v[0] + sgn * v[1] / f, v[1], v[2], v[3]];
    (y, w)
}

/// Eddington-Finkelstein chart to Kruskal `(v, u, φ, ψ)`, on the sheet where
/// the chart is regular: `u + v > 0` for the inward chart, `u − v > 0` for the
/// outward chart.
pub fn ef_to_kruskal(x: &V4, vel: &V4, r_s: f64, inward: bool) -> (V4, V4) {
    let r = x[1];
    let w = (r / r_s - 1.0) * (r / r_s).exp();
    let dw = r / (r_s * r_s) * (r / r_s).exp() * vel[1];
    if inward {
        // u + v = A = e^{u⁻/2R}, u − v = w / A
        let a = (x[0] / (2.0 * r_s)).exp();
        let da = a * vel[0] / (2.0 * r_s);
        let p = a;
        let q = w / a;
        let dp = da;
        let dq = dw / a - w * da / (a * a);
        let (u, v) = (0.5 * (p + q), 0.5 * (p - q));
        let (du, dv) = (0.5 * (dp + dq), 0.5 * (dp - dq));
        ([v, u, x[2], x[3]], [dv, du, vel[2], vel[3]])
    } else {
        // u − v = B = e^{−u⁺/2R}, u + v = w / B
        let b = (-x[0] / (2.0 * r_s)).exp();
        let db = -b * vel[0] / (2.0 * r_s);
        let q = b;
        let p = w / b;
        let dq = db;
        let dp = dw / b - w * db / (b * b);
        let (u, v) = (0.5 * (p + q), 0.5 * (p - q));
        let (du, dv) = (0.5 * (dp + dq), 0.5 * (dp - dq));
        ([v, u, x[2], x[3]], [dv, du, vel[2], vel[3]])
    }
}

pub fn spherical_to_kruskal(x: &V4, v: &V4, r_s: f64) -> (V4, V4) {
    let (y, w) = spherical_to_ef(x, v, r_s, true);
    ef_to_kruskal(&y, &w, r_s, true)
}

/// Inward EF to outward EF, valid off the horizon: `u⁺ = u⁻ − 2 r*`.
pub fn ef_inward_to_outward(x: &V4, v: &V4, r_s: f64) -> (V4, V4) {
    let r = x[1];
    let f = 1.0 - r_s / r;
    ([x[0] - 2.0 * tortoise(r, r_s), r, x[2], x[3]], [v[0] - 2.0 * v[1] / f, v[1], v[2], v[3]])
}
