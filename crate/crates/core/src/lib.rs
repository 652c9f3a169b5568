//! Relativistic diffusion in Minkowski and Schwarzschild spacetimes.
//!
//! The crate simulates the geodesic flow perturbed by a vertical Brownian
//! noise on the unit tangent bundle, in flat space and around a
//! Schwarzschild hole, continues trajectories through the central
//! singularity in Kruskal coordinates, and classifies the asymptotic fate of
//! large ensembles. Exact geodesics serve as the `σ = 0` reference.
//!
//! Module map:
//!
//! - [`geometry`]: metrics, Christoffel symbols, frames, transport.
//! - [`minkowski`]: flat diffusion, asymptotic direction, scattering law.
//! - [`frame_flow`]: the frame-bundle SDE in local coordinates.
//! - [`schwarzschild`]: the reduced `(r, a, b, T)` diffusion and its angular part.
//! - [`kruskal`]: horizon crossing, singularity hits, regeneration, excursions.
//! - [`geodesics`]: timelike and null classification, quadrature, deflection.
//! - [`harness`]: ensembles, fates, statistics, export and acceptance checks.

pub mod error;
pub mod frame_flow;
pub mod geodesics;
pub mod geometry;
pub mod harness;
pub mod kruskal;
pub mod minkowski;
mod quad;
pub mod rng;
pub mod schwarzschild;

pub use error::{Error, Result};
