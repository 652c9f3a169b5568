//! Ensemble configuration: JSON or `key = value` text, overridable field by field.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::kruskal::{ExtendPolicy, StopRule};
use crate::schwarzschild::{ReducedConfig, ReducedState};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "RELDIFF_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Minkowski,
    Schwarzschild,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub space: Space,
    pub sigma: f64,
    /// Schwarzschild radius `R`.
    pub r_s: f64,
    /// Starting radius (exterior, `r0 > R`).
    pub r0: f64,
    /// Starting radial velocity `T`.
    pub t0: f64,
    /// Starting angular momentum.
    pub b0: f64,
    /// Sign of the energy at the start.
    pub a_sign: f64,
    /// Minkowski: spatial dimension and initial rapidity.
    pub d: usize,
    pub rapidity: f64,
    /// Minkowski: `p⁰` at which the direction is read off.
    pub p0_threshold: f64,
    pub n: usize,
    pub horizon: f64,
    pub h0: f64,
    pub h_min: f64,
    /// Escape radius in units of `R`.
    pub m_escape: f64,
    /// Singularity cut-off radius in units of `R`.
    pub r_stop: f64,
    /// Angular momentum floor, relative to `R`.
    pub eps_b: f64,
    /// Turning-point threshold for the constraint projection.
    pub eps_t: f64,
    pub seed: u64,
    pub max_crossings: Option<usize>,
    pub stop: StopRule,
    pub n_min: usize,
    pub tail_fraction: f64,
    /// Relative slack on the confinement band `[R, 3R/2]`.
    pub band_tol: f64,
    /// Escape: largest residual swing `b / (r |T|)` still counted as settled.
    pub swing_tol: f64,
    pub record_every: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            space: Space::Schwarzschild,
            sigma: 1.0,
            r_s: 1.0,
            r0: 3.0,
            t0: 0.0,
            b0: 1.0,
            a_sign: 1.0,
            d: 3,
            rapidity: 1.0,
            p0_threshold: 1e3,
            n: 100,
            horizon: 100.0,
            h0: 1e-2,
            h_min: 1e-12,
            m_escape: 50.0,
            r_stop: 1e-6,
            eps_b: 1e-8,
            eps_t: 1e-6,
            seed: 1,
            max_crossings: None,
            stop: StopRule::Never,
            n_min: 5,
            tail_fraction: 0.5,
            band_tol: 0.02,
            swing_tol: 0.05,
            record_every: 0,
            output_dir: None,
        }
    }
}

fn scalar(raw: &str) -> Value {
    let t = raw.trim();
    if t.eq_ignore_ascii_case("none") || t.eq_ignore_ascii_case("null") || t.is_empty() {
        return Value::Null;
    }
    if let Ok(b) = t.parse::<bool>() {
        return Value::Bool(b);
    }
    if let Ok(i) = t.parse::<u64>() {
        return Value::from(i);
    }
    if let Ok(i) = t.parse::<i64>() {
        return Value::from(i);
    }
    if let Ok(x) = t.parse::<f64>() {
        if let Some(n) = serde_json::Number::from_f64(x) {
            return Value::Number(n);
        }
    }
    let unquoted = t.trim_matches('"');
    Value::String(unquoted.to_string())
}

/// Parse `key = value` lines (`#` starts a comment) into a JSON object.
pub fn parse_key_values(text: &str) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("line {}: expected key = value", no + 1)))?;
        map.insert(k.trim().replace('-', "_"), scalar(v));
    }
    Ok(map)
}

impl EnsembleConfig {
    /// Parse either a JSON object or `key = value` text.
    pub fn parse(text: &str) -> Result<Self> {
        let map = if text.trim_start().starts_with('{') {
            match serde_json::from_str::<Value>(text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(Error::InvalidParameter("config JSON must be an object".into())),
                Err(e) => return Err(Error::InvalidParameter(format!("config JSON: {e}"))),
            }
        } else {
            parse_key_values(text)?
        };
        let mut cfg = EnsembleConfig::default();
        cfg.apply(map)?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Overlay the given fields on `self`; unknown keys are rejected.
    pub fn apply(&mut self, overrides: Map<String, Value>) -> Result<()> {
        let mut base = match serde_json::to_value(&*self) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("config serializes to an object"),
        };
        for (k, v) in overrides {
            base.insert(k, v);
        }
        *self = serde_json::from_value(Value::Object(base))
            .map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        Ok(())
    }

    /// Apply a single `key=value` override, as given on the command line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut m = Map::new();
        m.insert(key.replace('-', "_"), scalar(value));
        self.apply(m)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r_s", self.r_s),
            ("horizon", self.horizon),
            ("h0", self.h0),
            ("h_min", self.h_min),
            ("m_escape", self.m_escape),
            ("r_stop", self.r_stop),
            ("eps_b", self.eps_b),
            ("eps_t", self.eps_t),
            ("p0_threshold", self.p0_threshold),
            ("tail_fraction", self.tail_fraction),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        if self.tail_fraction > 1.0 {
            return Err(Error::InvalidParameter("tail_fraction must lie in (0, 1]".into()));
        }
        if self.h_min > self.h0 {
            return Err(Error::InvalidParameter("h_min exceeds h0".into()));
        }
        match self.space {
            Space::Schwarzschild => {
                if !(self.r0 > self.r_s) {
                    return Err(Error::InvalidParameter(format!(
                        "runs start outside the hole: r0 = {} ≤ R = {}",
                        self.r0, self.r_s
                    )));
                }
                if !(self.b0 >= self.eps_b * self.r_s) {
                    return Err(Error::InvalidParameter(format!("b0 = {} below the floor", self.b0)));
                }
                if self.a_sign.abs() != 1.0 {
                    return Err(Error::InvalidParameter("a_sign must be ±1".into()));
                }
            }
            Space::Minkowski => {
                if self.d < 2 {
                    return Err(Error::InvalidParameter("d must be at least 2".into()));
                }
                if !(self.rapidity >= 0.0) {
                    return Err(Error::InvalidParameter("rapidity must be non-negative".into()));
                }
            }
        }
        Ok(())
    }

    /// Output directory: the config value, else the environment, else `.`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn reduced_config(&self) -> ReducedConfig {
        let mut c = ReducedConfig::new(self.r_s, self.sigma);
        c.eps_t = self.eps_t;
        c.b_floor = self.eps_b * self.r_s;
        c
    }

    pub fn policy(&self) -> ExtendPolicy {
        let mut p = ExtendPolicy::new(self.r_s, self.horizon);
        p.h0 = self.h0;
        p.h_min = self.h_min;
        p.m_escape = self.m_escape * self.r_s;
        p.r_stop = self.r_stop * self.r_s;
        p.max_crossings = self.max_crossings;
        p.stop = self.stop;
        p.record_every = self.record_every;
        p
    }

    /// Exterior initial state with `θ = e₁`, `n = e₂`.
    pub fn initial_state(&self) -> Result<ReducedState> {
        ReducedState::from_constraint(
            self.r0,
            self.t0,
            self.b0,
            self.a_sign,
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            self.r_s,
        )
    }
}
