//! CSV for paths, JSON for summaries and event logs.
//!
//! Floats are written in Rust's shortest round-trip form, so re-importing a
//! file gives back the exact values and equal inputs give equal bytes.

use std::io::{Read, Write};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kruskal::{Event, EventKind, PathSample, SampleChart};
use crate::minkowski::MinkowskiState;

use super::SCHEMA_VERSION;

/// JSON schema of [`super::EnsembleSummary`] files.
pub const SUMMARY_SCHEMA: &str = include_str!("../../schemas/summary.schema.json");

/// `u_mirror, v_mirror = −u, −v` is the other orientation of the Kruskal
/// point after a pass through the singularity; it is written out and ignored
/// on reading.
pub const PATH_COLUMNS: [&str; 19] = [
    "s", "r", "a", "b", "T", "theta_x", "theta_y", "theta_z", "n_x", "n_y", "n_z", "chart", "event", "u", "v",
    "u_mirror", "v_mirror", "u_minus", "u_plus",
];

fn io<E: std::error::Error + 'static>(e: E) -> Error {
    let mut cur: Option<&(dyn std::error::Error + 'static)> = Some(&e);
    while let Some(c) = cur {
        let inner = match c.downcast_ref::<csv::Error>().map(|x| x.kind()) {
            Some(csv::ErrorKind::Io(x)) => Some(x),
            _ => c.downcast_ref::<std::io::Error>(),
        };
        if inner.is_some_and(|x| x.kind() == std::io::ErrorKind::BrokenPipe) {
            return Error::ClosedOutput;
        }
        cur = c.source();
    }
    Error::Io(e.to_string())
}

#[derive(Serialize, Deserialize)]
struct PathRow {
    s: f64,
    r: f64,
    a: f64,
    b: f64,
    #[serde(rename = "T")]
    t: f64,
    theta_x: f64,
    theta_y: f64,
    theta_z: f64,
    n_x: f64,
    n_y: f64,
    n_z: f64,
    chart: SampleChart,
    event: Option<EventKind>,
    u: Option<f64>,
    v: Option<f64>,
    u_mirror: Option<f64>,
    v_mirror: Option<f64>,
    u_minus: Option<f64>,
    u_plus: Option<f64>,
}

impl From<&PathSample> for PathRow {
    fn from(p: &PathSample) -> Self {
        PathRow {
            s: p.s,
            r: p.r,
            a: p.a,
            b: p.b,
            t: p.t,
            theta_x: p.theta[0],
            theta_y: p.theta[1],
            theta_z: p.theta[2],
            n_x: p.n[0],
            n_y: p.n[1],
            n_z: p.n[2],
            chart: p.chart,
            event: p.event,
            u: p.u,
            v: p.v,
            u_mirror: p.u.map(|x| -x),
            v_mirror: p.v.map(|x| -x),
            u_minus: p.u_minus,
            u_plus: p.u_plus,
        }
    }
}

impl From<PathRow> for PathSample {
    fn from(p: PathRow) -> Self {
        PathSample {
            s: p.s,
            r: p.r,
            a: p.a,
            b: p.b,
            t: p.t,
            theta: [p.theta_x, p.theta_y, p.theta_z],
            n: [p.n_x, p.n_y, p.n_z],
            chart: p.chart,
            event: p.event,
            u: p.u,
            v: p.v,
            u_minus: p.u_minus,
            u_plus: p.u_plus,
        }
    }
}

/// Path samples as CSV; an empty path gives the header alone.
pub fn write_path_csv<W: Write>(samples: &[PathSample], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(PATH_COLUMNS).map_err(io)?;
    for p in samples {
        out.serialize(PathRow::from(p)).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_path_csv<R: Read>(r: R) -> Result<Vec<PathSample>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(io)?.clone();
    if header.iter().ne(PATH_COLUMNS.iter().copied()) {
        return Err(Error::Io(format!("unexpected path columns: {header:?}")));
    }
    rd.deserialize::<PathRow>()
        .map(|row| row.map(PathSample::from).map_err(io))
        .collect()
}

/// Flat-space path: `s, xi0.., p0..`.
pub fn write_minkowski_csv<W: Write>(path: &[MinkowskiState], d: usize, w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let mut header = vec!["s".to_string()];
    header.extend((0..=d).map(|i| format!("xi{i}")));
    header.extend((0..=d).map(|i| format!("p{i}")));
    out.write_record(&header).map_err(io)?;
    for st in path {
        if st.d() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: st.d(),
            });
        }
        let mut rec = vec![st.s.to_string()];
        rec.extend(st.xi.iter().map(|x| x.to_string()));
        rec.extend(st.p.iter().map(|x| x.to_string()));
        out.write_record(&rec).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_minkowski_csv<R: Read>(r: R) -> Result<Vec<MinkowskiState>> {
    let mut rd = csv::Reader::from_reader(r);
    let width = rd.headers().map_err(io)?.len();
    if width < 5 || (width - 1) % 2 != 0 {
        return Err(Error::Io(format!("bad column count {width}")));
    }
    let half = (width - 1) / 2;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(io)?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|x| x.parse::<f64>().map_err(io))
            .collect::<Result<_>>()?;
        out.push(MinkowskiState {
            s: vals[0],
            xi: vals[1..1 + half].to_vec(),
            p: vals[1 + half..].to_vec(),
        });
    }
    Ok(out)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(io)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(io)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub schema_version: String,
    pub trajectory: usize,
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn new(trajectory: usize, events: Vec<Event>) -> Self {
        EventLog {
            schema_version: SCHEMA_VERSION.into(),
            trajectory,
            events,
        }
    }
}

/// Write `contents` to `dir/name`, creating the directory.
pub fn write_file(dir: &std::path::Path, name: &str, contents: &[u8]) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(io)?;
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(io)?;
    Ok(p)
}
