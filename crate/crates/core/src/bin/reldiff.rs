use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use reldiff::geodesics::{
    classify_null, classify_timelike, critical_impact, deflection_integral, deflection_integral_elliptic,
    TimelikeOrbit,
};
use reldiff::harness::acceptance::{Acceptance, CRITERIA};
use reldiff::harness::config::{EnsembleConfig, Space};
use reldiff::harness::export::{
    to_json, write_minkowski_csv, write_path_csv, EventLog,
};
use reldiff::harness::{minkowski_initial, run_ensemble, run_minkowski, run_trajectory};
use reldiff::minkowski::simulate;
use reldiff::rng::NoiseStream;

#[derive(Parser)]
#[command(name = "reldiff", version, about = "Relativistic diffusion in Minkowski and Schwarzschild spacetimes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Clone, Debug, Default)]
struct RunOpts {
    /// Config file (JSON object or `key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, value_enum)]
    space: Option<SpaceArg>,
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    #[arg(long = "R", allow_negative_numbers = true)]
    r_s: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    r0: Option<f64>,
    /// Initial radial velocity.
    #[arg(long, allow_negative_numbers = true)]
    t0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    b0: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    h0: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    rapidity: Option<f64>,
    #[arg(long)]
    max_crossings: Option<usize>,
    #[arg(long)]
    record_every: Option<usize>,
    /// Output file; `-` writes to stdout. Defaults to a file in the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SpaceArg {
    Minkowski,
    Schwarzschild,
}

impl RunOpts {
    fn config(&self) -> Result<EnsembleConfig> {
        let mut cfg = match &self.config {
            Some(p) => EnsembleConfig::from_file(p)?,
            None => EnsembleConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {kv}"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.space {
            cfg.space = match s {
                SpaceArg::Minkowski => Space::Minkowski,
                SpaceArg::Schwarzschild => Space::Schwarzschild,
            };
        }
        macro_rules! over {
            ($($f:ident => $g:ident),*) => {
                $(if let Some(x) = self.$f { cfg.$g = x; })*
            };
        }
        over!(sigma => sigma, r_s => r_s, r0 => r0, t0 => t0, b0 => b0, n => n, horizon => horizon,
              h0 => h0, seed => seed, d => d, rapidity => rapidity, record_every => record_every);
        if let Some(m) = self.max_crossings {
            cfg.max_crossings = Some(m);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write its path.
    Simulate {
        #[command(flatten)]
        opts: RunOpts,
        /// Trajectory index (selects the noise stream).
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Also write the event log as JSON next to the path.
        #[arg(long)]
        events: bool,
    },
    /// Run an ensemble and write its summary.
    Ensemble {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Timelike geodesics.
    Geodesic {
        #[command(subcommand)]
        cmd: GeodesicCmd,
    },
    /// Null geodesics.
    Null {
        #[command(subcommand)]
        cmd: NullCmd,
    },
    /// Flat-space ensemble of asymptotic directions.
    Scatter {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run the acceptance checks.
    Acceptance {
        #[arg(long, default_value_t = 20240607)]
        seed: u64,
        /// Criterion ids to run (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

#[derive(Subcommand)]
enum GeodesicCmd {
    Classify {
        #[arg(long, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, allow_negative_numbers = true)]
        b: f64,
        #[arg(long, allow_negative_numbers = true)]
        r0: f64,
        #[arg(long = "R", allow_negative_numbers = true, default_value_t = 1.0)]
        r_s: f64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    Integrate {
        #[arg(long, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, allow_negative_numbers = true)]
        b: f64,
        #[arg(long, allow_negative_numbers = true)]
        r0: f64,
        #[arg(long = "R", allow_negative_numbers = true, default_value_t = 1.0)]
        r_s: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 10.0)]
        s_max: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Start moving inwards.
        #[arg(long)]
        inward: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum NullCmd {
    Classify {
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long = "R", allow_negative_numbers = true, default_value_t = 1.0)]
        r_s: f64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// `Ψ(ϱ)` at one radius, or a CSV sweep with `--to` and `--step`.
    Deflection {
        #[arg(long, allow_negative_numbers = true)]
        rho: f64,
        #[arg(long = "R", allow_negative_numbers = true, default_value_t = 1.0)]
        r_s: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.01)]
        step: f64,
    },
}

fn sink(out: &Option<PathBuf>, cfg: Option<&EnsembleConfig>, default_name: &str) -> Result<(Box<dyn Write>, Option<PathBuf>)> {
    let target = match out {
        Some(p) if p == Path::new("-") => None,
        Some(p) => Some(p.clone()),
        None => match cfg {
            Some(c) => Some(c.resolved_output_dir().join(default_name)),
            None => None,
        },
    };
    match target {
        None => Ok((Box::new(std::io::stdout().lock()), None)),
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let f = std::fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
            Ok((Box::new(std::io::BufWriter::new(f)), Some(p)))
        }
    }
}

fn emit_json<T: Serialize>(w: &mut dyn Write, v: &T) -> Result<()> {
    w.write_all(to_json(v)?.as_bytes())?;
    Ok(())
}

fn emit_csv<T: Serialize>(w: &mut dyn Write, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

fn done(path: Option<PathBuf>) {
    if let Some(p) = path {
        eprintln!("wrote {}", p.display());
    }
}

#[derive(Serialize)]
struct RecordRow {
    index: usize,
    fate: String,
    termination: String,
    final_s: f64,
    captured: bool,
    crossings: usize,
    rho_hat: Option<f64>,
    ell_hat: Option<f64>,
    max_residual: f64,
}

#[derive(Serialize)]
struct DeflectionRow {
    rho: f64,
    psi: f64,
    psi_closed_form: f64,
}

/// Sampling stride of `simulate` when the config keeps events only.
const SIMULATE_RECORD_EVERY: usize = 10;

fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        // a closed reader (`| head`) is not an error
        Err(e) if e.chain().any(closed_output) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn closed_output(e: &(dyn std::error::Error + 'static)) -> bool {
    matches!(e.downcast_ref::<reldiff::Error>(), Some(reldiff::Error::ClosedOutput))
        || e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { opts, index, events } => {
            let mut cfg = opts.config()?;
            if cfg.record_every == 0 {
                cfg.record_every = SIMULATE_RECORD_EVERY;
            }
            match cfg.space {
                Space::Schwarzschild => {
                    let path = run_trajectory(&cfg, index)?;
                    let (mut w, p) = sink(&opts.out, Some(&cfg), &format!("path_{index}.csv"))?;
                    write_path_csv(&path.samples, &mut w)?;
                    drop(w);
                    if events {
                        let name = match &p {
                            Some(p) => p.with_extension("events.json"),
                            None => cfg.resolved_output_dir().join(format!("events_{index}.json")),
                        };
                        std::fs::write(&name, to_json(&EventLog::new(index, path.events.clone()))?)?;
                        eprintln!("wrote {}", name.display());
                    }
                    done(p);
                }
                Space::Minkowski => {
                    let init = minkowski_initial(&cfg)?;
                    let mut noise = NoiseStream::new(cfg.seed, index as u64);
                    let path = simulate(
                        &init,
                        cfg.sigma,
                        cfg.h0,
                        cfg.p0_threshold,
                        cfg.horizon,
                        cfg.record_every.max(1),
                        &mut noise,
                    )?;
                    let (mut w, p) = sink(&opts.out, Some(&cfg), &format!("minkowski_{index}.csv"))?;
                    write_minkowski_csv(&path, cfg.d, &mut w)?;
                    drop(w);
                    done(p);
                }
            }
        }
        Command::Ensemble { opts, format } => {
            let cfg = opts.config()?;
            if cfg.space != Space::Schwarzschild {
                bail!("ensemble runs the Schwarzschild diffusion; use `scatter` for flat space");
            }
            let summary = run_ensemble(&cfg)?;
            let ext = if format == Format::Json { "json" } else { "csv" };
            let (mut w, p) = sink(&opts.out, Some(&cfg), &format!("ensemble.{ext}"))?;
            match format {
                Format::Json => emit_json(&mut w, &summary)?,
                Format::Csv => {
                    let rows: Vec<RecordRow> = summary
                        .records
                        .iter()
                        .map(|r| RecordRow {
                            index: r.index,
                            fate: format!("{:?}", r.fate.tag).to_lowercase(),
                            termination: serde_json::to_value(r.fate.termination)
                                .ok()
                                .and_then(|v| v.as_str().map(str::to_string))
                                .unwrap_or_default(),
                            final_s: r.fate.final_s,
                            captured: r.fate.captured,
                            crossings: r.fate.crossings,
                            rho_hat: r.fate.rho_hat,
                            ell_hat: r.fate.ell_hat,
                            max_residual: r.max_residual,
                        })
                        .collect();
                    emit_csv(&mut w, &rows)?;
                }
            }
            drop(w);
            done(p);
            eprintln!(
                "escape {:.3} confined {:.3} undecided {:.3} captured {:.3} ({} failures)",
                summary.escape.estimate,
                summary.confined.estimate,
                summary.undecided.estimate,
                summary.captured.estimate,
                summary.failures.len()
            );
        }
        Command::Geodesic { cmd } => match cmd {
            GeodesicCmd::Classify { a, b, r0, r_s, format } => {
                let c = classify_timelike(a, b, r0, r_s)?;
                let mut out = std::io::stdout().lock();
                match format {
                    Format::Json => emit_json(&mut out, &c)?,
                    Format::Csv => {
                        #[derive(Serialize)]
                        struct Row {
                            case: &'static str,
                            motion: String,
                            big_r0: Option<f64>,
                            big_r1: Option<f64>,
                            big_r2: Option<f64>,
                            multiple_root: Option<f64>,
                        }
                        let motion = serde_json::to_value(c.motion)?
                            .get("kind")
                            .and_then(|v| v.as_str())
                            .unwrap_or("")
                            .to_string();
                        emit_csv(
                            &mut out,
                            &[Row {
                                case: c.case.tag(),
                                motion,
                                big_r0: c.big_r0,
                                big_r1: c.big_r1,
                                big_r2: c.big_r2,
                                multiple_root: c.multiple_root,
                            }],
                        )?;
                    }
                }
            }
            GeodesicCmd::Integrate {
                a,
                b,
                r0,
                r_s,
                s_max,
                samples,
                inward,
                out,
            } => {
                let orbit = TimelikeOrbit::new(a, b, r0, r_s, !inward)?;
                let pts = orbit.path(s_max, samples)?;
                let out = out.or_else(|| Some(PathBuf::from("-")));
                let (mut w, p) = sink(&out, None, "")?;
                emit_csv(&mut w, &pts)?;
                drop(w);
                done(p);
            }
        },
        Command::Null { cmd } => match cmd {
            NullCmd::Classify { alpha, r_s, format } => {
                let c = classify_null(alpha, r_s)?;
                let mut out = std::io::stdout().lock();
                match format {
                    Format::Json => emit_json(&mut out, &c)?,
                    Format::Csv => {
                        #[derive(Serialize)]
                        struct Row {
                            case: &'static str,
                            alpha: f64,
                            critical_alpha: f64,
                            rho: Option<f64>,
                            rho_prime: Option<f64>,
                        }
                        emit_csv(
                            &mut out,
                            &[Row {
                                case: c.case.tag(),
                                alpha: c.alpha,
                                critical_alpha: critical_impact(r_s),
                                rho: c.rho,
                                rho_prime: c.rho_prime,
                            }],
                        )?;
                    }
                }
            }
            NullCmd::Deflection { rho, r_s, to, step } => {
                let end = to.unwrap_or(rho);
                if !(step > 0.0) {
                    bail!("--step must be positive");
                }
                let mut rows = Vec::new();
                let mut k = 0;
                loop {
                    let x = rho + step * k as f64;
                    if x > end * (1.0 + 1e-12) {
                        break;
                    }
                    rows.push(DeflectionRow {
                        rho: x,
                        psi: deflection_integral(x, r_s)?,
                        psi_closed_form: deflection_integral_elliptic(x, r_s)?,
                    });
                    k += 1;
                }
                emit_csv(&mut std::io::stdout().lock(), &rows)?;
            }
        },
        Command::Scatter { mut opts, format } => {
            if opts.space.is_none() {
                opts.space = Some(SpaceArg::Minkowski);
            }
            let cfg = opts.config()?;
            let s = run_minkowski(&cfg)?;
            let ext = if format == Format::Json { "json" } else { "csv" };
            let (mut w, p) = sink(&opts.out, Some(&cfg), &format!("scatter.{ext}"))?;
            match format {
                Format::Json => emit_json(&mut w, &s)?,
                Format::Csv => {
                    let mut out = csv::Writer::from_writer(&mut w);
                    let mut header: Vec<String> = (0..cfg.d).map(|i| format!("theta_{i}")).collect();
                    if cfg.d == 2 {
                        header.push("angle".into());
                    }
                    out.write_record(&header)?;
                    for (i, dir) in s.directions.iter().enumerate() {
                        let mut rec: Vec<String> = dir.iter().map(|x| x.to_string()).collect();
                        if let Some(a) = s.angles.get(i) {
                            rec.push(a.to_string());
                        }
                        out.write_record(&rec)?;
                    }
                    out.flush()?;
                }
            }
            drop(w);
            done(p);
            if let Some(ks) = s.ks {
                eprintln!("KS D = {:.4}, p = {:.3} over {} directions", ks.statistic, ks.p_value, ks.n);
            }
        }
        Command::Acceptance { seed, only, format } => {
            let acc = Acceptance::new(seed);
            let ids: Vec<u8> = if only.is_empty() {
                CRITERIA.iter().map(|c| c.0).collect()
            } else {
                only
            };
            let mut reports = Vec::new();
            for id in ids {
                let r = acc.run(id);
                if format.is_none() {
                    println!("{}", r.line());
                }
                reports.push(r);
            }
            let mut out = std::io::stdout().lock();
            match format {
                Some(Format::Json) => emit_json(&mut out, &reports)?,
                Some(Format::Csv) => emit_csv(&mut out, &reports)?,
                None => {}
            }
            let unexpected = reports.iter().filter(|r| !r.passed && !r.known_deviation).count();
            if unexpected > 0 {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
