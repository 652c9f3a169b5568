use std::path::PathBuf;

use approx::assert_relative_eq;
use proptest::prelude::*;
use reldiff::harness::config::{parse_key_values, OUTPUT_DIR_ENV};
use reldiff::harness::export::*;
use reldiff::harness::stats::*;
use reldiff::harness::*;
use reldiff::kruskal::StopRule;
use reldiff::minkowski::MinkowskiState;

#[test]
fn config_from_key_values_and_json() {
    let text = "# comment\nsigma = 0.5\nr0 = 2.5   # trailing\nmax-crossings = 7\nstop = first-excursion\nspace = schwarzschild\n";
    let cfg = EnsembleConfig::parse(text).unwrap();
    assert_eq!(cfg.sigma, 0.5);
    assert_eq!(cfg.r0, 2.5);
    assert_eq!(cfg.max_crossings, Some(7));
    assert_eq!(cfg.stop, StopRule::FirstExcursion);
    assert_eq!(cfg.n, EnsembleConfig::default().n);
    let json = r#"{"space": "minkowski", "d": 2, "n": 10, "output_dir": "/tmp/x"}"#;
    let cfg = EnsembleConfig::parse(json).unwrap();
    assert_eq!(cfg.space, Space::Minkowski);
    assert_eq!(cfg.d, 2);
    assert_eq!(cfg.output_dir, Some(PathBuf::from("/tmp/x")));
    assert_eq!(cfg.resolved_output_dir(), PathBuf::from("/tmp/x"));
}

#[test]
fn config_rejects_bad_input() {
    assert!(EnsembleConfig::parse("bogus = 1").is_err());
    assert!(EnsembleConfig::parse("sigma").is_err());
    assert!(EnsembleConfig::parse("[1, 2]").is_err());
    assert!(EnsembleConfig::parse("n = many").is_err());
    let m = parse_key_values("a = none\nb = true\nc = -3\nd = 1e-3\ne = \"word\"").unwrap();
    assert!(m["a"].is_null());
    assert_eq!(m["b"], true);
    assert_eq!(m["c"], -3);
    assert_eq!(m["d"], 1e-3);
    assert_eq!(m["e"], "word");
}

#[test]
fn overrides_replace_file_values() {
    let mut cfg = EnsembleConfig::parse("sigma = 0.5\nseed = 4").unwrap();
    cfg.set("sigma", "2").unwrap();
    cfg.set("max-crossings", "none").unwrap();
    assert_eq!(cfg.sigma, 2.0);
    assert_eq!(cfg.seed, 4);
    assert_eq!(cfg.max_crossings, None);
    assert!(cfg.set("nonsense", "1").is_err());
}

#[test]
fn validation() {
    let ok = EnsembleConfig::default();
    ok.validate().unwrap();
    let cases: Vec<Box<dyn Fn(&mut EnsembleConfig)>> = vec![
        Box::new(|c| c.r0 = 0.5),
        Box::new(|c| c.sigma = -1.0),
        Box::new(|c| c.n = 0),
        Box::new(|c| c.h0 = 0.0),
        Box::new(|c| c.h_min = 1.0),
        Box::new(|c| c.tail_fraction = 1.5),
        Box::new(|c| c.a_sign = 0.3),
        Box::new(|c| c.b0 = 0.0),
        Box::new(|c| {
            c.space = Space::Minkowski;
            c.d = 1
        }),
    ];
    for f in cases {
        let mut c = ok.clone();
        f(&mut c);
        assert!(c.validate().is_err(), "{c:?}");
    }
}

#[test]
fn units_are_relative_to_the_radius() {
    let cfg = EnsembleConfig::parse("r_s = 2\nr0 = 6\nm_escape = 10\nr_stop = 1e-5\neps_b = 1e-6").unwrap();
    let p = cfg.policy();
    assert_eq!(p.m_escape, 20.0);
    assert_eq!(p.r_stop, 2e-5);
    assert_eq!(cfg.reduced_config().b_floor, 2e-6);
    let st = cfg.initial_state().unwrap();
    assert_eq!(st.r, 6.0);
    assert!(reldiff::schwarzschild::pseudo_norm_residual(&st, 2.0).abs() < 1e-15);
}

#[test]
fn output_dir_falls_back_to_the_environment() {
    let cfg = EnsembleConfig::default();
    std::env::set_var(OUTPUT_DIR_ENV, "/tmp/from-env");
    assert_eq!(cfg.resolved_output_dir(), PathBuf::from("/tmp/from-env"));
    let mut set = cfg.clone();
    set.output_dir = Some("/tmp/explicit".into());
    assert_eq!(set.resolved_output_dir(), PathBuf::from("/tmp/explicit"));
    std::env::remove_var(OUTPUT_DIR_ENV);
    assert_eq!(cfg.resolved_output_dir(), PathBuf::from("."));
}

#[test]
fn wilson_interval() {
    let p = wilson(5, 10, 1.959963984540054);
    assert_relative_eq!(p.lower, 0.23659309051256394, epsilon = 1e-12);
    assert_relative_eq!(p.upper, 0.7634069094874361, epsilon = 1e-12);
    assert_relative_eq!(p.standard_error, (0.25f64 / 10.0).sqrt(), epsilon = 1e-15);
    let p = wilson(0, 20, 1.959963984540054);
    assert_eq!(p.lower, 0.0);
    assert_relative_eq!(p.upper, 0.1611251580528194, epsilon = 1e-12);
    let p = wilson(0, 0, 2.0);
    assert_eq!((p.estimate, p.lower, p.upper), (0.0, 0.0, 1.0));
}

#[test]
fn kolmogorov_reference_values() {
    for (x, want) in [
        (0.3, 0.9999906941986655),
        (0.5, 0.9639452436648751),
        (0.9, 0.3927307079406543),
        (1.0, 0.26999967167735456),
        (1.2, 0.11224966667072497),
        (2.0, 0.0006709252557796953),
    ] {
        assert_relative_eq!(kolmogorov_survival(x), want, max_relative = 1e-10);
    }
    assert_eq!(kolmogorov_survival(0.0), 1.0);
}

#[test]
fn ks_statistic() {
    let n = 200;
    let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let r = ks_test(&grid, |x| x);
    assert_relative_eq!(r.statistic, 0.5 / n as f64, epsilon = 1e-15);
    assert!(r.p_value > 0.999);
    let shifted: Vec<f64> = grid.iter().map(|x| x * 0.5).collect();
    let r = ks_test(&shifted, |x| x);
    assert_relative_eq!(r.statistic, 1.0 - 0.5 * (n as f64 - 0.5) / n as f64, epsilon = 1e-12);
    assert!(r.p_value < 1e-10);
    assert_eq!(ks_test(&[], |x| x).p_value, 1.0);
}

#[test]
fn small_statistics() {
    let (m, c) = linear_fit(&[1.0, 2.0, 3.0], &[5.0, 7.0, 9.0]).unwrap();
    assert_relative_eq!(m, 2.0, epsilon = 1e-14);
    assert_relative_eq!(c, 3.0, epsilon = 1e-14);
    assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    let mo = moments(&[3.0, 1.0, f64::NAN, 2.0, 10.0]).unwrap();
    assert_eq!(mo.count, 4);
    assert_eq!(mo.median, 2.5);
    assert_eq!((mo.min, mo.max), (1.0, 10.0));
    assert_relative_eq!(mo.mean, 4.0);
    assert_relative_eq!(mo.std_dev, (50.0f64 / 3.0).sqrt(), epsilon = 1e-14);
    assert_eq!(median(&[]), None);
    let h = Histogram::new(0.0, 1.0, 4, &[-1.0, 0.1, 0.3, 0.3, 0.99, 1.0]);
    assert_eq!(h.counts, vec![1, 2, 0, 1]);
    assert_eq!((h.below, h.above, h.total()), (1, 1, 6));
    assert_relative_eq!(h.probability_between(0.25, 0.5), 2.0 / 6.0);
}

fn small(n: usize) -> EnsembleConfig {
    EnsembleConfig {
        n,
        r0: 1.4,
        t0: -2.0,
        horizon: 20.0,
        max_crossings: Some(8),
        record_every: 5,
        seed: 99,
        ..EnsembleConfig::default()
    }
}

#[test]
fn path_csv_round_trip() {
    let path = run_trajectory(&small(1), 0).unwrap();
    assert!(path.samples.len() > 10);
    let mut buf = Vec::new();
    write_path_csv(&path.samples, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), PATH_COLUMNS.join(","));
    let back = read_path_csv(&buf[..]).unwrap();
    assert_eq!(back, path.samples);
    let mut rows = csv::Reader::from_reader(&buf[..]);
    let col = |name: &str| PATH_COLUMNS.iter().position(|c| *c == name).unwrap();
    let mut mirrored = 0;
    for rec in rows.records() {
        let rec = rec.unwrap();
        let (u, um) = (&rec[col("u")], &rec[col("u_mirror")]);
        if !u.is_empty() {
            assert_eq!(um.parse::<f64>().unwrap(), -u.parse::<f64>().unwrap());
            assert_eq!(rec[col("v_mirror")].parse::<f64>().unwrap(), -rec[col("v")].parse::<f64>().unwrap());
            mirrored += 1;
        }
    }
    assert!(mirrored > 0);
    let mut empty = Vec::new();
    write_path_csv(&[], &mut empty).unwrap();
    assert_eq!(String::from_utf8(empty.clone()).unwrap().trim_end(), PATH_COLUMNS.join(","));
    assert!(read_path_csv(&empty[..]).unwrap().is_empty());
    assert!(read_path_csv("a,b\n1,2\n".as_bytes()).is_err());
}

#[test]
fn minkowski_csv_round_trip() {
    let st = MinkowskiState::boosted(0.4, &[1.0, 2.0]).unwrap();
    let mut buf = Vec::new();
    write_minkowski_csv(&[st.clone(), st.clone()], 2, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("s,xi0,xi1,xi2,p0,p1,p2\n"));
    assert_eq!(read_minkowski_csv(&buf[..]).unwrap(), vec![st.clone(), st.clone()]);
    assert!(write_minkowski_csv(&[st], 3, Vec::new()).is_err());
}

#[test]
fn summary_json_matches_the_schema() {
    let summary = run_ensemble(&small(6)).unwrap();
    let text = to_json(&summary).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let schema: serde_json::Value = serde_json::from_str(SUMMARY_SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    if let Err(errors) = compiled.validate(&value) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("schema violations: {msgs:#?}");
    }
    let back: EnsembleSummary = from_json(&text).unwrap();
    assert_eq!(back, summary);
    // a broken document is rejected
    let mut broken = value.clone();
    broken.as_object_mut().unwrap().remove("escape");
    assert!(!compiled.is_valid(&broken));
}

#[test]
fn ensembles_are_deterministic() {
    let cfg = small(12);
    let a = to_json(&run_ensemble(&cfg).unwrap()).unwrap();
    let b = to_json(&run_ensemble(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    // each record equals the trajectory run on its own
    let summary = run_ensemble(&cfg).unwrap();
    for rec in summary.records.iter().take(3) {
        let path = run_trajectory(&cfg, rec.index).unwrap();
        assert_eq!(rec.fate, classify_fate(&path, &cfg));
    }
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(a, to_json(&run_ensemble(&other).unwrap()).unwrap());
}

#[test]
fn event_log_and_files() {
    let path = run_trajectory(&small(1), 0).unwrap();
    let log = EventLog::new(0, path.events.clone());
    let dir = tempfile::tempdir().unwrap();
    let p = write_file(&dir.path().join("nested"), "events.json", to_json(&log).unwrap().as_bytes()).unwrap();
    let back: EventLog = from_json(&std::fs::read_to_string(p).unwrap()).unwrap();
    assert_eq!(back, log);
    assert_eq!(back.schema_version, SCHEMA_VERSION);
}

#[test]
fn fast_outward_runs_escape() {
    let cfg = EnsembleConfig {
        n: 16,
        r0: 3.0,
        t0: 8.0,
        horizon: 200.0,
        seed: 5,
        ..EnsembleConfig::default()
    };
    let s = run_ensemble(&cfg).unwrap();
    assert!(s.failures.is_empty());
    for rec in &s.records {
        assert_eq!(rec.fate.termination, reldiff::kruskal::Termination::Escaped);
        assert!(!rec.fate.captured);
        if let Some(d) = rec.fate.direction {
            assert_relative_eq!(d.iter().map(|x| x * x).sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }
    assert!(s.escape.successes >= 8, "{:?}", s.escape);
}

#[test]
fn large_momentum_runs_are_confined() {
    let cfg = EnsembleConfig {
        n: 4,
        r0: 1.2,
        t0: 0.0,
        b0: 1e4,
        horizon: 1e3,
        max_crossings: Some(30),
        seed: 8,
        ..EnsembleConfig::default()
    };
    let s = run_ensemble(&cfg).unwrap();
    assert_eq!(s.confined.successes, 4, "{:?}", s.records.iter().map(|r| &r.fate).collect::<Vec<_>>());
    for rec in &s.records {
        let f = &rec.fate;
        let rho = f.rho_hat.unwrap();
        assert!(in_confinement_band(rho, 1.0, 0.0));
        assert!(f.ell_residual.unwrap() < 0.05);
        assert!(f.plane_drift.unwrap() < 0.05);
        assert_eq!(rec.checks.violations(), 0);
    }
}

#[test]
fn flat_ensemble_summary() {
    let cfg = EnsembleConfig {
        space: Space::Minkowski,
        d: 2,
        n: 50,
        h0: 2e-3,
        horizon: 200.0,
        ..EnsembleConfig::default()
    };
    let s = run_minkowski(&cfg).unwrap();
    assert_eq!(s.trajectories, 50);
    assert_eq!(s.angles.len(), s.decided);
    assert!(s.decided >= 45);
    let ks = s.ks.unwrap();
    assert_eq!(ks.n, s.decided);
    // the mean velocity approaches the final direction as trajectories run longer
    assert!(s.max_velocity_gap < 0.3, "gap {}", s.max_velocity_gap);
    let longer = run_minkowski(&EnsembleConfig { p0_threshold: 1e5, horizon: 2000.0, ..cfg }).unwrap();
    assert!(longer.max_velocity_gap < s.max_velocity_gap, "gap {}", longer.max_velocity_gap);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wilson_contains_the_estimate(s in 0usize..500, extra in 0usize..500, z in 0.5f64..4.0) {
        let n = s + extra;
        let p = wilson(s, n, z);
        prop_assert!(p.lower <= p.upper);
        prop_assert!(0.0 <= p.lower && p.upper <= 1.0);
        if n > 0 {
            prop_assert!(p.lower <= p.estimate + 1e-15 && p.estimate <= p.upper + 1e-15);
        }
    }

    #[test]
    fn kolmogorov_is_monotone(x in 0.05f64..3.0, dx in 1e-6f64..0.5) {
        prop_assert!(kolmogorov_survival(x + dx) <= kolmogorov_survival(x) + 1e-15);
    }

    #[test]
    fn config_round_trips_through_json(sigma in 0.0f64..5.0, n in 1usize..1000, seed in 0u64..1_000_000) {
        let cfg = EnsembleConfig { sigma, n, seed, ..EnsembleConfig::default() };
        let text = to_json(&cfg).unwrap();
        prop_assert_eq!(EnsembleConfig::parse(&text).unwrap(), cfg);
    }
}
