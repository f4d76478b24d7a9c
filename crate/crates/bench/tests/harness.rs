use driftlab_bench::{detect, generate, run_benchmark, run_once, DetectorConfig, EvalConfig, SyntheticSpec};

fn small(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_drifts: 9,
        ..SyntheticSpec::mean_shift(50_000, seed)
    }
}

#[test]
fn unreachable_threshold_reports_nothing() {
    let det = DetectorConfig {
        alert_threshold: 1.5,
        ..DetectorConfig::default()
    };
    let r = run_once(&small(1), &det, &EvalConfig::for_detector(&det)).unwrap();
    assert_eq!((r.detected, r.late, r.missed, r.false_alarms), (0.0, 0.0, 9.0, 0.0));
}

#[test]
fn mean_shifts_are_found_promptly() {
    let det = DetectorConfig::default();
    let r = run_once(&small(2), &det, &EvalConfig::for_detector(&det)).unwrap();
    assert!(r.detected >= 8.0, "{r:?}");
    assert!(r.false_alarms <= 1.0, "{r:?}");
    assert_eq!(r.detected + r.late + r.missed, 9.0);
}

#[test]
fn variance_shifts_are_found() {
    let spec = SyntheticSpec {
        n_drifts: 9,
        ..SyntheticSpec::variance_shift(50_000, 3)
    };
    let det = DetectorConfig {
        alert_threshold: 0.05,
        ..DetectorConfig::default()
    };
    let r = run_once(&spec, &det, &EvalConfig::for_detector(&det)).unwrap();
    assert!(r.detected >= 7.0, "{r:?}");
}

#[test]
fn stationary_stream_stays_quiet() {
    let spec = SyntheticSpec {
        n_drifts: 0,
        ..SyntheticSpec::mean_shift(30_000, 4)
    };
    let alerts = detect(&generate(&spec).unwrap(), &DetectorConfig::default()).unwrap();
    assert!(alerts.is_empty(), "{alerts:?}");
}

#[test]
fn benchmark_is_deterministic_and_averages() {
    let det = DetectorConfig::default();
    let eval = EvalConfig::for_detector(&det);
    let a = run_benchmark(&small(5), &det, &eval, 3).unwrap();
    let b = run_benchmark(&small(5), &det, &eval, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.runs, 3);
    let singles: Vec<f64> = (0..3)
        .map(|r| {
            let spec = SyntheticSpec { seed: 5 + r, ..small(5) };
            let det = DetectorConfig { seed: det.seed + r, ..det.clone() };
            run_once(&spec, &det, &eval).unwrap().detected
        })
        .collect();
    assert!((a.detected - singles.iter().sum::<f64>() / 3.0).abs() < 1e-12);
}

#[test]
fn report_json_uses_table_columns() {
    let det = DetectorConfig::default();
    let r = run_once(&small(6), &det, &EvalConfig::for_detector(&det)).unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    for key in ["Detected", "Late", "Missed", "False"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}
