use serde::{Deserialize, Serialize};

use driftlab_core::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Detected,
    Late,
    Missed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub true_tick: Tick,
    pub report_tick: Option<Tick>,
    pub category: Category,
}

/// Detection counts. A single run has whole numbers; averaged reports hold
/// arithmetic means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "Detected")]
    pub detected: f64,
    #[serde(rename = "Late")]
    pub late: f64,
    #[serde(rename = "Missed")]
    pub missed: f64,
    #[serde(rename = "False")]
    pub false_alarms: f64,
    pub runs: usize,
    /// Per-drift outcome; only kept for single-run reports.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<DriftRecord>,
}

impl EvalReport {
    /// Arithmetic mean of several reports, weighting each by its run count.
    pub fn average(reports: &[EvalReport]) -> EvalReport {
        let runs: usize = reports.iter().map(|r| r.runs).sum();
        let mean = |f: fn(&EvalReport) -> f64| {
            reports.iter().map(|r| f(r) * r.runs as f64).sum::<f64>() / runs.max(1) as f64
        };
        EvalReport {
            detected: mean(|r| r.detected),
            late: mean(|r| r.late),
            missed: mean(|r| r.missed),
            false_alarms: mean(|r| r.false_alarms),
            runs,
            records: match reports {
                [only] => only.records.clone(),
                _ => Vec::new(),
            },
        }
    }
}

/// Scores report ticks against ground-truth drift ticks.
///
/// Drift `i` owns the interval `[t_i, t_{i+1})`; its first report there is
/// detected when `Δt < w` and late otherwise. Further reports in the same
/// interval and reports before the first drift are false alarms. Both
/// slices must be sorted.
pub fn categorize(reports: &[Tick], truth: &[Tick], w: i64) -> EvalReport {
    debug_assert!(reports.windows(2).all(|p| p[0] <= p[1]));
    debug_assert!(truth.windows(2).all(|p| p[0] <= p[1]));
    let mut report = EvalReport {
        detected: 0.0,
        late: 0.0,
        missed: 0.0,
        false_alarms: 0.0,
        runs: 1,
        records: Vec::with_capacity(truth.len()),
    };
    let first = truth.first().copied().unwrap_or(Tick::MAX);
    let mut r = reports.partition_point(|t| *t < first);
    report.false_alarms += r as f64;
    for (i, &t) in truth.iter().enumerate() {
        let end = truth.get(i + 1).copied().unwrap_or(Tick::MAX);
        let stop = r + reports[r..].partition_point(|x| *x < end);
        let (category, report_tick) = match reports.get(r).filter(|_| r < stop) {
            Some(&x) if x - t < w => (Category::Detected, Some(x)),
            Some(&x) => (Category::Late, Some(x)),
            None => (Category::Missed, None),
        };
        match category {
            Category::Detected => report.detected += 1.0,
            Category::Late => report.late += 1.0,
            Category::Missed => report.missed += 1.0,
        }
        report.false_alarms += stop.saturating_sub(r + 1) as f64;
        report.records.push(DriftRecord {
            true_tick: t,
            report_tick,
            category,
        });
        r = stop;
    }
    report
}
