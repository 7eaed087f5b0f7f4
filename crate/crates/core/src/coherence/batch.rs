use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    compare_tilt, fit_ramsey, fit_t1, parse_trace, pure_dephasing, series_stats, tilt_series,
    DecayTrace, PureDephasing, RamseyFit, SeriesStats, T1Fit, TiltComparison, TiltReport,
    TraceKind,
};
use crate::error::Error;

/// Traces with timestamps in `[from, to]` are left out of the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExclusionWindow {
    pub from: f64,
    pub to: f64,
}

impl ExclusionWindow {
    pub fn contains(&self, timestamp: f64) -> bool {
        (self.from..=self.to).contains(&timestamp)
    }
}

impl FromStr for ExclusionWindow {
    type Err = String;

    /// `from..to`, both in seconds since the epoch.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("exclusion `{s}` must look like FROM..TO"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| format!("exclusion `{s}`: {e}"))
        };
        let (from, to) = (parse(a)?, parse(b)?);
        if !(from <= to) {
            return Err(format!("exclusion `{s}`: start is after end"));
        }
        Ok(ExclusionWindow { from, to })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TraceOutcome {
    T1(T1Fit),
    Ramsey(RamseyFit),
    Failed { reason: String },
    Excluded { window: ExclusionWindow },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceResult {
    pub source: String,
    pub kind: TraceKind,
    pub timestamp: f64,
    pub label: String,
    pub outcome: TraceOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceFailure {
    pub source: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub label: String,
    pub t1: Option<SeriesStats>,
    pub t2: Option<SeriesStats>,
    pub tphi: Option<SeriesStats>,
    /// Pure dephasing values in time order, s.
    pub tphi_series: Vec<(f64, f64)>,
    pub lifetime_limited: usize,
    pub unresolved_t2: usize,
    pub tilt: Option<TiltReport>,
    pub fits_ok: usize,
    pub fits_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub files_read: usize,
    /// Files that could not be read or parsed.
    pub skipped: Vec<TraceFailure>,
    pub exclusions: Vec<ExclusionWindow>,
    pub excluded: usize,
    pub traces: Vec<TraceResult>,
    pub groups: Vec<GroupSummary>,
    /// Present when exactly two labelled groups have tilt data.
    pub tilt_comparison: Option<TiltComparison>,
}

/// Reads every regular file in `dir` (sorted by name) as a trace and
/// analyses the ones that parse.
pub fn analyze_batch(dir: &Path, exclusions: &[ExclusionWindow]) -> Result<BatchSummary, Error> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(format!("reading directory {}", dir.display()), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        let path = entry.path();
        if path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Invalid(format!(
            "no trace files in {}",
            dir.display()
        )));
    }
    let mut traces = Vec::new();
    let mut skipped = Vec::new();
    for path in &paths {
        let source = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match std::fs::read_to_string(path) {
            Ok(text) => match parse_trace(&text) {
                Ok(trace) => traces.push((source, trace)),
                Err(e) => skipped.push(TraceFailure {
                    source,
                    reason: e.to_string(),
                }),
            },
            Err(e) => skipped.push(TraceFailure {
                source,
                reason: e.to_string(),
            }),
        }
    }
    if traces.is_empty() {
        return Err(Error::Invalid(format!(
            "none of the {} files in {} is a readable trace",
            paths.len(),
            dir.display()
        )));
    }
    let mut summary = analyze_traces(traces, exclusions);
    summary.files_read = paths.len();
    summary.skipped = skipped;
    Ok(summary)
}

/// Fits every trace (in parallel), then builds per-label statistics.
pub fn analyze_traces(
    traces: Vec<(String, DecayTrace)>,
    exclusions: &[ExclusionWindow],
) -> BatchSummary {
    let results: Vec<TraceResult> = traces
        .par_iter()
        .map(|(source, trace)| {
            let outcome = match exclusions.iter().find(|w| w.contains(trace.timestamp)) {
                Some(window) => TraceOutcome::Excluded { window: *window },
                None => match trace.kind {
                    TraceKind::T1 => fit_t1(trace).map(TraceOutcome::T1),
                    TraceKind::Ramsey => fit_ramsey(trace).map(TraceOutcome::Ramsey),
                }
                .unwrap_or_else(|e| TraceOutcome::Failed {
                    reason: e.to_string(),
                }),
            };
            TraceResult {
                source: source.clone(),
                kind: trace.kind,
                timestamp: trace.timestamp,
                label: trace.label.clone(),
                outcome,
            }
        })
        .collect();

    let mut by_label: BTreeMap<&str, Vec<&TraceResult>> = BTreeMap::new();
    for r in &results {
        by_label.entry(r.label.as_str()).or_default().push(r);
    }
    let groups: Vec<GroupSummary> = by_label
        .into_iter()
        .map(|(label, rs)| summarize_group(label, rs))
        .collect();
    let with_tilt: Vec<&GroupSummary> = groups.iter().filter(|g| g.tilt.is_some()).collect();
    let tilt_comparison = match with_tilt.as_slice() {
        [a, b] => Some(compare_tilt(
            (&a.label, a.tilt.as_ref().unwrap()),
            (&b.label, b.tilt.as_ref().unwrap()),
        )),
        _ => None,
    };
    BatchSummary {
        files_read: traces.len(),
        skipped: Vec::new(),
        exclusions: exclusions.to_vec(),
        excluded: results
            .iter()
            .filter(|r| matches!(r.outcome, TraceOutcome::Excluded { .. }))
            .count(),
        traces: results,
        groups,
        tilt_comparison,
    }
}

fn summarize_group(label: &str, mut rs: Vec<&TraceResult>) -> GroupSummary {
    rs.sort_by(|a, b| {
        a.timestamp
            .total_cmp(&b.timestamp)
            .then(a.source.cmp(&b.source))
    });
    let mut t1s: Vec<(f64, &T1Fit)> = Vec::new();
    let mut ramseys: Vec<(f64, &RamseyFit)> = Vec::new();
    let mut fits_failed = 0;
    for r in &rs {
        match &r.outcome {
            TraceOutcome::T1(f) => t1s.push((r.timestamp, f)),
            TraceOutcome::Ramsey(f) => ramseys.push((r.timestamp, f)),
            TraceOutcome::Failed { .. } => fits_failed += 1,
            TraceOutcome::Excluded { .. } => {}
        }
    }
    let t1_values: Vec<f64> = t1s.iter().map(|(_, f)| f.t1).collect();
    let resolved: Vec<(f64, &RamseyFit)> = ramseys
        .iter()
        .copied()
        .filter(|(_, f)| !f.decay_unresolved)
        .collect();
    let t2_values: Vec<f64> = resolved.iter().map(|(_, f)| f.t2).collect();

    let mut tphi_series = Vec::new();
    let mut lifetime_limited = 0;
    for (ts, rf) in &resolved {
        let nearest = t1s
            .iter()
            .min_by(|a, b| (a.0 - ts).abs().total_cmp(&(b.0 - ts).abs()));
        if let Some((_, t1)) = nearest {
            match pure_dephasing(t1.t1, rf.t2) {
                Ok(PureDephasing::Finite(v)) => tphi_series.push((*ts, v)),
                Ok(PureDephasing::LifetimeLimited) => lifetime_limited += 1,
                Err(_) => {}
            }
        }
    }
    let tphi_values: Vec<f64> = tphi_series.iter().map(|p| p.1).collect();
    let owned: Vec<(f64, RamseyFit)> = ramseys.iter().map(|(t, f)| (*t, (*f).clone())).collect();
    GroupSummary {
        label: label.to_string(),
        t1: series_stats(&t1_values).ok(),
        t2: series_stats(&t2_values).ok(),
        tphi: series_stats(&tphi_values).ok(),
        tphi_series,
        lifetime_limited,
        unresolved_t2: ramseys.len() - resolved.len(),
        tilt: tilt_series(&owned).ok(),
        fits_ok: t1s.len() + ramseys.len(),
        fits_failed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exclusion_parsing() {
        let w: ExclusionWindow = "100..200.5".parse().unwrap();
        assert!(w.contains(150.0) && !w.contains(201.0));
        assert!("5..1".parse::<ExclusionWindow>().is_err());
        assert!("5-1".parse::<ExclusionWindow>().is_err());
    }
}
