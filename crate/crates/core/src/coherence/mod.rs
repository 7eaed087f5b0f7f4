//! Qubit coherence analysis: T1 and Ramsey fits, pure dephasing, series
//! statistics, Ramsey tilt stability and synthetic trace generation.

mod batch;
mod fit;
mod lm;
mod stats;
mod synth;
mod trace;

pub use batch::{
    analyze_batch, analyze_traces, BatchSummary, ExclusionWindow, GroupSummary, TraceFailure,
    TraceOutcome, TraceResult,
};
pub use fit::{fit_ramsey, fit_t1, RamseyFit, T1Fit, FRINGE_SNR_THRESHOLD, MAX_T2_RELATIVE_ERROR};
pub use stats::{
    compare_tilt, histogram, series_stats, tilt_series, Histogram, NormalFit, SeriesStats,
    TiltComparison, TiltReport,
};
pub use synth::{linspace, synth_batch, synth_trace, BatchSpec, SynthModel, SynthSpec};
pub use trace::{format_trace, parse_trace, read_trace, write_trace};

use serde::{Deserialize, Serialize};

use crate::error::FitError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    T1,
    Ramsey,
}

impl TraceKind {
    pub fn name(self) -> &'static str {
        match self {
            TraceKind::T1 => "t1",
            TraceKind::Ramsey => "ramsey",
        }
    }
}

impl std::str::FromStr for TraceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "t1" => Ok(TraceKind::T1),
            "ramsey" | "t2" | "t2*" => Ok(TraceKind::Ramsey),
            other => Err(format!("unknown trace kind `{other}`")),
        }
    }
}

/// One timestamped decay measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace {
    pub kind: TraceKind,
    /// Free-evolution delays, s, strictly increasing.
    pub delays: Vec<f64>,
    /// Excited-state population at each delay.
    pub populations: Vec<f64>,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
    pub label: String,
}

impl DecayTrace {
    pub const POPULATION_RANGE: (f64, f64) = (-0.2, 1.2);

    pub fn validate(&self) -> Result<(), FitError> {
        if self.delays.len() != self.populations.len() {
            return Err(FitError::InvalidTrace(format!(
                "{} delays but {} populations",
                self.delays.len(),
                self.populations.len()
            )));
        }
        if self
            .delays
            .iter()
            .chain(&self.populations)
            .any(|v| !v.is_finite())
        {
            return Err(FitError::InvalidTrace("non-finite value".into()));
        }
        if self.delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FitError::InvalidTrace(
                "delays must be strictly increasing".into(),
            ));
        }
        if self.delays.first().is_some_and(|d| *d < 0.0) {
            return Err(FitError::InvalidTrace("delays must be non-negative".into()));
        }
        let (lo, hi) = Self::POPULATION_RANGE;
        if let Some(p) = self.populations.iter().find(|p| !(lo..=hi).contains(*p)) {
            return Err(FitError::InvalidTrace(format!(
                "population {p} outside [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        match (self.delays.first(), self.delays.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

/// Pure dephasing time from T1 and T2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "seconds", rename_all = "snake_case")]
pub enum PureDephasing {
    Finite(f64),
    /// T2 ≥ 2·T1: the decay is fully explained by relaxation.
    LifetimeLimited,
}

impl PureDephasing {
    pub fn seconds(self) -> Option<f64> {
        match self {
            PureDephasing::Finite(t) => Some(t),
            PureDephasing::LifetimeLimited => None,
        }
    }
}

/// T_φ = 2·T2·T1 / (2·T1 − T2), from 1/T2 = 1/(2·T1) + 1/T_φ.
pub fn pure_dephasing(t1: f64, t2: f64) -> Result<PureDephasing, FitError> {
    for (quantity, value) in [("T1", t1), ("T2", t2)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(FitError::NonPositive { quantity, value });
        }
    }
    // Written so that round ratios such as T1/T2 = 3/2 come out exact.
    let ratio = 2.0 * t1 / t2;
    if ratio <= 1.0 {
        return Ok(PureDephasing::LifetimeLimited);
    }
    Ok(PureDephasing::Finite(2.0 * t1 / (ratio - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dephasing_examples() {
        let t = pure_dephasing(120e-6, 80e-6).unwrap().seconds().unwrap();
        assert_eq!(t, 120e-6);
        let t = pure_dephasing(50e-6, 50e-6).unwrap().seconds().unwrap();
        assert_eq!(t, 100e-6);
        assert_eq!(
            pure_dephasing(40e-6, 80e-6).unwrap(),
            PureDephasing::LifetimeLimited
        );
        assert!(pure_dephasing(0.0, 1e-6).is_err());
    }

    #[test]
    fn trace_validation() {
        let mut tr = DecayTrace {
            kind: TraceKind::T1,
            delays: vec![0.0, 1e-6, 2e-6],
            populations: vec![1.0, 0.5, 0.25],
            timestamp: 0.0,
            label: String::new(),
        };
        assert!(tr.validate().is_ok());
        tr.populations[1] = 1.5;
        assert!(tr.validate().is_err());
        tr.populations[1] = 0.5;
        tr.delays[2] = 1e-6;
        assert!(tr.validate().is_err());
    }
}
