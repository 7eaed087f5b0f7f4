use serde::{Deserialize, Serialize};

use super::RamseyFit;
use crate::error::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: f64,
    /// Unbiased (n − 1) estimate.
    pub standard_deviation: f64,
    pub standard_error_of_mean: f64,
    pub count: usize,
    /// Maximum-likelihood normal parameters.
    pub normal_fit: NormalFit,
}

/// Neumaier-compensated sum.
fn sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        comp += if s.abs() >= v.abs() {
            (s - t) + v
        } else {
            (v - t) + s
        };
        s = t;
    }
    s + comp
}

pub fn series_stats(values: &[f64]) -> Result<SeriesStats, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFewValues {
            needed: 2,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    // Sorting first makes every sum independent of input order.
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sum(sorted.iter().copied()) / n;
    let ss = sum(sorted.iter().map(|v| (v - mean) * (v - mean)));
    let sd = (ss / (n - 1.0)).sqrt();
    Ok(SeriesStats {
        mean,
        standard_deviation: sd,
        standard_error_of_mean: sd / n.sqrt(),
        count: sorted.len(),
        normal_fit: NormalFit {
            mu: mean,
            sigma: (ss / n).sqrt(),
        },
    })
}

/// Binned counts with the fitted normal curve scaled to the same area.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Expected count per bin under the normal fit, at bin centres.
    pub normal_overlay: Vec<f64>,
}

pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram, StatsError> {
    let stats = series_stats(values)?;
    let bins = bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let NormalFit { mu, sigma } = stats.normal_fit;
    let normal_overlay = (0..bins)
        .map(|i| {
            let x = 0.5 * (edges[i] + edges[i + 1]);
            if sigma > 0.0 {
                let z = (x - mu) / sigma;
                values.len() as f64 * width * (-0.5 * z * z).exp()
                    / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            } else {
                0.0
            }
        })
        .collect();
    Ok(Histogram {
        edges,
        counts,
        normal_overlay,
    })
}

/// Ramsey tilt over time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltReport {
    pub timestamps: Vec<f64>,
    /// B, population per second, in time order.
    pub tilts: Vec<f64>,
    pub stats: SeriesStats,
    pub max_abs_tilt: f64,
    pub mean_abs_tilt: f64,
}

pub fn tilt_series(fits: &[(f64, RamseyFit)]) -> Result<TiltReport, StatsError> {
    let mut points: Vec<(f64, f64)> = fits.iter().map(|(ts, f)| (*ts, f.b)).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let tilts: Vec<f64> = points.iter().map(|p| p.1).collect();
    let stats = series_stats(&tilts)?;
    let mut abs: Vec<f64> = tilts.iter().map(|b| b.abs()).collect();
    abs.sort_by(f64::total_cmp);
    Ok(TiltReport {
        timestamps: points.iter().map(|p| p.0).collect(),
        max_abs_tilt: abs.last().copied().unwrap_or(0.0),
        mean_abs_tilt: sum(abs.iter().copied()) / abs.len() as f64,
        tilts,
        stats,
    })
}

/// Two labelled tilt series side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltComparison {
    pub first: String,
    pub second: String,
    /// mean(first) − mean(second)
    pub difference_of_means: f64,
    /// Standard error of that difference.
    pub difference_standard_error: f64,
    /// var(first) / var(second)
    pub variance_ratio: f64,
}

pub fn compare_tilt(first: (&str, &TiltReport), second: (&str, &TiltReport)) -> TiltComparison {
    let (a, b) = (&first.1.stats, &second.1.stats);
    TiltComparison {
        first: first.0.to_string(),
        second: second.0.to_string(),
        difference_of_means: a.mean - b.mean,
        difference_standard_error: a.standard_error_of_mean.hypot(b.standard_error_of_mean),
        variance_ratio: (a.standard_deviation / b.standard_deviation).powi(2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let s = series_stats(&[10e-6, 10e-6, 10e-6]).unwrap();
        assert_eq!(s.mean, 10e-6);
        assert_eq!(s.standard_deviation, 0.0);
        assert_eq!(s.standard_error_of_mean, 0.0);
        let s = series_stats(&[1.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.standard_deviation - 3.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(series_stats(&[1.0]).is_err());
        assert!(series_stats(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn histogram_counts_everything() {
        let v: Vec<f64> = (0..100).map(|i| f64::from(i) * 0.37 % 5.0).collect();
        let h = histogram(&v, 10).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 100);
        assert_eq!(h.edges.len(), 11);
    }
}
