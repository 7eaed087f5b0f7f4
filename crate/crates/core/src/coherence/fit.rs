use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lm::{self, LmOptions, Model};
use super::{DecayTrace, TraceKind};
use crate::error::FitError;

/// Minimum periodogram amplitude ratio (peak over mean) for a fringe.
pub const FRINGE_SNR_THRESHOLD: f64 = 3.0;
/// Ramsey fits whose T2 standard error exceeds this fraction are rejected.
pub const MAX_T2_RELATIVE_ERROR: f64 = 0.5;
/// A decay longer than this many trace spans is reported as unresolved.
const UNRESOLVED_SPANS: f64 = 100.0;

const T1_MIN_POINTS: usize = 8;
const RAMSEY_MIN_POINTS: usize = 16;

/// P(t) = A·e^{−t/T1} + C
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Fit {
    pub a: f64,
    pub t1: f64,
    pub c: f64,
    /// Over (A, T1, C).
    pub covariance: Vec<Vec<f64>>,
    pub standard_errors: [f64; 3],
    pub residual_rms: f64,
    pub iterations: usize,
}

/// P(t) = A·e^{−t/T2}·cos(2π·f·t + φ) + B·t + C
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyFit {
    pub a: f64,
    /// Infinite when the fitted decay rate is not positive.
    pub t2: f64,
    pub f: f64,
    pub phi: f64,
    pub b: f64,
    pub c: f64,
    /// 1/T2 and its standard error; finite even for unresolved decays.
    pub decay_rate: f64,
    pub decay_rate_error: f64,
    /// Over (A, T2, f, φ, B, C).
    pub covariance: Vec<Vec<f64>>,
    pub standard_errors: [f64; 6],
    pub residual_rms: f64,
    /// T2 exceeds 100 spans of the trace: the data do not constrain it.
    pub decay_unresolved: bool,
    pub iterations: usize,
}

struct T1Model;

impl Model for T1Model {
    fn n_params(&self) -> usize {
        3
    }
    fn value(&self, p: &[f64], t: f64) -> f64 {
        p[0] * (-p[1] * t).exp() + p[2]
    }
    fn gradient(&self, p: &[f64], t: f64, out: &mut [f64]) {
        let e = (-p[1] * t).exp();
        out[0] = e;
        out[1] = -p[0] * t * e;
        out[2] = 1.0;
    }
}

struct RamseyModel;

impl Model for RamseyModel {
    fn n_params(&self) -> usize {
        6
    }
    fn value(&self, p: &[f64], t: f64) -> f64 {
        p[0] * (-p[1] * t).exp() * (TAU * p[2] * t + p[3]).cos() + p[4] * t + p[5]
    }
    fn gradient(&self, p: &[f64], t: f64, out: &mut [f64]) {
        let e = (-p[1] * t).exp();
        let (s, c) = (TAU * p[2] * t + p[3]).sin_cos();
        out[0] = e * c;
        out[1] = -p[0] * t * e * c;
        out[2] = -p[0] * e * s * TAU * t;
        out[3] = -p[0] * e * s;
        out[4] = t;
        out[5] = 1.0;
    }
}

fn check_kind(trace: &DecayTrace, expected: TraceKind) -> Result<(), FitError> {
    if trace.kind != expected {
        return Err(FitError::WrongKind {
            expected: expected.name(),
            found: trace.kind.name(),
        });
    }
    Ok(())
}

fn check_points(trace: &DecayTrace, needed: usize) -> Result<(), FitError> {
    if trace.delays.len() < needed {
        return Err(FitError::TooFewPoints {
            needed,
            got: trace.delays.len(),
        });
    }
    Ok(())
}

fn is_flat(y: &[f64]) -> bool {
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0)
}

/// Least-squares line through (x, y): (slope, intercept).
fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn tail_mean(y: &[f64]) -> f64 {
    let k = (y.len() / 8).max(2).min(y.len());
    y[y.len() - k..].iter().sum::<f64>() / k as f64
}

/// Transforms an internal covariance by the diagonal Jacobian `d`.
fn rescale_covariance(cov: &DMatrix<f64>, d: &[f64]) -> Vec<Vec<f64>> {
    (0..d.len())
        .map(|i| (0..d.len()).map(|j| cov[(i, j)] * d[i] * d[j]).collect())
        .collect()
}

fn diagonal_errors<const N: usize>(cov: &[Vec<f64>]) -> [f64; N] {
    std::array::from_fn(|i| cov[i][i].max(0.0).sqrt())
}

fn rms(ssr: f64, n: usize) -> f64 {
    (ssr / n as f64).sqrt()
}

/// Fits A·e^{−t/T1} + C, starting from a log-linear fit above the tail.
pub fn fit_t1(trace: &DecayTrace) -> Result<T1Fit, FitError> {
    check_kind(trace, TraceKind::T1)?;
    check_points(trace, T1_MIN_POINTS)?;
    trace.validate()?;
    let y = &trace.populations;
    if is_flat(y) {
        return Err(FitError::DegenerateAmplitude);
    }
    // Work in units of the longest delay so all parameters are O(1).
    let scale = *trace.delays.last().unwrap();
    let t: Vec<f64> = trace.delays.iter().map(|d| d / scale).collect();

    let c0 = tail_mean(y);
    let a_sign = (y[0] - c0).signum();
    let a_ref = (y[0] - c0).abs();
    let (mut xs, mut ls) = (Vec::new(), Vec::new());
    for (&ti, &yi) in t.iter().zip(y) {
        let v = a_sign * (yi - c0);
        if v > 0.1 * a_ref {
            xs.push(ti);
            ls.push(v.ln());
        }
    }
    let (slope, intercept) = if xs.len() >= 2 {
        linear_regression(&xs, &ls)
    } else {
        (-3.0, a_ref.ln())
    };
    let g0 = if slope < 0.0 && slope.is_finite() {
        -slope
    } else {
        3.0
    };
    let a0 = a_sign * intercept.exp();
    let start = [a0, g0, c0];

    let fit = lm::fit(&T1Model, &t, y, &start, &LmOptions::default()).ok_or(
        FitError::NonConvergence {
            iterations: LmOptions::default().max_iterations,
        },
    )?;
    let [a, g, c] = [fit.params[0], fit.params[1], fit.params[2]];
    if a.abs() <= 1e-12 {
        return Err(FitError::DegenerateAmplitude);
    }
    if g <= 0.0 || !g.is_finite() {
        return Err(FitError::Rejected(format!(
            "fitted T1 is not positive (decay rate {g:.3e} per span)"
        )));
    }
    let covariance = rescale_covariance(&fit.covariance, &[1.0, -scale / (g * g), 1.0]);
    Ok(T1Fit {
        a,
        t1: scale / g,
        c,
        standard_errors: diagonal_errors::<3>(&covariance),
        covariance,
        residual_rms: rms(fit.ssr, t.len()),
        iterations: fit.iterations,
    })
}

/// |Σ r·e^{−2πi f t}|² and the sum's argument.
fn dft(t: &[f64], r: &[f64], f: f64) -> (f64, f64) {
    let (mut re, mut im) = (0.0, 0.0);
    for (&ti, &ri) in t.iter().zip(r) {
        let (s, c) = (TAU * f * ti).sin_cos();
        re += ri * c;
        im -= ri * s;
    }
    (re * re + im * im, im.atan2(re))
}

struct Fringe {
    frequency: f64,
    phase: f64,
    snr: f64,
}

/// Periodogram peak of the detrended trace, refined by golden-section search.
fn find_fringe(t: &[f64], r: &[f64]) -> Fringe {
    let n = t.len();
    let f_max = n as f64 / 2.0;
    let step = 0.05;
    let mut power = Vec::new();
    let mut f = 0.5;
    while f <= f_max {
        power.push((f, dft(t, r, f).0));
        f += step;
    }
    let mean = power.iter().map(|p| p.1).sum::<f64>() / power.len() as f64;
    let (f_peak, p_peak) =
        power.iter().copied().fold(
            (0.0, f64::NEG_INFINITY),
            |a, b| if b.1 > a.1 { b } else { a },
        );

    let (mut lo, mut hi) = ((f_peak - step).max(0.25), f_peak + step);
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - golden * (hi - lo);
    let mut x2 = lo + golden * (hi - lo);
    let (mut p1, mut p2) = (dft(t, r, x1).0, dft(t, r, x2).0);
    for _ in 0..80 {
        if p1 > p2 {
            hi = x2;
            x2 = x1;
            p2 = p1;
            x1 = hi - golden * (hi - lo);
            p1 = dft(t, r, x1).0;
        } else {
            lo = x1;
            x1 = x2;
            p1 = p2;
            x2 = lo + golden * (hi - lo);
            p2 = dft(t, r, x2).0;
        }
    }
    let frequency = 0.5 * (lo + hi);
    let (_, phase) = dft(t, r, frequency);
    Fringe {
        frequency,
        phase,
        snr: if mean > 0.0 {
            (p_peak / mean).sqrt()
        } else {
            0.0
        },
    }
}

/// Log-linear fit of the demodulated amplitude, one window per fringe.
fn envelope(t: &[f64], r: &[f64], f: f64) -> (f64, f64) {
    let per_period = t.len() as f64 * (1.0 / f) / (t[t.len() - 1] - t[0]).max(f64::MIN_POSITIVE);
    let width = (per_period.ceil() as usize).max(4);
    let (mut xs, mut ls) = (Vec::new(), Vec::new());
    for chunk in t.chunks(width).zip(r.chunks(width)) {
        let (tc, rc) = chunk;
        if tc.len() < width / 2 + 1 {
            continue;
        }
        let amp = 2.0 * dft(tc, rc, f).0.sqrt() / tc.len() as f64;
        if amp > 0.0 {
            xs.push(tc.iter().sum::<f64>() / tc.len() as f64);
            ls.push(amp.ln());
        }
    }
    if xs.len() < 2 {
        return (1.0, r.iter().map(|v| v.abs()).fold(0.0, f64::max));
    }
    let (slope, intercept) = linear_regression(&xs, &ls);
    let g = if slope < -1e-3 { -slope } else { 1e-3 };
    (g, intercept.exp())
}

fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Fits A·e^{−t/T2}·cos(2πft + φ) + B·t + C. The fringe frequency and phase
/// come from the periodogram, T2 from the log envelope, B and C from a
/// regression of what the oscillation leaves behind.
pub fn fit_ramsey(trace: &DecayTrace) -> Result<RamseyFit, FitError> {
    check_kind(trace, TraceKind::Ramsey)?;
    check_points(trace, RAMSEY_MIN_POINTS)?;
    trace.validate()?;
    let y = &trace.populations;
    if is_flat(y) {
        return Err(FitError::DegenerateAmplitude);
    }
    let scale = *trace.delays.last().unwrap();
    let t: Vec<f64> = trace.delays.iter().map(|d| d / scale).collect();
    let span = t[t.len() - 1] - t[0];

    let (b_lin, c_lin) = linear_regression(&t, y);
    let detrended: Vec<f64> = t
        .iter()
        .zip(y)
        .map(|(t, y)| y - b_lin * t - c_lin)
        .collect();
    let fringe = find_fringe(&t, &detrended);
    if fringe.snr < FRINGE_SNR_THRESHOLD {
        return Err(FitError::NoFringe {
            snr: fringe.snr,
            threshold: FRINGE_SNR_THRESHOLD,
        });
    }
    let periods = fringe.frequency * span;
    if periods < 2.0 {
        return Err(FitError::TooFewPeriods { periods });
    }
    let (g0, a0) = envelope(&t, &detrended, fringe.frequency);
    let osc = |ti: f64| a0 * (-g0 * ti).exp() * (TAU * fringe.frequency * ti + fringe.phase).cos();
    let rest: Vec<f64> = t.iter().zip(y).map(|(&ti, yi)| yi - osc(ti)).collect();
    let (b0, _) = linear_regression(&t, &rest);
    let tail: Vec<f64> = t.iter().zip(&rest).map(|(ti, r)| r - b0 * ti).collect();
    let c0 = tail_mean(&tail);
    let start = [a0, g0, fringe.frequency, fringe.phase, b0, c0];

    let fit = lm::fit(&RamseyModel, &t, y, &start, &LmOptions::default()).ok_or(
        FitError::NonConvergence {
            iterations: LmOptions::default().max_iterations,
        },
    )?;
    let mut p = fit.params.clone();
    let mut cov = fit.covariance.clone();
    let flip = |cov: &mut DMatrix<f64>, i: usize| {
        for k in 0..6 {
            cov[(i, k)] = -cov[(i, k)];
            cov[(k, i)] = -cov[(k, i)];
        }
    };
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
        flip(&mut cov, 2);
        flip(&mut cov, 3);
    }
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[3] += PI;
        flip(&mut cov, 0);
    }
    p[3] = wrap_phase(p[3]);
    if p[0] <= 1e-12 {
        return Err(FitError::DegenerateAmplitude);
    }
    let g = p[1];
    let g_err = cov[(1, 1)].max(0.0).sqrt();
    if g < 0.0 && g + 3.0 * g_err < 0.0 {
        return Err(FitError::Rejected(format!(
            "fringe envelope grows (decay rate {:.3e} ± {:.1e} /s)",
            g / scale,
            g_err / scale
        )));
    }
    let t2 = if g > 0.0 { scale / g } else { f64::INFINITY };
    let decay_unresolved = t2 > UNRESOLVED_SPANS * span * scale;
    let d_t2 = if g > 0.0 { -scale / (g * g) } else { f64::NAN };
    let covariance = rescale_covariance(&cov, &[1.0, d_t2, 1.0 / scale, 1.0, 1.0 / scale, 1.0]);
    let standard_errors = diagonal_errors::<6>(&covariance);
    if !decay_unresolved && standard_errors[1] > MAX_T2_RELATIVE_ERROR * t2 {
        return Err(FitError::Rejected(format!(
            "T2 relative standard error {:.0}% exceeds {:.0}%",
            100.0 * standard_errors[1] / t2,
            100.0 * MAX_T2_RELATIVE_ERROR
        )));
    }
    Ok(RamseyFit {
        a: p[0],
        t2,
        f: p[2] / scale,
        phi: p[3],
        b: p[4] / scale,
        c: p[5],
        decay_rate: g / scale,
        decay_rate_error: g_err / scale,
        covariance,
        standard_errors,
        residual_rms: rms(fit.ssr, t.len()),
        decay_unresolved,
        iterations: fit.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::{linspace, synth_trace, SynthModel, SynthSpec};

    fn spec(model: SynthModel, delays: Vec<f64>, sigma: f64) -> SynthSpec {
        SynthSpec {
            model,
            delays,
            noise_sigma: sigma,
            seed: 7,
            timestamp: 0.0,
            label: String::new(),
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn noiseless_t1_recovery() {
        let tr = synth_trace(&spec(
            SynthModel::T1 {
                a: 1.0,
                t1: 120e-6,
                c: 0.0,
            },
            linspace(0.0, 600e-6, 61),
            0.0,
        ));
        let f = fit_t1(&tr).unwrap();
        assert!(rel(f.a, 1.0) < 1e-6);
        assert!(rel(f.t1, 120e-6) < 1e-6);
        assert!(f.c.abs() < 1e-6);
    }

    #[test]
    fn flat_trace_is_degenerate() {
        let tr = DecayTrace {
            kind: TraceKind::T1,
            delays: linspace(0.0, 1e-4, 20),
            populations: vec![0.3; 20],
            timestamp: 0.0,
            label: String::new(),
        };
        assert_eq!(fit_t1(&tr).unwrap_err(), FitError::DegenerateAmplitude);
    }

    #[test]
    fn noiseless_ramsey_recovery() {
        let tr = synth_trace(&spec(
            SynthModel::Ramsey {
                a: 0.5,
                t2: 80e-6,
                f: 50e3,
                phi: 0.0,
                b: 0.0,
                c: 0.5,
            },
            linspace(0.0, 240e-6, 121),
            0.0,
        ));
        let f = fit_ramsey(&tr).unwrap();
        assert!(rel(f.a, 0.5) < 1e-6, "{f:?}");
        assert!(rel(f.t2, 80e-6) < 1e-6);
        assert!(rel(f.f, 50e3) < 1e-6);
        assert!(f.phi.abs() < 1e-6);
        assert!(f.b.abs() < 1e-6);
        assert!(rel(f.c, 0.5) < 1e-6);
        assert!(!f.decay_unresolved);
    }

    #[test]
    fn undecaying_fringe_is_flagged() {
        let span = 240e-6;
        let tr = synth_trace(&spec(
            SynthModel::Ramsey {
                a: 0.5,
                t2: 1e6 * span,
                f: 50e3,
                phi: 0.3,
                b: 0.0,
                c: 0.5,
            },
            linspace(0.0, span, 121),
            0.0,
        ));
        let f = fit_ramsey(&tr).unwrap();
        assert!(f.t2 > 100.0 * span);
        assert!(f.decay_unresolved);
    }

    #[test]
    fn noise_only_has_no_fringe() {
        let tr = synth_trace(&spec(
            SynthModel::Ramsey {
                a: 0.0,
                t2: 80e-6,
                f: 50e3,
                phi: 0.0,
                b: 0.0,
                c: 0.5,
            },
            linspace(0.0, 240e-6, 121),
            0.02,
        ));
        assert!(matches!(fit_ramsey(&tr), Err(FitError::NoFringe { .. })));
    }

    #[test]
    fn wrong_kind_rejected() {
        let tr = synth_trace(&spec(
            SynthModel::T1 {
                a: 1.0,
                t1: 1e-4,
                c: 0.0,
            },
            linspace(0.0, 5e-4, 40),
            0.0,
        ));
        assert!(matches!(fit_ramsey(&tr), Err(FitError::WrongKind { .. })));
    }
}
