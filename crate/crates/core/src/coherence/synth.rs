use std::f64::consts::{FRAC_PI_2, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DecayTrace, TraceKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SynthModel {
    T1 {
        a: f64,
        t1: f64,
        c: f64,
    },
    Ramsey {
        a: f64,
        t2: f64,
        f: f64,
        phi: f64,
        b: f64,
        c: f64,
    },
    /// Ramsey sequence built from two rotations of angle θ instead of π/2:
    /// P1 = sin²θ · ½·(1 + e^{−t/T2}·cos(2πft + φ)). θ moves linearly from
    /// `theta` by `theta_drift` over the acquisition of the trace, standing
    /// in for a drifting drive power.
    RamseyRotation {
        theta: f64,
        theta_drift: f64,
        t2: f64,
        f: f64,
        phi: f64,
    },
}

impl SynthModel {
    pub fn kind(&self) -> TraceKind {
        match self {
            SynthModel::T1 { .. } => TraceKind::T1,
            _ => TraceKind::Ramsey,
        }
    }

    /// Noiseless population at `delay`; `progress` ∈ [0, 1] is how far
    /// through the acquisition this point is.
    pub fn evaluate(&self, delay: f64, progress: f64) -> f64 {
        match *self {
            SynthModel::T1 { a, t1, c } => a * (-delay / t1).exp() + c,
            SynthModel::Ramsey {
                a,
                t2,
                f,
                phi,
                b,
                c,
            } => a * (-delay / t2).exp() * (TAU * f * delay + phi).cos() + b * delay + c,
            SynthModel::RamseyRotation {
                theta,
                theta_drift,
                t2,
                f,
                phi,
            } => {
                let angle = theta + theta_drift * progress;
                let contrast = angle.sin().powi(2);
                0.5 * contrast * (1.0 + (-delay / t2).exp() * (TAU * f * delay + phi).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(flatten)]
    pub model: SynthModel,
    pub delays: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub timestamp: f64,
    #[serde(default)]
    pub label: String,
}

pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn noise(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

fn generate(
    model: &SynthModel,
    delays: &[f64],
    sigma: f64,
    rng: &mut ChaCha8Rng,
    timestamp: f64,
    label: &str,
) -> DecayTrace {
    let dist = noise(sigma);
    let n = delays.len();
    let (lo, hi) = DecayTrace::POPULATION_RANGE;
    let populations = delays
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let progress = if n > 1 {
                i as f64 / (n - 1) as f64
            } else {
                0.0
            };
            let clean = model.evaluate(d, progress);
            match &dist {
                Some(nd) => (clean + nd.sample(rng)).clamp(lo, hi),
                None => clean,
            }
        })
        .collect();
    DecayTrace {
        kind: model.kind(),
        delays: delays.to_vec(),
        populations,
        timestamp,
        label: label.to_string(),
    }
}

/// Deterministic for a given seed; exactly the model when `noise_sigma` is 0.
pub fn synth_trace(spec: &SynthSpec) -> DecayTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    generate(
        &spec.model,
        &spec.delays,
        spec.noise_sigma,
        &mut rng,
        spec.timestamp,
        &spec.label,
    )
}

/// An interleaved T1 / Ramsey measurement loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub label: String,
    /// s
    pub duration: f64,
    /// s between consecutive T1/Ramsey pairs.
    pub cycle: f64,
    pub start_timestamp: f64,
    pub t1_mean: f64,
    pub t1_sd: f64,
    pub tphi_mean: f64,
    pub tphi_sd: f64,
    /// Ramsey detuning, Hz.
    pub detuning: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub t1_points: usize,
    pub ramsey_points: usize,
    /// Rotation-angle drift over each Ramsey acquisition, rad.
    #[serde(default)]
    pub theta_drift: f64,
}

impl BatchSpec {
    pub fn cycles(&self) -> usize {
        (self.duration / self.cycle).floor() as usize
    }
}

/// T1 and T_φ are drawn per cycle; T2 follows from 1/T2 = 1/(2T1) + 1/T_φ.
/// Draws are truncated away from non-physical values.
pub fn synth_batch(spec: &BatchSpec) -> Vec<DecayTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draw = |rng: &mut ChaCha8Rng, mean: f64, sd: f64| -> f64 {
        let dist = noise(sd);
        loop {
            let v = mean + dist.as_ref().map_or(0.0, |d| d.sample(rng));
            if v > 0.2 * mean {
                return v;
            }
        }
    };
    let t2_mean = 1.0 / (0.5 / spec.t1_mean + 1.0 / spec.tphi_mean);
    let t1_delays = linspace(0.0, 5.0 * spec.t1_mean, spec.t1_points);
    let ramsey_delays = linspace(0.0, 3.0 * t2_mean, spec.ramsey_points);
    let mut out = Vec::with_capacity(2 * spec.cycles());
    for k in 0..spec.cycles() {
        let ts = spec.start_timestamp + k as f64 * spec.cycle;
        let t1 = draw(&mut rng, spec.t1_mean, spec.t1_sd);
        let tphi = draw(&mut rng, spec.tphi_mean, spec.tphi_sd);
        let t2 = 1.0 / (0.5 / t1 + 1.0 / tphi);
        let phi = rng.random_range(-0.2..0.2);
        out.push(generate(
            &SynthModel::T1 { a: 1.0, t1, c: 0.0 },
            &t1_delays,
            spec.noise_sigma,
            &mut rng,
            ts,
            &spec.label,
        ));
        out.push(generate(
            &SynthModel::RamseyRotation {
                theta: FRAC_PI_2,
                theta_drift: spec.theta_drift,
                t2,
                f: spec.detuning,
                phi,
            },
            &ramsey_delays,
            spec.noise_sigma,
            &mut rng,
            ts + 0.5 * spec.cycle,
            &spec.label,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_is_exact_and_seeded_is_repeatable() {
        let spec = SynthSpec {
            model: SynthModel::T1 {
                a: 1.0,
                t1: 50e-6,
                c: 0.02,
            },
            delays: linspace(0.0, 2e-4, 11),
            noise_sigma: 0.0,
            seed: 1,
            timestamp: 0.0,
            label: String::new(),
        };
        let tr = synth_trace(&spec);
        for (d, p) in tr.delays.iter().zip(&tr.populations) {
            assert_eq!(*p, (-d / 50e-6).exp() + 0.02);
        }
        let noisy = SynthSpec {
            noise_sigma: 0.02,
            ..spec
        };
        assert_eq!(synth_trace(&noisy), synth_trace(&noisy));
        let other = SynthSpec {
            seed: 2,
            ..noisy.clone()
        };
        assert_ne!(synth_trace(&noisy), synth_trace(&other));
    }

    #[test]
    fn rotation_error_keeps_minima_and_lowers_maxima() {
        let under = SynthModel::RamseyRotation {
            theta: std::f64::consts::FRAC_PI_4,
            theta_drift: 0.0,
            t2: 1e9,
            f: 1.0,
            phi: 0.0,
        };
        // cos = −1 at t = 0.5, +1 at t = 1
        assert!(under.evaluate(0.5, 0.0).abs() < 1e-9);
        assert!((under.evaluate(1.0, 0.0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn batch_shape() {
        let spec = BatchSpec {
            label: "optical".into(),
            duration: 3600.0,
            cycle: 240.0,
            start_timestamp: 1.7e9,
            t1_mean: 120e-6,
            t1_sd: 10e-6,
            tphi_mean: 65e-6,
            tphi_sd: 5e-6,
            detuning: 50e3,
            noise_sigma: 0.02,
            seed: 3,
            t1_points: 41,
            ramsey_points: 101,
            theta_drift: 0.0,
        };
        let traces = synth_batch(&spec);
        assert_eq!(traces.len(), 30);
        assert_eq!(traces[0].kind, TraceKind::T1);
        assert_eq!(traces[1].kind, TraceKind::Ramsey);
        assert!(traces.iter().all(|t| t.validate().is_ok()));
    }
}
