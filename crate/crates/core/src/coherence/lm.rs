//! Small dense Levenberg–Marquardt solver for the decay models.

use nalgebra::{DMatrix, DVector};

pub(crate) trait Model {
    fn n_params(&self) -> usize;
    fn value(&self, p: &[f64], t: f64) -> f64;
    /// Partial derivatives with respect to each parameter at `t`.
    fn gradient(&self, p: &[f64], t: f64, out: &mut [f64]);
}

#[derive(Debug, Clone)]
pub(crate) struct LmFit {
    pub params: Vec<f64>,
    /// s²·(JᵀJ)⁻¹ with s² = SSR / (n − p).
    pub covariance: DMatrix<f64>,
    pub ssr: f64,
    pub iterations: usize,
}

pub(crate) struct LmOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 500,
            step_tolerance: 1e-13,
        }
    }
}

fn residuals(model: &dyn Model, p: &[f64], t: &[f64], y: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        t.len(),
        t.iter().zip(y).map(|(&t, &y)| y - model.value(p, t)),
    )
}

fn jacobian(model: &dyn Model, p: &[f64], t: &[f64]) -> DMatrix<f64> {
    let m = model.n_params();
    let mut jac = DMatrix::zeros(t.len(), m);
    let mut g = vec![0.0; m];
    for (i, &ti) in t.iter().enumerate() {
        model.gradient(p, ti, &mut g);
        for (j, gj) in g.iter().enumerate() {
            jac[(i, j)] = *gj;
        }
    }
    jac
}

/// Returns `None` when the iteration limit is reached without the step
/// shrinking below tolerance.
pub(crate) fn fit(
    model: &dyn Model,
    t: &[f64],
    y: &[f64],
    start: &[f64],
    options: &LmOptions,
) -> Option<LmFit> {
    let m = model.n_params();
    let n = t.len();
    let mut p = start.to_vec();
    let mut r = residuals(model, &p, t, y);
    let mut ssr = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let floor = 1e-30 * n as f64;

    while iterations < options.max_iterations {
        iterations += 1;
        if ssr <= floor {
            converged = true;
            break;
        }
        let jac = jacobian(model, &p, t);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        let mut small_step = false;
        for _ in 0..60 {
            let mut a = jtj.clone();
            for j in 0..m {
                a[(j, j)] += lambda * jtj[(j, j)].max(1e-300);
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            let r_trial = residuals(model, &trial, t, y);
            let ssr_trial = r_trial.norm_squared();
            let scale = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            small_step = delta.norm() <= options.step_tolerance * (scale + options.step_tolerance);
            if ssr_trial.is_finite() && ssr_trial <= ssr {
                let gain = ssr - ssr_trial;
                p = trial;
                r = r_trial;
                ssr = ssr_trial;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if small_step || gain <= 1e-15 * ssr {
                    converged = true;
                }
                break;
            }
            if small_step {
                break;
            }
            lambda *= 10.0;
        }
        if converged || (!improved && small_step) {
            converged = true;
            break;
        }
        if !improved {
            break;
        }
    }
    if !converged {
        return None;
    }

    let jac = jacobian(model, &p, t);
    let jtj = jac.transpose() * &jac;
    let dof = (n - m).max(1) as f64;
    let covariance = jtj
        .try_inverse()
        .map(|inv| inv * (ssr / dof))
        .unwrap_or_else(|| DMatrix::from_element(m, m, f64::NAN));
    Some(LmFit {
        params: p,
        covariance,
        ssr,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Line;

    impl Model for Line {
        fn n_params(&self) -> usize {
            2
        }
        fn value(&self, p: &[f64], t: f64) -> f64 {
            p[0] * t + p[1]
        }
        fn gradient(&self, _p: &[f64], t: f64, out: &mut [f64]) {
            out[0] = t;
            out[1] = 1.0;
        }
    }

    #[test]
    fn recovers_a_line() {
        let t: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.0 * t - 1.0).collect();
        let f = fit(&Line, &t, &y, &[0.0, 0.0], &LmOptions::default()).unwrap();
        assert!((f.params[0] - 2.0).abs() < 1e-10);
        assert!((f.params[1] + 1.0).abs() < 1e-10);
    }
}
