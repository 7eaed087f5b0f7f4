use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    optical_dissipation, rf_dissipation_profile, BoundaryKind, CapacityModel, MaterialLibrary,
    OpticalLink, Stage, StageSettings, StageTemperatures, TransmissionLine,
};
use crate::error::ThermalError;

/// Everything the thermal solver needs to know about one wiring layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wiring {
    /// One entry per stage, hot to cold.
    pub stages: [StageSettings; 6],
    pub lines: Vec<TransmissionLine>,
    pub optical_links: Vec<OpticalLink>,
}

impl Default for Wiring {
    fn default() -> Self {
        Wiring {
            stages: Stage::ALL.map(StageSettings::default_for),
            lines: Vec::new(),
            optical_links: Vec::new(),
        }
    }
}

impl Wiring {
    pub fn settings(&self, stage: Stage) -> &StageSettings {
        &self.stages[stage.index()]
    }

    pub fn settings_mut(&mut self, stage: Stage) -> &mut StageSettings {
        &mut self.stages[stage.index()]
    }

    fn is_free(&self, stage: Stage) -> bool {
        self.settings(stage).boundary == BoundaryKind::CapacityLimited
    }
}

/// Load components deposited on one stage, W.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageLoad {
    pub conduction: f64,
    pub rf: f64,
    pub optical: f64,
    pub fiber: f64,
    pub static_load: f64,
}

impl StageLoad {
    pub fn total(&self) -> f64 {
        self.conduction + self.rf + self.optical + self.fiber + self.static_load
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LoadBreakdown {
    pub stages: [StageLoad; 6],
}

impl LoadBreakdown {
    pub fn get(&self, stage: Stage) -> &StageLoad {
        &self.stages[stage.index()]
    }

    pub fn total(&self, stage: Stage) -> f64 {
        self.get(stage).total()
    }
}

/// Temperature-independent parts of the load: RF, optical and static.
fn fixed_loads(wiring: &Wiring) -> Result<LoadBreakdown, ThermalError> {
    let mut out = LoadBreakdown::default();
    for line in &wiring.lines {
        if line.rf_plan.is_some() {
            let profile = rf_dissipation_profile(line)?;
            for stage in Stage::ALL {
                out.stages[stage.index()].rf += profile.at(stage);
            }
        }
    }
    for link in &wiring.optical_links {
        let d = optical_dissipation(link);
        out.stages[d.stage.index()].optical += d.photodiode;
        out.stages[d.stage.index()].fiber += d.fiber;
    }
    for s in &wiring.stages {
        out.stages[s.stage.index()].static_load += s.static_load;
    }
    Ok(out)
}

/// Conduction into each stage through the segments that end there.
fn conduction(
    wiring: &Wiring,
    materials: &MaterialLibrary,
    temps: &StageTemperatures,
) -> Result<[f64; 6], ThermalError> {
    let mut out = [0.0; 6];
    for line in &wiring.lines {
        let count = f64::from(line.count);
        for seg in &line.segments {
            let q = materials.conduction_load(seg, temps[seg.from_stage], temps[seg.to_stage])?;
            out[seg.to_stage.index()] += count * q;
        }
    }
    Ok(out)
}

/// Per-stage loads for the wiring at the given temperatures. The Still entry
/// is the external load only; heater power is not included.
pub fn stage_load_summary(
    wiring: &Wiring,
    materials: &MaterialLibrary,
    temps: &StageTemperatures,
) -> Result<LoadBreakdown, ThermalError> {
    if !temps.is_ordered() {
        return Err(ThermalError::UnorderedTemperatures);
    }
    let mut out = fixed_loads(wiring)?;
    let cond = conduction(wiring, materials, temps)?;
    for stage in Stage::ALL {
        out.stages[stage.index()].conduction = cond[stage.index()];
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Damped fixed point, falling back to Newton if it stalls.
    #[default]
    Auto,
    FixedPoint,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Largest accepted |load − capacity| per stage, W.
    pub tolerance: f64,
    /// Largest accepted relative temperature change in the final iterate.
    pub step_tolerance: f64,
    pub max_iterations: usize,
    pub damping: f64,
    pub method: SolveMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 10e-6,
            step_tolerance: 1e-10,
            max_iterations: 200,
            damping: 0.5,
            method: SolveMethod::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub iterations: usize,
    /// Largest |load − capacity| over capacity-limited stages, W.
    pub max_residual: f64,
    pub residuals: Vec<(Stage, f64)>,
    pub method: SolveMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: Stage,
    pub boundary: BoundaryKind,
    pub temperature: f64,
    pub conductive_load: f64,
    pub rf_dissipation: f64,
    /// Photodiode power only; fibre conduction is reported separately.
    pub optical_dissipation: f64,
    pub fiber_conduction: f64,
    pub static_load: f64,
    pub total_load: f64,
    pub capacity: f64,
    /// Extra power a fixed-temperature stage needs to hold its temperature.
    pub heater_power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermalReport {
    /// The five cooled flanges, hot to cold.
    pub stages: Vec<StageReport>,
    pub temperatures: StageTemperatures,
    pub still_heater_required: f64,
    pub convergence: Convergence,
}

impl ThermalReport {
    pub fn stage(&self, stage: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn load(&self, stage: Stage) -> f64 {
        self.stage(stage).map_or(0.0, |s| s.total_load)
    }
}

/// The stages whose temperature the solver looks for.
fn free_stages(wiring: &Wiring) -> Result<Vec<Stage>, ThermalError> {
    let mut free = Vec::new();
    for stage in Stage::ALL {
        if wiring.is_free(stage) {
            if matches!(stage, Stage::RoomTemperature | Stage::Still) {
                return Err(ThermalError::UnsupportedBoundary(stage));
            }
            free.push(stage);
        }
    }
    Ok(free)
}

struct Problem<'a> {
    wiring: &'a Wiring,
    materials: &'a MaterialLibrary,
    capacity: &'a CapacityModel,
    fixed: LoadBreakdown,
    free: Vec<Stage>,
}

struct Evaluation {
    loads: [f64; 6],
    residuals: Vec<f64>,
}

impl Problem<'_> {
    fn evaluate(&self, temps: &StageTemperatures) -> Result<Evaluation, ThermalError> {
        if !temps.is_ordered() {
            return Err(ThermalError::UnorderedTemperatures);
        }
        let cond = conduction(self.wiring, self.materials, temps)?;
        let mut loads = [0.0; 6];
        for stage in Stage::ALL {
            loads[stage.index()] = self.fixed.total(stage) + cond[stage.index()];
        }
        let residuals = self
            .free
            .iter()
            .map(|&s| Ok(loads[s.index()] - self.capacity.capacity(s, temps)?))
            .collect::<Result<_, ThermalError>>()?;
        Ok(Evaluation { loads, residuals })
    }

    /// Temperatures at which each free stage would carry `loads`, holding
    /// the other stages at `temps`.
    fn targets(
        &self,
        temps: &StageTemperatures,
        loads: &[f64; 6],
    ) -> Result<StageTemperatures, ThermalError> {
        let mut out = *temps;
        let pt = &self.capacity.pulse_tube;
        let l = |s: Stage| loads[s.index()];
        match (
            self.wiring.is_free(Stage::Flange50K),
            self.wiring.is_free(Stage::Flange4K),
        ) {
            (true, true) => {
                let (t50, t4) = pt.invert(l(Stage::Flange50K), l(Stage::Flange4K))?;
                out.set(Stage::Flange50K, t50);
                out.set(Stage::Flange4K, t4);
            }
            (true, false) => out.set(
                Stage::Flange50K,
                pt.t50_given_t4(temps[Stage::Flange4K], l(Stage::Flange50K))?,
            ),
            (false, true) => out.set(
                Stage::Flange4K,
                pt.t4_given_t50(temps[Stage::Flange50K], l(Stage::Flange4K))?,
            ),
            (false, false) => {}
        }
        if self.wiring.is_free(Stage::ColdPlate) {
            let t = self
                .capacity
                .cold_plate
                .invert(l(Stage::ColdPlate), temps[Stage::Still])?;
            out.set(Stage::ColdPlate, t);
        }
        if self.wiring.is_free(Stage::MixingChamber) {
            let t = self
                .capacity
                .mixing_chamber
                .invert(l(Stage::MixingChamber), temps[Stage::ColdPlate])?;
            out.set(Stage::MixingChamber, t);
        }
        Ok(out)
    }

    fn no_load_start(&self) -> Result<StageTemperatures, ThermalError> {
        let mut temps =
            StageTemperatures(self.wiring.stages.each_ref().map(|s| s.nominal_temperature));
        // Hot to cold so each ceiling is already settled.
        temps = self.targets(&temps, &[0.0; 6])?;
        temps = self.targets(&temps, &[0.0; 6])?;
        Ok(temps)
    }

    fn max_step(&self, a: &StageTemperatures, b: &StageTemperatures) -> f64 {
        self.free
            .iter()
            .map(|&s| ((a[s] - b[s]) / a[s].abs().max(f64::MIN_POSITIVE)).abs())
            .fold(0.0, f64::max)
    }
}

enum Outcome {
    Converged(StageTemperatures, usize),
    Stalled(StageTemperatures, usize, Option<ThermalError>),
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn fixed_point(
    problem: &Problem<'_>,
    start: StageTemperatures,
    options: &SolverOptions,
) -> Outcome {
    let mut temps = start;
    for iteration in 1..=options.max_iterations {
        let step = problem
            .evaluate(&temps)
            .and_then(|e| Ok((problem.targets(&temps, &e.loads)?, e)));
        let (target, eval) = match step {
            Ok(v) => v,
            Err(e) => return Outcome::Stalled(temps, iteration, Some(e)),
        };
        if max_abs(&eval.residuals) <= options.tolerance
            && problem.max_step(&temps, &target) <= options.step_tolerance
        {
            return Outcome::Converged(temps, iteration);
        }
        let mut next = temps;
        for &s in &problem.free {
            next.set(s, temps[s] + options.damping * (target[s] - temps[s]));
        }
        temps = next;
    }
    Outcome::Stalled(temps, options.max_iterations, None)
}

fn newton(
    problem: &Problem<'_>,
    start: StageTemperatures,
    options: &SolverOptions,
    used: usize,
) -> Outcome {
    let n = problem.free.len();
    let mut temps = start;
    let first = match problem.evaluate(&temps) {
        Ok(e) => e,
        Err(e) => return Outcome::Stalled(temps, used, Some(e)),
    };
    // Residuals span watts to microwatts; scale each by its own load.
    let scales: Vec<f64> = problem
        .free
        .iter()
        .map(|s| first.loads[s.index()].abs().max(1e-9))
        .collect();
    let scaled = |r: &[f64]| DVector::from_iterator(n, r.iter().zip(&scales).map(|(x, s)| x / s));
    let mut residual = scaled(&first.residuals);
    let mut raw = first.residuals;
    let mut iteration = used;
    while iteration < options.max_iterations {
        iteration += 1;
        let mut jac = DMatrix::zeros(n, n);
        for (j, &sj) in problem.free.iter().enumerate() {
            let h = 1e-7 * temps[sj];
            let mut probe = temps;
            probe.set(sj, temps[sj] - h);
            let col = match problem.evaluate(&probe) {
                Ok(e) => (residual.clone() - scaled(&e.residuals)) / h,
                Err(e) => return Outcome::Stalled(temps, iteration, Some(e)),
            };
            jac.set_column(j, &col);
        }
        let Some(dx) = jac.lu().solve(&(-&residual)) else {
            return Outcome::Stalled(temps, iteration, None);
        };
        let norm = residual.norm();
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = temps;
            for (j, &s) in problem.free.iter().enumerate() {
                trial.set(s, temps[s] + lambda * dx[j]);
            }
            if let Ok(e) = problem.evaluate(&trial) {
                let r = scaled(&e.residuals);
                if r.norm() < norm || r.norm() == 0.0 {
                    accepted = Some((trial, r, e.residuals));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((trial, r, raw_r)) = accepted else {
            if max_abs(&raw) <= options.tolerance {
                return Outcome::Converged(temps, iteration);
            }
            return Outcome::Stalled(temps, iteration, None);
        };
        let step = problem.max_step(&temps, &trial);
        temps = trial;
        residual = r;
        raw = raw_r;
        if max_abs(&raw) <= options.tolerance && step <= options.step_tolerance {
            return Outcome::Converged(temps, iteration);
        }
    }
    Outcome::Stalled(temps, iteration, None)
}

/// Finds the stage temperatures at which every capacity-limited stage
/// carries its load, starting from the no-load operating point.
pub fn solve_steady_state(
    wiring: &Wiring,
    materials: &MaterialLibrary,
    capacity: &CapacityModel,
    options: &SolverOptions,
) -> Result<ThermalReport, ThermalError> {
    let problem = Problem {
        wiring,
        materials,
        capacity,
        fixed: fixed_loads(wiring)?,
        free: free_stages(wiring)?,
    };
    let start = problem.no_load_start()?;
    let (outcome, used) = match options.method {
        SolveMethod::FixedPoint => (
            fixed_point(&problem, start, options),
            SolveMethod::FixedPoint,
        ),
        SolveMethod::Newton => (newton(&problem, start, options, 0), SolveMethod::Newton),
        SolveMethod::Auto => match fixed_point(&problem, start, options) {
            Outcome::Converged(t, i) => (Outcome::Converged(t, i), SolveMethod::FixedPoint),
            Outcome::Stalled(t, i, err) => {
                let retry_from = if problem.evaluate(&t).is_ok() {
                    t
                } else {
                    start
                };
                let outcome = match newton(&problem, retry_from, options, 0) {
                    Outcome::Converged(t, j) => Outcome::Converged(t, i + j),
                    Outcome::Stalled(t2, j, err2) => Outcome::Stalled(t2, i + j, err.or(err2)),
                };
                (outcome, SolveMethod::Newton)
            }
        },
    };
    let (temps, iterations) = match outcome {
        Outcome::Converged(t, i) => (t, i),
        Outcome::Stalled(_, _, Some(err)) => return Err(err),
        Outcome::Stalled(t, i, None) => {
            let residuals = problem
                .evaluate(&t)
                .map(|e| e.residuals)
                .unwrap_or_else(|_| vec![f64::NAN; problem.free.len()]);
            let (worst, max) = problem.free.iter().zip(&residuals).fold(
                (Stage::MixingChamber, 0.0f64),
                |acc, (&s, &r)| {
                    if r.abs() > acc.1 || r.is_nan() {
                        (s, r.abs())
                    } else {
                        acc
                    }
                },
            );
            return Err(ThermalError::NonConvergence {
                iterations: i,
                max_residual: max,
                worst_stage: worst,
                residuals: problem.free.iter().copied().zip(residuals).collect(),
            });
        }
    };
    build_report(&problem, temps, iterations, used)
}

fn build_report(
    problem: &Problem<'_>,
    temps: StageTemperatures,
    iterations: usize,
    method: SolveMethod,
) -> Result<ThermalReport, ThermalError> {
    let eval = problem.evaluate(&temps)?;
    let breakdown = stage_load_summary(problem.wiring, problem.materials, &temps)?;
    let mut stages = Vec::with_capacity(5);
    let mut still_heater_required = 0.0;
    for stage in Stage::FLANGES {
        let load = breakdown.get(stage);
        let capacity = problem.capacity.capacity(stage, &temps)?;
        let boundary = problem.wiring.settings(stage).boundary;
        let heater_power = match boundary {
            BoundaryKind::FixedTemperature => {
                let heater = capacity - load.total();
                if heater < 0.0 {
                    return Err(ThermalError::CapacityInsufficient {
                        stage,
                        load: load.total(),
                        max_capacity: capacity,
                    });
                }
                if stage == Stage::Still {
                    still_heater_required = heater;
                }
                Some(heater)
            }
            BoundaryKind::CapacityLimited => None,
        };
        stages.push(StageReport {
            stage,
            boundary,
            temperature: temps[stage],
            conductive_load: load.conduction,
            rf_dissipation: load.rf,
            optical_dissipation: load.optical,
            fiber_conduction: load.fiber,
            static_load: load.static_load,
            total_load: load.total(),
            capacity,
            heater_power,
        });
    }
    let residuals: Vec<(Stage, f64)> = problem.free.iter().copied().zip(eval.residuals).collect();
    Ok(ThermalReport {
        stages,
        temperatures: temps,
        still_heater_required,
        convergence: Convergence {
            iterations,
            max_residual: residuals.iter().fold(0.0, |m, (_, r)| m.max(r.abs())),
            residuals,
            method,
        },
    })
}
