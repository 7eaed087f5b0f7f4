//! Report bundles, scenario comparison and table rendering.
//!
//! Human tables use fixed units per row: W at 50K and 4K, mW at the Still,
//! µW at CP and MXC for loads; K down to the Still and mK below for
//! temperatures. The machine form is comma-separated with full precision.

use std::fmt::Write as _;

use serde::Serialize;

use crate::data::DataStore;
use crate::error::{Error, NoiseError};
use crate::noise::{
    effective_temperature, infer_source_temperature, ChainItem, EffectiveTemperature, NoiseChain,
    OccupationState, SourceInference,
};
use crate::scenario::{Parameters, Scenario};
use crate::thermal::{solve_steady_state, SolverOptions, Stage, ThermalReport};
use crate::units::format_sig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Significant digits used by the human tables unless asked otherwise.
pub const DEFAULT_DIGITS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub tool_version: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub capacity: String,
    pub assumption_flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmContribution {
    pub label: String,
    /// Occupation the coupled arm adds to the main line.
    pub occupation: f64,
    pub temperature: EffectiveTemperature,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NoiseOutcome {
    Inferred(SourceInference),
    Unreachable {
        floor_occupation: f64,
        floor_temperature: f64,
    },
    Failed {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseResult {
    pub chain: String,
    /// K
    pub target: f64,
    /// Hz
    pub frequency: f64,
    pub total_attenuation_db: f64,
    pub arm_contributions: Vec<ArmContribution>,
    pub outcome: NoiseOutcome,
}

impl NoiseResult {
    pub fn source_temperature(&self) -> Option<f64> {
        match &self.outcome {
            NoiseOutcome::Inferred(inf) => Some(inf.source_temperature.kelvin()),
            _ => None,
        }
    }
}

/// Infers the source temperature that produces `target` (K) at the end of
/// `chain`. Failures are recorded in the outcome rather than returned.
pub fn infer_chain(name: &str, chain: &NoiseChain, target: f64) -> NoiseResult {
    let mut arm_contributions = Vec::new();
    for item in &chain.items {
        if let ChainItem::Coupler(c) = item {
            if let Ok(state) = c.arm_contribution(chain.frequency) {
                if let Ok(t) = effective_temperature(&state) {
                    arm_contributions.push(ArmContribution {
                        label: c.label.clone(),
                        occupation: state.occupation,
                        temperature: t,
                    });
                }
            }
        }
    }
    let outcome = match OccupationState::thermal(target, chain.frequency)
        .and_then(|state| infer_source_temperature(&state, chain))
    {
        Ok(inf) => NoiseOutcome::Inferred(inf),
        Err(NoiseError::Unreachable {
            floor_occupation,
            floor_temperature_k,
        }) => NoiseOutcome::Unreachable {
            floor_occupation,
            floor_temperature: floor_temperature_k,
        },
        Err(e) => NoiseOutcome::Failed {
            message: e.to_string(),
        },
    };
    NoiseResult {
        chain: name.to_string(),
        target,
        frequency: chain.frequency,
        total_attenuation_db: chain.total_attenuation_db(),
        arm_contributions,
        outcome,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub metadata: Metadata,
    pub parameters: Parameters,
    pub thermal: ThermalReport,
    pub noise: Vec<NoiseResult>,
}

/// Solves the scenario and runs inference on every chain with a target.
pub fn run_report(
    scenario: &Scenario,
    store: &DataStore,
    options: &SolverOptions,
) -> Result<ReportBundle, Error> {
    let capacity = store.capacity(&scenario.capacity)?;
    let thermal = solve_steady_state(&scenario.wiring, store.materials(), &capacity, options)
        .map_err(|source| Error::Solve {
            scenario: scenario.name.clone(),
            source,
        })?;
    let noise = scenario
        .noise_chains
        .iter()
        .filter_map(|c| c.target.map(|t| infer_chain(&c.name, &c.chain, t)))
        .collect();
    Ok(ReportBundle {
        metadata: Metadata {
            tool_version: TOOL_VERSION.to_string(),
            scenario: scenario.name.clone(),
            scenario_hash: scenario.hash(),
            capacity: scenario.capacity.clone(),
            assumption_flags: scenario.assumptions.iter().cloned().collect(),
        },
        parameters: scenario.parameters(),
        thermal,
        noise,
    })
}

/// Display unit for loads on `stage`: (symbol, watts per unit).
pub fn load_unit(stage: Stage) -> (&'static str, f64) {
    match stage {
        Stage::RoomTemperature | Stage::Flange50K | Stage::Flange4K => ("W", 1.0),
        Stage::Still => ("mW", 1e-3),
        Stage::ColdPlate | Stage::MixingChamber => ("µW", 1e-6),
    }
}

/// Display unit for temperatures on `stage`: (symbol, kelvin per unit).
pub fn temperature_unit(stage: Stage) -> (&'static str, f64) {
    match stage {
        Stage::ColdPlate | Stage::MixingChamber => ("mK", 1e-3),
        _ => ("K", 1.0),
    }
}

fn num(value: f64, digits: Option<usize>) -> String {
    match digits {
        Some(d) => format_sig(value, d),
        None => format!("{value}"),
    }
}

fn table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |out: &mut String, cells: &[String]| {
        let mut s = String::new();
        for (i, cell) in cells.iter().enumerate() {
            let pad = widths[i] - cell.chars().count();
            if i == 0 {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        let _ = writeln!(out, "{}", s.trim_end());
    };
    line(out, header);
    let _ = writeln!(
        out,
        "{}",
        "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))
    );
    for r in rows {
        line(out, r);
    }
}

/// `digits = None` prints full precision.
pub fn render_human(bundle: &ReportBundle, digits: Option<usize>) -> String {
    let mut out = String::new();
    let m = &bundle.metadata;
    let _ = writeln!(out, "scenario   {}", m.scenario);
    let _ = writeln!(out, "capacity   {}", m.capacity);
    let _ = writeln!(out, "hash       {}", m.scenario_hash);
    let _ = writeln!(out, "version    {}", m.tool_version);
    let _ = writeln!(out);
    let _ = writeln!(out, "Flange loads");
    let header: Vec<String> = [
        "stage",
        "conduction",
        "rf",
        "optical",
        "fiber",
        "static",
        "total",
        "unit",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = bundle
        .thermal
        .stages
        .iter()
        .map(|s| {
            let (unit, scale) = load_unit(s.stage);
            let mut row = vec![s.stage.to_string()];
            for v in [
                s.conductive_load,
                s.rf_dissipation,
                s.optical_dissipation,
                s.fiber_conduction,
                s.static_load,
                s.total_load,
            ] {
                row.push(num(v / scale, digits));
            }
            row.push(unit.to_string());
            row
        })
        .collect();
    table(&mut out, &header, &rows);
    let _ = writeln!(out);
    let _ = writeln!(out, "Flange temperatures");
    let header: Vec<String> = ["stage", "boundary", "temperature", "unit"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = bundle
        .thermal
        .stages
        .iter()
        .map(|s| {
            let (unit, scale) = temperature_unit(s.stage);
            vec![
                s.stage.to_string(),
                match s.boundary {
                    crate::thermal::BoundaryKind::FixedTemperature => "fixed".into(),
                    crate::thermal::BoundaryKind::CapacityLimited => "capacity".into(),
                },
                num(s.temperature / scale, digits),
                unit.to_string(),
            ]
        })
        .collect();
    table(&mut out, &header, &rows);
    let c = &bundle.thermal.convergence;
    let _ = writeln!(
        out,
        "Still heater {} mW; converged in {} iterations ({:?}), max residual {:.1e} W",
        num(bundle.thermal.still_heater_required * 1e3, digits),
        c.iterations,
        c.method,
        c.max_residual
    );
    if !bundle.noise.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Noise inference");
        for n in &bundle.noise {
            out.push_str(&render_noise_human(n, digits));
        }
    }
    if !m.assumption_flags.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Assumptions");
        for f in &m.assumption_flags {
            let _ = writeln!(out, "  - {f}");
        }
    }
    out
}

/// One inference result as a line plus one line per coupled arm.
pub fn render_noise_human(n: &NoiseResult, digits: Option<usize>) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "{}: target {} mK at {} GHz through {} dB -> ",
        n.chain,
        num(n.target * 1e3, digits),
        num(n.frequency / 1e9, digits),
        num(n.total_attenuation_db, digits)
    );
    let _ = match &n.outcome {
        NoiseOutcome::Inferred(inf) => writeln!(
            out,
            "source {} K (floor {} mK)",
            match inf.source_temperature {
                EffectiveTemperature::Kelvin(t) => num(t, digits),
                EffectiveTemperature::ZeroLimit => "0 (zero limit)".into(),
            },
            num(inf.floor_temperature.kelvin() * 1e3, digits)
        ),
        NoiseOutcome::Unreachable {
            floor_temperature, ..
        } => writeln!(
            out,
            "unreachable, chain floor is {} mK",
            num(floor_temperature * 1e3, digits)
        ),
        NoiseOutcome::Failed { message } => writeln!(out, "failed: {message}"),
    };
    for a in &n.arm_contributions {
        let _ = writeln!(
            out,
            "  {} adds {} mK",
            a.label,
            num(a.temperature.kelvin() * 1e3, digits)
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Comma-separated `section,key,quantity,unit,value` rows, SI units, full
/// precision. Identical bundles give identical bytes.
pub fn render_machine(bundle: &ReportBundle) -> String {
    let mut out = String::from("section,key,quantity,unit,value\n");
    let m = &bundle.metadata;
    row(
        &mut out,
        "meta",
        "tool_version",
        "version",
        "",
        m.tool_version.clone(),
    );
    row(&mut out, "meta", "scenario", "name", "", m.scenario.clone());
    row(
        &mut out,
        "meta",
        "scenario_hash",
        "sha256",
        "",
        m.scenario_hash.clone(),
    );
    row(&mut out, "meta", "capacity", "name", "", m.capacity.clone());
    for s in &bundle.thermal.stages {
        let k = s.stage.label();
        row(
            &mut out,
            "load",
            k,
            "conduction",
            "W",
            s.conductive_load.to_string(),
        );
        row(&mut out, "load", k, "rf", "W", s.rf_dissipation.to_string());
        row(
            &mut out,
            "load",
            k,
            "optical",
            "W",
            s.optical_dissipation.to_string(),
        );
        row(
            &mut out,
            "load",
            k,
            "fiber",
            "W",
            s.fiber_conduction.to_string(),
        );
        row(
            &mut out,
            "load",
            k,
            "static",
            "W",
            s.static_load.to_string(),
        );
        row(&mut out, "load", k, "total", "W", s.total_load.to_string());
        row(&mut out, "load", k, "capacity", "W", s.capacity.to_string());
    }
    for s in &bundle.thermal.stages {
        row(
            &mut out,
            "temperature",
            s.stage.label(),
            "temperature",
            "K",
            s.temperature.to_string(),
        );
    }
    row(
        &mut out,
        "thermal",
        "Still",
        "heater_required",
        "W",
        bundle.thermal.still_heater_required.to_string(),
    );
    let c = &bundle.thermal.convergence;
    row(
        &mut out,
        "thermal",
        "solver",
        "iterations",
        "",
        c.iterations.to_string(),
    );
    row(
        &mut out,
        "thermal",
        "solver",
        "max_residual",
        "W",
        c.max_residual.to_string(),
    );
    for n in &bundle.noise {
        noise_rows(&mut out, n);
    }
    for f in &m.assumption_flags {
        row(&mut out, "assumption", "", "flag", "", f.clone());
    }
    out
}

fn row(out: &mut String, section: &str, key: &str, quantity: &str, unit: &str, value: String) {
    let _ = writeln!(
        out,
        "{section},{},{quantity},{unit},{}",
        csv_field(key),
        csv_field(&value)
    );
}

fn noise_rows(out: &mut String, n: &NoiseResult) {
    row(out, "noise", &n.chain, "target", "K", n.target.to_string());
    row(
        out,
        "noise",
        &n.chain,
        "frequency",
        "Hz",
        n.frequency.to_string(),
    );
    match &n.outcome {
        NoiseOutcome::Inferred(inf) => {
            let t = match inf.source_temperature {
                EffectiveTemperature::Kelvin(t) => t.to_string(),
                EffectiveTemperature::ZeroLimit => "zero_limit".into(),
            };
            row(out, "noise", &n.chain, "source_temperature", "K", t);
            row(
                out,
                "noise",
                &n.chain,
                "source_occupation",
                "",
                inf.source_occupation.to_string(),
            );
            row(
                out,
                "noise",
                &n.chain,
                "floor_temperature",
                "K",
                inf.floor_temperature.kelvin().to_string(),
            );
        }
        NoiseOutcome::Unreachable {
            floor_temperature, ..
        } => row(
            out,
            "noise",
            &n.chain,
            "unreachable_floor",
            "K",
            floor_temperature.to_string(),
        ),
        NoiseOutcome::Failed { message } => {
            row(out, "noise", &n.chain, "error", "", message.clone())
        }
    }
    for a in &n.arm_contributions {
        row(
            out,
            "noise",
            &format!("{}/{}", n.chain, a.label),
            "arm_contribution",
            "K",
            a.temperature.kelvin().to_string(),
        );
    }
}

/// Machine rows for a single inference, with the same header as bundles.
pub fn render_noise_machine(n: &NoiseResult) -> String {
    let mut out = String::from("section,key,quantity,unit,value\n");
    noise_rows(&mut out, n);
    out
}

/// Fraction of a stage's wiring load (everything but the static part) that
/// must be RF dissipation for the "attenuators dominate" note.
pub const ATTENUATOR_DOMINANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub stage: Stage,
    /// One per scenario, in argument order.
    pub loads: Vec<f64>,
    pub temperatures: Vec<f64>,
    /// first − other, for every scenario after the first.
    pub load_deltas: Vec<f64>,
    pub temperature_deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub scenarios: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    pub notes: Vec<String>,
}

pub fn compare(bundles: &[&ReportBundle]) -> Result<Comparison, Error> {
    if bundles.len() < 2 {
        return Err(Error::Invalid(
            "compare needs at least two scenarios".into(),
        ));
    }
    let stages: Vec<Stage> = bundles[0].thermal.stages.iter().map(|s| s.stage).collect();
    for b in &bundles[1..] {
        let other: Vec<Stage> = b.thermal.stages.iter().map(|s| s.stage).collect();
        if other != stages {
            return Err(Error::Invalid(format!(
                "stage sets differ between `{}` and `{}`",
                bundles[0].metadata.scenario, b.metadata.scenario
            )));
        }
    }
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (i, &stage) in stages.iter().enumerate() {
        let loads: Vec<f64> = bundles
            .iter()
            .map(|b| b.thermal.stages[i].total_load)
            .collect();
        let temperatures: Vec<f64> = bundles
            .iter()
            .map(|b| b.thermal.stages[i].temperature)
            .collect();
        let dominated = bundles.iter().all(|b| {
            let s = &b.thermal.stages[i];
            let wiring = s.total_load - s.static_load;
            s.rf_dissipation > 0.0 && s.rf_dissipation >= ATTENUATOR_DOMINANCE * wiring
        });
        if dominated {
            let shares: Vec<String> = bundles
                .iter()
                .map(|b| {
                    let s = &b.thermal.stages[i];
                    format!(
                        "{}%",
                        format_sig(100.0 * s.rf_dissipation / (s.total_load - s.static_load), 3)
                    )
                })
                .collect();
            notes.push(format!(
                "{stage}: attenuators dominate, RF dissipation is {} of the wiring load",
                shares.join(" / ")
            ));
        }
        rows.push(ComparisonRow {
            stage,
            load_deltas: loads[1..].iter().map(|l| loads[0] - l).collect(),
            temperature_deltas: temperatures[1..]
                .iter()
                .map(|t| temperatures[0] - t)
                .collect(),
            loads,
            temperatures,
        });
    }
    Ok(Comparison {
        scenarios: bundles
            .iter()
            .map(|b| b.metadata.scenario.clone())
            .collect(),
        rows,
        notes,
    })
}

pub fn render_comparison_human(cmp: &Comparison, digits: Option<usize>) -> String {
    let mut out = String::new();
    let first = &cmp.scenarios[0];
    for (title, temps) in [("Flange loads", false), ("Flange temperatures", true)] {
        let _ = writeln!(out, "{title}");
        let mut header = vec!["stage".to_string()];
        header.extend(cmp.scenarios.iter().cloned());
        header.extend(cmp.scenarios[1..].iter().map(|s| format!("{first} - {s}")));
        header.push("unit".into());
        let rows: Vec<Vec<String>> = cmp
            .rows
            .iter()
            .map(|r| {
                let (unit, scale) = if temps {
                    temperature_unit(r.stage)
                } else {
                    load_unit(r.stage)
                };
                let (values, deltas) = if temps {
                    (&r.temperatures, &r.temperature_deltas)
                } else {
                    (&r.loads, &r.load_deltas)
                };
                let mut row = vec![r.stage.to_string()];
                row.extend(values.iter().chain(deltas).map(|v| num(v / scale, digits)));
                row.push(unit.to_string());
                row
            })
            .collect();
        table(&mut out, &header, &rows);
        let _ = writeln!(out);
    }
    for n in &cmp.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}

pub fn render_comparison_machine(cmp: &Comparison) -> String {
    let mut out = String::from("stage,quantity,scenario,unit,value\n");
    for r in &cmp.rows {
        let k = r.stage.label();
        for (s, v) in cmp.scenarios.iter().zip(&r.loads) {
            let _ = writeln!(out, "{k},load,{},W,{v}", csv_field(s));
        }
        for (s, v) in cmp.scenarios.iter().zip(&r.temperatures) {
            let _ = writeln!(out, "{k},temperature,{},K,{v}", csv_field(s));
        }
        for (s, v) in cmp.scenarios[1..].iter().zip(&r.load_deltas) {
            let _ = writeln!(out, "{k},load_delta,{},W,{v}", csv_field(s));
        }
        for (s, v) in cmp.scenarios[1..].iter().zip(&r.temperature_deltas) {
            let _ = writeln!(out, "{k},temperature_delta,{},K,{v}", csv_field(s));
        }
    }
    for n in &cmp.notes {
        let _ = writeln!(out, ",note,,,{}", csv_field(n));
    }
    out
}
