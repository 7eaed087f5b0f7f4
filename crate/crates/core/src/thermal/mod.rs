//! Staged thermal network of a dilution refrigerator.
//!
//! The refrigerator is a chain of flanges from room temperature down to the
//! mixing chamber. Each transmission line and optical link deposits heat on
//! the flanges it is anchored to: conduction through cable segments (taken
//! at the colder end of each segment), time-averaged RF dissipation in
//! attenuators and lossy cable, and optical power absorbed by photodiodes.
//! Capacity-limited flanges settle where their cooling capacity matches the
//! load; fixed-temperature flanges report the heater power that keeps them
//! in place.

mod capacity;
mod materials;
mod network;
mod optical;
mod rf;

pub use capacity::{
    calibrate, CalibrationTargets, CapacityModel, ColdPlateCapacity, MixingChamberCapacity,
    PulseTubeMap, StillCapacity,
};
pub use materials::{CoaxMaterial, MaterialLibrary};
pub use network::{
    solve_steady_state, stage_load_summary, Convergence, LoadBreakdown, SolveMethod, SolverOptions,
    StageLoad, StageReport, ThermalReport, Wiring,
};
pub use optical::{optical_dissipation, OpticalDeposit};
pub use rf::{rf_dissipation_profile, RfProfile};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Refrigerator flanges, ordered from hottest to coldest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "RT")]
    RoomTemperature,
    #[serde(rename = "50K")]
    Flange50K,
    #[serde(rename = "4K")]
    Flange4K,
    #[serde(rename = "Still")]
    Still,
    #[serde(rename = "CP")]
    ColdPlate,
    #[serde(rename = "MXC")]
    MixingChamber,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::RoomTemperature,
        Stage::Flange50K,
        Stage::Flange4K,
        Stage::Still,
        Stage::ColdPlate,
        Stage::MixingChamber,
    ];

    /// The five cooled flanges reported in load and temperature tables.
    pub const FLANGES: [Stage; 5] = [
        Stage::Flange50K,
        Stage::Flange4K,
        Stage::Still,
        Stage::ColdPlate,
        Stage::MixingChamber,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stage::RoomTemperature => "RT",
            Stage::Flange50K => "50K",
            Stage::Flange4K => "4K",
            Stage::Still => "Still",
            Stage::ColdPlate => "CP",
            Stage::MixingChamber => "MXC",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Next colder stage.
    pub fn below(self) -> Option<Stage> {
        Stage::ALL.get(self.index() + 1).copied()
    }

    /// Next hotter stage.
    pub fn above(self) -> Option<Stage> {
        self.index().checked_sub(1).map(|i| Stage::ALL[i])
    }

    pub fn is_hotter_than(self, other: Stage) -> bool {
        self < other
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown stage `{s}` (expected RT, 50K, 4K, Still, CP or MXC)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    FixedTemperature,
    CapacityLimited,
}

/// Boundary condition and fixed extras for one flange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSettings {
    pub stage: Stage,
    pub boundary: BoundaryKind,
    /// Held temperature for fixed stages, starting guess for the rest.
    pub nominal_temperature: f64,
    /// Load not attributable to modelled lines (radiation, support
    /// structure, unlisted wiring), in watts.
    pub static_load: f64,
}

impl StageSettings {
    pub fn default_for(stage: Stage) -> Self {
        let (boundary, t) = match stage {
            Stage::RoomTemperature => (BoundaryKind::FixedTemperature, 295.0),
            Stage::Flange50K => (BoundaryKind::CapacityLimited, 40.0),
            Stage::Flange4K => (BoundaryKind::CapacityLimited, 3.5),
            Stage::Still => (BoundaryKind::FixedTemperature, 1.4),
            Stage::ColdPlate => (BoundaryKind::CapacityLimited, 0.1),
            Stage::MixingChamber => (BoundaryKind::CapacityLimited, 0.015),
        };
        StageSettings {
            stage,
            boundary,
            nominal_temperature: t,
            static_load: 0.0,
        }
    }
}

/// Cross-sections of a coaxial cable, m².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoaxGeometry {
    pub outer_conductor: f64,
    pub inner_conductor: f64,
    pub dielectric: f64,
}

impl CoaxGeometry {
    pub fn conductor_area(&self) -> f64 {
        self.outer_conductor + self.inner_conductor
    }
}

/// One cable run between two adjacent thermal anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoaxSegment {
    pub material: String,
    pub from_stage: Stage,
    pub to_stage: Stage,
    /// metres
    pub length: f64,
    pub geometry: CoaxGeometry,
    /// Signal loss in the cable itself, dB.
    pub rf_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attenuator {
    /// dB, within [0, 60]
    pub value: f64,
    pub stage: Stage,
}

impl Attenuator {
    pub const MAX_DB: f64 = 60.0;

    /// Power dissipated for a given incident power.
    pub fn dissipated(&self, incident: f64) -> f64 {
        incident * (1.0 - 10f64.powf(-self.value / 10.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineRole {
    Control,
    Readout,
}

/// RF drive plan: the power reaching the mixing chamber while the drive is on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfPlan {
    /// dBm
    pub power_at_mxc: f64,
    pub duty_cycle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionLine {
    pub label: String,
    pub role: LineRole,
    pub count: u32,
    /// Contiguous, hot to cold.
    pub segments: Vec<CoaxSegment>,
    pub attenuators: Vec<Attenuator>,
    pub rf_plan: Option<RfPlan>,
}

impl TransmissionLine {
    /// Stage where the signal enters the cable run.
    pub fn feed_stage(&self) -> Option<Stage> {
        self.segments.first().map(|s| s.from_stage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalLink {
    pub label: String,
    pub count: u32,
    /// The fibre runs from room temperature to this stage, where the
    /// photodiodes sit.
    pub photodiode_stage: Stage,
    /// Continuous-wave optical power per link, W.
    pub optical_power: f64,
    pub duty_cycle: f64,
    /// Heat conducted by one fibre into its terminus, W.
    pub fiber_conduction_per_link: f64,
    /// Label of the transmission line the photodiodes drive, if any.
    pub feeds: Option<String>,
}

/// Temperatures of all six stages, indexed by [`Stage`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTemperatures(pub [f64; 6]);

impl StageTemperatures {
    pub fn get(&self, stage: Stage) -> f64 {
        self.0[stage.index()]
    }

    pub fn set(&mut self, stage: Stage, value: f64) {
        self.0[stage.index()] = value;
    }

    /// Positive and strictly decreasing from RT to MXC.
    pub fn is_ordered(&self) -> bool {
        self.0.iter().all(|t| t.is_finite() && *t > 0.0) && self.0.windows(2).all(|w| w[0] > w[1])
    }

    pub fn from_map(map: &BTreeMap<Stage, f64>) -> Option<Self> {
        let mut out = [0.0; 6];
        for stage in Stage::ALL {
            out[stage.index()] = *map.get(&stage)?;
        }
        Some(StageTemperatures(out))
    }
}

impl std::ops::Index<Stage> for StageTemperatures {
    type Output = f64;

    fn index(&self, stage: Stage) -> &f64 {
        &self.0[stage.index()]
    }
}
