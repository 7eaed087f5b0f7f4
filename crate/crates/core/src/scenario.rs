//! Scenario documents.
//!
//! A scenario is one TOML document describing a wiring layout. Every
//! physical number carries its unit as a string (`"20 dB"`, `"50 uW"`,
//! `"1.4 K"`); fractions may also be bare numbers.
//!
//! ```toml
//! name = "all_coax"
//! capacity = "xld1000s_2xpt420"
//!
//! [stages.50K]
//! static_load = "3.78 W"
//!
//! [spans]
//! "RT-50K" = "0.22 m"
//!
//! [[lines]]
//! label = "control"
//! role = "control"
//! count = 840
//! segments = [{ material = "SCuNi_086", from = "RT", to = "50K", rf_loss = "1.32 dB" }]
//! attenuators = [{ stage = "MXC", value = "20 dB" }]
//! rf_plan = { power_at_mxc = "-63 dBm", duty_cycle = "33 %" }
//! ```
//!
//! Loading happens in two steps. [`ScenarioDocument::parse`] checks syntax
//! and field names; [`ScenarioDocument::validate`] resolves units, materials
//! and defaults and checks every invariant, reporting the first failure with
//! its field path. Overrides are applied to the document between the two, so
//! they go through the same checks as file content.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DataStore;
use crate::error::{Error, ScenarioError};
use crate::noise::{ChainItem, DirectionalCoupler, NoiseChain, NoiseElement};
use crate::thermal::{
    Attenuator, BoundaryKind, CoaxSegment, LineRole, OpticalLink, RfPlan, Stage, TransmissionLine,
    Wiring,
};
use crate::units::{parse_quantity, Dimension};

/// Insertion loss assumed for a noise-chain element without one, dB.
pub const DEFAULT_INSERTION_LOSS_DB: f64 = 1.0;

/// Heat one fibre conducts into its terminus when a link does not say, W.
/// Rough figures for a single-mode fibre heat-sunk at every flange.
pub fn default_fiber_conduction(terminus: Stage) -> Option<f64> {
    match terminus {
        Stage::RoomTemperature => None,
        Stage::Flange50K => Some(20e-6),
        Stage::Flange4K => Some(1e-6),
        Stage::Still => Some(20e-9),
        Stage::ColdPlate => Some(5e-9),
        Stage::MixingChamber => Some(2e-9),
    }
}

/// A fraction written either as a bare number or with a `%` suffix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FractionInput {
    Number(f64),
    Text(String),
}

impl FractionInput {
    fn value(&self, path: &str) -> Result<f64, ScenarioError> {
        match self {
            FractionInput::Number(v) => Ok(*v),
            FractionInput::Text(s) => quantity(path, s, Dimension::Fraction),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageDocument {
    /// `fixed` or `capacity`
    pub boundary: Option<String>,
    pub temperature: Option<String>,
    pub static_load: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentDocument {
    pub material: String,
    pub from: String,
    pub to: String,
    /// Falls back to the `[spans]` table.
    pub length: Option<String>,
    pub rf_loss: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttenuatorDocument {
    pub stage: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfPlanDocument {
    pub power_at_mxc: String,
    pub duty_cycle: FractionInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineDocument {
    pub label: String,
    pub role: String,
    pub count: i64,
    #[serde(default)]
    pub segments: Vec<SegmentDocument>,
    #[serde(default)]
    pub attenuators: Vec<AttenuatorDocument>,
    pub rf_plan: Option<RfPlanDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalLinkDocument {
    pub label: String,
    pub count: i64,
    pub photodiode_stage: String,
    pub optical_power: String,
    pub duty_cycle: FractionInput,
    pub fiber_conduction_per_link: Option<String>,
    pub feeds: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementDocument {
    pub label: String,
    pub attenuation: Option<String>,
    pub temperature: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainItemDocument {
    Element {
        label: String,
        attenuation: Option<String>,
        temperature: String,
    },
    Coupler {
        label: String,
        coupling: String,
        arm_source_temperature: String,
        #[serde(default)]
        arm: Vec<ElementDocument>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseChainDocument {
    pub name: String,
    pub frequency: String,
    /// Effective temperature measured at the device end.
    pub target: Option<String>,
    pub items: Vec<ChainItemDocument>,
}

/// A scenario as written, before units and references are resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub capacity: String,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub stages: BTreeMap<String, StageDocument>,
    /// Cable length between adjacent flanges, keyed `"<hot>-<cold>"`.
    #[serde(default)]
    pub spans: BTreeMap<String, String>,
    #[serde(default)]
    pub lines: Vec<LineDocument>,
    #[serde(default)]
    pub optical_links: Vec<OpticalLinkDocument>,
    #[serde(default)]
    pub noise_chains: Vec<NoiseChainDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedChain {
    pub name: String,
    pub chain: NoiseChain,
    /// K
    pub target: Option<f64>,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub capacity: String,
    pub notes: Vec<String>,
    pub wiring: Wiring,
    pub noise_chains: Vec<NamedChain>,
    /// One entry per value the document left to a default.
    pub assumptions: BTreeSet<String>,
}

impl Scenario {
    /// SHA-256 of the canonical JSON form. Formatting, comments and key
    /// order in the source document do not affect it.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serialises");
        hex::encode(Sha256::digest(&json))
    }

    pub fn chain(&self, name: &str) -> Option<&NamedChain> {
        self.noise_chains.iter().find(|c| c.name == name)
    }

    pub fn parameters(&self) -> Parameters {
        let lines = &self.wiring.lines;
        let count = |role| {
            lines
                .iter()
                .filter(|l| l.role == role)
                .map(|l| l.count)
                .sum()
        };
        let first_control = lines.iter().find(|l| l.role == LineRole::Control);
        let mut attenuators = BTreeMap::new();
        if let Some(line) = first_control {
            for a in &line.attenuators {
                *attenuators.entry(a.stage).or_insert(0.0) += a.value;
            }
        }
        let link = self.wiring.optical_links.first();
        Parameters {
            control_count: count(LineRole::Control),
            readout_count: count(LineRole::Readout),
            duty_cycle: first_control
                .and_then(|l| l.rf_plan.map(|p| p.duty_cycle))
                .or(link.map(|l| l.duty_cycle)),
            optical_power: link.map(|l| l.optical_power),
            attenuators,
            photodiode_stage: link.map(|l| l.photodiode_stage),
        }
    }
}

/// The adjustable knobs of a scenario, as currently set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Parameters {
    pub control_count: u32,
    pub readout_count: u32,
    pub duty_cycle: Option<f64>,
    /// W per link
    pub optical_power: Option<f64>,
    /// dB per stage on the control lines.
    pub attenuators: BTreeMap<Stage, f64>,
    pub photodiode_stage: Option<Stage>,
}

/// Parameter changes applied to a document before validation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Count of every control line; 0 removes them with their optical links.
    pub control_count: Option<i64>,
    pub readout_count: Option<i64>,
    /// Drive duty cycle of every RF plan and optical link.
    pub duty_cycle: Option<FractionInput>,
    /// Optical power per link, e.g. `"50 uW"`.
    pub optical_power: Option<String>,
    /// Control-line attenuation per stage, e.g. `{ "CP" = "10 dB" }`;
    /// `"0 dB"` removes the attenuators at that stage.
    pub attenuators: Option<BTreeMap<String, String>>,
    /// Moves the photodiodes; the lines they feed are extended or cut so
    /// that they start at the new stage.
    pub photodiode_stage: Option<String>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        *self == Overrides::default()
    }

    /// Machine-readable description of the fields above.
    pub fn schema() -> serde_json::Value {
        serde_json::json!({
            "control_count": {"type": "integer", "minimum": 0},
            "readout_count": {"type": "integer", "minimum": 0},
            "duty_cycle": {"type": "fraction", "minimum": 0.0, "maximum": 1.0, "example": "33 %"},
            "optical_power": {"type": "quantity", "dimension": "power", "example": "50 uW"},
            "attenuators": {"type": "map", "keys": "stage", "values": "quantity (dB, 0 to 60)", "example": {"CP": "10 dB", "MXC": "20 dB"}},
            "photodiode_stage": {"type": "stage", "values": ["50K", "4K", "Still", "CP", "MXC"]},
        })
    }
}

fn quantity(path: &str, text: &str, dimension: Dimension) -> Result<f64, ScenarioError> {
    parse_quantity(text, dimension).map_err(|e| ScenarioError::validation(path, e.to_string()))
}

fn stage(path: &str, text: &str) -> Result<Stage, ScenarioError> {
    text.parse::<Stage>()
        .map_err(|e| ScenarioError::validation(path, e))
}

fn count(path: &str, value: i64) -> Result<u32, ScenarioError> {
    u32::try_from(value)
        .ok()
        .filter(|c| *c >= 1)
        .ok_or_else(|| {
            ScenarioError::validation(
                path,
                format!("count must be a positive integer, got {value}"),
            )
        })
}

fn fraction(path: &str, input: &FractionInput) -> Result<f64, ScenarioError> {
    let v = input.value(path)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(ScenarioError::validation(
            path,
            format!("must lie in [0, 1], got {v}"),
        ));
    }
    Ok(v)
}

fn positive(path: &str, text: &str, dimension: Dimension) -> Result<f64, ScenarioError> {
    let v = quantity(path, text, dimension)?;
    if v <= 0.0 {
        return Err(ScenarioError::validation(
            path,
            format!("must be positive, got {text}"),
        ));
    }
    Ok(v)
}

fn non_negative(path: &str, text: &str, dimension: Dimension) -> Result<f64, ScenarioError> {
    let v = quantity(path, text, dimension)?;
    if v < 0.0 {
        return Err(ScenarioError::validation(
            path,
            format!("must not be negative, got {text}"),
        ));
    }
    Ok(v)
}

fn span_key(hot: Stage, cold: Stage) -> String {
    format!("{hot}-{cold}")
}

fn line_to_error(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl ScenarioDocument {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_to_error(text, s.start))
                .unwrap_or((1, 1));
            ScenarioError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario document serialises")
    }

    fn spans(&self) -> Result<BTreeMap<(Stage, Stage), f64>, ScenarioError> {
        let mut out = BTreeMap::new();
        for (key, value) in &self.spans {
            let path = format!("spans.{key}");
            let (a, b) = key
                .split_once('-')
                .ok_or_else(|| ScenarioError::validation(&path, "key must look like `4K-Still`"))?;
            let (hot, cold) = (stage(&path, a)?, stage(&path, b)?);
            if hot.below() != Some(cold) {
                return Err(ScenarioError::validation(
                    &path,
                    "spans join adjacent stages, hot side first",
                ));
            }
            out.insert((hot, cold), positive(&path, value, Dimension::Length)?);
        }
        Ok(out)
    }

    fn segment_length(
        spans: &BTreeMap<(Stage, Stage), f64>,
        path: &str,
        seg: &SegmentDocument,
        from: Stage,
        to: Stage,
    ) -> Result<f64, ScenarioError> {
        if let Some(text) = &seg.length {
            return positive(&format!("{path}.length"), text, Dimension::Length);
        }
        let mut total = 0.0;
        let mut s = from;
        while s != to {
            let next = s.below().expect("to is colder than from");
            total += spans.get(&(s, next)).ok_or_else(|| {
                ScenarioError::validation(
                    format!("{path}.length"),
                    format!(
                        "no length given and no span `{}` defined",
                        span_key(s, next)
                    ),
                )
            })?;
            s = next;
        }
        Ok(total)
    }

    /// Resolves and checks everything against the data in `store`.
    pub fn validate(&self, store: &DataStore) -> Result<Scenario, ScenarioError> {
        let mut assumptions = BTreeSet::new();
        if self.name.trim().is_empty() {
            return Err(ScenarioError::validation("name", "must not be empty"));
        }
        if !store.has_capacity(&self.capacity) {
            return Err(ScenarioError::validation(
                "capacity",
                format!("no capacity model named `{}`", self.capacity),
            ));
        }

        let mut wiring = Wiring::default();
        let mut seen = BTreeSet::new();
        let mut static_defaulted = Vec::new();
        for (key, doc) in &self.stages {
            let path = format!("stages.{key}");
            let st = stage(&path, key)?;
            if !seen.insert(st) {
                return Err(ScenarioError::validation(
                    &path,
                    format!("stage {st} is configured twice"),
                ));
            }
            let settings = wiring.settings_mut(st);
            if let Some(b) = &doc.boundary {
                settings.boundary = match b.as_str() {
                    "fixed" => BoundaryKind::FixedTemperature,
                    "capacity" => BoundaryKind::CapacityLimited,
                    other => {
                        return Err(ScenarioError::validation(
                            format!("{path}.boundary"),
                            format!("expected `fixed` or `capacity`, got `{other}`"),
                        ))
                    }
                };
            }
            if matches!(st, Stage::RoomTemperature | Stage::Still)
                && settings.boundary == BoundaryKind::CapacityLimited
            {
                return Err(ScenarioError::validation(
                    format!("{path}.boundary"),
                    format!("{st} must be a fixed-temperature stage"),
                ));
            }
            if let Some(t) = &doc.temperature {
                settings.nominal_temperature =
                    positive(&format!("{path}.temperature"), t, Dimension::Temperature)?;
            }
            if let Some(q) = &doc.static_load {
                settings.static_load =
                    non_negative(&format!("{path}.static_load"), q, Dimension::Power)?;
            }
        }
        for st in Stage::FLANGES {
            let explicit = self
                .stages
                .iter()
                .any(|(k, d)| k.parse::<Stage>() == Ok(st) && d.static_load.is_some());
            if !explicit && wiring.settings(st).boundary == BoundaryKind::CapacityLimited {
                static_defaulted.push(st.label());
            }
        }
        if !static_defaulted.is_empty() {
            assumptions.insert(format!(
                "stages: static load taken as 0 W at {}",
                static_defaulted.join(", ")
            ));
        }
        let nominal: Vec<f64> = wiring
            .stages
            .iter()
            .map(|s| s.nominal_temperature)
            .collect();
        if !nominal.windows(2).all(|w| w[0] > w[1]) {
            return Err(ScenarioError::validation(
                "stages",
                "temperatures must decrease from RT to MXC",
            ));
        }

        let spans = self.spans()?;
        let mut labels = BTreeSet::new();
        for (i, doc) in self.lines.iter().enumerate() {
            let path = format!("lines[{i}]");
            let line = self.validate_line(&path, doc, store, &spans, &mut assumptions)?;
            if !labels.insert(line.label.clone()) {
                return Err(ScenarioError::validation(
                    format!("{path}.label"),
                    format!("duplicate line label `{}`", line.label),
                ));
            }
            wiring.lines.push(line);
        }

        for (i, doc) in self.optical_links.iter().enumerate() {
            let path = format!("optical_links[{i}]");
            let link = validate_link(&path, doc, &wiring.lines, &mut assumptions)?;
            wiring.optical_links.push(link);
        }

        let mut noise_chains = Vec::new();
        for (i, doc) in self.noise_chains.iter().enumerate() {
            let path = format!("noise_chains[{i}]");
            if doc.name.trim().is_empty() {
                return Err(ScenarioError::validation(
                    format!("{path}.name"),
                    "must not be empty",
                ));
            }
            if noise_chains.iter().any(|c: &NamedChain| c.name == doc.name) {
                return Err(ScenarioError::validation(
                    format!("{path}.name"),
                    format!("duplicate chain name `{}`", doc.name),
                ));
            }
            noise_chains.push(validate_chain(&path, doc, &mut assumptions)?);
        }

        Ok(Scenario {
            name: self.name.clone(),
            description: self.description.clone(),
            capacity: self.capacity.clone(),
            notes: self.notes.clone(),
            wiring,
            noise_chains,
            assumptions,
        })
    }

    fn validate_line(
        &self,
        path: &str,
        doc: &LineDocument,
        store: &DataStore,
        spans: &BTreeMap<(Stage, Stage), f64>,
        assumptions: &mut BTreeSet<String>,
    ) -> Result<TransmissionLine, ScenarioError> {
        if doc.label.trim().is_empty() {
            return Err(ScenarioError::validation(
                format!("{path}.label"),
                "must not be empty",
            ));
        }
        let role = match doc.role.as_str() {
            "control" => LineRole::Control,
            "readout" => LineRole::Readout,
            other => {
                return Err(ScenarioError::validation(
                    format!("{path}.role"),
                    format!("expected `control` or `readout`, got `{other}`"),
                ))
            }
        };
        let count = count(&format!("{path}.count"), doc.count)?;
        if doc.segments.is_empty() {
            return Err(ScenarioError::validation(
                format!("{path}.segments"),
                "a line needs at least one segment",
            ));
        }
        let mut segments = Vec::new();
        let mut lossless = Vec::new();
        for (j, seg) in doc.segments.iter().enumerate() {
            let sp = format!("{path}.segments[{j}]");
            let material = store
                .materials()
                .get(&seg.material)
                .map_err(|e| ScenarioError::validation(format!("{sp}.material"), e.to_string()))?;
            let from = stage(&format!("{sp}.from"), &seg.from)?;
            let to = stage(&format!("{sp}.to"), &seg.to)?;
            if !from.is_hotter_than(to) {
                return Err(ScenarioError::validation(
                    &sp,
                    format!("{from} is not hotter than {to}"),
                ));
            }
            if let Some(prev) = segments.last().map(|s: &CoaxSegment| s.to_stage) {
                if prev != from {
                    return Err(ScenarioError::validation(
                        format!("{sp}.from"),
                        format!("segments must be contiguous: previous one ends at {prev}"),
                    ));
                }
            }
            let rf_loss = match &seg.rf_loss {
                Some(text) => non_negative(&format!("{sp}.rf_loss"), text, Dimension::Ratio)?,
                None => {
                    lossless.push(j.to_string());
                    0.0
                }
            };
            segments.push(CoaxSegment {
                material: seg.material.clone(),
                from_stage: from,
                to_stage: to,
                length: Self::segment_length(spans, &sp, seg, from, to)?,
                geometry: material.geometry,
                rf_loss,
            });
        }
        let last = segments.last().expect("non-empty").to_stage;
        if last != Stage::MixingChamber {
            return Err(ScenarioError::validation(
                format!("{path}.segments"),
                format!("lines run down to MXC, this one ends at {last}"),
            ));
        }
        let feed = segments[0].from_stage;
        let mut attenuators = Vec::new();
        for (j, a) in doc.attenuators.iter().enumerate() {
            let ap = format!("{path}.attenuators[{j}]");
            let st = stage(&format!("{ap}.stage"), &a.stage)?;
            let value = non_negative(&format!("{ap}.value"), &a.value, Dimension::Ratio)?;
            if value > Attenuator::MAX_DB {
                return Err(ScenarioError::validation(
                    format!("{ap}.value"),
                    format!(
                        "must lie in [0, {}] dB, got {}",
                        Attenuator::MAX_DB,
                        a.value
                    ),
                ));
            }
            if st.is_hotter_than(feed) {
                return Err(ScenarioError::validation(
                    format!("{ap}.stage"),
                    format!("line starts at {feed}, cannot hold an attenuator at {st}"),
                ));
            }
            attenuators.push(Attenuator { value, stage: st });
        }
        let rf_plan = match &doc.rf_plan {
            Some(plan) => Some(RfPlan {
                power_at_mxc: quantity(
                    &format!("{path}.rf_plan.power_at_mxc"),
                    &plan.power_at_mxc,
                    Dimension::PowerLevel,
                )?,
                duty_cycle: fraction(&format!("{path}.rf_plan.duty_cycle"), &plan.duty_cycle)?,
            }),
            None => None,
        };
        if rf_plan.is_some() && !lossless.is_empty() {
            assumptions.insert(format!(
                "{path} ({}): cable rf_loss taken as 0 dB on segments {}",
                doc.label,
                lossless.join(", ")
            ));
        }
        Ok(TransmissionLine {
            label: doc.label.clone(),
            role,
            count,
            segments,
            attenuators,
            rf_plan,
        })
    }

    /// Applies `overrides`; errors carry `overrides.<field>` paths.
    pub fn apply(&mut self, overrides: &Overrides) -> Result<(), ScenarioError> {
        if let Some(n) = overrides.control_count {
            self.set_count("control", "overrides.control_count", n)?;
        }
        if let Some(n) = overrides.readout_count {
            self.set_count("readout", "overrides.readout_count", n)?;
        }
        if let Some(duty) = &overrides.duty_cycle {
            fraction("overrides.duty_cycle", duty)?;
            for line in &mut self.lines {
                if let Some(plan) = &mut line.rf_plan {
                    plan.duty_cycle = duty.clone();
                }
            }
            for link in &mut self.optical_links {
                link.duty_cycle = duty.clone();
            }
        }
        if let Some(power) = &overrides.optical_power {
            non_negative("overrides.optical_power", power, Dimension::Power)?;
            if self.optical_links.is_empty() {
                return Err(ScenarioError::validation(
                    "overrides.optical_power",
                    "scenario has no optical links",
                ));
            }
            for link in &mut self.optical_links {
                link.optical_power = power.clone();
            }
        }
        if let Some(map) = &overrides.attenuators {
            for (key, value) in map {
                let path = format!("overrides.attenuators.{key}");
                let st = stage(&path, key)?;
                let db = non_negative(&path, value, Dimension::Ratio)?;
                for line in self.lines.iter_mut().filter(|l| l.role == "control") {
                    line.attenuators
                        .retain(|a| !a.stage.parse::<Stage>().is_ok_and(|s| s == st));
                    if db > 0.0 {
                        line.attenuators.push(AttenuatorDocument {
                            stage: st.label().to_string(),
                            value: value.clone(),
                        });
                    }
                    line.attenuators
                        .sort_by_key(|a| a.stage.parse::<Stage>().ok());
                }
            }
        }
        if let Some(text) = &overrides.photodiode_stage {
            let path = "overrides.photodiode_stage";
            let st = stage(path, text)?;
            if st == Stage::RoomTemperature {
                return Err(ScenarioError::validation(
                    path,
                    "photodiodes cannot sit at RT",
                ));
            }
            if self.optical_links.is_empty() {
                return Err(ScenarioError::validation(
                    path,
                    "scenario has no optical links",
                ));
            }
            self.move_photodiodes(path, st)?;
        }
        Ok(())
    }

    fn set_count(&mut self, role: &str, path: &str, n: i64) -> Result<(), ScenarioError> {
        if n < 0 || n > i64::from(u32::MAX) {
            return Err(ScenarioError::validation(
                path,
                format!("must be a non-negative integer, got {n}"),
            ));
        }
        if n == 0 {
            let removed: BTreeSet<String> = self
                .lines
                .iter()
                .filter(|l| l.role == role)
                .map(|l| l.label.clone())
                .collect();
            self.lines.retain(|l| l.role != role);
            self.optical_links
                .retain(|o| o.feeds.as_ref().is_none_or(|f| !removed.contains(f)));
            return Ok(());
        }
        let fed: BTreeSet<String> = self
            .lines
            .iter_mut()
            .filter(|l| l.role == role)
            .map(|l| {
                l.count = n;
                l.label.clone()
            })
            .collect();
        for link in &mut self.optical_links {
            if link.feeds.as_ref().is_some_and(|f| fed.contains(f)) {
                link.count = n;
            }
        }
        Ok(())
    }

    fn move_photodiodes(&mut self, path: &str, to: Stage) -> Result<(), ScenarioError> {
        let spans = self.spans()?;
        let mut fed = BTreeSet::new();
        for link in &mut self.optical_links {
            link.photodiode_stage = to.label().to_string();
            if let Some(f) = &link.feeds {
                fed.insert(f.clone());
            }
        }
        for line in self.lines.iter_mut().filter(|l| fed.contains(&l.label)) {
            let Some(first) = line.segments.first().cloned() else {
                continue;
            };
            let Ok(start) = first.from.parse::<Stage>() else {
                continue;
            };
            if to.is_hotter_than(start) {
                // Extend upwards with the first segment's cable, keeping its
                // loss per metre.
                let first_to = first
                    .to
                    .parse::<Stage>()
                    .map_err(|e| ScenarioError::validation(path, e))?;
                let first_len = Self::segment_length(&spans, path, &first, start, first_to)?;
                let loss_per_m = match &first.rf_loss {
                    Some(t) => Some(quantity(path, t, Dimension::Ratio)? / first_len),
                    None => None,
                };
                let mut added = Vec::new();
                let mut s = to;
                while s != start {
                    let next = s.below().expect("start is colder");
                    let len = spans.get(&(s, next)).ok_or_else(|| {
                        ScenarioError::validation(
                            path,
                            format!(
                                "cannot extend line `{}`: no span `{}`",
                                line.label,
                                span_key(s, next)
                            ),
                        )
                    })?;
                    added.push(SegmentDocument {
                        material: first.material.clone(),
                        from: s.label().to_string(),
                        to: next.label().to_string(),
                        length: None,
                        rf_loss: loss_per_m.map(|l| format!("{} dB", l * len)),
                    });
                    s = next;
                }
                added.append(&mut line.segments);
                line.segments = added;
            } else if start.is_hotter_than(to) {
                line.segments
                    .retain(|s| s.to.parse::<Stage>().map_or(true, |t| to.is_hotter_than(t)));
                match line.segments.first().map(|s| s.from.parse::<Stage>()) {
                    Some(Ok(s)) if s == to => {}
                    _ => {
                        return Err(ScenarioError::validation(
                            path,
                            format!("line `{}` has no anchor at {to}", line.label),
                        ))
                    }
                }
                line.attenuators.retain(|a| {
                    a.stage
                        .parse::<Stage>()
                        .map_or(true, |s| !s.is_hotter_than(to))
                });
            }
        }
        Ok(())
    }
}

fn validate_link(
    path: &str,
    doc: &OpticalLinkDocument,
    lines: &[TransmissionLine],
    assumptions: &mut BTreeSet<String>,
) -> Result<OpticalLink, ScenarioError> {
    let count = count(&format!("{path}.count"), doc.count)?;
    let st = stage(&format!("{path}.photodiode_stage"), &doc.photodiode_stage)?;
    let fiber = match &doc.fiber_conduction_per_link {
        Some(t) => non_negative(
            &format!("{path}.fiber_conduction_per_link"),
            t,
            Dimension::Power,
        )?,
        None => {
            let v = default_fiber_conduction(st).ok_or_else(|| {
                ScenarioError::validation(
                    format!("{path}.photodiode_stage"),
                    "photodiodes cannot sit at RT",
                )
            })?;
            assumptions.insert(format!(
                "{path} ({}): fibre conduction taken as {} per link into {st}",
                doc.label,
                crate::units::format_with_unit(v, "W", 4)
            ));
            v
        }
    };
    if st == Stage::RoomTemperature {
        return Err(ScenarioError::validation(
            format!("{path}.photodiode_stage"),
            "photodiodes cannot sit at RT",
        ));
    }
    if let Some(label) = &doc.feeds {
        let line = lines.iter().find(|l| &l.label == label).ok_or_else(|| {
            ScenarioError::validation(
                format!("{path}.feeds"),
                format!("no line labelled `{label}`"),
            )
        })?;
        if line.feed_stage() != Some(st) {
            return Err(ScenarioError::validation(
                format!("{path}.feeds"),
                format!(
                    "line `{label}` starts at {}, photodiodes sit at {st}",
                    line.feed_stage().map_or("?", Stage::label)
                ),
            ));
        }
    }
    Ok(OpticalLink {
        label: doc.label.clone(),
        count,
        photodiode_stage: st,
        optical_power: non_negative(
            &format!("{path}.optical_power"),
            &doc.optical_power,
            Dimension::Power,
        )?,
        duty_cycle: fraction(&format!("{path}.duty_cycle"), &doc.duty_cycle)?,
        fiber_conduction_per_link: fiber,
        feeds: doc.feeds.clone(),
    })
}

fn validate_element(
    path: &str,
    chain: &str,
    label: &str,
    attenuation: Option<&str>,
    temperature: &str,
    assumptions: &mut BTreeSet<String>,
) -> Result<NoiseElement, ScenarioError> {
    let attenuation = match attenuation {
        Some(t) => non_negative(&format!("{path}.attenuation"), t, Dimension::Ratio)?,
        None => {
            assumptions.insert(format!(
                "noise chain `{chain}`, {label}: insertion loss taken as {DEFAULT_INSERTION_LOSS_DB} dB"
            ));
            DEFAULT_INSERTION_LOSS_DB
        }
    };
    Ok(NoiseElement {
        label: label.to_string(),
        attenuation,
        physical_temperature: positive(
            &format!("{path}.temperature"),
            temperature,
            Dimension::Temperature,
        )?,
    })
}

fn validate_chain(
    path: &str,
    doc: &NoiseChainDocument,
    assumptions: &mut BTreeSet<String>,
) -> Result<NamedChain, ScenarioError> {
    let frequency = positive(
        &format!("{path}.frequency"),
        &doc.frequency,
        Dimension::Frequency,
    )?;
    if doc.items.is_empty() {
        return Err(ScenarioError::validation(
            format!("{path}.items"),
            "a chain needs at least one item",
        ));
    }
    let mut items = Vec::new();
    for (j, item) in doc.items.iter().enumerate() {
        let ip = format!("{path}.items[{j}]");
        items.push(match item {
            ChainItemDocument::Element {
                label,
                attenuation,
                temperature,
            } => ChainItem::Element(validate_element(
                &ip,
                &doc.name,
                label,
                attenuation.as_deref(),
                temperature,
                assumptions,
            )?),
            ChainItemDocument::Coupler {
                label,
                coupling,
                arm_source_temperature,
                arm,
            } => {
                let arm = arm
                    .iter()
                    .enumerate()
                    .map(|(k, e)| {
                        validate_element(
                            &format!("{ip}.arm[{k}]"),
                            &doc.name,
                            &format!("{label} arm {}", e.label),
                            e.attenuation.as_deref(),
                            &e.temperature,
                            assumptions,
                        )
                        .map(|mut el| {
                            el.label = e.label.clone();
                            el
                        })
                    })
                    .collect::<Result<_, _>>()?;
                ChainItem::Coupler(DirectionalCoupler {
                    label: label.clone(),
                    coupling: non_negative(&format!("{ip}.coupling"), coupling, Dimension::Ratio)?,
                    arm_source_temperature: positive(
                        &format!("{ip}.arm_source_temperature"),
                        arm_source_temperature,
                        Dimension::Temperature,
                    )?,
                    arm,
                })
            }
        });
    }
    let target = match &doc.target {
        Some(t) => Some(positive(
            &format!("{path}.target"),
            t,
            Dimension::Temperature,
        )?),
        None => None,
    };
    Ok(NamedChain {
        name: doc.name.clone(),
        chain: NoiseChain { items, frequency },
        target,
    })
}

impl NoiseChainDocument {
    /// Validates a chain on its own; `path` prefixes error field paths.
    /// Returns the chain with the assumptions it defaulted.
    pub fn validate(&self, path: &str) -> Result<(NamedChain, BTreeSet<String>), ScenarioError> {
        let mut assumptions = BTreeSet::new();
        let chain = validate_chain(path, self, &mut assumptions)?;
        Ok((chain, assumptions))
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path, store: &DataStore) -> Result<Scenario, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(ScenarioDocument::parse(&text)?.validate(store)?)
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str, store: &DataStore) -> Result<Scenario, ScenarioError> {
    ScenarioDocument::parse(text)?.validate(store)
}
