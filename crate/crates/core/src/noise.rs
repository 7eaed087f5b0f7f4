//! Microwave noise through attenuating chains.
//!
//! Noise is carried as a mean photon occupation at a fixed frequency. An
//! element with linear attenuation `A` at physical temperature `T` maps an
//! incoming occupation to `n/A + (1 − 1/A)·n_BE(T)`. A directional coupler
//! mixes the main line with a second arm weighted by the coupling factor.
//! Every element is affine in the incoming occupation, so a whole chain is
//! `n_out = gain·n_in + floor` and inverts in closed form.

use serde::{Deserialize, Serialize};

use crate::error::NoiseError;
use crate::units::db_to_linear;

/// h / k_B in K·s.
pub const PLANCK_OVER_BOLTZMANN: f64 = 6.626_070_15e-34 / 1.380_649e-23;

/// Mean photon number at frequency `f` and temperature `t`.
pub fn bose_einstein_occupation(temperature: f64, frequency: f64) -> Result<f64, NoiseError> {
    positive("temperature", temperature)?;
    positive("frequency", frequency)?;
    Ok(1.0 / (PLANCK_OVER_BOLTZMANN * frequency / temperature).exp_m1())
}

fn positive(quantity: &'static str, value: f64) -> Result<(), NoiseError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(NoiseError::NonPositive { quantity, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationState {
    pub occupation: f64,
    /// Hz
    pub frequency: f64,
}

impl OccupationState {
    pub fn new(occupation: f64, frequency: f64) -> Result<Self, NoiseError> {
        if !(occupation >= 0.0 && occupation.is_finite()) {
            return Err(NoiseError::InvalidOccupation(occupation));
        }
        positive("frequency", frequency)?;
        Ok(OccupationState {
            occupation,
            frequency,
        })
    }

    pub fn thermal(temperature: f64, frequency: f64) -> Result<Self, NoiseError> {
        Self::new(bose_einstein_occupation(temperature, frequency)?, frequency)
    }
}

/// Bose–Einstein effective temperature; zero occupation has no finite
/// inverse and is reported as the zero-temperature limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "kelvin", rename_all = "snake_case")]
pub enum EffectiveTemperature {
    Kelvin(f64),
    ZeroLimit,
}

impl EffectiveTemperature {
    pub fn kelvin(self) -> f64 {
        match self {
            EffectiveTemperature::Kelvin(t) => t,
            EffectiveTemperature::ZeroLimit => 0.0,
        }
    }
}

pub fn effective_temperature(state: &OccupationState) -> Result<EffectiveTemperature, NoiseError> {
    let n = state.occupation;
    if !(n >= 0.0 && n.is_finite()) {
        return Err(NoiseError::InvalidOccupation(n));
    }
    positive("frequency", state.frequency)?;
    if n == 0.0 {
        return Ok(EffectiveTemperature::ZeroLimit);
    }
    Ok(EffectiveTemperature::Kelvin(
        PLANCK_OVER_BOLTZMANN * state.frequency / (1.0 / n).ln_1p(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseElement {
    pub label: String,
    /// dB
    pub attenuation: f64,
    /// K
    pub physical_temperature: f64,
}

impl NoiseElement {
    fn validate(&self) -> Result<(), NoiseError> {
        if !(self.attenuation >= 0.0) {
            return Err(NoiseError::InvalidAttenuation(self.attenuation));
        }
        positive("element temperature", self.physical_temperature)
    }

    /// (gain, offset) of the affine map this element applies.
    fn affine(&self, frequency: f64) -> Result<(f64, f64), NoiseError> {
        self.validate()?;
        let inv = 1.0 / db_to_linear(self.attenuation);
        let thermal = bose_einstein_occupation(self.physical_temperature, frequency)?;
        Ok((inv, (1.0 - inv) * thermal))
    }
}

/// A directional coupler on the main line. Its coupled port is fed by an
/// arm running from `arm_source_temperature` through `arm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalCoupler {
    pub label: String,
    /// dB
    pub coupling: f64,
    pub arm_source_temperature: f64,
    pub arm: Vec<NoiseElement>,
}

impl DirectionalCoupler {
    /// Occupation reaching the coupled port.
    pub fn arm_output(&self, frequency: f64) -> Result<OccupationState, NoiseError> {
        let mut n = bose_einstein_occupation(self.arm_source_temperature, frequency)?;
        for e in &self.arm {
            let (g, h) = e.affine(frequency)?;
            n = g * n + h;
        }
        OccupationState::new(n, frequency)
    }

    /// What the arm adds to the main line after the coupler: n_arm / C.
    pub fn arm_contribution(&self, frequency: f64) -> Result<OccupationState, NoiseError> {
        if !(self.coupling >= 0.0) {
            return Err(NoiseError::InvalidAttenuation(self.coupling));
        }
        let arm = self.arm_output(frequency)?;
        OccupationState::new(arm.occupation / db_to_linear(self.coupling), frequency)
    }

    fn affine(&self, frequency: f64) -> Result<(f64, f64), NoiseError> {
        let contribution = self.arm_contribution(frequency)?;
        Ok((
            1.0 - 1.0 / db_to_linear(self.coupling),
            contribution.occupation,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainItem {
    Element(NoiseElement),
    Coupler(DirectionalCoupler),
}

impl ChainItem {
    pub fn label(&self) -> &str {
        match self {
            ChainItem::Element(e) => &e.label,
            ChainItem::Coupler(c) => &c.label,
        }
    }

    fn affine(&self, frequency: f64) -> Result<(f64, f64), NoiseError> {
        match self {
            ChainItem::Element(e) => e.affine(frequency),
            ChainItem::Coupler(c) => c.affine(frequency),
        }
    }
}

/// Ordered from the source side to the device side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseChain {
    pub items: Vec<ChainItem>,
    /// Hz
    pub frequency: f64,
}

impl NoiseChain {
    pub fn from_elements(elements: Vec<NoiseElement>, frequency: f64) -> Self {
        NoiseChain {
            items: elements.into_iter().map(ChainItem::Element).collect(),
            frequency,
        }
    }

    pub fn total_attenuation_db(&self) -> f64 {
        self.items
            .iter()
            .map(|i| match i {
                ChainItem::Element(e) => e.attenuation,
                ChainItem::Coupler(c) => -10.0 * (1.0 - 1.0 / db_to_linear(c.coupling)).log10(),
            })
            .sum()
    }

    fn check(&self, frequency: f64) -> Result<(), NoiseError> {
        positive("frequency", self.frequency)?;
        if self.items.is_empty() {
            return Err(NoiseError::EmptyChain);
        }
        if frequency != self.frequency {
            return Err(NoiseError::FrequencyMismatch {
                left: frequency,
                right: self.frequency,
            });
        }
        Ok(())
    }

    /// Per-item affine maps (gain, offset).
    fn maps(&self) -> Result<Vec<(f64, f64)>, NoiseError> {
        self.items
            .iter()
            .map(|i| i.affine(self.frequency))
            .collect()
    }

    /// Occupation at the output for a zero-occupation source.
    pub fn floor(&self) -> Result<OccupationState, NoiseError> {
        self.check(self.frequency)?;
        let n = self.maps()?.iter().fold(0.0, |n, (g, h)| g * n + h);
        OccupationState::new(n, self.frequency)
    }
}

/// Applies the chain element by element.
pub fn cascade_forward(
    source: &OccupationState,
    chain: &NoiseChain,
) -> Result<OccupationState, NoiseError> {
    chain.check(source.frequency)?;
    OccupationState::new(source.occupation, source.frequency)?;
    let n = chain
        .maps()?
        .iter()
        .fold(source.occupation, |n, (g, h)| g * n + h);
    OccupationState::new(n, chain.frequency)
}

/// n_out = n_main·(1 − 1/C) + n_coupled/C with C = 10^(coupling/10).
pub fn combine_directional_coupler(
    main: &OccupationState,
    coupled: &OccupationState,
    coupling: f64,
) -> Result<OccupationState, NoiseError> {
    if main.frequency != coupled.frequency {
        return Err(NoiseError::FrequencyMismatch {
            left: main.frequency,
            right: coupled.frequency,
        });
    }
    if !(coupling >= 0.0) {
        return Err(NoiseError::InvalidAttenuation(coupling));
    }
    let inv = 1.0 / db_to_linear(coupling);
    OccupationState::new(
        main.occupation * (1.0 - inv) + coupled.occupation * inv,
        main.frequency,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceInference {
    pub source_occupation: f64,
    pub source_temperature: EffectiveTemperature,
    pub floor_occupation: f64,
    pub floor_temperature: EffectiveTemperature,
    pub target_occupation: f64,
    pub frequency: f64,
}

/// Undoes the chain one item at a time, from the device side back.
pub fn infer_source_temperature(
    target: &OccupationState,
    chain: &NoiseChain,
) -> Result<SourceInference, NoiseError> {
    chain.check(target.frequency)?;
    OccupationState::new(target.occupation, target.frequency)?;
    let maps = chain.maps()?;
    let floor = maps.iter().fold(0.0, |n, (g, h)| g * n + h);
    let floor_state = OccupationState::new(floor, chain.frequency)?;
    if target.occupation < floor {
        return Err(NoiseError::Unreachable {
            floor_occupation: floor,
            floor_temperature_k: effective_temperature(&floor_state)?.kelvin(),
        });
    }
    let mut n = target.occupation;
    for (g, h) in maps.iter().rev() {
        n = (n - h) / g;
    }
    // Rounding can leave a tiny negative value right at the floor.
    let n = n.max(0.0);
    let source = OccupationState::new(n, chain.frequency)?;
    Ok(SourceInference {
        source_occupation: n,
        source_temperature: effective_temperature(&source)?,
        floor_occupation: floor,
        floor_temperature: effective_temperature(&floor_state)?,
        target_occupation: target.occupation,
        frequency: chain.frequency,
    })
}

/// User-supplied measured (T_in, T_φ) pairs, interpolated linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DephasingCalibration {
    points: Vec<(f64, f64)>,
}

impl DephasingCalibration {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, String> {
        if points.len() < 2 {
            return Err("need at least two calibration points".into());
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err("calibration temperatures must be distinct".into());
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err("calibration points must be finite".into());
        }
        Ok(DephasingCalibration { points })
    }

    /// T_φ at the given source temperature; `None` outside the measured range.
    pub fn dephasing_time(&self, source_temperature: f64) -> Option<f64> {
        let p = &self.points;
        if source_temperature < p[0].0 || source_temperature > p[p.len() - 1].0 {
            return None;
        }
        let i = p
            .partition_point(|q| q.0 <= source_temperature)
            .clamp(1, p.len() - 1)
            - 1;
        let u = (source_temperature - p[i].0) / (p[i + 1].0 - p[i].0);
        Some(p[i].1 + u * (p[i + 1].1 - p[i].1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const F: f64 = 6e9;

    fn element(db: f64, t: f64) -> NoiseElement {
        NoiseElement {
            label: format!("{db} dB"),
            attenuation: db,
            physical_temperature: t,
        }
    }

    #[test]
    fn occupation_values() {
        let n = bose_einstein_occupation(0.1, F).unwrap();
        assert!((n - 0.0595).abs() < 2e-4, "{n}");
        let hf = PLANCK_OVER_BOLTZMANN * F;
        assert!((hf - 0.28795).abs() < 1e-4);
        let one = bose_einstein_occupation(hf / 2f64.ln(), F).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        assert_eq!(bose_einstein_occupation(1e-6, F).unwrap(), 0.0);
        assert!(bose_einstein_occupation(0.0, F).is_err());
        assert!(bose_einstein_occupation(1.0, -1.0).is_err());
    }

    #[test]
    fn effective_temperature_inverts() {
        let t = effective_temperature(&OccupationState::new(1.0, F).unwrap())
            .unwrap()
            .kelvin();
        assert!((t - 0.4154).abs() < 1e-4);
        let s = OccupationState::thermal(24.0, F).unwrap();
        let back = effective_temperature(&s).unwrap().kelvin();
        assert!((back - 24.0).abs() < 24.0 * 1e-12);
        assert_eq!(
            effective_temperature(&OccupationState::new(0.0, F).unwrap()).unwrap(),
            EffectiveTemperature::ZeroLimit
        );
    }

    #[test]
    fn identity_and_thermalisation_limits() {
        let src = OccupationState::thermal(24.0, F).unwrap();
        let id = NoiseChain::from_elements(vec![element(0.0, 4.0)], F);
        assert_eq!(cascade_forward(&src, &id).unwrap(), src);
        let thick = NoiseChain::from_elements(vec![element(200.0, 0.05)], F);
        let out = cascade_forward(&src, &thick).unwrap();
        let nt = bose_einstein_occupation(0.05, F).unwrap();
        assert!((out.occupation - nt).abs() <= 1e-12 * nt);
    }

    #[test]
    fn mismatched_frequency_rejected() {
        let src = OccupationState::thermal(24.0, 5e9).unwrap();
        let chain = NoiseChain::from_elements(vec![element(10.0, 0.1)], F);
        assert!(matches!(
            cascade_forward(&src, &chain),
            Err(NoiseError::FrequencyMismatch { .. })
        ));
    }

    #[test]
    fn coupler_limits() {
        let main = OccupationState::new(0.3, F).unwrap();
        let coupled = OccupationState::new(2.0, F).unwrap();
        let decoupled = combine_directional_coupler(&main, &coupled, f64::INFINITY).unwrap();
        assert_eq!(decoupled.occupation, 0.3);
        let full = combine_directional_coupler(&main, &coupled, 0.0).unwrap();
        assert_eq!(full.occupation, 2.0);
    }

    #[test]
    fn below_floor_is_unreachable() {
        let chain = NoiseChain::from_elements(vec![element(20.0, 0.5)], F);
        let floor = chain.floor().unwrap();
        let target = OccupationState::new(floor.occupation * 0.5, F).unwrap();
        assert!(matches!(
            infer_source_temperature(&target, &chain),
            Err(NoiseError::Unreachable { .. })
        ));
        let at_floor = infer_source_temperature(&floor, &chain).unwrap();
        assert!(at_floor.source_temperature.kelvin() < 1e-3);
    }

    #[test]
    fn dephasing_hook_interpolates() {
        let cal = DephasingCalibration::new(vec![(40.0, 50e-6), (10.0, 110e-6)]).unwrap();
        assert!((cal.dephasing_time(25.0).unwrap() - 80e-6).abs() < 1e-18);
        assert_eq!(cal.dephasing_time(50.0), None);
    }
}
