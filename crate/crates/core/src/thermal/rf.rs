use serde::Serialize;

use super::{Stage, TransmissionLine};
use crate::error::ThermalError;
use crate::units::{db_to_linear, dbm_to_watts};

/// Time-averaged RF dissipation of one transmission-line group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RfProfile {
    /// Watts per stage, already scaled by count and duty cycle.
    pub dissipation: [f64; 6],
    /// Power entering the line at its feed stage while driving, per line.
    pub input_power: f64,
    /// Power reaching the end of the line while driving, per line.
    pub delivered_power: f64,
    pub count: u32,
    pub duty_cycle: f64,
}

impl RfProfile {
    pub fn at(&self, stage: Stage) -> f64 {
        self.dissipation[stage.index()]
    }

    pub fn total_dissipation(&self) -> f64 {
        self.dissipation.iter().sum()
    }

    /// Average input power over all lines of the group.
    pub fn average_input(&self) -> f64 {
        self.input_power * self.duty_cycle * f64::from(self.count)
    }

    pub fn average_delivered(&self) -> f64 {
        self.delivered_power * self.duty_cycle * f64::from(self.count)
    }
}

/// Back-propagates the delivered power through the line to find the input
/// power, then books the loss of every attenuator at its stage and the loss
/// of every cable segment half at each of its two anchors.
pub fn rf_dissipation_profile(line: &TransmissionLine) -> Result<RfProfile, ThermalError> {
    let plan = line
        .rf_plan
        .ok_or_else(|| ThermalError::MissingRfPlan(line.label.clone()))?;
    if !(0.0..=1.0).contains(&plan.duty_cycle) {
        return Err(ThermalError::InvalidDutyCycle {
            line: line.label.clone(),
            duty_cycle: plan.duty_cycle,
        });
    }
    let delivered = dbm_to_watts(plan.power_at_mxc);
    let scale = plan.duty_cycle * f64::from(line.count);
    let mut dissipation = [0.0; 6];
    let mut power = delivered;

    let Some(feed) = line.feed_stage() else {
        return Ok(RfProfile {
            dissipation,
            input_power: delivered,
            delivered_power: delivered,
            count: line.count,
            duty_cycle: plan.duty_cycle,
        });
    };
    let end = line.segments.last().map(|s| s.to_stage).unwrap_or(feed);

    // Walk from the cold end back to the feed; at each stage the attenuator
    // sits downstream of the cable arriving there.
    for stage in Stage::ALL.iter().rev().copied() {
        if stage > end || stage < feed {
            continue;
        }
        for att in line.attenuators.iter().filter(|a| a.stage == stage) {
            let incident = power * db_to_linear(att.value);
            dissipation[stage.index()] += (incident - power) * scale;
            power = incident;
        }
        for seg in line.segments.iter().filter(|s| s.to_stage == stage) {
            let incident = power * db_to_linear(seg.rf_loss);
            let lost = (incident - power) * scale;
            dissipation[seg.from_stage.index()] += 0.5 * lost;
            dissipation[seg.to_stage.index()] += 0.5 * lost;
            power = incident;
        }
    }
    Ok(RfProfile {
        dissipation,
        input_power: power,
        delivered_power: delivered,
        count: line.count,
        duty_cycle: plan.duty_cycle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::{Attenuator, CoaxGeometry, CoaxSegment, LineRole, RfPlan};

    fn segment(from: Stage, to: Stage, rf_loss: f64) -> CoaxSegment {
        CoaxSegment {
            material: "SCuNi_086".into(),
            from_stage: from,
            to_stage: to,
            length: 0.2,
            geometry: CoaxGeometry {
                outer_conductor: 1e-7,
                inner_conductor: 1e-8,
                dielectric: 1e-7,
            },
            rf_loss,
        }
    }

    fn line(count: u32, duty: f64, atts: &[(f64, Stage)], losses: [f64; 5]) -> TransmissionLine {
        let segments = Stage::ALL
            .windows(2)
            .zip(losses)
            .map(|(w, l)| segment(w[0], w[1], l))
            .collect();
        TransmissionLine {
            label: "ctl".into(),
            role: LineRole::Control,
            count,
            segments,
            attenuators: atts
                .iter()
                .map(|&(value, stage)| Attenuator { value, stage })
                .collect(),
            rf_plan: Some(RfPlan {
                power_at_mxc: -63.0,
                duty_cycle: duty,
            }),
        }
    }

    #[test]
    fn single_attenuator_at_mxc() {
        let l = line(1, 1.0, &[(20.0, Stage::MixingChamber)], [0.0; 5]);
        let p = rf_dissipation_profile(&l).unwrap();
        let incident = 10f64.powf(-4.3) * 1e-3;
        assert!((p.at(Stage::MixingChamber) - 0.99 * incident).abs() < 1e-20);
        assert!((p.at(Stage::MixingChamber) - 4.96e-8).abs() < 1e-10);
    }

    #[test]
    fn cold_plate_share_for_full_control_set() {
        let atts = [
            (20.0, Stage::Flange4K),
            (20.0, Stage::ColdPlate),
            (20.0, Stage::MixingChamber),
        ];
        let p = rf_dissipation_profile(&line(840, 0.33, &atts, [0.0; 5])).unwrap();
        // 840 * 0.33 * 0.99 * 5.012e-6 W
        assert!((p.at(Stage::ColdPlate) - 1.3755e-3).abs() < 1e-6);
    }

    #[test]
    fn zero_duty_gives_zero_map_and_negative_is_rejected() {
        let p =
            rf_dissipation_profile(&line(10, 0.0, &[(20.0, Stage::ColdPlate)], [1.0; 5])).unwrap();
        assert!(p.dissipation.iter().all(|&d| d == 0.0));
        assert!(rf_dissipation_profile(&line(10, -0.1, &[], [0.0; 5])).is_err());
    }

    #[test]
    fn missing_plan_is_an_error() {
        let mut l = line(1, 1.0, &[], [0.0; 5]);
        l.rf_plan = None;
        assert!(matches!(
            rf_dissipation_profile(&l),
            Err(ThermalError::MissingRfPlan(_))
        ));
    }

    #[test]
    fn energy_is_conserved() {
        let atts = [
            (20.0, Stage::Flange4K),
            (10.0, Stage::ColdPlate),
            (20.0, Stage::MixingChamber),
        ];
        let p = rf_dissipation_profile(&line(7, 0.4, &atts, [1.3, 0.8, 1.05, 0.7, 0.875])).unwrap();
        let lhs = p.total_dissipation() + p.average_delivered();
        assert!((lhs - p.average_input()).abs() <= 1e-9 * p.average_input());
        assert!(p.at(Stage::RoomTemperature) > 0.0);
    }
}
