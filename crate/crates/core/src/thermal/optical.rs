use serde::Serialize;

use super::{OpticalLink, Stage};

/// Heat an optical link group leaves in the refrigerator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpticalDeposit {
    pub stage: Stage,
    /// Absorbed optical power averaged over the duty cycle, W.
    pub photodiode: f64,
    /// Fibre conduction into the terminus, W.
    pub fiber: f64,
}

impl OpticalDeposit {
    pub fn total(&self) -> f64 {
        self.photodiode + self.fiber
    }
}

/// All optical power delivered to the photodiodes ends up as heat at their
/// stage; the fibres add their conduction at the same flange.
pub fn optical_dissipation(link: &OpticalLink) -> OpticalDeposit {
    let count = f64::from(link.count);
    OpticalDeposit {
        stage: link.photodiode_stage,
        photodiode: count * link.optical_power * link.duty_cycle,
        fiber: count * link.fiber_conduction_per_link,
    }
}
