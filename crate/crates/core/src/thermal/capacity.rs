use std::fmt::Write as _;

use serde::Serialize;

use super::network::{stage_load_summary, Wiring};
use super::{MaterialLibrary, Stage, StageTemperatures};
use crate::error::{DataError, ThermalError};
use crate::tables::DataTable;
use crate::units::Dimension;

const BISECTION_STEPS: usize = 200;

fn bisect(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    // f increasing, f(lo) < 0 <= f(hi)
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-stage pulse-tube capacity on a (T_50K, T_4K) grid, per cooler.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseTubeMap {
    pub pulse_tubes: u32,
    pub scale_50k: f64,
    pub scale_4k: f64,
    t50: Vec<f64>,
    t4: Vec<f64>,
    /// Row-major over (t50, t4).
    q50: Vec<f64>,
    q4: Vec<f64>,
}

impl PulseTubeMap {
    pub fn new(
        pulse_tubes: u32,
        t50: Vec<f64>,
        t4: Vec<f64>,
        q50: Vec<f64>,
        q4: Vec<f64>,
    ) -> Result<Self, String> {
        let n = t50.len() * t4.len();
        if t50.len() < 2 || t4.len() < 2 || q50.len() != n || q4.len() != n {
            return Err("pulse-tube map must be a full grid with at least 2x2 points".into());
        }
        if !is_increasing(&t50) || !is_increasing(&t4) {
            return Err("pulse-tube axes must be strictly increasing".into());
        }
        if pulse_tubes == 0 {
            return Err("pulse_tubes must be at least 1".into());
        }
        let map = PulseTubeMap {
            pulse_tubes,
            scale_50k: 1.0,
            scale_4k: 1.0,
            t50,
            t4,
            q50,
            q4,
        };
        for i in 0..map.t50.len() {
            for j in 0..map.t4.len() {
                let k = i * map.t4.len() + j;
                if i > 0 && map.q50[k] < map.q50[k - map.t4.len()] {
                    return Err("Q_50K must not decrease with T_50K".into());
                }
                if j > 0 && map.q4[k] <= map.q4[k - 1] {
                    return Err("Q_4K must increase with T_4K".into());
                }
            }
        }
        Ok(map)
    }

    fn from_rows(pulse_tubes: u32, rows: &[[f64; 4]]) -> Result<Self, String> {
        let mut t50: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let mut t4: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        for axis in [&mut t50, &mut t4] {
            axis.sort_by(f64::total_cmp);
            axis.dedup();
        }
        let mut q50 = vec![f64::NAN; t50.len() * t4.len()];
        let mut q4 = q50.clone();
        for r in rows {
            let i = t50.binary_search_by(|x| x.total_cmp(&r[0])).unwrap();
            let j = t4.binary_search_by(|x| x.total_cmp(&r[1])).unwrap();
            let k = i * t4.len() + j;
            if !q50[k].is_nan() {
                return Err(format!("duplicate grid point ({}, {})", r[0], r[1]));
            }
            q50[k] = r[2];
            q4[k] = r[3];
        }
        if q50.iter().any(|q| q.is_nan()) {
            return Err("pulse-tube grid has missing points".into());
        }
        Self::new(pulse_tubes, t50, t4, q50, q4)
    }

    pub fn range_50k(&self) -> (f64, f64) {
        (self.t50[0], *self.t50.last().unwrap())
    }

    pub fn range_4k(&self) -> (f64, f64) {
        (self.t4[0], *self.t4.last().unwrap())
    }

    fn check(&self, t50: f64, t4: f64) -> Result<(), ThermalError> {
        for (stage, t, (min, max)) in [
            (Stage::Flange50K, t50, self.range_50k()),
            (Stage::Flange4K, t4, self.range_4k()),
        ] {
            if !(min..=max).contains(&t) {
                return Err(ThermalError::OutsideCapacityRange {
                    stage,
                    temperature: t,
                    min,
                    max,
                });
            }
        }
        Ok(())
    }

    fn bilinear(&self, values: &[f64], t50: f64, t4: f64) -> f64 {
        let (i, u) = cell(&self.t50, t50);
        let (j, v) = cell(&self.t4, t4);
        let n = self.t4.len();
        let at = |a: usize, b: usize| values[a * n + b];
        (1.0 - u) * (1.0 - v) * at(i, j)
            + u * (1.0 - v) * at(i + 1, j)
            + (1.0 - u) * v * at(i, j + 1)
            + u * v * at(i + 1, j + 1)
    }

    /// Tabulated capacity of all coolers before calibration scaling.
    pub fn unscaled(&self, t50: f64, t4: f64) -> Result<(f64, f64), ThermalError> {
        self.check(t50, t4)?;
        let n = f64::from(self.pulse_tubes);
        Ok((
            n * self.bilinear(&self.q50, t50, t4),
            n * self.bilinear(&self.q4, t50, t4),
        ))
    }

    /// (Q_50K, Q_4K) in watts.
    pub fn capacity(&self, t50: f64, t4: f64) -> Result<(f64, f64), ThermalError> {
        let (a, b) = self.unscaled(t50, t4)?;
        Ok((self.scale_50k * a, self.scale_4k * b))
    }

    fn q50_at(&self, t50: f64, t4: f64) -> f64 {
        self.scale_50k * f64::from(self.pulse_tubes) * self.bilinear(&self.q50, t50, t4)
    }

    fn q4_at(&self, t50: f64, t4: f64) -> f64 {
        self.scale_4k * f64::from(self.pulse_tubes) * self.bilinear(&self.q4, t50, t4)
    }

    /// 4K temperature carrying `load` with the 50K flange at `t50`.
    pub fn t4_given_t50(&self, t50: f64, load: f64) -> Result<f64, ThermalError> {
        let (lo, hi) = self.range_4k();
        self.check(t50, lo)?;
        if self.q4_at(t50, lo) >= load {
            return Ok(lo);
        }
        let max = self.q4_at(t50, hi);
        if max < load {
            return Err(ThermalError::CapacityInsufficient {
                stage: Stage::Flange4K,
                load,
                max_capacity: max,
            });
        }
        Ok(bisect(lo, hi, |t| self.q4_at(t50, t) - load))
    }

    /// 50K temperature carrying `load` with the 4K flange at `t4`.
    pub fn t50_given_t4(&self, t4: f64, load: f64) -> Result<f64, ThermalError> {
        let (lo, hi) = self.range_50k();
        self.check(lo, t4)?;
        if self.q50_at(lo, t4) >= load {
            return Ok(lo);
        }
        let max = self.q50_at(hi, t4);
        if max < load {
            return Err(ThermalError::CapacityInsufficient {
                stage: Stage::Flange50K,
                load,
                max_capacity: max,
            });
        }
        Ok(bisect(lo, hi, |t| self.q50_at(t, t4) - load))
    }

    /// Operating point (T_50K, T_4K) where both stages carry their loads.
    pub fn invert(&self, load_50k: f64, load_4k: f64) -> Result<(f64, f64), ThermalError> {
        let (lo, hi) = self.range_50k();
        let t4_hi = self.t4_given_t50(hi, load_4k)?;
        let max = self.q50_at(hi, t4_hi);
        if max < load_50k {
            return Err(ThermalError::CapacityInsufficient {
                stage: Stage::Flange50K,
                load: load_50k,
                max_capacity: max,
            });
        }
        let excess = |t50: f64| match self.t4_given_t50(t50, load_4k) {
            Ok(t4) => self.q50_at(t50, t4) - load_50k,
            Err(_) => f64::NEG_INFINITY,
        };
        let t50 = if excess(lo) >= 0.0 {
            lo
        } else {
            bisect(lo, hi, excess)
        };
        Ok((t50, self.t4_given_t50(t50, load_4k)?))
    }
}

fn is_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] > w[0])
}

fn cell(axis: &[f64], x: f64) -> (usize, f64) {
    let i = axis.partition_point(|&a| a <= x).clamp(1, axis.len() - 1) - 1;
    (i, (x - axis[i]) / (axis[i + 1] - axis[i]))
}

/// Still cooling from evaporation at the set molar flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StillCapacity {
    /// mol/s
    pub molar_flow: f64,
    /// J/mol
    pub latent_heat: f64,
}

impl StillCapacity {
    pub fn power(&self) -> f64 {
        self.molar_flow * self.latent_heat
    }
}

/// Q(T) = c · (T^p − T0^p).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColdPlateCapacity {
    pub coefficient: f64,
    pub exponent: f64,
    pub base_temperature: f64,
}

impl ColdPlateCapacity {
    pub fn power(&self, t: f64) -> f64 {
        self.coefficient * (t.powf(self.exponent) - self.base_temperature.powf(self.exponent))
    }

    fn shape(&self, t: f64) -> f64 {
        t.powf(self.exponent) - self.base_temperature.powf(self.exponent)
    }

    /// Temperature carrying `load`, not above `ceiling`.
    pub fn invert(&self, load: f64, ceiling: f64) -> Result<f64, ThermalError> {
        let max = self.power(ceiling);
        if load > max {
            return Err(ThermalError::CapacityInsufficient {
                stage: Stage::ColdPlate,
                load,
                max_capacity: max,
            });
        }
        let base = self.base_temperature.powf(self.exponent);
        Ok((load / self.coefficient + base)
            .max(0.0)
            .powf(1.0 / self.exponent))
    }
}

/// Q(T) = ṅ · (a·T² − b·T_ex²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingChamberCapacity {
    /// J/(mol K²)
    pub a: f64,
    /// J/(mol K²)
    pub b: f64,
    pub exchanger_temperature: f64,
    /// mol/s
    pub molar_flow: f64,
}

impl MixingChamberCapacity {
    pub fn power(&self, t: f64) -> f64 {
        self.molar_flow * (self.a * t * t - self.b * self.exchanger_temperature.powi(2))
    }

    pub fn no_load_temperature(&self) -> f64 {
        self.exchanger_temperature * (self.b / self.a).sqrt()
    }

    pub fn invert(&self, load: f64, ceiling: f64) -> Result<f64, ThermalError> {
        let max = self.power(ceiling);
        if load > max {
            return Err(ThermalError::CapacityInsufficient {
                stage: Stage::MixingChamber,
                load,
                max_capacity: max,
            });
        }
        let t2 = (load / self.molar_flow + self.b * self.exchanger_temperature.powi(2)) / self.a;
        Ok(t2.max(0.0).sqrt())
    }
}

/// Cooling capacity of every cooled stage of one refrigerator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityModel {
    pub name: String,
    pub comments: Vec<String>,
    pub pulse_tube: PulseTubeMap,
    pub still: StillCapacity,
    pub cold_plate: ColdPlateCapacity,
    pub mixing_chamber: MixingChamberCapacity,
}

impl CapacityModel {
    pub fn from_table(table: &DataTable) -> Result<Self, DataError> {
        let invalid = |message: String| DataError::Invalid {
            file: table.source.clone(),
            message,
        };
        let name = table
            .directive("refrigerator")
            .ok_or_else(|| DataError::MissingDirective {
                file: table.source.clone(),
                key: "refrigerator".into(),
            })?
            .to_string();
        let pulse_tubes = table.number("pulse_tubes")?;
        if pulse_tubes < 1.0 || pulse_tubes.fract() != 0.0 {
            return Err(invalid(format!(
                "pulse_tubes must be a positive integer, got {pulse_tubes}"
            )));
        }
        let cols: Vec<Vec<f64>> = ["T50_K", "T4_K", "Q50_W", "Q4_W"]
            .iter()
            .map(|c| table.column(c))
            .collect::<Result<_, _>>()?;
        let rows: Vec<[f64; 4]> = (0..cols[0].len())
            .map(|i| [cols[0][i], cols[1][i], cols[2][i], cols[3][i]])
            .collect();
        let mut pulse_tube = PulseTubeMap::from_rows(pulse_tubes as u32, &rows).map_err(invalid)?;
        pulse_tube.scale_50k = table.number("scale_50k")?;
        pulse_tube.scale_4k = table.number("scale_4k")?;

        let molar_flow = table.quantity("molar_flow", Dimension::MolarFlow)?;
        let model = CapacityModel {
            name,
            comments: table.comments.clone(),
            pulse_tube,
            still: StillCapacity {
                molar_flow,
                latent_heat: table.quantity("still_latent_heat", Dimension::MolarEnergy)?,
            },
            cold_plate: ColdPlateCapacity {
                coefficient: table.number_with_unit("cp_coefficient", "W/K^p")?,
                exponent: table.number("cp_exponent")?,
                base_temperature: table.quantity("cp_base_temperature", Dimension::Temperature)?,
            },
            mixing_chamber: MixingChamberCapacity {
                a: table.number_with_unit("mxc_a", "J/(mol K^2)")?,
                b: table.number_with_unit("mxc_b", "J/(mol K^2)")?,
                exchanger_temperature: table
                    .quantity("mxc_exchanger_temperature", Dimension::Temperature)?,
                molar_flow,
            },
        };
        let positive = [
            ("molar_flow", molar_flow),
            ("still_latent_heat", model.still.latent_heat),
            ("scale_50k", model.pulse_tube.scale_50k),
            ("scale_4k", model.pulse_tube.scale_4k),
            ("cp_coefficient", model.cold_plate.coefficient),
            ("cp_exponent", model.cold_plate.exponent),
            ("mxc_a", model.mixing_chamber.a),
        ];
        for (key, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(format!("{key} must be positive, got {value}")));
            }
        }
        if model.mixing_chamber.b < 0.0 || model.cold_plate.base_temperature < 0.0 {
            return Err(invalid(
                "mxc_b and cp_base_temperature must be non-negative".into(),
            ));
        }
        Ok(model)
    }

    /// Serialises the model back into the data-file format.
    pub fn to_table_text(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        let pt = &self.pulse_tube;
        let cp = &self.cold_plate;
        let mxc = &self.mixing_chamber;
        let _ = writeln!(out, "@refrigerator {}", self.name);
        let _ = writeln!(out, "@pulse_tubes {}", pt.pulse_tubes);
        let _ = writeln!(out, "@scale_50k {:.10}", pt.scale_50k);
        let _ = writeln!(out, "@scale_4k {:.10}", pt.scale_4k);
        let _ = writeln!(
            out,
            "@molar_flow {} umol/s",
            tidy(self.still.molar_flow * 1e6)
        );
        let _ = writeln!(out, "@still_latent_heat {} J/mol", self.still.latent_heat);
        let _ = writeln!(out, "@cp_coefficient {:.10} W/K^p", cp.coefficient);
        let _ = writeln!(out, "@cp_exponent {}", cp.exponent);
        let _ = writeln!(
            out,
            "@cp_base_temperature {} mK",
            tidy(cp.base_temperature * 1e3)
        );
        let _ = writeln!(out, "@mxc_a {:.10} J/(mol K^2)", mxc.a);
        let _ = writeln!(out, "@mxc_b {} J/(mol K^2)", mxc.b);
        let _ = writeln!(
            out,
            "@mxc_exchanger_temperature {} mK",
            tidy(mxc.exchanger_temperature * 1e3)
        );
        let _ = writeln!(out, "T50_K T4_K Q50_W Q4_W");
        let n = pt.t4.len();
        for (i, t50) in pt.t50.iter().enumerate() {
            for (j, t4) in pt.t4.iter().enumerate() {
                let _ = writeln!(out, "{t50} {t4} {} {}", pt.q50[i * n + j], pt.q4[i * n + j]);
            }
        }
        out
    }

    /// Capacity of a capacity-limited stage at the given temperatures.
    pub fn capacity(&self, stage: Stage, temps: &StageTemperatures) -> Result<f64, ThermalError> {
        match stage {
            Stage::Flange50K => Ok(self
                .pulse_tube
                .capacity(temps[Stage::Flange50K], temps[Stage::Flange4K])?
                .0),
            Stage::Flange4K => Ok(self
                .pulse_tube
                .capacity(temps[Stage::Flange50K], temps[Stage::Flange4K])?
                .1),
            Stage::Still => Ok(self.still.power()),
            Stage::ColdPlate => Ok(self.cold_plate.power(temps[Stage::ColdPlate])),
            Stage::MixingChamber => Ok(self.mixing_chamber.power(temps[Stage::MixingChamber])),
            Stage::RoomTemperature => Err(ThermalError::UnsupportedBoundary(stage)),
        }
    }
}

/// Rounds away unit-conversion noise such as 2199.9999999999995.
fn tidy(v: f64) -> f64 {
    format!("{v:.12e}").parse().unwrap_or(v)
}

/// Temperatures the calibrated model must reproduce for the reference wiring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationTargets {
    pub temperatures: StageTemperatures,
}

/// Rescales the free coefficient of each cooled stage so that the reference
/// wiring's loads, evaluated at the target temperatures, are exactly carried
/// there: the two pulse-tube scales, the cold-plate coefficient and the
/// mixing-chamber `a`. Everything else in `base` is left as is.
pub fn calibrate(
    base: &CapacityModel,
    wiring: &Wiring,
    materials: &MaterialLibrary,
    targets: &CalibrationTargets,
) -> Result<CapacityModel, ThermalError> {
    let t = &targets.temperatures;
    let loads = stage_load_summary(wiring, materials, t)?;
    let mut model = base.clone();
    let (q50, q4) = model
        .pulse_tube
        .unscaled(t[Stage::Flange50K], t[Stage::Flange4K])?;
    model.pulse_tube.scale_50k = loads.total(Stage::Flange50K) / q50;
    model.pulse_tube.scale_4k = loads.total(Stage::Flange4K) / q4;
    let cp = &mut model.cold_plate;
    cp.coefficient = loads.total(Stage::ColdPlate) / cp.shape(t[Stage::ColdPlate]);
    let mxc = &mut model.mixing_chamber;
    let t_mxc = t[Stage::MixingChamber];
    mxc.a = (loads.total(Stage::MixingChamber) / mxc.molar_flow
        + mxc.b * mxc.exchanger_temperature.powi(2))
        / (t_mxc * t_mxc);
    for (name, value) in [
        ("scale_50k", model.pulse_tube.scale_50k),
        ("scale_4k", model.pulse_tube.scale_4k),
        ("cp_coefficient", model.cold_plate.coefficient),
        ("mxc_a", model.mixing_chamber.a),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(ThermalError::CalibrationFailed(format!(
                "{name} would be {value}; target temperatures are not reachable with this model shape"
            )));
        }
    }
    Ok(model)
}
