use std::collections::BTreeMap;

use serde::Serialize;

use super::{CoaxGeometry, CoaxSegment};
use crate::error::{DataError, ThermalError};
use crate::tables::DataTable;
use crate::units::Dimension;

/// Thermal conductivity data for one coax type.
///
/// `k` is tabulated for the conductor (effective, plating included) and the
/// dielectric; the cumulative integrals from the lowest table temperature
/// are shipped alongside and must equal the trapezoid rule over `k`, which
/// makes them exact for the piecewise-linear `k` used between grid points.
#[derive(Debug, Clone, Serialize)]
pub struct CoaxMaterial {
    pub id: String,
    pub description: String,
    pub geometry: CoaxGeometry,
    /// Superconducting transition; above it the table holds normal-state data.
    pub critical_temperature: Option<f64>,
    temperatures: Vec<f64>,
    k_conductor: Vec<f64>,
    k_dielectric: Vec<f64>,
    int_conductor: Vec<f64>,
    int_dielectric: Vec<f64>,
}

const INTEGRAL_CONSISTENCY: f64 = 1e-6;

impl CoaxMaterial {
    pub fn from_table(table: &DataTable) -> Result<Self, DataError> {
        let invalid = |message: String| DataError::Invalid {
            file: table.source.clone(),
            message,
        };
        let id = table
            .directive("material")
            .ok_or_else(|| DataError::MissingDirective {
                file: table.source.clone(),
                key: "material".into(),
            })?
            .to_string();
        let geometry = CoaxGeometry {
            outer_conductor: table.quantity("area_outer", Dimension::Area)?,
            inner_conductor: table.quantity("area_inner", Dimension::Area)?,
            dielectric: table.quantity("area_dielectric", Dimension::Area)?,
        };
        let critical_temperature = match table.directive("critical_temperature") {
            Some(_) => Some(table.quantity("critical_temperature", Dimension::Temperature)?),
            None => None,
        };
        let material = CoaxMaterial {
            description: table
                .directive("description")
                .unwrap_or_default()
                .to_string(),
            geometry,
            critical_temperature,
            temperatures: table.column("T_K")?,
            k_conductor: table.column("k_conductor")?,
            k_dielectric: table.column("k_dielectric")?,
            int_conductor: table.column("int_conductor")?,
            int_dielectric: table.column("int_dielectric")?,
            id,
        };
        let t = &material.temperatures;
        if t.len() < 2 || t[0] <= 0.0 || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid(
                "temperatures must be positive and strictly increasing".into(),
            ));
        }
        for (name, k, int) in [
            ("conductor", &material.k_conductor, &material.int_conductor),
            (
                "dielectric",
                &material.k_dielectric,
                &material.int_dielectric,
            ),
        ] {
            if k.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(invalid(format!(
                    "negative or non-finite {name} conductivity"
                )));
            }
            let expected = trapezoid_cumulative(t, k);
            for (i, (e, got)) in expected.iter().zip(int.iter()).enumerate() {
                if (e - got).abs() > INTEGRAL_CONSISTENCY * e.abs().max(1e-12) {
                    return Err(invalid(format!(
                        "{name} integral at row {} is {got}, trapezoid of k gives {e}",
                        i + 1
                    )));
                }
            }
        }
        Ok(material)
    }

    pub fn temperature_range(&self) -> (f64, f64) {
        (self.temperatures[0], *self.temperatures.last().unwrap())
    }

    pub fn is_superconducting_at(&self, temperature: f64) -> bool {
        self.critical_temperature.is_some_and(|tc| temperature < tc)
    }

    /// Grid temperatures and conductivities (conductor, dielectric).
    pub fn conductivity_table(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.temperatures, &self.k_conductor, &self.k_dielectric)
    }

    fn check_range(&self, temperature: f64) -> Result<(), ThermalError> {
        let (min, max) = self.temperature_range();
        if !(min..=max).contains(&temperature) {
            return Err(ThermalError::TemperatureOutOfRange {
                material: self.id.clone(),
                temperature,
                min,
                max,
            });
        }
        Ok(())
    }

    /// Conductivity integrals (conductor, dielectric) from the table minimum
    /// to `temperature`, W/m.
    pub fn integrated_conductivity(&self, temperature: f64) -> Result<(f64, f64), ThermalError> {
        self.check_range(temperature)?;
        let t = &self.temperatures;
        let i = t
            .partition_point(|&x| x <= temperature)
            .clamp(1, t.len() - 1)
            - 1;
        let h = t[i + 1] - t[i];
        let dx = temperature - t[i];
        let eval =
            |k: &[f64], int: &[f64]| int[i] + k[i] * dx + (k[i + 1] - k[i]) * dx * dx / (2.0 * h);
        Ok((
            eval(&self.k_conductor, &self.int_conductor),
            eval(&self.k_dielectric, &self.int_dielectric),
        ))
    }
}

fn trapezoid_cumulative(t: &[f64], k: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..t.len() {
        acc += 0.5 * (k[i] + k[i - 1]) * (t[i] - t[i - 1]);
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct MaterialLibrary {
    materials: BTreeMap<String, CoaxMaterial>,
}

impl MaterialLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, material: CoaxMaterial) {
        self.materials.insert(material.id.clone(), material);
    }

    pub fn get(&self, id: &str) -> Result<&CoaxMaterial, ThermalError> {
        self.materials
            .get(id)
            .ok_or_else(|| ThermalError::UnknownMaterial(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.materials.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.materials.keys().map(String::as_str)
    }

    /// Heat conducted along one cable of `segment` between the given anchor
    /// temperatures: (A/L) · ∫ k dT summed over conductor and dielectric.
    pub fn conduction_load(
        &self,
        segment: &CoaxSegment,
        t_hot: f64,
        t_cold: f64,
    ) -> Result<f64, ThermalError> {
        let material = self.get(&segment.material)?;
        if !(t_cold > 0.0 && t_hot >= t_cold) || !t_hot.is_finite() {
            return Err(ThermalError::InvalidTemperatures { t_hot, t_cold });
        }
        let (hot_c, hot_d) = material.integrated_conductivity(t_hot)?;
        let (cold_c, cold_d) = material.integrated_conductivity(t_cold)?;
        let g = &segment.geometry;
        let q = (g.conductor_area() * (hot_c - cold_c) + g.dielectric * (hot_d - cold_d))
            / segment.length;
        Ok(q.max(0.0))
    }
}
