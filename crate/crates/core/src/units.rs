//! Strict parsing of unit-suffixed quantities.
//!
//! Scenario and data files never carry bare physical numbers: every value is
//! written as `<number> <unit>` (for example `20 dB`, `1.4 K`, `50 uW`,
//! `6 GHz`). The unit must belong to the dimension the field expects, so a
//! power written where a temperature is required is rejected instead of being
//! silently reinterpreted. Values are returned in SI base units.

use std::fmt;

/// Physical dimension a field expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Temperature,
    Power,
    /// Logarithmic power ratio (dB).
    Ratio,
    /// Absolute power level referenced to 1 mW (dBm).
    PowerLevel,
    Frequency,
    Length,
    Area,
    Time,
    /// Dimensionless fraction; accepts a bare number or a `%` suffix.
    Fraction,
    MolarFlow,
    MolarEnergy,
}

impl Dimension {
    fn name(self) -> &'static str {
        match self {
            Dimension::Temperature => "temperature",
            Dimension::Power => "power",
            Dimension::Ratio => "ratio (dB)",
            Dimension::PowerLevel => "power level (dBm)",
            Dimension::Frequency => "frequency",
            Dimension::Length => "length",
            Dimension::Area => "area",
            Dimension::Time => "time",
            Dimension::Fraction => "fraction",
            Dimension::MolarFlow => "molar flow",
            Dimension::MolarEnergy => "molar energy",
        }
    }

    /// Base unit symbols accepted for this dimension, with their SI factor.
    fn base_units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Temperature => &[("K", 1.0)],
            Dimension::Power => &[("W", 1.0)],
            Dimension::Ratio => &[("dB", 1.0)],
            Dimension::PowerLevel => &[("dBm", 1.0)],
            Dimension::Frequency => &[("Hz", 1.0)],
            Dimension::Length => &[("m", 1.0)],
            Dimension::Area => &[("m2", 1.0), ("m^2", 1.0)],
            Dimension::Time => &[("s", 1.0), ("min", 60.0), ("h", 3600.0)],
            Dimension::Fraction => &[("%", 0.01)],
            Dimension::MolarFlow => &[("mol/s", 1.0)],
            Dimension::MolarEnergy => &[("J/mol", 1.0)],
        }
    }

    /// Whether SI prefixes may be applied to the base unit.
    fn allows_prefix(self) -> bool {
        !matches!(
            self,
            Dimension::Ratio | Dimension::PowerLevel | Dimension::Fraction
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnitError {
    Empty,
    BadNumber(String),
    MissingUnit {
        dimension: &'static str,
    },
    UnknownUnit {
        unit: String,
        dimension: &'static str,
    },
    NotFinite(String),
}

impl fmt::Display for UnitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitError::Empty => write!(f, "empty quantity"),
            UnitError::BadNumber(s) => write!(f, "cannot parse number in `{s}`"),
            UnitError::MissingUnit { dimension } => {
                write!(f, "missing unit (expected a {dimension})")
            }
            UnitError::UnknownUnit { unit, dimension } => {
                write!(f, "unit `{unit}` is not a {dimension} unit")
            }
            UnitError::NotFinite(s) => write!(f, "non-finite value `{s}`"),
        }
    }
}

impl std::error::Error for UnitError {}

const PREFIXES: &[(&str, f64)] = &[
    ("p", 1e-12),
    ("n", 1e-9),
    ("u", 1e-6),
    ("µ", 1e-6),
    ("μ", 1e-6),
    ("m", 1e-3),
    ("c", 1e-2),
    ("k", 1e3),
    ("M", 1e6),
    ("G", 1e9),
];

/// Parse `text` as a quantity of `dimension`, returning the SI value.
pub fn parse_quantity(text: &str, dimension: Dimension) -> Result<f64, UnitError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(UnitError::Empty);
    }
    let split = text
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E') && i > 0 && exponent_follows(text, i)))
        })
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| UnitError::BadNumber(text.to_string()))?;
    if !value.is_finite() {
        return Err(UnitError::NotFinite(text.to_string()));
    }
    let unit = unit.trim();
    if unit.is_empty() {
        return if dimension == Dimension::Fraction {
            Ok(value)
        } else {
            Err(UnitError::MissingUnit {
                dimension: dimension.name(),
            })
        };
    }
    let factor = unit_factor(unit, dimension).ok_or_else(|| UnitError::UnknownUnit {
        unit: unit.to_string(),
        dimension: dimension.name(),
    })?;
    Ok(value * factor)
}

fn exponent_follows(text: &str, i: usize) -> bool {
    let rest = &text[i + 1..];
    let rest = rest.strip_prefix(['+', '-']).unwrap_or(rest);
    rest.starts_with(|c: char| c.is_ascii_digit())
}

fn unit_factor(unit: &str, dimension: Dimension) -> Option<f64> {
    for &(base, factor) in dimension.base_units() {
        if unit == base {
            return Some(factor);
        }
    }
    if !dimension.allows_prefix() {
        return None;
    }
    for &(prefix, scale) in PREFIXES {
        if let Some(rest) = unit.strip_prefix(prefix) {
            for &(base, factor) in dimension.base_units() {
                // `min` and `h` are not prefixable, and `mm2` means (mm)^2.
                if rest == base && base != "min" && base != "h" {
                    let scale = if dimension == Dimension::Area {
                        scale * scale
                    } else {
                        scale
                    };
                    return Some(scale * factor);
                }
            }
        }
    }
    None
}

/// Convert a dB ratio to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Convert a dBm level to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * db_to_linear(dbm)
}

/// Format `value` with `digits` significant digits, trimming nothing.
pub fn format_sig(value: f64, digits: usize) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}

/// `value` in the SI prefix of `unit` that puts the mantissa in [1, 1000),
/// e.g. `format_with_unit(2.5e-5, "W", 3)` gives `"25.0 µW"`.
pub fn format_with_unit(value: f64, unit: &str, digits: usize) -> String {
    const SCALES: [(&str, f64); 8] = [
        ("G", 1e9),
        ("M", 1e6),
        ("k", 1e3),
        ("", 1.0),
        ("m", 1e-3),
        ("µ", 1e-6),
        ("n", 1e-9),
        ("p", 1e-12),
    ];
    if value == 0.0 || !value.is_finite() {
        return format!("{value} {unit}");
    }
    let (prefix, scale) = SCALES
        .iter()
        .copied()
        .find(|(_, s)| value.abs() >= *s * (1.0 - 0.5e-15))
        .unwrap_or(SCALES[SCALES.len() - 1]);
    format!("{} {prefix}{unit}", format_sig(value / scale, digits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_prefixed_units() {
        assert_eq!(
            parse_quantity("1.4 K", Dimension::Temperature).unwrap(),
            1.4
        );
        assert!((parse_quantity("100 mK", Dimension::Temperature).unwrap() - 0.1).abs() < 1e-15);
        assert!((parse_quantity("50 uW", Dimension::Power).unwrap() - 50e-6).abs() < 1e-18);
        assert!((parse_quantity("50 µW", Dimension::Power).unwrap() - 50e-6).abs() < 1e-18);
        assert_eq!(parse_quantity("6 GHz", Dimension::Frequency).unwrap(), 6e9);
        assert_eq!(
            parse_quantity("-63 dBm", Dimension::PowerLevel).unwrap(),
            -63.0
        );
        assert!(
            (parse_quantity("2200 umol/s", Dimension::MolarFlow).unwrap() - 2200e-6).abs() < 1e-18
        );
        assert!((parse_quantity("0.5 mm2", Dimension::Area).unwrap() - 0.5e-6).abs() < 1e-20);
        assert_eq!(parse_quantity("4 min", Dimension::Time).unwrap(), 240.0);
        assert_eq!(parse_quantity("1e-3 W", Dimension::Power).unwrap(), 1e-3);
    }

    #[test]
    fn fractions_accept_percent_or_bare() {
        assert_eq!(parse_quantity("33 %", Dimension::Fraction).unwrap(), 0.33);
        assert_eq!(parse_quantity("0.33", Dimension::Fraction).unwrap(), 0.33);
    }

    #[test]
    fn rejects_wrong_dimension_and_bare_numbers() {
        assert!(matches!(
            parse_quantity("20 dB", Dimension::Temperature),
            Err(UnitError::UnknownUnit { .. })
        ));
        assert!(matches!(
            parse_quantity("1.4", Dimension::Temperature),
            Err(UnitError::MissingUnit { .. })
        ));
        assert!(matches!(
            parse_quantity("k20 dB", Dimension::Ratio),
            Err(UnitError::BadNumber(_))
        ));
        assert!(parse_quantity("20 mdB", Dimension::Ratio).is_err());
        assert!(parse_quantity("", Dimension::Ratio).is_err());
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(2502.807, 4), "2503");
        assert_eq!(format_sig(0.245354, 4), "0.2454");
        assert_eq!(format_sig(13.949, 4), "13.95");
        assert_eq!(format_with_unit(2.5e-5, "W", 3), "25.0 µW");
        assert_eq!(format_with_unit(20e-9, "W", 4), "20.00 nW");
        assert_eq!(format_with_unit(-3.1, "K", 2), "-3.1 K");
    }
}
