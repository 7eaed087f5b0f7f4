//! Delimited-text trace files.
//!
//! ```text
//! # kind: ramsey
//! # timestamp: 1700000000
//! # label: optical
//! delay_s,population
//! 0,0.98
//! 2e-06,0.91
//! ```
//!
//! Columns may be separated by commas, semicolons, tabs or spaces. Unknown
//! `#` keys are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{DecayTrace, TraceKind};
use crate::error::{Error, FitError};

pub fn parse_trace(text: &str) -> Result<DecayTrace, FitError> {
    let bad = |line: usize, msg: String| FitError::InvalidTrace(format!("line {line}: {msg}"));
    let mut kind = None;
    let mut timestamp = None;
    let mut label = String::new();
    let mut delays = Vec::new();
    let mut populations = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((key, value)) = meta.split_once(':') {
                let value = value.trim();
                match key.trim() {
                    "kind" => kind = Some(value.parse::<TraceKind>().map_err(|e| bad(lineno, e))?),
                    "timestamp" => {
                        timestamp = Some(
                            value
                                .parse::<f64>()
                                .map_err(|e| bad(lineno, format!("timestamp: {e}")))?,
                        )
                    }
                    "label" => label = value.to_string(),
                    _ => {}
                }
            }
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(bad(
                lineno,
                format!("expected 2 columns, found {}", fields.len()),
            ));
        }
        match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(d), Ok(p)) => {
                delays.push(d);
                populations.push(p);
            }
            // A header row is allowed before any data.
            _ if delays.is_empty() && fields[0].parse::<f64>().is_err() => {}
            _ => return Err(bad(lineno, format!("cannot parse `{line}`"))),
        }
    }
    let trace = DecayTrace {
        kind: kind.ok_or_else(|| FitError::InvalidTrace("missing `# kind:` header".into()))?,
        delays,
        populations,
        timestamp: timestamp
            .ok_or_else(|| FitError::InvalidTrace("missing `# timestamp:` header".into()))?,
        label,
    };
    if trace.delays.is_empty() {
        return Err(FitError::InvalidTrace("no data rows".into()));
    }
    trace.validate()?;
    Ok(trace)
}

pub fn format_trace(trace: &DecayTrace) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# kind: {}", trace.kind.name());
    let _ = writeln!(out, "# timestamp: {}", trace.timestamp);
    if !trace.label.is_empty() {
        let _ = writeln!(out, "# label: {}", trace.label);
    }
    out.push_str("delay_s,population\n");
    for (d, p) in trace.delays.iter().zip(&trace.populations) {
        let _ = writeln!(out, "{d:e},{p}");
    }
    out
}

pub fn read_trace(path: &Path) -> Result<DecayTrace, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(parse_trace(&text)?)
}

pub fn write_trace(path: &Path, trace: &DecayTrace) -> Result<(), Error> {
    std::fs::write(path, format_trace(trace))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let tr = DecayTrace {
            kind: TraceKind::Ramsey,
            delays: vec![0.0, 1.5e-6, 3e-6],
            populations: vec![0.9, 0.45, 0.123456789],
            timestamp: 1.7e9,
            label: "optical".into(),
        };
        assert_eq!(parse_trace(&format_trace(&tr)).unwrap(), tr);
    }

    #[test]
    fn whitespace_columns_and_errors() {
        let t = parse_trace("# kind: t1\n# timestamp: 5\n0 1.0\n1e-6\t0.5\n").unwrap();
        assert_eq!(t.delays, vec![0.0, 1e-6]);
        assert!(parse_trace("# timestamp: 5\n0 1\n").is_err());
        assert!(parse_trace("# kind: t1\n# timestamp: 5\n0 1\n1e-6 x\n").is_err());
    }
}
