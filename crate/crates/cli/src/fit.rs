use std::fmt::Write as _;

use cryochain::coherence::{BatchSummary, SeriesStats, TraceOutcome};
use cryochain::units::format_sig;

fn num(v: f64, digits: Option<usize>) -> String {
    match digits {
        Some(d) => format_sig(v, d),
        None => v.to_string(),
    }
}

/// `mean ± sem` in µs, or `-`.
fn micro(s: &Option<SeriesStats>, digits: Option<usize>) -> String {
    match s {
        Some(s) => format!(
            "{} ± {} (n={})",
            num(s.mean * 1e6, digits),
            num(s.standard_error_of_mean * 1e6, digits.map(|d| d.min(2))),
            s.count
        ),
        None => "-".into(),
    }
}

pub fn render_human(summary: &BatchSummary, digits: Option<usize>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} files, {} skipped, {} excluded by {} window(s)",
        summary.files_read,
        summary.skipped.len(),
        summary.excluded,
        summary.exclusions.len()
    );
    for g in &summary.groups {
        let _ = writeln!(out);
        let label = if g.label.is_empty() {
            "(unlabelled)"
        } else {
            &g.label
        };
        let _ = writeln!(out, "{label}: {} fits, {} failed", g.fits_ok, g.fits_failed);
        let _ = writeln!(out, "  T1    {} µs", micro(&g.t1, digits));
        let _ = writeln!(out, "  T2    {} µs", micro(&g.t2, digits));
        let _ = writeln!(out, "  Tphi  {} µs", micro(&g.tphi, digits));
        if g.lifetime_limited > 0 || g.unresolved_t2 > 0 {
            let _ = writeln!(
                out,
                "  {} lifetime-limited pair(s), {} unresolved Ramsey decay(s)",
                g.lifetime_limited, g.unresolved_t2
            );
        }
        if let Some(t) = &g.tilt {
            let _ = writeln!(
                out,
                "  tilt B {} ± {} 1/s, max |B| {} 1/s",
                num(t.stats.mean, digits),
                num(t.stats.standard_error_of_mean, digits.map(|d| d.min(2))),
                num(t.max_abs_tilt, digits)
            );
        }
    }
    if let Some(c) = &summary.tilt_comparison {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "tilt {} - {}: {} ± {} 1/s, variance ratio {}",
            c.first,
            c.second,
            num(c.difference_of_means, digits),
            num(c.difference_standard_error, digits.map(|d| d.min(2))),
            num(c.variance_ratio, digits)
        );
    }
    out
}

/// One row per fitted quantity, for plotting: `label,timestamp,quantity,unit,value`.
pub fn render_machine(summary: &BatchSummary) -> String {
    let mut rows: Vec<(String, f64, &str, &str, f64)> = Vec::new();
    for r in &summary.traces {
        match &r.outcome {
            TraceOutcome::T1(f) => rows.push((r.label.clone(), r.timestamp, "t1", "s", f.t1)),
            TraceOutcome::Ramsey(f) => {
                rows.push((r.label.clone(), r.timestamp, "t2", "s", f.t2));
                rows.push((r.label.clone(), r.timestamp, "tilt", "1/s", f.b));
            }
            _ => {}
        }
    }
    for g in &summary.groups {
        for &(ts, v) in &g.tphi_series {
            rows.push((g.label.clone(), ts, "tphi", "s", v));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.2.cmp(b.2)).then(a.1.total_cmp(&b.1)));
    let mut out = String::from("label,timestamp,quantity,unit,value\n");
    for (label, ts, q, unit, v) in rows {
        let _ = writeln!(out, "{label},{ts},{q},{unit},{v}");
    }
    out
}
