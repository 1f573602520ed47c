//! Plot-ready curve CSV with a stable contract: fixed column order
//! `hyperparam,estimate,oracle,proxy,flags`, `.` decimal separator,
//! 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use precda::harness::{CurvePoint, ErrorCurve};

fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

fn flags(point: &CurvePoint) -> String {
    let mut out = Vec::new();
    if let Some(ind) = point.diagnostics.indicator {
        out.push(format!("indicator={}", u8::from(ind)));
    }
    if point.diagnostics.flagged {
        out.push("flagged".to_string());
    }
    if let Some(err) = &point.diagnostics.error {
        // keep the CSV cell intact
        out.push(format!("err={}", err.replace([',', '\n', ';'], " ")));
    }
    out.join(";")
}

pub fn render_curve_csv(curve: &ErrorCurve) -> String {
    let mut out = String::from("hyperparam,estimate,oracle,proxy,flags\n");
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            sig17(p.param),
            p.estimate.map(sig17).unwrap_or_default(),
            p.oracle.map(sig17).unwrap_or_default(),
            p.proxy.map(sig17).unwrap_or_default(),
            flags(p)
        );
    }
    out
}

pub fn write_curve_csv(path: &Path, curve: &ErrorCurve) -> std::io::Result<()> {
    std::fs::write(path, render_curve_csv(curve))
}
