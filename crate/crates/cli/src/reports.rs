//! Experiment reports as JSON lines: one report object per line, embedding
//! its own config echo so every report is self-describing.

use std::io::Write;
use std::path::Path;

use precda::harness::ExperimentReport;

pub fn write_reports_jsonl(path: &Path, reports: &[ExperimentReport]) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    for report in reports {
        let line = serde_json::to_string(report).expect("report serialization cannot fail");
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
    }
    Ok(())
}
