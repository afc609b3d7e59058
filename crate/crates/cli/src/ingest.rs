use std::fmt::Write as _;
use std::path::Path;

use moodtune_core::catalog::{FixtureDocument, FixtureError, FixtureReport};

use crate::error::CliError;

/// Reads and checks a fixture catalog. Schema violations are part of the
/// report, not an error.
pub fn ingest(path: &Path) -> Result<FixtureReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(FixtureDocument::parse(&text)?.report())
}

pub fn to_text(report: &FixtureReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "tracks      {}", report.tracks);
    let _ = writeln!(s, "similarity  {}", report.similarity);
    let _ = writeln!(s, "search      {}", report.search);
    let _ = writeln!(s, "features    {}", report.features);
    let _ = writeln!(s, "violations  {}", report.violations.len());
    for v in &report.violations {
        let _ = writeln!(s, "  {} {}: {}", v.location, v.field, v.message);
    }
    s
}
