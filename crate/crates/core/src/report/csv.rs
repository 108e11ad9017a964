use std::path::Path;

use crate::evaluation::{DistanceReport, TraitCurveTable};
use crate::traits::Trait;

use super::ReportError;

/// Write a curve table as CSV (see [`TraitCurveTable::to_csv`]).
pub fn emit_csv(table: &TraitCurveTable, path: &Path) -> Result<(), ReportError> {
    std::fs::write(path, table.to_csv())?;
    Ok(())
}

/// `pair,extraversion,...,openness,bins` with one row per report.
pub fn distance_csv(reports: &[DistanceReport]) -> String {
    let mut w = ::csv::WriterBuilder::new()
        .terminator(::csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["pair".to_string()];
    header.extend(Trait::ALL.iter().map(|t| t.name().to_string()));
    header.push("bins".into());
    w.write_record(&header).expect("write to memory");
    for r in reports {
        let mut rec = vec![format!("{}-{}", r.source_a, r.source_b)];
        rec.extend(r.per_trait_distance.iter().map(|d| format!("{d:.4}")));
        rec.push(r.bin_count_used.to_string());
        w.write_record(&rec).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
}

pub fn emit_distance_csv(reports: &[DistanceReport], path: &Path) -> Result<(), ReportError> {
    std::fs::write(path, distance_csv(reports))?;
    Ok(())
}
