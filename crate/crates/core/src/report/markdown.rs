use std::fmt::Write as _;
use std::path::PathBuf;

use super::{distance_csv, render_svg_chart, ReportError};
use crate::evaluation::{anomalies, load_reference, DistanceReport, Direction, TraitCurveTable};
use crate::store::{RunStore, Stage};
use crate::traits::Trait;

/// A rendered report: the markdown text and the side files it links to.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub markdown: String,
    /// (file name, contents) to be written next to `report.md`.
    pub files: Vec<(String, String)>,
}

fn last_payload<T: serde::de::DeserializeOwned>(store: &RunStore, stage: Stage) -> Result<Option<T>, ReportError> {
    let read = store.read_stage(stage)?;
    Ok(match read.records.last() {
        Some(r) => Some(r.payload_as()?),
        None => None,
    })
}

fn curve_table_md(curve: &TraitCurveTable) -> String {
    let mut s = String::from("| age range | n | extraversion | agreeableness | conscientiousness | neuroticism | openness |\n");
    s.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
    for r in curve.rows() {
        let n = r.count.map_or("".to_string(), |n| n.to_string());
        let _ = write!(s, "| {} | {n} |", r.label);
        for v in r.values {
            let _ = write!(s, " {v:.2} |");
        }
        s.push('\n');
    }
    s
}

fn distance_table_md(reports: &[DistanceReport]) -> String {
    let mut s = String::from("| pair | extraversion | agreeableness | conscientiousness | neuroticism | openness | bins |\n");
    s.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
    for r in reports {
        let _ = write!(s, "| {}-{} |", r.source_a, r.source_b);
        for d in r.per_trait_distance {
            let _ = write!(s, " {d:.2} |");
        }
        let _ = writeln!(s, " {} |", r.bin_count_used);
    }
    s
}

/// Build the report from the run store alone.
pub fn render_markdown_report(store: &RunStore) -> Result<ReportFiles, ReportError> {
    let m = store.manifest();
    let mut md = String::new();
    let mut files = Vec::new();
    let _ = writeln!(md, "# Run report `{}`\n", m.run_id);

    md.push_str("## Manifest\n\n");
    let _ = writeln!(md, "- tool: {}", m.tool_version);
    let _ = writeln!(md, "- created: {}", m.created_at);
    let _ = writeln!(
        md,
        "- census: `{}` ({} rows, {} skipped), digest `{}`",
        m.census.path, m.census.rows, m.census.skipped_rows, m.census.digest
    );
    let _ = writeln!(
        md,
        "- sampling: n = {}, seed = {}, predicate = {}, weighted = {}",
        m.sample_n,
        m.sample_seed,
        m.predicate.as_deref().unwrap_or("none"),
        m.weighted
    );
    let _ = writeln!(
        md,
        "- provider: {} (model `{}`, temperature {})",
        m.provider.kind, m.provider.model_id, m.provider.temperature
    );
    let _ = writeln!(
        md,
        "- norms: {} ; values: {} ; chunk size {} ; re-ask cap {}",
        m.norm_version, m.value_kind, m.chunk_size, m.reask_cap
    );
    for t in &m.templates {
        let _ = writeln!(
            md,
            "- template `{}` v{} digest `{}`{}",
            t.template_id,
            t.version,
            &t.digest[..t.digest.len().min(16)],
            if t.reconstruction { " (reconstruction)" } else { "" }
        );
    }
    md.push('\n');

    md.push_str("## Population\n\n");
    md.push_str("| stage | records |\n|---|---:|\n");
    for stage in Stage::ALL {
        let _ = writeln!(md, "| {} | {} |", stage.name(), store.read_stage(stage)?.records.len());
    }
    md.push('\n');
    let failures = store.read_failures()?;
    if !failures.is_empty() {
        let _ = writeln!(md, "{} persona stage failure(s):\n", failures.len());
        for f in &failures {
            let _ = writeln!(md, "- `{}` {} ({}): {}", f.persona_id, f.stage, f.status, f.error);
        }
        md.push('\n');
    }

    let curve: Option<TraitCurveTable> = last_payload(store, Stage::Curve)?;
    let Some(curve) = curve.filter(|c| !c.is_empty()) else {
        md.push_str("No scored personas: the population curve is empty (0 personas), so there is nothing to compare.\n");
        return Ok(ReportFiles { markdown: md, files });
    };

    md.push_str("## Trait curve\n\n");
    let _ = writeln!(md, "Source `{}`, {} value.", curve.source(), m.value_kind);
    if curve.excluded() > 0 {
        let _ = writeln!(md, "{} persona(s) fell outside every age bin and were excluded.", curve.excluded());
    }
    md.push('\n');
    md.push_str(&curve_table_md(&curve));
    md.push_str("\n[curve.csv](curve.csv)\n\n");
    files.push(("curve.csv".to_string(), curve.to_csv()));

    let reports: Vec<DistanceReport> = store
        .read_stage(Stage::Distance)?
        .records
        .iter()
        .map(|r| r.payload_as())
        .collect::<Result<_, _>>()?;
    md.push_str("## Distance to references\n\n");
    if reports.is_empty() {
        md.push_str("No distance records.\n\n");
    } else {
        md.push_str("Root-mean-square difference per trait over the shared age bins.\n\n");
        md.push_str(&distance_table_md(&reports));
        md.push_str("\n[distance.csv](distance.csv)\n\n");
        files.push(("distance.csv".to_string(), distance_csv(&reports)));
    }

    md.push_str("## Charts\n\n");
    let mut curves = vec![curve.clone()];
    for name in &m.references {
        if let Ok(r) = load_reference(name) {
            if r.source() != curve.source() {
                curves.push(r);
            }
        }
    }
    files.push((
        "curves.svg".to_string(),
        render_svg_chart(&curves, &Trait::ALL, "Big Five trait means by age"),
    ));
    md.push_str("- [all traits](curves.svg)\n");
    for t in Trait::ALL {
        let name = format!("curves_{}.svg", t.name());
        files.push((name.clone(), render_svg_chart(&curves, &[t], t.name())));
        let _ = writeln!(md, "- [{}]({name})", t.name());
    }
    md.push('\n');

    md.push_str("## Flagged anomalies\n\n");
    let flagged = anomalies(&curve, m.anomaly_threshold);
    if flagged.is_empty() {
        let _ = writeln!(
            md,
            "None: every trait's population mean lies within {} of 50.",
            m.anomaly_threshold
        );
    } else {
        let _ = writeln!(
            md,
            "Traits whose population mean deviates from 50 by more than {}:\n",
            m.anomaly_threshold
        );
        for a in &flagged {
            let dir = match a.direction {
                Direction::High => "high",
                Direction::Low => "low",
            };
            let _ = writeln!(md, "- {} {dir} (mean {:.2})", a.trait_name.name(), a.mean);
        }
    }
    Ok(ReportFiles { markdown: md, files })
}

/// Write `report/report.md` and its side files; returns the markdown path.
pub fn emit_markdown_report(store: &RunStore) -> Result<PathBuf, ReportError> {
    let out = render_markdown_report(store)?;
    let dir = store.report_dir();
    std::fs::create_dir_all(&dir)?;
    for (name, body) in &out.files {
        std::fs::write(dir.join(name), body)?;
    }
    let path = dir.join("report.md");
    std::fs::write(&path, &out.markdown)?;
    Ok(path)
}
