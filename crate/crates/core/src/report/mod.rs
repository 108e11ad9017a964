//! Human-readable outputs: CSV tables, SVG line charts and a markdown report.

mod csv;
mod markdown;
mod svg;

use thiserror::Error;

pub use self::csv::{distance_csv, emit_csv, emit_distance_csv};
pub use self::markdown::{emit_markdown_report, render_markdown_report, ReportFiles};
pub use self::svg::{emit_svg_chart, render_svg_chart};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
}
