//! Line charts of trait curves over age bins.
//!
//! One polyline per (source, trait). Traits are told apart by colour and
//! sources by dash pattern. Numbers are printed with fixed precision so the
//! same input always yields the same bytes.

use std::fmt::Write as _;
use std::path::Path;

use super::ReportError;
use crate::evaluation::{bin_slot, TraitCurveTable};
use crate::traits::Trait;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn colour(t: Trait) -> &'static str {
    match t {
        Trait::Extraversion => "#1f77b4",
        Trait::Agreeableness => "#2ca02c",
        Trait::Conscientiousness => "#d62728",
        Trait::Neuroticism => "#9467bd",
        Trait::Openness => "#ff7f0e",
    }
}

const DASHES: [&str; 4] = ["", "6 4", "2 3", "10 3 2 3"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Bin slots across all curves in age order, each with the first label seen.
fn x_axis(curves: &[TraitCurveTable]) -> Vec<(String, String, u32)> {
    let mut axis: Vec<(String, String, u32)> = Vec::new();
    for c in curves {
        for r in c.rows() {
            let slot = bin_slot(&r.label);
            if !axis.iter().any(|(s, _, _)| *s == slot) {
                axis.push((slot, r.label.clone(), r.low_age()));
            }
        }
    }
    axis.sort_by(|a, b| (a.2, &a.0).cmp(&(b.2, &b.0)));
    axis
}

fn y_range(curves: &[TraitCurveTable], traits: &[Trait]) -> (f64, f64) {
    let values: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.rows().iter())
        .flat_map(|r| traits.iter().map(move |t| r.value(*t)))
        .collect();
    if values.is_empty() {
        return (0.0, 100.0);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = (lo / 10.0).floor() * 10.0;
    let hi = (hi / 10.0).ceil() * 10.0;
    if hi - lo < 10.0 {
        (lo - 5.0, lo + 5.0)
    } else {
        (lo, hi)
    }
}

pub fn render_svg_chart(curves: &[TraitCurveTable], traits: &[Trait], title: &str) -> String {
    let axis = x_axis(curves);
    let (y0, y1) = y_range(curves, traits);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x_of = |i: usize| {
        if axis.len() <= 1 {
            LEFT + plot_w / 2.0
        } else {
            LEFT + plot_w * i as f64 / (axis.len() - 1) as f64
        }
    };
    let y_of = |v: f64| TOP + plot_h * (1.0 - (v - y0) / (y1 - y0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{HEIGHT:.0}" viewBox="0 0 {WIDTH:.0} {HEIGHT:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    // Axes, horizontal grid and y ticks.
    let _ = writeln!(
        s,
        r##"<g class="axes" stroke="#333"><line x1="{LEFT:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{:.2}"/></g>"##,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h,
        TOP + plot_h
    );
    let steps = 5;
    for k in 0..=steps {
        let v = y0 + (y1 - y0) * k as f64 / steps as f64;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.0}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for (i, (_, label, _)) in axis.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x_of(i),
            TOP + plot_h + 18.0,
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">age range</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    );

    let mut legend = Vec::new();
    for (ci, curve) in curves.iter().enumerate() {
        let dash = DASHES[ci % DASHES.len()];
        for &t in traits {
            let points: Vec<String> = curve
                .rows()
                .iter()
                .filter_map(|r| {
                    let slot = bin_slot(&r.label);
                    let i = axis.iter().position(|(s, _, _)| *s == slot)?;
                    Some(format!("{:.2},{:.2}", x_of(i), y_of(r.value(t))))
                })
                .collect();
            if points.is_empty() {
                continue;
            }
            let dash_attr = if dash.is_empty() {
                String::new()
            } else {
                format!(r#" stroke-dasharray="{dash}""#)
            };
            let _ = writeln!(
                s,
                r#"<polyline data-source="{}" data-trait="{}" fill="none" stroke="{}" stroke-width="2"{dash_attr} points="{}"/>"#,
                escape(curve.source()),
                t.name(),
                colour(t),
                points.join(" ")
            );
            legend.push((format!("{} {}", curve.source(), t.name()), colour(t), dash));
        }
    }
    let lx = WIDTH - RIGHT + 16.0;
    let _ = writeln!(s, r#"<g class="legend">"#);
    for (i, (label, col, dash)) in legend.iter().enumerate() {
        let y = TOP + 8.0 + 18.0 * i as f64;
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{col}" stroke-width="2"{dash_attr}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            y + 4.0,
            escape(label)
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

pub fn emit_svg_chart(
    curves: &[TraitCurveTable],
    traits: &[Trait],
    title: &str,
    path: &Path,
) -> Result<(), ReportError> {
    std::fs::write(path, render_svg_chart(curves, traits, title))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::load_reference;

    #[test]
    fn ten_lines_for_two_sources() {
        let curves = [load_reference("bhps").unwrap(), load_reference("glm4").unwrap()];
        let svg = render_svg_chart(&curves, &Trait::ALL, "Big Five by age");
        assert_eq!(svg.matches("<polyline").count(), 10);
        let labels: Vec<&str> = svg
            .lines()
            .filter(|l| l.contains("class=\"x-label\""))
            .map(|l| l.split('>').nth(1).unwrap().trim_end_matches("</text"))
            .collect();
        assert_eq!(labels, ["16_19", "20_29", "30_39", "40_49", "50_59", "60_69", "70_79", "80_85"]);
        let legend = svg.split("<g class=\"legend\">").nth(1).unwrap();
        assert_eq!(legend.matches("<line").count(), 10);
        assert!(legend.contains("glm4 agreeableness"));
    }

    #[test]
    fn single_line() {
        let svg = render_svg_chart(&[load_reference("gsoep").unwrap()], &[Trait::Openness], "o");
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn deterministic_file() {
        let tmp = tempfile::tempdir().unwrap();
        let curves = [load_reference("bhps").unwrap()];
        let a = tmp.path().join("a.svg");
        let b = tmp.path().join("b.svg");
        emit_svg_chart(&curves, &Trait::ALL, "t", &a).unwrap();
        emit_svg_chart(&curves, &Trait::ALL, "t", &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn empty_input_still_renders() {
        let svg = render_svg_chart(&[], &Trait::ALL, "<empty>");
        assert!(svg.contains("&lt;empty&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 0);
    }
}
