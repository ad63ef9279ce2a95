//! Tabular, map and chart renderings of an analysis.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{AreaSummary, BinBounds, RepresentationClass, RepresentednessMap};
use crate::error::Result;
use crate::grid::Grid;
use crate::pipeline::AnalysisReport;
use crate::SCHEMA_VERSION;

/// Legend colours, dark red through green to dark blue.
pub fn class_color(class: RepresentationClass) -> &'static str {
    match class {
        RepresentationClass::VeryUnder => "#8b0000",
        RepresentationClass::Under => "#e34a33",
        RepresentationClass::Well => "#2ca25f",
        RepresentationClass::Over => "#3182bd",
        RepresentationClass::VeryOver => "#08306b",
    }
}

fn csv_string<F>(fill: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    fill(&mut w)?;
    let bytes = w
        .into_inner()
        .map_err(|e| crate::Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per bin: bounds (or category), both proportions, score and class.
pub fn bins_csv(report: &AnalysisReport) -> Result<String> {
    csv_string(|w| {
        w.write_record(["bin", "lower", "upper", "category", "p_sample", "p_population", "score", "class"])?;
        for b in &report.bins {
            let (lower, upper, category) = match b.bounds {
                BinBounds::Range { lower, upper } => (lower.to_string(), upper.to_string(), String::new()),
                BinBounds::Category(c) => (String::new(), String::new(), c.to_string()),
            };
            w.write_record([
                b.bin.to_string(),
                lower,
                upper,
                category,
                b.p_sample.to_string(),
                b.p_population.to_string(),
                b.score.to_string(),
                b.class.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// One row per classified cell.
pub fn cells_csv(map: &RepresentednessMap) -> Result<String> {
    csv_string(|w| {
        w.write_record(["band", "column", "value", "bin", "score", "class"])?;
        for c in &map.cells {
            w.write_record([
                c.cell.band.to_string(),
                c.cell.column.to_string(),
                c.value.to_string(),
                c.bin.to_string(),
                c.score.to_string(),
                c.class.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Null-distribution summary as `bin,lower,upper,count`.
pub fn null_csv(report: &AnalysisReport) -> Result<String> {
    let bins = report.null.histogram.len();
    csv_string(|w| {
        w.write_record(["bin", "lower", "upper", "count"])?;
        for (i, count) in report.null.histogram.iter().enumerate() {
            w.write_record([
                i.to_string(),
                (i as f64 / bins as f64).to_string(),
                ((i + 1) as f64 / bins as f64).to_string(),
                count.to_string(),
            ])?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct LegendEntry {
    class: RepresentationClass,
    color: &'static str,
    area_km2: f64,
    percent: f64,
}

/// A GeoJSON FeatureCollection with one polygon per classified cell. Properties carry
/// `class`, `score`, `value` and the cell's `band`/`column`; the legend and area summary
/// ride along as foreign members.
pub fn map_document(map: &RepresentednessMap, areas: &AreaSummary, grid: &Grid) -> Result<Value> {
    let mut features = Vec::with_capacity(map.cells.len());
    for c in &map.cells {
        let ring: Vec<[f64; 2]> = grid
            .cell_polygon(c.cell)?
            .vertices
            .iter()
            .map(|&(lat, lon)| [lon, lat])
            .collect();
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Polygon", "coordinates": [ring] },
            "properties": {
                "band": c.cell.band,
                "column": c.cell.column,
                "class": c.class,
                "score": c.score,
                "value": c.value,
            },
        }));
    }
    let legend: Vec<LegendEntry> = areas
        .classes
        .iter()
        .map(|a| LegendEntry {
            class: a.class,
            color: class_color(a.class),
            area_km2: a.area_km2,
            percent: a.percent,
        })
        .collect();
    Ok(json!({
        "type": "FeatureCollection",
        "schema_version": SCHEMA_VERSION,
        "legend": legend,
        "total_area_km2": areas.total_area_km2,
        "features": features,
    }))
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 40.0;

fn svg_open(title: &str, extra: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}"{extra}>"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{y}" x2="{x2}" y2="{y}" stroke="#000000"/>"##,
        y = HEIGHT - MARGIN,
        x2 = WIDTH - MARGIN / 2.0
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Vertical bars for `heights`, scaled to the tallest.
fn bars(s: &mut String, heights: &[f64], fill: &str) {
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let top = heights.iter().cloned().fold(0.0, f64::max);
    let bw = plot_w / heights.len().max(1) as f64;
    for (i, &h) in heights.iter().enumerate() {
        let bh = if top > 0.0 { plot_h * h / top } else { 0.0 };
        let _ = writeln!(
            s,
            r#"<rect class="bar" data-bin="{i}" data-value="{h}" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{fill}" stroke="{fill}"/>"#,
            MARGIN + i as f64 * bw,
            HEIGHT - MARGIN - bh,
            (bw - 1.0).max(0.5),
            bh
        );
    }
}

fn axis_labels(s: &mut String, left: &str, right: &str) {
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
        HEIGHT - MARGIN + 16.0,
        escape(left)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
        WIDTH - MARGIN / 2.0,
        HEIGHT - MARGIN + 16.0,
        escape(right)
    );
}

fn domain_labels(report: &AnalysisReport) -> (String, String) {
    match (report.bins.first().map(|b| b.bounds), report.bins.last().map(|b| b.bounds)) {
        (Some(BinBounds::Range { lower, .. }), Some(BinBounds::Range { upper, .. })) => {
            (format!("{lower:.4}"), format!("{upper:.4}"))
        }
        (Some(BinBounds::Category(a)), Some(BinBounds::Category(b))) => {
            (format!("class {a}"), format!("class {b}"))
        }
        _ => (String::new(), String::new()),
    }
}

fn proportion_chart(report: &AnalysisReport, title: &str, proportions: &[f64], fill: &str) -> String {
    let mut s = svg_open(title, "");
    let pct: Vec<f64> = proportions.iter().map(|p| 100.0 * p).collect();
    bars(&mut s, &pct, fill);
    let (l, r) = domain_labels(report);
    axis_labels(&mut s, &l, &r);
    s.push_str("</svg>\n");
    s
}

/// Percentage of the collection's sites in each bin.
pub fn collection_histogram_svg(report: &AnalysisReport) -> String {
    let title = format!("Collection: % of sites by {}", report.variable.variable_id);
    proportion_chart(report, &title, &report.histograms.sample, "#e34a33")
}

/// Percentage of populated extent cells in each bin.
pub fn population_histogram_svg(report: &AnalysisReport) -> String {
    let title = format!("Population: % of cells by {}", report.variable.variable_id);
    proportion_chart(report, &title, &report.histograms.population, "#3182bd")
}

/// Null replicate counts in grey with the collection's indicator as a red circle. The
/// root element carries `data-indicator`; the circle's centre is the indicator mapped
/// onto the [0, 1] axis.
pub fn null_distribution_svg(report: &AnalysisReport) -> String {
    let title = format!(
        "Bias indicator ({}) vs {} random samples of {}",
        report.indicator_kind, report.null.replicates, report.null.sample_size
    );
    let mut s = svg_open(&title, &format!(r#" data-indicator="{}""#, report.indicator));
    let counts: Vec<f64> = report.null.histogram.iter().map(|&c| c as f64).collect();
    bars(&mut s, &counts, "#999999");
    let _ = writeln!(
        s,
        r##"<circle class="marker" data-indicator="{}" cx="{:.3}" cy="{:.3}" r="6" fill="#d7191c" stroke="#000000"/>"##,
        report.indicator,
        indicator_x(report.indicator),
        HEIGHT - MARGIN
    );
    axis_labels(&mut s, "0", "1");
    s.push_str("</svg>\n");
    s
}

/// Horizontal position of an indicator value on the null chart.
pub fn indicator_x(indicator: f64) -> f64 {
    MARGIN + (WIDTH - 1.5 * MARGIN) * indicator.clamp(0.0, 1.0)
}
