//! CSV/JSON emission for profiles and series, and a minimal SVG line chart.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{AnalysisConfig, CheckpointSeries, LayerProfile};

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_number(v: f64) -> String {
    format!("{v:?}")
}

pub fn profile_csv(profiles: &[LayerProfile]) -> String {
    let mut out = String::from("layer,mean,std,n_batches\n");
    for p in profiles {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.layer_index,
            fmt_number(p.mean),
            fmt_number(p.std),
            p.n_batches
        );
    }
    out
}

#[derive(Debug, Serialize)]
pub struct ProfileReport<'a> {
    pub model_name: &'a str,
    pub checkpoint_step: u64,
    pub config: &'a AnalysisConfig,
    pub profiles: &'a [LayerProfile],
}

pub fn profile_json(report: &ProfileReport<'_>) -> String {
    serde_json::to_string_pretty(report).expect("profile report serializes") + "\n"
}

/// `step,cross_layer_mean`, one row per checkpoint.
pub fn series_csv(series: &CheckpointSeries) -> String {
    let mut out = String::from("step,cross_layer_mean\n");
    for p in &series.points {
        let _ = writeln!(out, "{},{}", p.checkpoint_step, fmt_number(p.cross_layer_mean));
    }
    out
}

/// Long form `step,layer,mean,std`.
pub fn series_layers_csv(series: &CheckpointSeries) -> String {
    let mut out = String::from("step,layer,mean,std\n");
    for p in &series.points {
        for l in &p.profiles {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                p.checkpoint_step,
                l.layer_index,
                fmt_number(l.mean),
                fmt_number(l.std)
            );
        }
    }
    out
}

#[derive(Debug, Serialize)]
pub struct SeriesReport<'a> {
    pub config: &'a AnalysisConfig,
    #[serde(flatten)]
    pub series: &'a CheckpointSeries,
}

pub fn series_json(report: &SeriesReport<'_>) -> String {
    serde_json::to_string_pretty(report).expect("series report serializes") + "\n"
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub x: f64,
    pub mean: f64,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSeries {
    pub label: String,
    pub points: Vec<ChartPoint>,
}

/// Data for one line chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportDocument {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<ChartSeries>,
}

impl ReportDocument {
    /// Per-layer profile: x = layer index, with a ±std band.
    pub fn from_profiles(title: impl Into<String>, metric: &str, profiles: &[LayerProfile]) -> Self {
        Self {
            title: title.into(),
            x_label: "layer".into(),
            y_label: metric.into(),
            series: vec![ChartSeries {
                label: metric.into(),
                points: profiles
                    .iter()
                    .map(|p| ChartPoint {
                        x: p.layer_index as f64,
                        mean: p.mean,
                        std: Some(p.std),
                    })
                    .collect(),
            }],
        }
    }

    /// x = checkpoint step, y = cross-layer mean.
    pub fn from_series_means(series: &CheckpointSeries) -> Self {
        Self {
            title: format!("{}: {} averaged across layers", series.model_name, series.metric),
            x_label: "checkpoint step".into(),
            y_label: series.metric.name().into(),
            series: vec![ChartSeries {
                label: series.metric.name().into(),
                points: series
                    .points
                    .iter()
                    .map(|p| ChartPoint {
                        x: p.checkpoint_step as f64,
                        mean: p.cross_layer_mean,
                        std: None,
                    })
                    .collect(),
            }],
        }
    }

    /// x = layer index, one line per checkpoint.
    pub fn from_series_layers(series: &CheckpointSeries) -> Self {
        Self {
            title: format!("{}: {} per layer", series.model_name, series.metric),
            x_label: "layer".into(),
            y_label: series.metric.name().into(),
            series: series
                .points
                .iter()
                .map(|p| ChartSeries {
                    label: format!("step {}", p.checkpoint_step),
                    points: p
                        .profiles
                        .iter()
                        .map(|l| ChartPoint {
                            x: l.layer_index as f64,
                            mean: l.mean,
                            std: Some(l.std),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

pub const SVG_WIDTH: f64 = 640.0;
pub const SVG_HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Affine map from data space to SVG pixel space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotTransform {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl PlotTransform {
    /// Data bounds over all means and std bands. Empty spans are widened
    /// by 0.5 either side; y gets 5% headroom.
    pub fn for_document(doc: &ReportDocument) -> Result<Self> {
        let pts = doc.series.iter().flat_map(|s| &s.points);
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        for p in pts {
            any = true;
            let s = p.std.unwrap_or(0.0);
            x = (x.0.min(p.x), x.1.max(p.x));
            y = (y.0.min(p.mean - s), y.1.max(p.mean + s));
        }
        if !any {
            return Err(Error::Empty("report rows"));
        }
        if !(x.0.is_finite() && x.1.is_finite() && y.0.is_finite() && y.1.is_finite()) {
            return Err(Error::InvalidParameter("chart data must be finite".into()));
        }
        if x.1 == x.0 {
            x = (x.0 - 0.5, x.1 + 0.5);
        }
        if y.1 == y.0 {
            y = (y.0 - 0.5, y.1 + 0.5);
        } else {
            let pad = 0.05 * (y.1 - y.0);
            y = (y.0 - pad, y.1 + pad);
        }
        Ok(Self {
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
        })
    }

    pub fn plot_width() -> f64 {
        SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    }

    pub fn plot_height() -> f64 {
        SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    }

    pub fn map_x(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * Self::plot_width()
    }

    pub fn map_y(&self, y: f64) -> f64 {
        MARGIN_TOP + Self::plot_height() - (y - self.y_min) / (self.y_max - self.y_min) * Self::plot_height()
    }

    /// `"x,y"` in pixel space, as written into the SVG.
    pub fn coord(&self, x: f64, y: f64) -> String {
        format!("{:.3},{:.3}", self.map_x(x), self.map_y(y))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    }
}

/// Self-contained SVG line chart with axes, ticks, one polyline per series,
/// a shaded ±std band where available, and a legend.
pub fn render_svg(doc: &ReportDocument) -> Result<String> {
    let t = PlotTransform::for_document(doc)?;
    let (left, top) = (MARGIN_LEFT, MARGIN_TOP);
    let (right, bottom) = (left + PlotTransform::plot_width(), top + PlotTransform::plot_height());
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        (left + right) / 2.0,
        escape(&doc.title)
    );

    let _ = writeln!(s, r#"<g class="axes" stroke="black" fill="none">"#);
    let _ = writeln!(s, r#"<line x1="{left:.3}" y1="{bottom:.3}" x2="{right:.3}" y2="{bottom:.3}"/>"#);
    let _ = writeln!(s, r#"<line x1="{left:.3}" y1="{top:.3}" x2="{left:.3}" y2="{bottom:.3}"/>"#);
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="ticks">"#);
    for i in 0..TICKS {
        let frac = i as f64 / (TICKS - 1) as f64;
        let xv = t.x_min + frac * (t.x_max - t.x_min);
        let yv = t.y_min + frac * (t.y_max - t.y_min);
        let (px, py) = (t.map_x(xv), t.map_y(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.3}" y1="{bottom:.3}" x2="{px:.3}" y2="{:.3}" stroke="black"/><text x="{px:.3}" y="{:.3}" text-anchor="middle">{}</text>"#,
            bottom + 5.0,
            bottom + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.3}" y1="{py:.3}" x2="{left:.3}" y2="{py:.3}" stroke="black"/><text x="{:.3}" y="{:.3}" text-anchor="end">{}</text>"#,
            left - 5.0,
            left - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        SVG_HEIGHT - 12.0,
        escape(&doc.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.3}" text-anchor="middle" transform="rotate(-90 16 {:.3})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(&doc.y_label)
    );

    for (i, series) in doc.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if series.points.iter().any(|p| p.std.is_some()) {
            let upper = series
                .points
                .iter()
                .map(|p| t.coord(p.x, p.mean + p.std.unwrap_or(0.0)));
            let lower = series
                .points
                .iter()
                .rev()
                .map(|p| t.coord(p.x, p.mean - p.std.unwrap_or(0.0)));
            let pts: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                s,
                r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                pts.join(" ")
            );
        }
        let pts: Vec<String> = series.points.iter().map(|p| t.coord(p.x, p.mean)).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for p in &series.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{color}"/>"#,
                t.map_x(p.x),
                t.map_y(p.mean)
            );
        }
        let ly = top + 10.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.3}" y1="{ly:.3}" x2="{:.3}" y2="{ly:.3}" stroke="{color}" stroke-width="2"/><text x="{:.3}" y="{:.3}">{}</text>"#,
            right + 10.0,
            right + 30.0,
            right + 35.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(points: &[(f64, f64, Option<f64>)]) -> ReportDocument {
        ReportDocument {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![ChartSeries {
                label: "s".into(),
                points: points.iter().map(|&(x, mean, std)| ChartPoint { x, mean, std }).collect(),
            }],
        }
    }

    fn attr<'a>(svg: &'a str, class: &str) -> &'a str {
        let start = svg.find(&format!(r#"class="{class}" points=""#)).unwrap() + class.len() + 17;
        let end = start + svg[start..].find('"').unwrap();
        &svg[start..end]
    }

    #[test]
    fn two_point_polyline() {
        let d = doc(&[(0.0, 1.0, None), (1.0, 2.0, None)]);
        let svg = render_svg(&d).unwrap();
        let t = PlotTransform::for_document(&d).unwrap();
        let pts: Vec<&str> = attr(&svg, "series").split(' ').collect();
        assert_eq!(pts, vec![t.coord(0.0, 1.0), t.coord(1.0, 2.0)]);
        assert!(t.map_y(2.0) < t.map_y(1.0));
        assert!(!svg.contains("class=\"band\""));
    }

    #[test]
    fn deterministic_bytes() {
        let d = doc(&[(0.0, 1.0, Some(0.1)), (1.0, 2.0, Some(0.2)), (2.0, 1.5, Some(0.0))]);
        assert_eq!(render_svg(&d).unwrap(), render_svg(&d).unwrap());
    }

    #[test]
    fn band_follows_mean_transform() {
        let raw = [(0.0, 1.0, 0.1), (1.0, 2.0, 0.3), (2.0, 1.5, 0.2)];
        let d = doc(&raw.map(|(x, m, s)| (x, m, Some(s))));
        let svg = render_svg(&d).unwrap();
        let t = PlotTransform::for_document(&d).unwrap();
        let mut expected: Vec<String> = raw.iter().map(|&(x, m, s)| t.coord(x, m + s)).collect();
        expected.extend(raw.iter().rev().map(|&(x, m, s)| t.coord(x, m - s)));
        let band: Vec<&str> = attr(&svg, "band").split(' ').collect();
        assert_eq!(band, expected);
    }

    #[test]
    fn single_point_and_empty() {
        let svg = render_svg(&doc(&[(100.0, 3.0, None)])).unwrap();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(matches!(render_svg(&doc(&[])), Err(Error::Empty(_))));
    }

    #[test]
    fn numbers_are_shortest_round_trip() {
        assert_eq!(fmt_number(1.0), "1.0");
        assert_eq!(fmt_number(0.1), "0.1");
        for v in [1.0 / 3.0, 2.5e-9, 12345.678] {
            assert_eq!(fmt_number(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_schema() {
        let p = LayerProfile::from_batch_values(0, vec![1.0]).unwrap();
        assert_eq!(profile_csv(&[p]), "layer,mean,std,n_batches\n0,1.0,0.0,1\n");
    }
}
