//! Grouped bar charts as plain SVG text.
//!
//! Every bar carries its value as a `<text class="bar-value">` element whose
//! content is the exact table cell it was drawn from, so charts can be checked
//! against the CSVs by string comparison.

use std::fmt::Write;

/// One bar group per level, one bar per series; `None` leaves a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartData {
    pub title: String,
    pub y_label: String,
    pub levels: Vec<String>,
    pub series: Vec<(String, Vec<Option<String>>)>,
    /// Scientific-notation tick labels (for cost axes).
    pub scientific: bool,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 140.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Smallest 1/2/5 x 10^k that is at least `max`.
fn nice_ceiling(max: f64) -> f64 {
    if max <= 0.0 || !max.is_finite() {
        return 1.0;
    }
    let exp = max.log10().floor();
    let base = 10f64.powf(exp);
    for m in [1.0, 2.0, 5.0, 10.0] {
        if m * base >= max * (1.0 - 1e-12) {
            return m * base;
        }
    }
    10.0 * base
}

fn tick_label(v: f64, scientific: bool) -> String {
    if v == 0.0 {
        "0".into()
    } else if scientific {
        format!("{v:.1e}")
    } else if v.fract().abs() < 1e-9 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

pub fn render(chart: &ChartData) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let values: Vec<f64> = chart
        .series
        .iter()
        .flat_map(|(_, v)| v.iter().flatten())
        .filter_map(|s| s.parse::<f64>().ok())
        .collect();
    let y_max = nice_ceiling(values.iter().cloned().fold(0.0, f64::max));
    let y = |v: f64| TOP + plot_h - (v / y_max) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<title>{}</title>"#, escape(&chart.title));
    let _ = writeln!(
        out,
        r#"<text class="title" x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(&chart.title)
    );

    // axes and ticks
    let _ = writeln!(out, r#"<g class="axis y-axis">"#);
    for i in 0..=TICKS {
        let v = y_max * i as f64 / TICKS as f64;
        let yy = y(v);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            out,
            r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            yy + 4.0,
            tick_label(v, chart.scientific)
        );
    }
    let _ = writeln!(
        out,
        r#"<text class="y-label" transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + plot_h / 2.0,
        escape(&chart.y_label)
    );
    let _ = writeln!(out, "</g>");
    let _ = writeln!(
        out,
        r##"<line class="x-axis" x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#333333"/>"##,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );

    let groups = chart.levels.len().max(1) as f64;
    let group_w = plot_w / groups;
    let n_series = chart.series.len().max(1) as f64;
    let bar_w = group_w * 0.8 / n_series;
    for (li, level) in chart.levels.iter().enumerate() {
        let gx = LEFT + group_w * li as f64;
        let _ = writeln!(out, r#"<g class="level" data-level="{}">"#, escape(level));
        for (si, (name, vals)) in chart.series.iter().enumerate() {
            let x = gx + group_w * 0.1 + bar_w * si as f64;
            let Some(text) = vals.get(li).and_then(|v| v.as_ref()) else {
                continue;
            };
            let v: f64 = text.parse().unwrap_or(0.0);
            let top = y(v.max(0.0));
            let _ = writeln!(
                out,
                r#"<rect class="bar" x="{x:.2}" y="{top:.2}" width="{bar_w:.2}" height="{:.2}" fill="{}"/>"#,
                TOP + plot_h - top,
                PALETTE[si % PALETTE.len()]
            );
            let _ = writeln!(
                out,
                r#"<text class="bar-value" data-series="{}" data-level="{}" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
                escape(name),
                escape(level),
                x + bar_w / 2.0,
                top - 4.0,
                escape(text)
            );
        }
        let _ = writeln!(
            out,
            r#"<text class="level-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            gx + group_w / 2.0,
            TOP + plot_h + 20.0,
            escape(level)
        );
        let _ = writeln!(out, "</g>");
    }

    let _ = writeln!(out, r#"<g class="legend">"#);
    for (si, (name, _)) in chart.series.iter().enumerate() {
        let ly = TOP + 10.0 + 20.0 * si as f64;
        let lx = WIDTH - RIGHT + 20.0;
        let _ = writeln!(
            out,
            r#"<rect x="{lx}" y="{:.2}" width="12" height="12" fill="{}"/>"#,
            ly - 10.0,
            PALETTE[si % PALETTE.len()]
        );
        let _ = writeln!(out, r#"<text x="{}" y="{ly:.2}">{}</text>"#, lx + 18.0, escape(name));
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart(values: [&str; 2]) -> ChartData {
        ChartData {
            title: "t".into(),
            y_label: "TPS".into(),
            levels: vec!["Baseline".into()],
            series: vec![
                ("gcp".into(), vec![Some(values[0].into())]),
                ("azure".into(), vec![Some(values[1].into())]),
            ],
            scientific: false,
        }
    }

    #[test]
    fn values_are_embedded_verbatim() {
        let svg = render(&chart(["70.84", "20.14"]));
        assert!(svg.contains(r#"data-series="gcp" data-level="Baseline""#));
        assert!(svg.contains(">70.84</text>"));
        assert!(svg.contains(">20.14</text>"));
    }

    #[test]
    fn zero_values_still_draw_axis() {
        let svg = render(&chart(["0.00", "0.00"]));
        assert!(svg.contains(r#"class="x-axis""#));
        assert!(svg.contains(r#"height="0.00""#));
    }

    #[test]
    fn nice_ceilings() {
        assert_eq!(nice_ceiling(70.84), 100.0);
        assert_eq!(nice_ceiling(238.0), 500.0);
        assert_eq!(nice_ceiling(0.00534), 0.01);
        assert_eq!(nice_ceiling(0.0), 1.0);
        assert_eq!(tick_label(0.002, true), "2.0e-3");
    }

    #[test]
    fn deterministic() {
        assert_eq!(render(&chart(["1", "2"])), render(&chart(["1", "2"])));
    }
}
