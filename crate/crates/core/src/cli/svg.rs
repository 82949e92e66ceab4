//! Minimal SVG line charts for probability curves (y axis fixed to `[0, 1]`).

use std::fmt::Write as _;

use crate::cli::output::CurveTable;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 110.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn line_chart(table: &CurveTable) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_min = table.xs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut x_max = table.xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    let px = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let py = |y: f64| MARGIN_TOP + (1.0 - y.clamp(0.0, 1.0)) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(&table.title)
    );

    for k in 0..=5 {
        let y = k as f64 / 5.0;
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_LEFT}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#dddddd"/><text x="{2:.2}" y="{3:.2}" text-anchor="end">{y:.1}</text>"##,
            py(y),
            MARGIN_LEFT + plot_w,
            MARGIN_LEFT - 6.0,
            py(y) + 4.0
        );
        let x = x_min + (x_max - x_min) * k as f64 / 5.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(x),
            MARGIN_TOP + plot_h + 18.0,
            trim_number(x)
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let x_name = table.axis.map_or(table.x_label, |a| a.label());
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        x_name
    );

    for (i, (name, values)) in table.series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let points: Vec<String> = table
            .xs
            .iter()
            .zip(values)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = MARGIN_TOP + 16.0 + 18.0 * i as f64;
        let lx = MARGIN_LEFT + plot_w + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{name}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

fn trim_number(x: f64) -> String {
    let s = format!("{x:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::output::Axis;

    #[test]
    fn chart_has_one_polyline_per_series() {
        let table = CurveTable {
            title: "sigma = 0.1 & more".into(),
            axis: Some(Axis::Lambda),
            x_label: "value",
            xs: vec![0.1, 0.2, 0.3],
            series: vec![("p1", vec![0.0, 0.5, 1.0]), ("p2", vec![1.0, 0.5, 0.0])],
        };
        let svg = line_chart(&table);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("sigma = 0.1 &amp; more"));
    }

    #[test]
    fn single_point_does_not_divide_by_zero() {
        let table = CurveTable {
            title: String::new(),
            axis: None,
            x_label: "sigma",
            xs: vec![0.5],
            series: vec![("p3", vec![0.2])],
        };
        assert!(!line_chart(&table).contains("NaN"));
    }
}
