//! Minimal SVG charts: call-frequency curves and grouped head/tail bars.

use std::fmt::Write;

use crate::report::Report;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
}

/// Axes with `ticks` horizontal grid lines from 0 to `y_max`.
fn axes(out: &mut String, y_max: f64, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    for i in 0..=5 {
        let v = y_max * i as f64 / 5.0;
        let y = y0 - (y0 - y1) * i as f64 / 5.0;
        let _ = writeln!(out, "<line x1=\"{x0}\" y1=\"{y:.1}\" x2=\"{x1}\" y2=\"{y:.1}\" stroke=\"#e0e0e0\"/>");
        let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>", x0 - 6.0, y + 4.0);
    }
    let _ = writeln!(out, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>");
    let _ = writeln!(out, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>");
    let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", (x0 + x1) / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        out,
        "<text transform=\"translate(16 {:.1}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 16.0;
        let _ = writeln!(out, "<rect x=\"{x}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{color}\"/>", y - 10.0);
        let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{y:.1}\">{}</text>", x + 18.0, escape(name));
    }
}

fn nice_max(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0].into_iter().map(|m| m * mag).find(|c| *c >= v).unwrap_or(10.0 * mag)
}

/// One polyline per series of `(x, y)` points.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let y_max = nice_max(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)).fold(0.0, f64::max));
    let x_max = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).fold(0.0, f64::max).max(1.0);
    axes(&mut out, y_max, x_label, y_label);
    let sx = |x: f64| LEFT + (W - RIGHT - LEFT) * x / x_max;
    let sy = |y: f64| H - BOTTOM - (H - BOTTOM - TOP) * y / y_max;
    let mut entries = Vec::new();
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>", pts.join(" "));
        for &(x, y) in points {
            let _ = writeln!(out, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>", sx(x), sy(y));
        }
        entries.push((name.clone(), color));
    }
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Bars grouped by category, one bar per series within each group.
pub fn bar_chart(title: &str, y_label: &str, groups: &[String], series: &[(String, Vec<f64>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let y_max = nice_max(series.iter().flat_map(|(_, v)| v.iter().copied()).fold(0.0, f64::max));
    axes(&mut out, y_max, "", y_label);
    let plot_w = W - RIGHT - LEFT;
    let group_w = plot_w / groups.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    for (g, name) in groups.iter().enumerate() {
        let gx = LEFT + group_w * g as f64;
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            gx + group_w / 2.0,
            H - BOTTOM + 16.0,
            escape(name)
        );
        for (s, (_, values)) in series.iter().enumerate() {
            let v = values.get(g).copied().unwrap_or(0.0);
            let h = (H - BOTTOM - TOP) * v / y_max;
            let _ = writeln!(
                out,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\"/>",
                gx + group_w * 0.1 + bar_w * s as f64,
                H - BOTTOM - h,
                bar_w,
                h,
                COLORS[s % COLORS.len()]
            );
        }
    }
    let entries: Vec<(String, &str)> =
        series.iter().enumerate().map(|(i, (n, _))| (n.clone(), COLORS[i % COLORS.len()])).collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Call-frequency curves of every variant that calls the model.
pub fn lcf_chart(report: &Report) -> String {
    let series: Vec<(String, Vec<(f64, f64)>)> = report
        .variants
        .iter()
        .filter(|v| !v.lcf.is_empty() && v.lcf.iter().any(|p| p.1 > 0.0))
        .map(|v| (v.variant.clone(), v.lcf.iter().map(|&(b, c)| (b as f64, c)).collect()))
        .collect();
    line_chart("LLM calls per interaction", "session bucket", "impasse calls per session", &series)
}

/// N@10 on head and tail test items for each variant.
pub fn head_tail_chart(report: &Report) -> String {
    let groups: Vec<String> = report.variants.iter().map(|v| v.variant.clone()).collect();
    let series = vec![
        ("head".to_string(), report.variants.iter().map(|v| v.head.ndcg10).collect()),
        ("tail".to_string(), report.variants.iter().map(|v| v.tail.ndcg10).collect()),
    ];
    bar_chart("N@10 on head and long-tail items", "N@10", &groups, &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_has_one_polyline_per_series() {
        let svg = line_chart(
            "t",
            "x",
            "y",
            &[("a".into(), vec![(0.0, 1.0), (1.0, 0.5)]), ("b<c".into(), vec![(0.0, 0.2), (1.0, 0.2)])],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c"));
    }

    #[test]
    fn bar_chart_draws_every_bar() {
        let svg = bar_chart("t", "y", &["a".into(), "b".into(), "c".into()], &[("h".into(), vec![0.1, 0.2, 0.3]), ("t".into(), vec![0.0, 0.1, 0.2])]);
        assert_eq!(svg.matches("<rect x=").count(), 6 + 2);
    }

    #[test]
    fn axis_maximum_is_rounded_up() {
        assert_eq!(nice_max(0.0), 1.0);
        assert_eq!(nice_max(0.42), 0.5);
        assert_eq!(nice_max(3.0), 5.0);
        assert_eq!(nice_max(10.0), 10.0);
    }
}
