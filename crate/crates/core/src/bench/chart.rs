use std::fmt::Write;

use super::measure::{BenchRecord, Metric};

const PANEL_W: f64 = 440.0;
const PANEL_H: f64 = 320.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const LEGEND_H: f64 = 18.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Series key: one line per preset and mode.
fn series(records: &[BenchRecord]) -> Vec<(String, Vec<&BenchRecord>)> {
    let mut out: Vec<(String, Vec<&BenchRecord>)> = Vec::new();
    for r in records {
        let key = format!("{} ({})", r.preset, r.mode.as_str());
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => out.push((key, vec![r])),
        }
    }
    for (_, v) in &mut out {
        v.sort_by(|a, b| a.duration_s.total_cmp(&b.duration_s));
    }
    out
}

fn log_range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| *v > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.log10()), hi.max(v.log10())));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil());
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn panel(svg: &mut String, x0: f64, metric: Metric, lines: &[(String, Vec<&BenchRecord>)]) {
    let all = || lines.iter().flat_map(|(_, v)| v.iter().copied());
    let (xl, xh) = log_range(all().map(|r| r.duration_s));
    let (yl, yh) = log_range(all().map(|r| metric.of(r)));
    let pw = PANEL_W - MARGIN_L - 20.0;
    let ph = PANEL_H - MARGIN_T - MARGIN_B;
    let px = |v: f64| x0 + MARGIN_L + (v.log10() - xl) / (xh - xl) * pw;
    let py = |v: f64| MARGIN_T + ph - (v.log10() - yl) / (yh - yl) * ph;

    let _ = writeln!(svg, r#"<g font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" font-size="13" text-anchor="middle">{}</text>"#,
        x0 + MARGIN_L + pw / 2.0,
        metric.label()
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{:.1}" y="{MARGIN_T}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##,
        x0 + MARGIN_L
    );
    for e in xl as i32..=xh as i32 {
        let x = px(10f64.powi(e));
        let _ = writeln!(svg, r##"<line x1="{x:.1}" y1="{MARGIN_T}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/>"##, MARGIN_T + ph);
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{e}</text>"#, MARGIN_T + ph + 15.0);
    }
    for e in yl as i32..=yh as i32 {
        let y = py(10f64.powi(e));
        let _ = writeln!(svg, r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, x0 + MARGIN_L, x0 + MARGIN_L + pw);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{e}</text>"#, x0 + MARGIN_L - 5.0, y + 4.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">duration (s)</text>"#,
        x0 + MARGIN_L + pw / 2.0,
        MARGIN_T + ph + 35.0
    );
    for (i, (_, recs)) in lines.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = recs
            .iter()
            .filter(|r| metric.of(r) > 0.0)
            .map(|r| format!("{:.1},{:.1}", px(r.duration_s), py(metric.of(r))))
            .collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        for p in &pts {
            let (cx, cy) = p.split_once(',').unwrap();
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#);
        }
    }
    let _ = writeln!(svg, "</g>");
}

/// Two log-log panels, peak memory and wall time against duration.
pub fn render_svg(records: &[BenchRecord]) -> String {
    let lines = series(records);
    let height = PANEL_H + LEGEND_H * lines.len() as f64 + 10.0;
    let width = 2.0 * PANEL_W;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    panel(&mut svg, 0.0, Metric::PeakBytes, &lines);
    panel(&mut svg, PANEL_W, Metric::WallTime, &lines);
    for (i, (name, _)) in lines.iter().enumerate() {
        let y = PANEL_H + LEGEND_H * i as f64 + 5.0;
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(svg, r#"<line x1="{MARGIN_L}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, MARGIN_L + 24.0);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            MARGIN_L + 30.0,
            y + 4.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::super::fit::tests::synthetic;
    use super::*;

    #[test]
    fn one_polyline_per_series_per_panel() {
        let mut recs = synthetic(&[100, 200, 400], |l| l);
        recs.extend(synthetic(&[100, 200, 400], |l| l * l).into_iter().map(|mut r| {
            r.preset = "b<&>".into();
            r
        }));
        let svg = render_svg(&recs);
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains("b&lt;&amp;&gt; (forward)"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
