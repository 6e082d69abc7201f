//! Static SVG chart of mean field and action against step, each on its own
//! vertical scale (mean field on the left axis, action on the right).

use std::fmt::Write as _;

use synq_core::evaluation::TraceRecord;
use synq_core::Scalar;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 70.0;
const MARGIN_Y: f64 = 40.0;
const FIELD_COLOR: &str = "#1f77b4";
const ACTION_COLOR: &str = "#ff7f0e";
/// Upper bound on plotted vertices per series; longer traces keep each
/// bucket's minimum and maximum.
const MAX_BUCKETS: usize = 2000;

fn range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn decimate(steps: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    if values.len() <= 2 * MAX_BUCKETS {
        return steps.iter().copied().zip(values.iter().copied()).collect();
    }
    let per = values.len().div_ceil(MAX_BUCKETS);
    let mut out = Vec::with_capacity(2 * MAX_BUCKETS);
    for (s, v) in steps.chunks(per).zip(values.chunks(per)) {
        let (mut imin, mut imax) = (0, 0);
        for i in 1..v.len() {
            if v[i] < v[imin] {
                imin = i;
            }
            if v[i] > v[imax] {
                imax = i;
            }
        }
        let (a, b) = if imin <= imax { (imin, imax) } else { (imax, imin) };
        out.push((s[a], v[a]));
        if b != a {
            out.push((s[b], v[b]));
        }
    }
    out
}

fn polyline(out: &mut String, points: &[(f64, f64)], x: impl Fn(f64) -> f64, y: impl Fn(f64) -> f64, color: &str) {
    write!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1" points=""#).unwrap();
    for (i, &(s, v)) in points.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{:.2},{:.2}", x(s), y(v)).unwrap();
    }
    out.push_str("\"/>\n");
}

fn axis_labels(out: &mut String, (lo, hi): (f64, f64), x: f64, anchor: &str, color: &str, y: impl Fn(f64) -> f64) {
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="{anchor}" fill="{color}">{v:.3}</text>"#,
            y(v) + 4.0
        )
        .unwrap();
    }
}

/// Renders `trace` as an SVG document. `onset` marks the first controlled step.
pub fn render_svg<T: Scalar>(trace: &[TraceRecord<T>], onset: Option<usize>) -> String {
    let steps: Vec<f64> = trace.iter().map(|r| r.step as f64).collect();
    let field: Vec<f64> = trace.iter().map(|r| r.mean_field.to_f64_exact()).collect();
    let action: Vec<f64> = trace.iter().map(|r| r.action.to_f64_exact()).collect();
    let (s0, s1) = match (steps.first(), steps.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let field_range = range(&field);
    let action_range = range(&action);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let x = |s: f64| MARGIN_LEFT + (s - s0) / (s1 - s0) * plot_w;
    let scale = |(lo, hi): (f64, f64)| move |v: f64| MARGIN_Y + (hi - v) / (hi - lo) * plot_h;
    let y_field = scale(field_range);
    let y_action = scale(action_range);

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    )
    .unwrap();
    if let Some(onset) = onset {
        let xo = x(onset as f64);
        writeln!(
            out,
            r##"<line x1="{xo:.2}" y1="{MARGIN_Y}" x2="{xo:.2}" y2="{:.1}" stroke="#888" stroke-dasharray="4 3"/>"##,
            MARGIN_Y + plot_h
        )
        .unwrap();
    }
    polyline(&mut out, &decimate(&steps, &action), x, y_action, ACTION_COLOR);
    polyline(&mut out, &decimate(&steps, &field), x, y_field, FIELD_COLOR);
    axis_labels(&mut out, field_range, MARGIN_LEFT - 6.0, "end", FIELD_COLOR, y_field);
    axis_labels(&mut out, action_range, WIDTH - MARGIN_RIGHT + 6.0, "start", ACTION_COLOR, y_action);
    for (v, anchor, xx) in [(s0, "start", MARGIN_LEFT), (s1, "end", WIDTH - MARGIN_RIGHT)] {
        writeln!(
            out,
            r#"<text x="{xx}" y="{:.1}" font-size="11" text-anchor="{anchor}">{v}</text>"#,
            HEIGHT - MARGIN_Y + 16.0
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">step</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 8.0
    )
    .unwrap();
    writeln!(out, r#"<text x="{MARGIN_LEFT}" y="24" font-size="12" fill="{FIELD_COLOR}">mean field</text>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="24" font-size="12" text-anchor="end" fill="{ACTION_COLOR}">action</text>"#,
        WIDTH - MARGIN_RIGHT
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}
