//! Minimal self-contained SVG emitter for log-log convergence curves.

use std::path::Path;

use crate::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const COLORS: [&str; 2] = ["#1f77b4", "#d62728"];

pub struct Series<'a> {
    pub label: &'a str,
    /// `(m, value)` points; non-positive values are dropped (log axes).
    pub points: Vec<(usize, f64)>,
}

/// Two-axis log-log plot of iteration count against a positive quantity.
pub fn write_loglog(path: &Path, title: &str, series: &[Series<'_>]) -> Result<(), CliError> {
    let mut pts: Vec<Vec<(f64, f64)>> = Vec::new();
    for s in series {
        pts.push(
            s.points
                .iter()
                .filter(|(m, v)| *m >= 1 && *v > 0.0)
                .map(|(m, v)| ((*m as f64).log10(), v.log10()))
                .collect(),
        );
    }
    let all: Vec<(f64, f64)> = pts.iter().flatten().cloned().collect();
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));

    if all.is_empty() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">no positive data</text>\n",
            WIDTH / 2.0,
            HEIGHT / 2.0
        ));
        svg.push_str("</svg>\n");
        return std::fs::write(path, svg)
            .map_err(|e| CliError::failure(format!("cannot write {}: {e}", path.display())));
    }

    let (x_lo, mut x_hi) = bounds(all.iter().map(|p| p.0));
    let (y_lo, mut y_hi) = bounds(all.iter().map(|p| p.1));
    if x_hi - x_lo < 1e-9 {
        x_hi = x_lo + 1.0;
    }
    if y_hi - y_lo < 1e-9 {
        y_hi = y_lo + 1.0;
    }
    let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - MARGIN_T - MARGIN_B);

    // frame
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    ));
    // decade ticks
    for d in (x_lo.floor() as i64)..=(x_hi.ceil() as i64) {
        let x = d as f64;
        if x < x_lo || x > x_hi {
            continue;
        }
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#cccccc\"/>\n",
            px(x),
            py(y_lo),
            py(y_hi)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">1e{}</text>\n",
            px(x),
            HEIGHT - MARGIN_B + 16.0,
            d
        ));
    }
    for d in (y_lo.floor() as i64)..=(y_hi.ceil() as i64) {
        let y = d as f64;
        if y < y_lo || y > y_hi {
            continue;
        }
        svg.push_str(&format!(
            "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"#cccccc\"/>\n",
            py(y),
            px(x_lo),
            px(x_hi)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">1e{}</text>\n",
            MARGIN_L - 6.0,
            py(y) + 4.0,
            d
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">iteration m</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0
    ));

    for (i, (s, p)) in series.iter().zip(&pts).enumerate() {
        let color = COLORS[i % COLORS.len()];
        if !p.is_empty() {
            let path_d: Vec<String> = p
                .iter()
                .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
                .collect();
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                path_d.join(" ")
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            MARGIN_L + 10.0,
            MARGIN_T + 18.0 + 16.0 * i as f64,
            escape(s.label)
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)
        .map_err(|e| CliError::failure(format!("cannot write {}: {e}", path.display())))
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
