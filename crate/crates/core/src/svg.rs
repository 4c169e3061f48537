//! Minimal deterministic SVG line charts for the power figures. Text output
//! with fixed-precision coordinates hashes identically across runs.

/// One line in a chart.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    /// (x, y) points, already in data units.
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 56.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders series over x in [0, 1] and y in [0, 1] (power against the
/// screening parameter c).
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + x.clamp(0.0, 1.0) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (1.0 - y.clamp(0.0, 1.0)) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        fmt(WIDTH / 2.0),
        escape(title)
    ));

    // axes with ticks every 0.2
    out.push_str(&format!(
        "  <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP),
        fmt(plot_w),
        fmt(plot_h)
    ));
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        out.push_str(&format!(
            "  <line x1=\"{x}\" y1=\"{y0}\" x2=\"{x}\" y2=\"{y1}\" stroke=\"#ccc\"/>\n",
            x = fmt(sx(t)),
            y0 = fmt(MARGIN_TOP),
            y1 = fmt(MARGIN_TOP + plot_h)
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt(sx(t)),
            fmt(MARGIN_TOP + plot_h + 18.0),
            fmt(t)
        ));
        out.push_str(&format!(
            "  <line x1=\"{x0}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"#ccc\"/>\n",
            x0 = fmt(MARGIN_LEFT),
            x1 = fmt(MARGIN_LEFT + plot_w),
            y = fmt(sy(t))
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_LEFT - 8.0),
            fmt(sy(t) + 4.0),
            fmt(t)
        ));
    }
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 12.0),
        escape(x_label)
    ));
    out.push_str(&format!(
        "  <text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        fmt(MARGIN_TOP + plot_h / 2.0),
        fmt(MARGIN_TOP + plot_h / 2.0),
        escape(y_label)
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if s.dashed {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(y))))
            .collect();
        out.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash} points=\"{}\"/>\n",
            path.join(" ")
        ));
        let ly = MARGIN_TOP + 16.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>\n",
            fmt(MARGIN_LEFT + plot_w - 150.0),
            fmt(ly - 4.0),
            fmt(MARGIN_LEFT + plot_w - 126.0),
            fmt(ly - 4.0)
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\">{}</text>\n",
            fmt(MARGIN_LEFT + plot_w - 120.0),
            fmt(ly),
            escape(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
