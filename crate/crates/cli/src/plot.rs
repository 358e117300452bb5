//! Static SVG rendering of partial-effect curves.
//!
//! The figure shows the fitted curve with its shaded 95% band over a
//! marginal density strip of the observed surprisal values, in the style
//! used for surprisal/RT plots. Output carries fixed metadata only — no
//! timestamps — so identical inputs render identical bytes.

use crate::tsv::CurvePoint;
use crate::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;

/// Pixel geometry and data ranges of a figure; maps data coordinates to
/// pixels and back (the inverse is what tests and tooltips use).
#[derive(Debug, Clone)]
pub struct PlotLayout {
    pub left: f64,
    pub right: f64,
    /// Curve panel, pixel bounds (y grows downward).
    pub top: f64,
    pub bottom: f64,
    /// Density strip below the curve panel.
    pub strip_top: f64,
    pub strip_bottom: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl PlotLayout {
    pub fn new(points: &[CurvePoint], density: &[f64]) -> Result<PlotLayout, CliError> {
        if points.is_empty() {
            return Err(CliError::data("curve has no points"));
        }
        if density.is_empty() {
            return Err(CliError::data("no surprisal values for the density strip"));
        }
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        for v in points.iter().map(|p| p.x).chain(density.iter().copied()) {
            if !v.is_finite() {
                return Err(CliError::data("non-finite x value in plot input"));
            }
            x_min = x_min.min(v);
            x_max = x_max.max(v);
        }
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for p in points {
            if !(p.estimate.is_finite() && p.lower.is_finite() && p.upper.is_finite()) {
                return Err(CliError::data("non-finite curve value in plot input"));
            }
            y_min = y_min.min(p.lower);
            y_max = y_max.max(p.upper);
        }
        if x_min == x_max {
            x_min -= 0.5;
            x_max += 0.5;
        }
        let y_pad = 0.05 * (y_max - y_min).max(1e-12);
        Ok(PlotLayout {
            left: 64.0,
            right: WIDTH - 24.0,
            top: 24.0,
            bottom: 352.0,
            strip_top: 364.0,
            strip_bottom: 416.0,
            x_min,
            x_max,
            y_min: y_min - y_pad,
            y_max: y_max + y_pad,
        })
    }

    pub fn x_px(&self, x: f64) -> f64 {
        self.left + (x - self.x_min) / (self.x_max - self.x_min) * (self.right - self.left)
    }

    pub fn y_px(&self, y: f64) -> f64 {
        self.bottom - (y - self.y_min) / (self.y_max - self.y_min) * (self.bottom - self.top)
    }

    /// Inverse of [`x_px`](Self::x_px).
    pub fn x_data(&self, px: f64) -> f64 {
        self.x_min + (px - self.left) / (self.right - self.left) * (self.x_max - self.x_min)
    }

    /// Inverse of [`y_px`](Self::y_px).
    pub fn y_data(&self, px: f64) -> f64 {
        self.y_min + (self.bottom - px) / (self.bottom - self.top) * (self.y_max - self.y_min)
    }
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_owned();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (2 - magnitude).clamp(0, 6) as usize;
    format!("{v:.decimals$}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Gaussian kernel density estimate on `grid` (Silverman's bandwidth).
fn kde(values: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| -> f64 {
        let idx = p * (sorted.len() - 1) as f64;
        let lo = idx.floor() as usize;
        let hi = idx.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (idx - lo as f64)
    };
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let range = sorted[sorted.len() - 1] - sorted[0];
    let h = (0.9 * spread * n.powf(-0.2)).max(0.01 * range).max(1e-9);
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&g| {
            values
                .iter()
                .map(|&v| {
                    let z = (g - v) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect()
}

/// Render the full figure.
pub fn render_svg(
    points: &[CurvePoint],
    density_values: &[f64],
    x_label: &str,
    y_label: &str,
) -> Result<String, CliError> {
    let layout = PlotLayout::new(points, density_values)?;
    let l = &layout;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str("  <desc>partial-effect curve with 95% band and marginal surprisal density</desc>\n");
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // 95% band: upper edge left-to-right, lower edge back
    let mut band = String::new();
    for p in points {
        band.push_str(&format!("{},{} ", px(l.x_px(p.x)), px(l.y_px(p.upper))));
    }
    for p in points.iter().rev() {
        band.push_str(&format!("{},{} ", px(l.x_px(p.x)), px(l.y_px(p.lower))));
    }
    svg.push_str(&format!(
        "  <polygon class=\"band\" fill=\"#c6dbef\" stroke=\"none\" points=\"{}\"/>\n",
        band.trim_end()
    ));

    // fitted curve
    let curve: Vec<String> = points
        .iter()
        .map(|p| format!("{},{}", px(l.x_px(p.x)), px(l.y_px(p.estimate))))
        .collect();
    svg.push_str(&format!(
        "  <polyline class=\"curve\" fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\" points=\"{}\"/>\n",
        curve.join(" ")
    ));

    // density strip
    let strip_grid: Vec<f64> = (0..=128)
        .map(|i| l.x_min + (l.x_max - l.x_min) * i as f64 / 128.0)
        .collect();
    let dens = kde(density_values, &strip_grid);
    let peak = dens.iter().fold(0.0_f64, |a, &b| a.max(b)).max(1e-300);
    let mut strip = String::new();
    strip.push_str(&format!("{},{} ", px(l.x_px(l.x_min)), px(l.strip_bottom)));
    for (g, d) in strip_grid.iter().zip(&dens) {
        let y = l.strip_bottom - d / peak * (l.strip_bottom - l.strip_top);
        strip.push_str(&format!("{},{} ", px(l.x_px(*g)), px(y)));
    }
    strip.push_str(&format!("{},{}", px(l.x_px(l.x_max)), px(l.strip_bottom)));
    svg.push_str(&format!(
        "  <polygon class=\"density\" fill=\"#bdbdbd\" stroke=\"#969696\" stroke-width=\"1\" points=\"{strip}\"/>\n"
    ));

    // axes: x axis under the density strip, y axis along the curve panel
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        px(l.left),
        px(l.strip_bottom),
        px(l.right),
        px(l.strip_bottom)
    ));
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        px(l.left),
        px(l.top),
        px(l.left),
        px(l.bottom)
    ));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = l.x_min + f * (l.x_max - l.x_min);
        let xp = l.x_px(xv);
        svg.push_str(&format!(
            "  <line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n",
            px(xp),
            px(l.strip_bottom),
            px(l.strip_bottom + 5.0)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            px(xp),
            px(l.strip_bottom + 20.0),
            fmt_tick(xv)
        ));
        let yv = l.y_min + f * (l.y_max - l.y_min);
        let yp = l.y_px(yv);
        svg.push_str(&format!(
            "  <line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"black\"/>\n",
            px(yp),
            px(l.left - 5.0),
            px(l.left)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>\n",
            px(l.left - 9.0),
            px(yp),
            fmt_tick(yv)
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        px((l.left + l.right) / 2.0),
        px(l.strip_bottom + 44.0),
        xml_escape(x_label)
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
        px((l.top + l.bottom) / 2.0),
        xml_escape(y_label)
    ));
    svg.push_str("</svg>\n");
    Ok(svg)
}
