//! Deterministic SVG output: line plots for curves, heatmaps for surfaces.
//!
//! Coordinates are printed with fixed precision, so identical inputs give
//! byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::first::EffectCurve;
use crate::higher::EffectGrid;
use crate::second::EffectSurface;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
/// Subdivisions per cell side when shading a heatmap.
const SHADE: usize = 4;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
/// Fill used for empty cells and nothing else.
pub const EMPTY_FILL: &str = "#000000";

/// Effect values on the corner lattice of a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    /// Breakpoints `z[0..=K]` per axis.
    pub axes: Vec<Vec<f64>>,
    /// Row-major over corners.
    pub values: Vec<f64>,
    /// Row-major over cells; `true` where no observation falls.
    pub empty: Vec<bool>,
}

impl Lattice {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }
}

impl From<&EffectCurve> for Lattice {
    fn from(c: &EffectCurve) -> Self {
        Lattice {
            axes: vec![c.breakpoints.clone()],
            values: c.centered.clone(),
            empty: c.counts.iter().map(|&n| n == 0).collect(),
        }
    }
}

impl From<&EffectSurface> for Lattice {
    fn from(s: &EffectSurface) -> Self {
        Lattice {
            axes: vec![s.breakpoints.0.clone(), s.breakpoints.1.clone()],
            values: s.centered.iter().copied().collect(),
            empty: s.counts.iter().map(|&n| n == 0).collect(),
        }
    }
}

impl From<&EffectGrid> for Lattice {
    fn from(g: &EffectGrid) -> Self {
        Lattice {
            axes: g.breakpoints.clone(),
            values: g.values.clone(),
            empty: g.counts.flat().iter().map(|&n| n == 0).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Line,
    Heatmap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Tick marks along the x axis, usually the breakpoints.
    pub ticks: Vec<f64>,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Labels {
    pub title: String,
    pub axes: Vec<String>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { lo.abs() * 0.1 } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// Up to `max` evenly spaced positions of `v`, always including both ends.
fn thin(v: &[f64], max: usize) -> Vec<f64> {
    if v.len() <= max {
        return v.to_vec();
    }
    (0..max).map(|i| v[i * (v.len() - 1) / (max - 1)]).collect()
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{HEIGHT:.0}" viewBox="0 0 {WIDTH:.0} {HEIGHT:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{WIDTH:.0}" height="{HEIGHT:.0}" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="22" text-anchor="middle" font-size="14" fill="#222222">{}</text>"##,
        WIDTH / 2.0,
        esc(title)
    );
}

/// Draws one polyline per series with tick marks at `plot.ticks`.
pub fn render_line(plot: &LinePlot) -> Result<String> {
    if plot.series.is_empty() {
        return Err(Error::Render("line plot needs at least one series".into()));
    }
    for s in &plot.series {
        if s.xs.len() != s.ys.len() || s.xs.is_empty() {
            return Err(Error::Render(format!("series {:?} has mismatched or empty coordinates", s.label)));
        }
        if s.xs.iter().chain(&s.ys).any(|v| !v.is_finite()) {
            return Err(Error::Render(format!("series {:?} has non-finite values", s.label)));
        }
    }
    let (x0, x1) = range(plot.series.iter().flat_map(|s| s.xs.iter().copied()).chain(plot.ticks.iter().copied()));
    let (y0, y1) = range(plot.series.iter().flat_map(|s| s.ys.iter().copied()));
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut out = String::new();
    header(&mut out, &plot.title);
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#444444"/>"##
    );
    for &t in &plot.ticks {
        let x = px(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444444"/>"##,
            TOP + ph,
            TOP + ph + 4.0
        );
    }
    for t in thin(&plot.ticks, 6) {
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="#222222">{:.3}</text>"##,
            px(t),
            TOP + ph + 16.0,
            t
        );
    }
    for i in 0..=4 {
        let v = y0 + (y1 - y0) * i as f64 / 4.0;
        let y = py(v);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="#444444"/>"##,
            LEFT - 4.0
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#222222">{v:.3}</text>"##,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="#222222">{}</text>"##,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        esc(&plot.x_label)
    );
    let _ = writeln!(
        out,
        r##"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})" fill="#222222">{}</text>"##,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(&plot.y_label)
    );
    for (i, s) in plot.series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s.xs.iter().zip(&s.ys).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ =
            writeln!(out, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = TOP + 12.0 + 16.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" fill="#222222">{}</text>"##,
            lx + 22.0,
            ly + 4.0,
            esc(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Blue for negative, white at zero, red for positive; `t` in `[-1, 1]`.
fn colour(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        let a = -t;
        (255.0 - a * (255.0 - 33.0), 255.0 - a * (255.0 - 102.0), 255.0 - a * (255.0 - 172.0))
    } else {
        (255.0 - t * (255.0 - 178.0), 255.0 - t * (255.0 - 24.0), 255.0 - t * (255.0 - 43.0))
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Heatmap of a two-dimensional lattice. Each cell is shaded by bilinear
/// interpolation of its corners; empty cells get a black overlay.
pub fn render_heatmap(lattice: &Lattice, labels: &Labels) -> Result<String> {
    if lattice.dim() != 2 {
        return Err(Error::Render(format!("heatmap needs a 2-D lattice, got {} axes", lattice.dim())));
    }
    let (zx, zy) = (&lattice.axes[0], &lattice.axes[1]);
    let (kx, ky) = (zx.len() - 1, zy.len() - 1);
    if lattice.values.len() != zx.len() * zy.len() || lattice.empty.len() != kx * ky {
        return Err(Error::Render("lattice sizes do not match its axes".into()));
    }
    let at = |a: usize, b: usize| lattice.values[a * zy.len() + b];
    let scale = lattice.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);

    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let (x0, x1) = (zx[0], zx[kx]);
    let (y0, y1) = (zy[0], zy[ky]);
    let sx = if x1 > x0 { pw / (x1 - x0) } else { 0.0 };
    let sy = if y1 > y0 { ph / (y1 - y0) } else { 0.0 };
    let px = |x: f64| LEFT + (x - x0) * sx;
    let py = |y: f64| TOP + ph - (y - y0) * sy;

    let mut out = String::new();
    header(&mut out, &labels.title);
    out.push_str("<g shape-rendering=\"crispEdges\">\n");
    for a in 0..kx {
        for b in 0..ky {
            for u in 0..SHADE {
                for v in 0..SHADE {
                    let (s, t) = ((u as f64 + 0.5) / SHADE as f64, (v as f64 + 0.5) / SHADE as f64);
                    let val = (1.0 - s) * (1.0 - t) * at(a, b)
                        + s * (1.0 - t) * at(a + 1, b)
                        + (1.0 - s) * t * at(a, b + 1)
                        + s * t * at(a + 1, b + 1);
                    let xa = zx[a] + (zx[a + 1] - zx[a]) * u as f64 / SHADE as f64;
                    let xb = zx[a] + (zx[a + 1] - zx[a]) * (u + 1) as f64 / SHADE as f64;
                    let ya = zy[b] + (zy[b + 1] - zy[b]) * v as f64 / SHADE as f64;
                    let yb = zy[b] + (zy[b + 1] - zy[b]) * (v + 1) as f64 / SHADE as f64;
                    let _ = writeln!(
                        out,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                        px(xa),
                        py(yb),
                        px(xb) - px(xa),
                        py(ya) - py(yb),
                        colour(val / scale)
                    );
                }
            }
        }
    }
    out.push_str("</g>\n");
    for a in 0..kx {
        for b in 0..ky {
            if lattice.empty[a * ky + b] {
                let _ = writeln!(
                    out,
                    r#"<rect class="empty" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{EMPTY_FILL}"/>"#,
                    px(zx[a]),
                    py(zy[b + 1]),
                    px(zx[a + 1]) - px(zx[a]),
                    py(zy[b]) - py(zy[b + 1])
                );
            }
        }
    }
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#444444"/>"##
    );
    for t in thin(zx, 6) {
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="#222222">{t:.3}</text>"##,
            px(t),
            TOP + ph + 16.0
        );
    }
    for t in thin(zy, 6) {
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#222222">{t:.3}</text>"##,
            LEFT - 6.0,
            py(t) + 4.0
        );
    }
    let name = |i: usize| labels.axes.get(i).cloned().unwrap_or_default();
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="#222222">{}</text>"##,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        esc(&name(0))
    );
    let _ = writeln!(
        out,
        r##"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})" fill="#222222">{}</text>"##,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(&name(1))
    );

    // colorbar, top is +scale
    let (bx, bw, steps) = (WIDTH - RIGHT + 30.0, 16.0, 32);
    let bh = ph / steps as f64;
    for i in 0..steps {
        let t = 1.0 - 2.0 * (i as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{bx:.2}" y="{:.2}" width="{bw:.2}" height="{bh:.2}" fill="{}"/>"#,
            TOP + bh * i as f64,
            colour(t)
        );
    }
    let _ = writeln!(
        out,
        r##"<rect x="{bx:.2}" y="{TOP:.2}" width="{bw:.2}" height="{ph:.2}" fill="none" stroke="#444444"/>"##
    );
    for (v, y) in [(scale, TOP), (0.0, TOP + ph / 2.0), (-scale, TOP + ph)] {
        let _ = writeln!(out, r##"<text x="{:.2}" y="{:.2}" fill="#222222">{v:.3}</text>"##, bx + bw + 4.0, y + 4.0);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Renders a lattice as a line plot (1-D) or heatmap (2-D).
pub fn render_svg(lattice: &Lattice, kind: PlotKind, labels: &Labels) -> Result<String> {
    match (kind, lattice.dim()) {
        (PlotKind::Line, 1) => {
            let z = &lattice.axes[0];
            render_line(&LinePlot {
                title: labels.title.clone(),
                x_label: labels.axes.first().cloned().unwrap_or_default(),
                y_label: "effect".into(),
                ticks: z.clone(),
                series: vec![Series { label: "ALE".into(), xs: z.clone(), ys: lattice.values.clone() }],
            })
        }
        (PlotKind::Heatmap, 2) => render_heatmap(lattice, labels),
        (k, d) => Err(Error::Render(format!(
            "{k:?} plot needs a {}-D lattice, got {d}-D",
            if k == PlotKind::Line { 1 } else { 2 }
        ))),
    }
}

/// Writes the SVG for `lattice` to `path`.
pub fn render_output(lattice: &Lattice, kind: PlotKind, labels: &Labels, path: impl AsRef<Path>) -> Result<()> {
    let svg = render_svg(lattice, kind, labels)?;
    std::fs::write(path, svg)?;
    Ok(())
}
