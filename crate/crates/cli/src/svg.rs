//! Minimal static SVG charts: line/band/scatter plots and a ternary heat map.

use std::fmt::Write;

use evitlab_core::regressor::SimplexDensity;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

pub struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    x: (f64, f64),
    y: (f64, f64),
    body: String,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let y = if y.1 > y.0 { y } else { (y.0 - 1.0, y.0 + 1.0) };
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), x, y, body: String::new() }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    fn path(&self, points: impl Iterator<Item = (f64, f64)>) -> String {
        let mut s = String::new();
        for (i, (x, y)) in points.enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.2},{:.2}", self.px(x), self.py(y));
        }
        s
    }

    pub fn line(&mut self, id: &str, points: &[(f64, f64)], stroke: &str, dash: Option<&str>) {
        let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        let pts = self.path(points.iter().copied());
        let _ = writeln!(
            self.body,
            r#"<polyline id="{id}" fill="none" stroke="{stroke}" stroke-width="2"{dash} points="{pts}"/>"#
        );
    }

    /// Shaded region between two curves sharing the same x values.
    pub fn band(&mut self, id: &str, lower: &[(f64, f64)], upper: &[(f64, f64)], fill: &str) {
        let pts = self.path(lower.iter().chain(upper.iter().rev()).copied());
        let _ = writeln!(
            self.body,
            r#"<polygon id="{id}" fill="{fill}" fill-opacity="0.3" stroke="none" points="{pts}"/>"#
        );
    }

    pub fn scatter(&mut self, id: &str, points: &[(f64, f64)], fill: &str) {
        let _ = writeln!(self.body, r#"<g id="{id}" fill="{fill}" fill-opacity="0.5">"#);
        for &(x, y) in points {
            let _ = writeln!(self.body, r#"<circle cx="{:.2}" cy="{:.2}" r="2"/>"#, self.px(x), self.py(y));
        }
        self.body.push_str("</g>\n");
    }

    pub fn hline(&mut self, id: &str, y: f64, dash: &str) {
        let (a, b) = (self.x.0, self.x.1);
        self.line(id, &[(a, y), (b, y)], "#444444", Some(dash));
    }

    pub fn vline(&mut self, id: &str, x: f64, dash: &str) {
        let (a, b) = (self.y.0, self.y.1);
        self.line(id, &[(x, a), (x, b)], "#444444", Some(dash));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y1 - y0
        );
        for i in 0..=5 {
            let t = i as f64 / 5.0;
            let xv = self.x.0 + t * (self.x.1 - self.x.0);
            let yv = self.y.0 + t * (self.y.1 - self.y.0);
            let (px, py) = (self.px(xv), self.py(yv));
            let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{y1}" x2="{px:.2}" y2="{}" stroke="black"/>"#, y1 + 5.0);
            let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, y1 + 18.0, tick(xv));
            let _ = writeln!(s, r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 8.0, py + 4.0, tick(yv));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        );
        let _ = writeln!(
            s,
            r#"<clipPath id="plot-area"><rect x="{x0}" y="{y0}" width="{}" height="{}"/></clipPath>"#,
            x1 - x0,
            y1 - y0
        );
        s.push_str("<g clip-path=\"url(#plot-area)\">\n");
        s.push_str(&self.body);
        s.push_str("</g>\n</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else {
        let t = format!("{v:.2}");
        if t == "-0.00" {
            "0.00".into()
        } else {
            t
        }
    }
}

/// Five-stop approximation of the viridis palette.
fn colour(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let t = t.clamp(0.0, 1.0) * 4.0;
    let i = (t.floor() as usize).min(3);
    let f = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + f * (q - p)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Ternary heat map with TR at the top vertex, FPR bottom left, FNR bottom right.
pub fn simplex_heatmap(density: &SimplexDensity, title: &str) -> String {
    let side = 440.0;
    let height = side * 3f64.sqrt() / 2.0;
    let (ox, oy) = (100.0, 60.0 + height);
    // Barycentric (tr, fpr, fnr) to page coordinates.
    let page = |tr: f64, fpr: f64| {
        let fnr = 1.0 - tr - fpr;
        (ox + fnr * side + tr * side / 2.0, oy - tr * height)
    };
    let r = density.resolution as f64;
    let max = density.points.iter().map(|p| p.density).fold(0.0, f64::max);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="{:.0}" viewBox="0 0 640 {:.0}" font-family="sans-serif" font-size="13">"#,
        height + 120.0,
        height + 120.0
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(s, r#"<text x="320" y="28" text-anchor="middle" font-size="15">{}</text>"#, escape(title));
    s.push_str("<g id=\"density\" stroke=\"none\">\n");
    for p in &density.points {
        // Cell centroids sit at 1/3 (upward cell) or 2/3 (downward cell)
        // of a grid step; recover the cell corners from that offset.
        let (a, b) = (p.q[0] * r, p.q[1] * r);
        let (i, j) = (a.floor(), b.floor());
        let corners = if a - i < 0.5 {
            [(i, j), (i + 1.0, j), (i, j + 1.0)]
        } else {
            [(i + 1.0, j), (i, j + 1.0), (i + 1.0, j + 1.0)]
        };
        let pts: Vec<String> = corners
            .iter()
            .map(|&(u, v)| {
                let (x, y) = page(u / r, v / r);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let t = if max > 0.0 { p.density / max } else { 0.0 };
        let c = colour(t);
        let _ = writeln!(s, r#"<polygon points="{}" fill="{c}" stroke="{c}" stroke-width="0.3"/>"#, pts.join(" "));
    }
    s.push_str("</g>\n");
    let (tx, ty) = page(1.0, 0.0);
    let (fx, fy) = page(0.0, 1.0);
    let (nx, ny) = page(0.0, 0.0);
    let _ = writeln!(
        s,
        r#"<polygon points="{tx:.2},{ty:.2} {fx:.2},{fy:.2} {nx:.2},{ny:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<text x="{tx:.2}" y="{:.2}" text-anchor="middle">TR</text>"#, ty - 8.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">FPR</text>"#, fx - 6.0, fy + 16.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="start">FNR</text>"#, nx + 6.0, ny + 16.0);
    let _ = writeln!(s, r#"<text x="320" y="{:.2}" text-anchor="middle">peak density {max:.3}</text>"#, oy + 40.0);
    s.push_str("</svg>\n");
    s
}
