//! Minimal SVG charts: line charts with confidence bands, heatmaps and box plots.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#8c564b", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#e377c2", "#7f7f7f",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"##
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="white"/>"##);
    let _ = writeln!(
        out,
        r##"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"##,
        width / 2.0,
        escape(title)
    );
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = if self.x1 > self.x0 {
            self.x1 - self.x0
        } else {
            1.0
        };
        MARGIN_LEFT + (x - self.x0) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let span = if self.y1 > self.y0 {
            self.y1 - self.y0
        } else {
            1.0
        };
        HEIGHT - MARGIN_BOTTOM - (y - self.y0) / span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    fn axes(&self, out: &mut String, x_label: &str, y_label: &str) {
        let (l, r) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (t, b) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
        let _ = writeln!(
            out,
            r##"<path d="M{l} {t}V{b}H{r}" fill="none" stroke="black"/>"##
        );
        for i in 0..=4 {
            let fx = self.x0 + (self.x1 - self.x0) * f64::from(i) / 4.0;
            let fy = self.y0 + (self.y1 - self.y0) * f64::from(i) / 4.0;
            let (x, y) = (self.px(fx), self.py(fy));
            let _ = writeln!(
                out,
                r##"<path d="M{x:.1} {b}v5" stroke="black"/><text x="{x:.1}" y="{}" text-anchor="middle">{}</text>"##,
                b + 18.0,
                tick(fx)
            );
            let _ = writeln!(
                out,
                r##"<path d="M{l} {y:.1}h-5" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
                l - 8.0,
                y + 4.0,
                tick(fy)
            );
        }
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"##,
            (l + r) / 2.0,
            HEIGHT - 10.0,
            escape(x_label)
        );
        let _ = writeln!(
            out,
            r##"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">{}</text>"##,
            (t + b) / 2.0,
            (t + b) / 2.0,
            escape(y_label)
        );
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{:.0}k", v / 1000.0)
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Half-width of a band drawn around each point.
    pub band: Option<Vec<f64>>,
}

pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    y_range: Option<(f64, f64)>,
) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let x0 = xs.clone().fold(f64::INFINITY, f64::min);
    let x1 = xs.fold(f64::NEG_INFINITY, f64::max);
    let (y0, y1) = y_range.unwrap_or_else(|| {
        let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
        (
            ys.clone().fold(f64::INFINITY, f64::min).min(0.0),
            ys.fold(f64::NEG_INFINITY, f64::max),
        )
    });
    let frame = if x0.is_finite() {
        Frame { x0, x1, y0, y1 }
    } else {
        Frame {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        }
    };
    let mut out = String::new();
    header(&mut out, title, WIDTH, HEIGHT);
    frame.axes(&mut out, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        if let Some(band) = &s.band {
            let mut d = String::new();
            for (k, (&(x, y), h)) in s.points.iter().zip(band).enumerate() {
                let _ = write!(
                    d,
                    "{}{:.2} {:.2}",
                    if k == 0 { "M" } else { "L" },
                    frame.px(x),
                    frame.py((y + h).min(y1))
                );
            }
            for (&(x, y), h) in s.points.iter().zip(band).rev() {
                let _ = write!(d, "L{:.2} {:.2}", frame.px(x), frame.py((y - h).max(y0)));
            }
            let _ = writeln!(
                out,
                r##"<path d="{d}Z" fill="{}" fill-opacity="0.2" stroke="none"/>"##,
                color(i)
            );
        }
        let mut d = String::new();
        for (k, &(x, y)) in s.points.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.2} {:.2}",
                if k == 0 { "M" } else { "L" },
                frame.px(x),
                frame.py(y)
            );
        }
        let _ = writeln!(
            out,
            r##"<path d="{d}" fill="none" stroke="{}" stroke-width="2"/>"##,
            color(i)
        );
        let ly = MARGIN_TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 15.0;
        let _ = writeln!(
            out,
            r##"<path d="M{lx} {ly}h20" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"##,
            color(i),
            lx + 25.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn heat_color(t: f64) -> String {
    // white to dark red
    let t = t.clamp(0.0, 1.0);
    let r = 255.0 - 115.0 * t;
    let g = 255.0 * (1.0 - t);
    let b = 255.0 * (1.0 - t);
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Row-major grid heatmap; `None` cells (walls) are drawn grey.
pub fn heatmap(title: &str, width: usize, height: usize, cells: &[Option<f64>]) -> String {
    let cell = (320.0 / width.max(height) as f64).floor().max(8.0);
    let (left, top) = (20.0, 40.0);
    let total_w = left + cell * width as f64 + 100.0;
    let total_h = top + cell * height as f64 + 20.0;
    let max = cells.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
    let mut out = String::new();
    header(&mut out, title, total_w, total_h);
    for y in 0..height {
        for x in 0..width {
            let fill = match cells[y * width + x] {
                Some(v) => heat_color(if max > 0.0 { v / max } else { 0.0 }),
                None => "#808080".to_string(),
            };
            let _ = writeln!(
                out,
                r##"<rect x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="{fill}" stroke="#cccccc"/>"##,
                left + cell * x as f64,
                top + cell * y as f64
            );
        }
    }
    let bar_x = left + cell * width as f64 + 20.0;
    let bar_h = cell * height as f64;
    for i in 0..50 {
        let t = 1.0 - f64::from(i) / 49.0;
        let _ = writeln!(
            out,
            r##"<rect x="{bar_x:.1}" y="{:.2}" width="15" height="{:.2}" fill="{}"/>"##,
            top + bar_h * f64::from(i) / 50.0,
            bar_h / 50.0 + 0.5,
            heat_color(t)
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="{:.1}">{}</text>"##,
        bar_x + 20.0,
        top + 10.0,
        tick(max)
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="{:.1}">0</text>"##,
        bar_x + 20.0,
        top + bar_h
    );
    out.push_str("</svg>\n");
    out
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// One box (quartiles, median, min-max whiskers) per group.
pub fn box_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    groups: &[(String, Vec<f64>)],
) -> String {
    let all = groups.iter().flat_map(|g| g.1.iter().copied());
    let y1 = all.fold(0.0f64, f64::max) * 1.05;
    let frame = Frame {
        x0: 0.0,
        x1: groups.len() as f64,
        y0: 0.0,
        y1: if y1 > 0.0 { y1 } else { 1.0 },
    };
    let mut out = String::new();
    header(&mut out, title, WIDTH, HEIGHT);
    let (l, b) = (MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        out,
        r##"<path d="M{l} {MARGIN_TOP}V{b}H{}" fill="none" stroke="black"/>"##,
        WIDTH - MARGIN_RIGHT
    );
    for i in 0..=4 {
        let fy = frame.y1 * f64::from(i) / 4.0;
        let y = frame.py(fy);
        let _ = writeln!(
            out,
            r##"<path d="M{l} {y:.1}h-5" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{:.3}</text>"##,
            l - 8.0,
            y + 4.0,
            fy
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"##,
        frame.px(frame.x1 / 2.0),
        HEIGHT - 10.0,
        escape(x_label)
    );
    let mid = (MARGIN_TOP + b) / 2.0;
    let _ = writeln!(
        out,
        r##"<text x="15" y="{mid:.1}" text-anchor="middle" transform="rotate(-90 15 {mid:.1})">{}</text>"##,
        escape(y_label)
    );
    let box_w = (frame.px(1.0) - frame.px(0.0)) * 0.5;
    for (i, (label, values)) in groups.iter().enumerate() {
        let cx = frame.px(i as f64 + 0.5);
        let _ = writeln!(
            out,
            r##"<text x="{cx:.1}" y="{}" text-anchor="middle">{}</text>"##,
            b + 18.0,
            escape(label)
        );
        if values.is_empty() {
            continue;
        }
        let mut v = values.clone();
        v.sort_by(f64::total_cmp);
        let [lo, q1, med, q3, hi] = [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| frame.py(quantile(&v, q)));
        let _ = writeln!(
            out,
            r##"<path d="M{cx:.1} {lo:.1}V{q1:.1}M{cx:.1} {q3:.1}V{hi:.1}" stroke="black"/>"##
        );
        let _ = writeln!(
            out,
            r##"<rect x="{:.1}" y="{q3:.1}" width="{box_w:.1}" height="{:.1}" fill="{}" fill-opacity="0.6" stroke="black"/>"##,
            cx - box_w / 2.0,
            (q1 - q3).max(0.5),
            color(i + 1)
        );
        let _ = writeln!(
            out,
            r##"<path d="M{:.1} {med:.1}h{box_w:.1}" stroke="black" stroke-width="2"/>"##,
            cx - box_w / 2.0
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let s = Series {
            label: "a<b".into(),
            points: vec![(0.0, 0.0), (1.0, 0.5)],
            band: Some(vec![0.1, 0.1]),
        };
        let svg = line_chart("t", "x", "y", &[s], Some((0.0, 1.0)));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        let svg = heatmap("h", 2, 1, &[Some(1.0), None]);
        assert!(svg.contains("#808080"));
        let svg = box_plot(
            "b",
            "n",
            "s",
            &[("1".into(), vec![1.0, 2.0, 3.0]), ("2".into(), vec![])],
        );
        assert_eq!(svg.matches("<rect").count(), 2);
    }

    #[test]
    fn quantiles_interpolate() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[7.0], 0.75), 7.0);
    }
}
