//! Minimal SVG charts of aggregate results.

use std::fmt::Write;

use super::experiment::{AggregateRow, Split};
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let t = if self.x1 > self.x0 {
            (x - self.x0) / (self.x1 - self.x0)
        } else {
            0.5
        };
        MARGIN_LEFT + t * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let t = if self.y1 > self.y0 {
            (y - self.y0) / (self.y1 - self.y0)
        } else {
            0.5
        };
        HEIGHT - MARGIN_BOTTOM - t * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn header(svg: &mut String, title: &str, frame: &Frame, x_label: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (left, bottom) = (MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM);
    let right = WIDTH - MARGIN_RIGHT;
    let _ = writeln!(
        svg,
        r#"<path d="M{left},{MARGIN_TOP} V{bottom} H{right}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let y = frame.y0 + (frame.y1 - frame.y0) * k as f64 / 4.0;
        let py = frame.py(y);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{py:.1}" x2="{left}" y2="{py:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            left - 4.0,
            left - 6.0,
            py + 4.0,
            y
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">test MAE</text>"#,
        (MARGIN_TOP + bottom) / 2.0,
        (MARGIN_TOP + bottom) / 2.0
    );
}

fn legend(svg: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN_TOP + 18.0 * i as f64;
        let x = WIDTH - MARGIN_RIGHT + 14.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            y,
            PALETTE[i % PALETTE.len()],
            x + 14.0,
            y + 9.0,
            escape(name)
        );
    }
}

fn y_range(rows: &[&AggregateRow]) -> (f64, f64) {
    let hi = rows
        .iter()
        .map(|r| r.mae_mean + r.mae_ste.max(0.0))
        .fold(0.0f64, f64::max);
    (0.0, if hi > 0.0 { hi * 1.1 } else { 1.0 })
}

/// Bar chart of test MAE per objective, or MAE against `m` (log2 axis) when
/// rows carry Lipschitz constants. Error bars show one standard error.
pub fn render_svg(rows: &[AggregateRow], title: &str) -> Result<String> {
    let test: Vec<&AggregateRow> = rows
        .iter()
        .filter(|r| r.split == Split::Test && r.mae_mean.is_finite())
        .collect();
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut names: Vec<String> = Vec::new();
    for r in &test {
        let name = format!("{} {}", r.objective, r.setting);
        if !names.contains(&name) {
            names.push(name);
        }
    }
    let series = |r: &AggregateRow| {
        let name = format!("{} {}", r.objective, r.setting);
        names
            .iter()
            .position(|n| *n == name)
            .expect("collected above")
    };
    let (y0, y1) = y_range(&test);
    let mut svg = String::new();

    if test.iter().any(|r| r.m.is_some()) {
        let logs: Vec<f64> = test.iter().filter_map(|r| r.m).map(f64::log2).collect();
        let frame = Frame {
            x0: logs.iter().copied().fold(f64::INFINITY, f64::min),
            x1: logs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            y0,
            y1,
        };
        header(&mut svg, title, &frame, "Lipschitz constant m (log2)");
        for (s, _) in names.iter().enumerate() {
            let mut pts: Vec<(f64, &AggregateRow)> = test
                .iter()
                .filter(|r| series(r) == s)
                .filter_map(|r| r.m.map(|m| (m.log2(), *r)))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let color = PALETTE[s % PALETTE.len()];
            let path: Vec<String> = pts
                .iter()
                .map(|(x, r)| format!("{:.1},{:.1}", frame.px(*x), frame.py(r.mae_mean)))
                .collect();
            if !path.is_empty() {
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                    path.join(" ")
                );
            }
            for (x, r) in &pts {
                let px = frame.px(*x);
                let _ = writeln!(
                    svg,
                    r#"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="{color}"/><circle cx="{px:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                    frame.py(r.mae_mean - r.mae_ste),
                    frame.py(r.mae_mean + r.mae_ste),
                    frame.py(r.mae_mean)
                );
            }
        }
        for m in test
            .iter()
            .filter_map(|r| r.m)
            .fold(Vec::<f64>::new(), |mut acc, m| {
                if !acc.contains(&m) {
                    acc.push(m);
                }
                acc
            })
        {
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
                frame.px(m.log2()),
                HEIGHT - MARGIN_BOTTOM + 16.0,
                m
            );
        }
    } else {
        let frame = Frame {
            x0: 0.0,
            x1: test.len() as f64,
            y0,
            y1,
        };
        header(&mut svg, title, &frame, "objective");
        let slot = frame.px(1.0) - frame.px(0.0);
        for (i, r) in test.iter().enumerate() {
            let color = PALETTE[series(r) % PALETTE.len()];
            let x = frame.px(i as f64) + slot * 0.15;
            let w = slot * 0.7;
            let top = frame.py(r.mae_mean);
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{top:.1}" width="{w:.1}" height="{:.1}" fill="{color}"/>"#,
                frame.py(0.0) - top
            );
            let cx = x + w / 2.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
                frame.py(r.mae_mean - r.mae_ste),
                frame.py(r.mae_mean + r.mae_ste)
            );
        }
    }
    legend(&mut svg, &names);
    svg.push_str("</svg>\n");
    Ok(svg)
}
