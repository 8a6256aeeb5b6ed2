//! Static log-log plots written by hand so the bytes depend only on the data.

use fracwave::exponents::format_sig;
use fracwave::sphavg::ExponentFit;
use std::fmt::Write;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    /// Log10 range of positive data, padded by 5% on each side.
    fn of(values: &[f64]) -> Axis {
        let logs = values.iter().map(|v| v.log10());
        let lo = logs.clone().fold(f64::INFINITY, f64::min);
        let hi = logs.fold(f64::NEG_INFINITY, f64::max);
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
        Axis { lo: lo - pad, hi: hi + pad }
    }

    fn frac(&self, v: f64) -> f64 {
        (v.log10() - self.lo) / (self.hi - self.lo)
    }

    /// Decade ticks inside the range, or the two ends when there are fewer than two.
    fn ticks(&self) -> Vec<f64> {
        let decades: Vec<f64> = ((self.lo.ceil() as i32)..=(self.hi.floor() as i32))
            .map(|k| 10f64.powi(k))
            .collect();
        if decades.len() >= 2 {
            decades
        } else {
            vec![10f64.powf(self.lo), 10f64.powf(self.hi)]
        }
    }
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Polyline of `(xs, ys)` on log10 axes, with the power-law fit overlaid when given.
pub fn render(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64], fit: Option<&ExponentFit>) -> String {
    let ax = Axis::of(xs);
    let ay = Axis::of(ys);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + ax.frac(x) * pw;
    let sy = |y: f64| TOP + (1.0 - ay.frac(y)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        px(pw),
        px(ph)
    );
    for t in ax.ticks() {
        let x = px(sx(t));
        let _ = writeln!(s, r##"<line x1="{x}" y1="{TOP}" x2="{x}" y2="{}" stroke="#dddddd"/>"##, px(TOP + ph));
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, px(TOP + ph + 18.0), format_sig(t, 4));
    }
    for t in ay.ticks() {
        let y = px(sy(t));
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/>"##, px(LEFT + pw));
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end" dominant-baseline="middle">{}</text>"#, px(LEFT - 6.0), format_sig(t, 4));
    }
    let _ = writeln!(s, r#"<text x="{}" y="28" text-anchor="middle" font-size="14">{}</text>"#, px(WIDTH / 2.0), escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, px(LEFT + pw / 2.0), px(HEIGHT - 20.0), escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="22" y="{0}" text-anchor="middle" transform="rotate(-90 22 {0})">{1}</text>"#,
        px(TOP + ph / 2.0),
        escape(ylabel)
    );

    let points: Vec<String> = xs.iter().zip(ys).map(|(&x, &y)| format!("{},{}", px(sx(x)), px(sy(y)))).collect();
    let _ = writeln!(s, r##"<polyline fill="none" stroke="#1f4e9c" stroke-width="1.5" points="{}"/>"##, points.join(" "));
    for p in &points {
        let (x, y) = p.split_once(',').expect("formatted as x,y");
        let _ = writeln!(s, r##"<circle cx="{x}" cy="{y}" r="3" fill="#1f4e9c"/>"##);
    }
    if let Some(f) = fit {
        let line = |x: f64| (f.intercept + f.slope * x.ln()).exp();
        let (x0, x1) = f.window;
        let _ = writeln!(
            s,
            r##"<line class="fit" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#c0392b" stroke-dasharray="6 4"/>"##,
            px(sx(x0)),
            px(sy(line(x0))),
            px(sx(x1)),
            px(sy(line(x1)))
        );
        let _ = writeln!(
            s,
            r##"<text class="slope" x="{}" y="{}" fill="#c0392b">slope = {:.3}</text>"##,
            px(LEFT + 12.0),
            px(TOP + 20.0),
            f.slope
        );
    }
    s.push_str("</svg>\n");
    s
}
