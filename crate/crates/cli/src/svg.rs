//! Minimal native SVG output: polyline plots and scatter rasters for run
//! diagnostics. Not publication-grade, no external dependencies.

use std::io::{self, Write};

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];
const W: f64 = 760.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn of(series: &[Series]) -> Self {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for s in series {
            for (x, y) in &s.points {
                f.x0 = f.x0.min(*x);
                f.x1 = f.x1.max(*x);
                f.y0 = f.y0.min(*y);
                f.y1 = f.y1.max(*y);
            }
        }
        if !f.x0.is_finite() {
            f = Frame {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            };
        }
        if f.x1 - f.x0 < 1e-12 {
            f.x1 = f.x0 + 1.0;
        }
        if f.y1 - f.y0 < 1e-12 {
            f.y1 = f.y0 + 1.0;
        }
        f
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn header(
    w: &mut impl Write,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    f: &Frame,
) -> io::Result<()> {
    writeln!(
        w,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
    )?;
    writeln!(w, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>")?;
    writeln!(
        w,
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        W / 2.0,
        escape(title)
    )?;
    // axes
    writeln!(
        w,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        r = W - MARGIN,
        t = MARGIN,
        b = H - MARGIN
    )?;
    for i in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let fy = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let px = f.px(fx);
        let py = f.py(fy);
        writeln!(
            w,
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"#ccc\"/>\
             <text x=\"{px}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            MARGIN,
            H - MARGIN,
            H - MARGIN + 16.0,
            tick(fx)
        )?;
        writeln!(
            w,
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{}\" y2=\"{py}\" stroke=\"#ccc\"/>\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            MARGIN,
            W - MARGIN,
            MARGIN - 6.0,
            py + 4.0,
            tick(fy)
        )?;
    }
    writeln!(
        w,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        H - 12.0,
        escape(xlabel)
    )?;
    writeln!(
        w,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    )?;
    Ok(())
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 10000.0) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Polyline plot of one or more series, auto-scaled, with a legend when the
/// series are few enough to label.
pub fn line_plot(
    w: &mut impl Write,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series],
) -> io::Result<()> {
    let f = Frame::of(series);
    header(w, title, xlabel, ylabel, &f)?;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", f.px(*x), f.py(*y)))
            .collect();
        writeln!(
            w,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>",
            pts.join(" ")
        )?;
    }
    if series.len() <= 8 {
        for (i, s) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let y = MARGIN + 14.0 * i as f64 + 6.0;
            writeln!(
                w,
                "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"3\"/>\
                 <text x=\"{}\" y=\"{}\">{}</text>",
                W - MARGIN - 110.0,
                W - MARGIN - 86.0,
                W - MARGIN - 80.0,
                y + 4.0,
                escape(&s.name)
            )?;
        }
    }
    writeln!(w, "</svg>")
}

/// Scatter plot (used for spike rasters).
pub fn scatter_plot(
    w: &mut impl Write,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    points: &[(f64, f64)],
) -> io::Result<()> {
    let series = [Series {
        name: String::new(),
        points: points.to_vec(),
    }];
    let f = Frame::of(&series);
    header(w, title, xlabel, ylabel, &f)?;
    for (x, y) in points {
        writeln!(
            w,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.2\" fill=\"#1f77b4\"/>",
            f.px(*x),
            f.py(*y)
        )?;
    }
    writeln!(w, "</svg>")
}
