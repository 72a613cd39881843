//! Standalone SVG 1.1 plots of the CSV outputs on a fixed 800×500 viewBox.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Result};

use crate::records::{read_csv, PosteriorRow, RunRecord, UpcrossingBin};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// `mean_dist` against width (log-x) from a convergence CSV, one series per seed.
    Convergence,
    /// `var_dist` against width (log-x) from a convergence CSV.
    ConvergenceVar,
    /// Posterior and NNGP mean ± 1 SD bands from a posterior CSV.
    Predictive,
    /// Upcrossing histogram bars from an upcrossing-bins CSV.
    Upcrossings,
}

impl FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "convergence" => Ok(Self::Convergence),
            "convergence-var" => Ok(Self::ConvergenceVar),
            "predictive" => Ok(Self::Predictive),
            "upcrossings" => Ok(Self::Upcrossings),
            other => Err(format!("unknown plot kind `{other}` (convergence, convergence-var, predictive, upcrossings)")),
        }
    }
}

/// Reads `csv` with the schema of `kind` and renders it.
pub fn plot_csv(csv: &Path, kind: PlotKind) -> Result<String> {
    Ok(match kind {
        PlotKind::Convergence => convergence(&read_csv(csv)?, |r| r.mean_dist, "mean_dist"),
        PlotKind::ConvergenceVar => convergence(&read_csv(csv)?, |r| r.var_dist, "var_dist"),
        PlotKind::Predictive => predictive(&read_csv(csv)?),
        PlotKind::Upcrossings => upcrossings(&read_csv(csv)?),
    })
}

fn fmt(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Evenly spaced round tick values covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| raw <= *s).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

/// Pads a degenerate or empty range.
fn span(lo: f64, hi: f64, default: (f64, f64)) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        default
    } else if lo == hi {
        (lo - 0.5 * lo.abs().max(1.0), hi + 0.5 * hi.abs().max(1.0))
    } else {
        (lo, hi)
    }
}

struct Canvas {
    body: String,
    x: (f64, f64),
    y: (f64, f64),
    log_x: bool,
}

impl Canvas {
    fn new(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64), log_x: bool) -> Self {
        let mut c = Canvas { body: String::new(), x, y, log_x };
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let _ = writeln!(
            c.body,
            r#"<g class="plot" data-y-min="{}" data-y-max="{}">"#,
            y.0, y.1
        );
        let _ = writeln!(
            c.body,
            r##"<rect class="frame" x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>"##
        );
        let _ = writeln!(c.body, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, LEFT + pw / 2.0, escape(title));
        let _ = writeln!(
            c.body,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 15.0,
            escape(x_label)
        );
        let _ = writeln!(
            c.body,
            r#"<text x="20" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 20 {})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(y_label)
        );
        for t in nice_ticks(y.0, y.1) {
            let py = c.py(t);
            let _ = writeln!(
                c.body,
                r##"<line class="tick" x1="{}" y1="{py}" x2="{LEFT}" y2="{py}" stroke="#000"/><text x="{}" y="{}" text-anchor="end" font-size="11">{}</text>"##,
                LEFT - 5.0,
                LEFT - 8.0,
                fmt(py + 4.0),
                label(t)
            );
        }
        c
    }

    fn x_tick(&mut self, v: f64) {
        let px = self.px(v);
        let base = HEIGHT - BOTTOM;
        let _ = writeln!(
            self.body,
            r##"<line class="tick" x1="{px}" y1="{base}" x2="{px}" y2="{}" stroke="#000"/><text x="{px}" y="{}" text-anchor="middle" font-size="11">{}</text>"##,
            base + 5.0,
            base + 18.0,
            label(v)
        );
    }

    fn px(&self, v: f64) -> f64 {
        let (lo, hi, v) = if self.log_x { (self.x.0.ln(), self.x.1.ln(), v.ln()) } else { (self.x.0, self.x.1, v) };
        let p = LEFT + (v - lo) / (hi - lo) * (WIDTH - LEFT - RIGHT);
        (p * 100.0).round() / 100.0
    }

    fn py(&self, v: f64) -> f64 {
        let p = HEIGHT - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM);
        (p * 100.0).round() / 100.0
    }

    fn legend(&mut self, i: usize, color: &str, text: &str) {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            self.body,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{color}"/><text x="{}" y="{}" font-size="12">{}</text>"#,
            y - 10.0,
            x + 18.0,
            y,
            escape(text)
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</g>\n");
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n{}</svg>\n",
            self.body
        )
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

/// Log-x line plot of `metric` against width with one marked series per seed.
pub fn convergence(rows: &[RunRecord], metric: impl Fn(&RunRecord) -> f64, name: &str) -> String {
    let (wlo, whi) = min_max(rows.iter().map(|r| r.width as f64));
    let x = if wlo.is_finite() && wlo < whi {
        (wlo / 1.5, whi * 1.5)
    } else if wlo.is_finite() {
        (wlo / 2.0, wlo * 2.0)
    } else {
        (1.0, 10.0)
    };
    let (_, ymax) = min_max(rows.iter().map(&metric));
    let y = span(0.0, ymax * 1.05, (0.0, 1.0));
    let mut c = Canvas::new(&format!("{name} against width"), "width K (log scale)", name, x, y, true);
    let mut widths: Vec<usize> = rows.iter().map(|r| r.width).collect();
    widths.sort_unstable();
    widths.dedup();
    for w in widths {
        c.x_tick(w as f64);
    }
    let mut series: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        series.entry(r.seed).or_default().push((r.width as f64, metric(r)));
    }
    for (i, (seed, mut pts)) in series.into_iter().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = COLORS[i % COLORS.len()];
        let finite: Vec<(f64, f64)> = pts.into_iter().filter(|p| p.1.is_finite()).collect();
        let path: Vec<String> = finite.iter().map(|&(w, v)| format!("{},{}", c.px(w), c.py(v))).collect();
        let _ = writeln!(
            c.body,
            r#"<polyline class="series" data-series="seed-{seed}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for &(w, v) in &finite {
            let _ = writeln!(
                c.body,
                r#"<circle class="marker" data-series="seed-{seed}" cx="{}" cy="{}" r="4" fill="{color}"/>"#,
                c.px(w),
                c.py(v)
            );
        }
        c.legend(i, color, &format!("seed {seed}"));
    }
    c.finish()
}

type MomentGetter = fn(&PosteriorRow) -> (f64, f64);

/// Vertical range covered by the posterior and NNGP bands.
pub fn band_range(rows: &[PosteriorRow]) -> Option<(f64, f64)> {
    let bands = rows.iter().flat_map(|r| {
        let (ps, ns) = (r.posterior_var.max(0.0).sqrt(), r.nngp_var.max(0.0).sqrt());
        [r.posterior_mean - ps, r.posterior_mean + ps, r.nngp_mean - ns, r.nngp_mean + ns]
    });
    let (lo, hi) = min_max(bands);
    (lo <= hi).then_some((lo, hi))
}

/// Mean ± 1 SD bands of the variational posterior and the NNGP.
pub fn predictive(rows: &[PosteriorRow]) -> String {
    let (xlo, xhi) = min_max(rows.iter().map(|r| r.x));
    let x = span(xlo, xhi, (0.0, 1.0));
    let y = match band_range(rows) {
        Some((lo, hi)) => span(lo, hi, (0.0, 1.0)),
        None => (0.0, 1.0),
    };
    let mut c = Canvas::new("Predictive mean ± 1 SD", "x", "f(x)", x, y, false);
    for t in nice_ticks(x.0, x.1) {
        c.x_tick(t);
    }
    let series: [(&str, MomentGetter); 2] = [
        ("variational", |r| (r.posterior_mean, r.posterior_var)),
        ("nngp", |r| (r.nngp_mean, r.nngp_var)),
    ];
    for (i, (name, get)) in series.into_iter().enumerate() {
        if rows.is_empty() {
            break;
        }
        let color = COLORS[i];
        let upper: Vec<String> = rows
            .iter()
            .map(|r| {
                let (m, v) = get(r);
                format!("{},{}", c.px(r.x), c.py(m + v.max(0.0).sqrt()))
            })
            .collect();
        let lower: Vec<String> = rows
            .iter()
            .rev()
            .map(|r| {
                let (m, v) = get(r);
                format!("{},{}", c.px(r.x), c.py(m - v.max(0.0).sqrt()))
            })
            .collect();
        let mean: Vec<String> = rows.iter().map(|r| format!("{},{}", c.px(r.x), c.py(get(r).0))).collect();
        let _ = writeln!(
            c.body,
            r#"<polygon class="band" data-series="{name}" points="{} {}" fill="{color}" fill-opacity="0.25" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let _ = writeln!(
            c.body,
            r#"<polyline class="series" data-series="{name}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            mean.join(" ")
        );
        c.legend(i, color, name);
    }
    c.finish()
}

/// Grouped bar chart of upcrossing counts, one group per bin and one bar per
/// `(model, width)` series.
pub fn upcrossings(rows: &[UpcrossingBin]) -> String {
    let (xlo, xhi) = min_max(rows.iter().flat_map(|r| [r.lo, r.hi]));
    let x = span(xlo, xhi, (0.0, 1.0));
    let (_, cmax) = min_max(rows.iter().map(|r| r.count as f64));
    let y = span(0.0, cmax * 1.05, (0.0, 1.0));
    let mut c = Canvas::new("Upcrossing locations", "x", "count", x, y, false);
    for t in nice_ticks(x.0, x.1) {
        c.x_tick(t);
    }
    let mut series: BTreeMap<(String, usize), Vec<&UpcrossingBin>> = BTreeMap::new();
    for r in rows {
        series.entry((r.model.clone(), r.width)).or_default().push(r);
    }
    let n = series.len().max(1) as f64;
    for (i, ((model, width), bins)) in series.into_iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let name = if model == "nngp" { model.clone() } else { format!("{model} K={width}") };
        for b in bins {
            let (x0, x1) = (c.px(b.lo), c.px(b.hi));
            let w = (x1 - x0) / n;
            let top = c.py(b.count as f64);
            let _ = writeln!(
                c.body,
                r#"<rect class="bar" data-series="{}" x="{}" y="{top}" width="{}" height="{}" fill="{color}"/>"#,
                escape(&name),
                fmt(x0 + w * i as f64),
                fmt(w),
                fmt(HEIGHT - BOTTOM - top)
            );
        }
        c.legend(i, color, &name);
    }
    c.finish()
}

/// Renders `csv` and writes the SVG to `out`.
pub fn write_plot(csv: &Path, kind: PlotKind, out: &Path) -> Result<()> {
    let svg = plot_csv(csv, kind)?;
    if out.extension().is_some_and(|e| e != "svg") {
        bail!("plot output must be an .svg file: {}", out.display());
    }
    crate::records::write_text(out, &svg)
}
