//! Deterministic SVG charts from harness CSVs.
//!
//! Three inputs are understood, told apart by their header:
//! per-seed metrics (`run_id,seed,step,metric,value`), sweep aggregates
//! (`run_id,step,metric,mean,std,n`) and sweep summaries
//! (`run_id,metric,mean,std,n`). Curves become line charts with a shaded
//! band; summaries become bar charts with error bars.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{create_dir_all, write, HarnessError, Result};
use crate::run::METRICS_HEADER;
use crate::sweep::{AGGREGATE_HEADER, SUMMARY_HEADER};

/// Width of the shaded band around each mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    /// One standard deviation.
    #[default]
    Std,
    /// Normal-approximation 95% confidence interval of the mean.
    Ci95,
    None,
}

impl Band {
    fn half_width(self, std: f64, n: usize) -> f64 {
        match self {
            Band::Std => std,
            Band::Ci95 => 1.96 * std / (n.max(1) as f64).sqrt(),
            Band::None => 0.0,
        }
    }
}

impl FromStr for Band {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std" => Ok(Band::Std),
            "ci95" => Ok(Band::Ci95),
            "none" => Ok(Band::None),
            o => Err(HarnessError::config(format!("unknown band `{o}` (std, ci95, none)"))),
        }
    }
}

/// Panels of the four-panel learning-curve figure.
pub const PANEL_METRICS: [&str; 4] = ["total_reward", "memory_regret", "active_regret", "passive_regret"];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    /// Metrics to draw; empty means every metric in the input.
    pub metrics: Vec<String>,
    pub band: Band,
    pub width: f64,
    pub height: f64,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self {
            metrics: Vec::new(),
            band: Band::Std,
            width: 640.0,
            height: 400.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub step: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// One curve: a run and a metric over steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub metric: String,
    pub points: Vec<Point>,
}

/// One bar: final value of a metric for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub label: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlotData {
    Curves(Vec<Series>),
    Bars(Vec<Bar>),
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::data(format!("{}: {other:?}", path.display())),
    })?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn num<T: FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| HarnessError::data(format!("bad {what} `{s}`")))
}

/// Reads any of the three CSV kinds.
pub fn load(path: &Path) -> Result<PlotData> {
    let (header, rows) = read_table(path)?;
    if rows.is_empty() {
        return Err(HarnessError::data(format!("{} has no data rows", path.display())));
    }
    let has = |cols: &[&str]| header.len() == cols.len() && header.iter().zip(cols).all(|(a, b)| a == b);
    if has(&SUMMARY_HEADER) {
        let bars = rows
            .iter()
            .map(|r| {
                Ok(Bar {
                    label: r[0].clone(),
                    metric: r[1].clone(),
                    mean: num(&r[2], "mean")?,
                    std: num(&r[3], "std")?,
                    n: num(&r[4], "n")?,
                })
            })
            .collect::<Result<_>>()?;
        return Ok(PlotData::Bars(bars));
    }
    // (label, metric) -> step -> point
    let mut acc: BTreeMap<(String, String), BTreeMap<u64, Point>> = BTreeMap::new();
    if has(&AGGREGATE_HEADER) {
        for r in &rows {
            let step: u64 = num(&r[1], "step")?;
            acc.entry((r[0].clone(), r[2].clone())).or_default().insert(
                step,
                Point {
                    step: step as f64,
                    mean: num(&r[3], "mean")?,
                    std: num(&r[4], "std")?,
                    n: num(&r[5], "n")?,
                },
            );
        }
    } else if has(&METRICS_HEADER) {
        for r in &rows {
            let step: u64 = num(&r[2], "step")?;
            let label = format!("{} seed {}", r[0], r[1]);
            acc.entry((label, r[3].clone())).or_default().insert(
                step,
                Point {
                    step: step as f64,
                    mean: num(&r[4], "value")?,
                    std: 0.0,
                    n: 1,
                },
            );
        }
    } else {
        return Err(HarnessError::data(format!(
            "{}: missing columns; expected one of [{}], [{}] or [{}], found [{}]",
            path.display(),
            METRICS_HEADER.join(","),
            AGGREGATE_HEADER.join(","),
            SUMMARY_HEADER.join(","),
            header.join(",")
        )));
    }
    Ok(PlotData::Curves(
        acc.into_iter()
            .map(|((label, metric), pts)| Series {
                label,
                metric,
                points: pts.into_values().collect(),
            })
            .collect(),
    ))
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e5).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Frame {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        self.x + (v - self.x_range.0) / (self.x_range.1 - self.x_range.0) * self.w
    }

    fn py(&self, v: f64) -> f64 {
        self.y + self.h - (v - self.y_range.0) / (self.y_range.1 - self.y_range.0) * self.h
    }

    fn axes(&self, out: &mut String, title: &str, x_label: &str, x_ticks: bool) {
        let (x, y, w, h) = (self.x, self.y, self.w, self.h);
        let _ = writeln!(out, r##"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#333"/>"##);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#, x + w / 2.0, y - 8.0, escape(title));
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let yv = self.y_range.0 + f * (self.y_range.1 - self.y_range.0);
            let py = self.py(yv);
            let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/>"##, x + w);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#, x - 4.0, py + 3.0, fmt_tick(yv));
            if x_ticks {
                let xv = self.x_range.0 + f * (self.x_range.1 - self.x_range.0);
                let _ = writeln!(
                    out,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
                    self.px(xv),
                    y + h + 14.0,
                    fmt_tick(xv)
                );
            }
        }
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#, x + w / 2.0, y + h + 30.0, escape(x_label));
    }
}

fn header(w: f64, h: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    s
}

fn draw_curves(out: &mut String, series: &[&Series], labels: &[String], frame_at: (f64, f64, f64, f64), title: &str, band: Band) {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut xl, mut xh, mut yl, mut yh) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        let hw = band.half_width(p.std, p.n);
        xl = xl.min(p.step);
        xh = xh.max(p.step);
        yl = yl.min(p.mean - hw);
        yh = yh.max(p.mean + hw);
    }
    let f = Frame {
        x: frame_at.0,
        y: frame_at.1,
        w: frame_at.2,
        h: frame_at.3,
        x_range: nice_range(xl, xh),
        y_range: nice_range(yl, yh),
    };
    f.axes(out, title, "environment steps", true);
    for s in series {
        let color = PALETTE[labels.iter().position(|l| *l == s.label).unwrap_or(0) % PALETTE.len()];
        if band != Band::None && s.points.iter().any(|p| p.std > 0.0) {
            let mut poly = String::new();
            for p in &s.points {
                let _ = write!(poly, "{:.2},{:.2} ", f.px(p.step), f.py(p.mean + band.half_width(p.std, p.n)));
            }
            for p in s.points.iter().rev() {
                let _ = write!(poly, "{:.2},{:.2} ", f.px(p.step), f.py(p.mean - band.half_width(p.std, p.n)));
            }
            let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, poly.trim_end());
        }
        let mut line = String::new();
        for p in &s.points {
            let _ = write!(line, "{:.2},{:.2} ", f.px(p.step), f.py(p.mean));
        }
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.trim_end());
    }
}

fn legend(out: &mut String, labels: &[String], x: f64, y: f64) {
    for (i, l) in labels.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, r#"<rect x="{x:.2}" y="{:.2}" width="12" height="10" fill="{c}"/>"#, yy - 9.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{yy:.2}" font-size="11">{}</text>"#, x + 16.0, escape(l));
    }
}

fn labels_of<'a>(series: impl Iterator<Item = &'a Series>) -> Vec<String> {
    let mut v: Vec<String> = Vec::new();
    for s in series {
        if !v.contains(&s.label) {
            v.push(s.label.clone());
        }
    }
    v
}

/// A line chart of one metric across runs.
pub fn line_chart(series: &[Series], metric: &str, spec: &PlotSpec) -> Result<String> {
    let sel: Vec<&Series> = series.iter().filter(|s| s.metric == metric).collect();
    if sel.is_empty() {
        return Err(HarnessError::data(format!("no `{metric}` column in the input")));
    }
    let labels = labels_of(sel.iter().copied());
    let legend_w = 220.0;
    let mut out = header(spec.width + legend_w, spec.height);
    draw_curves(&mut out, &sel, &labels, (70.0, 30.0, spec.width - 90.0, spec.height - 80.0), metric, spec.band);
    legend(&mut out, &labels, spec.width, 40.0);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Four panels: total reward and the three memory regrets.
pub fn panel_figure(series: &[Series], spec: &PlotSpec) -> Result<String> {
    for m in PANEL_METRICS {
        if !series.iter().any(|s| s.metric == m) {
            return Err(HarnessError::data(format!("four-panel figure needs a `{m}` column")));
        }
    }
    let labels = labels_of(series.iter().filter(|s| PANEL_METRICS.contains(&s.metric.as_str())));
    let (pw, ph) = (spec.width / 2.0, spec.height * 0.8);
    let legend_h = 16.0 * labels.len() as f64 + 20.0;
    let mut out = header(spec.width * 2.0, ph + legend_h);
    for (i, m) in PANEL_METRICS.iter().enumerate() {
        let sel: Vec<&Series> = series.iter().filter(|s| s.metric == *m).collect();
        let x0 = pw * i as f64;
        draw_curves(&mut out, &sel, &labels, (x0 + 55.0, 30.0, pw - 70.0, ph - 75.0), m, spec.band);
    }
    legend(&mut out, &labels, 20.0, ph + 10.0);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Bars of one metric across runs, with error bars.
pub fn bar_chart(bars: &[Bar], metric: &str, spec: &PlotSpec) -> Result<String> {
    let sel: Vec<&Bar> = bars.iter().filter(|b| b.metric == metric).collect();
    if sel.is_empty() {
        return Err(HarnessError::data(format!("no `{metric}` rows in the input")));
    }
    let hi = sel
        .iter()
        .map(|b| b.mean + spec.band.half_width(b.std, b.n))
        .fold(0.0f64, f64::max);
    let lo = sel
        .iter()
        .map(|b| b.mean - spec.band.half_width(b.std, b.n))
        .fold(0.0f64, f64::min);
    let mut out = header(spec.width, spec.height + 80.0);
    let f = Frame {
        x: 70.0,
        y: 30.0,
        w: spec.width - 90.0,
        h: spec.height - 80.0,
        x_range: (0.0, sel.len() as f64),
        y_range: nice_range(lo, hi),
    };
    f.axes(&mut out, metric, "", false);
    let slot = f.w / sel.len() as f64;
    for (i, b) in sel.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let x = f.x + slot * (i as f64 + 0.15);
        let (top, base) = (f.py(b.mean.max(0.0)), f.py(b.mean.min(0.0)));
        let _ = writeln!(out, r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{c}"/>"#, slot * 0.7, base - top);
        let hw = spec.band.half_width(b.std, b.n);
        if hw > 0.0 {
            let cx = x + slot * 0.35;
            let _ = writeln!(
                out,
                r##"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="#000"/>"##,
                f.py(b.mean - hw),
                f.py(b.mean + hw)
            );
        }
        let ty = f.y + f.h + 14.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{ty:.2}" font-size="10" text-anchor="end" transform="rotate(-35 {:.2} {ty:.2})">{}</text>"#,
            x + slot * 0.35,
            x + slot * 0.35,
            escape(&b.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn file_stem(metric: &str) -> String {
    metric.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' }).collect()
}

/// Renders `input` into `out_dir`: one chart per metric, plus the four-panel
/// figure when all its metrics are present. Returns the written paths.
pub fn plot(input: &Path, out_dir: &Path, spec: &PlotSpec) -> Result<Vec<PathBuf>> {
    let data = load(input)?;
    create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut emit = |name: String, svg: String| -> Result<()> {
        let p = out_dir.join(name);
        write(&p, svg)?;
        written.push(p);
        Ok(())
    };
    match &data {
        PlotData::Curves(series) => {
            let metrics = pick(spec, series.iter().map(|s| s.metric.as_str()));
            for m in &metrics {
                emit(format!("{}.svg", file_stem(m)), line_chart(series, m, spec)?)?;
            }
            if PANEL_METRICS.iter().all(|m| series.iter().any(|s| s.metric == *m)) {
                emit("panels.svg".into(), panel_figure(series, spec)?)?;
            }
        }
        PlotData::Bars(bars) => {
            let metrics = pick(spec, bars.iter().map(|b| b.metric.as_str()));
            for m in &metrics {
                emit(format!("{}_bars.svg", file_stem(m)), bar_chart(bars, m, spec)?)?;
            }
        }
    }
    Ok(written)
}

fn pick<'a>(spec: &PlotSpec, available: impl Iterator<Item = &'a str>) -> Vec<String> {
    if !spec.metrics.is_empty() {
        return spec.metrics.clone();
    }
    let mut v: Vec<String> = Vec::new();
    for m in available {
        if !v.iter().any(|x| x == m) {
            v.push(m.to_string());
        }
    }
    v
}
