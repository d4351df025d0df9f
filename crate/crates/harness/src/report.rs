//! CSV aggregates and SVG charts computed from a result store.
//!
//! Output is a pure function of the records: numbers are printed with fixed
//! precision and series are ordered by key, so re-emitting an unchanged
//! store reproduces every byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use relay_core::agent::Mode;
use relay_core::topology::quantile;

use crate::error::{config_err, Error, Result};
use crate::store::{ResultStore, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Hitting,
    Returns,
    Speedup,
}

impl ReportKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportKind::Hitting => "hitting",
            ReportKind::Returns => "returns",
            ReportKind::Speedup => "speedup",
        }
    }
}

impl FromStr for ReportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hitting" => Ok(ReportKind::Hitting),
            "returns" => Ok(ReportKind::Returns),
            "speedup" => Ok(ReportKind::Speedup),
            other => config_err(format!("unknown report kind `{other}` (hitting, returns, speedup)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub runs: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

pub fn summarise(values: &[f64]) -> Summary {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Summary { runs: v.len(), median: quantile(&v, 0.5), q25: quantile(&v, 0.25), q75: quantile(&v, 0.75) }
}

/// Records grouped by sweep point, then mode.
type Groups<'a> = BTreeMap<usize, BTreeMap<Mode, Vec<&'a RunRecord>>>;

fn group(records: &[RunRecord]) -> Groups<'_> {
    let mut g: Groups = BTreeMap::new();
    for r in records {
        g.entry(r.sweep_index).or_default().entry(r.mode).or_default().push(r);
    }
    g
}

struct Axis {
    param: Option<String>,
    /// Sweep value per index, or the index itself when there is no sweep.
    x: BTreeMap<usize, f64>,
    log: bool,
}

fn axis(records: &[RunRecord]) -> Axis {
    let param = records.first().and_then(|r| r.sweep_param.clone());
    let x: BTreeMap<usize, f64> = records.iter().map(|r| (r.sweep_index, r.sweep_value.unwrap_or(r.sweep_index as f64))).collect();
    // a log axis needs positive values spanning at least a factor of four
    let (lo, hi) = x.values().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let log = param.is_some() && lo > 0.0 && hi / lo >= 4.0;
    Axis { param, x, log }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `<store>/reports/<kind>.csv` and `<kind>.svg`.
pub fn emit_report(store: &ResultStore, kind: ReportKind) -> Result<Vec<PathBuf>> {
    let records = store.runs()?;
    if records.is_empty() {
        return Err(Error::NoData(format!("{} has no runs", store.root().display())));
    }
    let dir = store.root().join("reports");
    fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    let csv_path = dir.join(format!("{}.csv", kind.as_str()));
    let svg_path = dir.join(format!("{}.svg", kind.as_str()));
    let plot = match kind {
        ReportKind::Hitting => hitting(&records, &csv_path)?,
        ReportKind::Returns => returns(&records, &csv_path)?,
        ReportKind::Speedup => speedup(&records, &csv_path)?,
    };
    fs::write(&svg_path, plot.render()).map_err(Error::io(&svg_path))?;
    Ok(vec![csv_path, svg_path])
}

/// Columns: sweep_param, sweep_value, mode, runs, median, q25, q75, censored.
fn hitting(records: &[RunRecord], path: &PathBuf) -> Result<Plot> {
    let ax = axis(records);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sweep_param", "sweep_value", "mode", "runs", "median", "q25", "q75", "censored"])?;
    let mut series: BTreeMap<Mode, Series> = BTreeMap::new();
    for (idx, modes) in group(records) {
        for (mode, runs) in modes {
            let hits: Vec<f64> = runs.iter().map(|r| r.result.hit_or_budget() as f64).collect();
            let s = summarise(&hits);
            let censored = runs.iter().filter(|r| r.result.censored).count();
            w.write_record([
                ax.param.clone().unwrap_or_default(),
                fmt_opt(runs[0].sweep_value),
                mode.to_string(),
                s.runs.to_string(),
                s.median.to_string(),
                s.q25.to_string(),
                s.q75.to_string(),
                censored.to_string(),
            ])?;
            let x = ax.x[&idx];
            let entry = series.entry(mode).or_insert_with(|| Series::new(mode.as_str()));
            entry.points.push((x, s.median));
            if s.runs > 1 {
                entry.whiskers.push((x, s.q25, s.q75));
            }
        }
    }
    w.flush().map_err(Error::io(path))?;
    Ok(Plot {
        title: "First-hit step".into(),
        x_label: ax.param.unwrap_or_else(|| "sweep point".into()),
        y_label: "median first-hit step (IQR)".into(),
        log_x: ax.log,
        series: series.into_values().collect(),
    })
}

/// Columns: sweep_param, sweep_value, mode, episode, runs, median, q25, q75.
fn returns(records: &[RunRecord], path: &PathBuf) -> Result<Plot> {
    let ax = axis(records);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sweep_param", "sweep_value", "mode", "episode", "runs", "median", "q25", "q75"])?;
    let mut series = Vec::new();
    for (idx, modes) in group(records) {
        for (mode, runs) in modes {
            let episodes = runs.iter().map(|r| r.result.return_curve.len()).min().unwrap_or(0);
            let name = match &ax.param {
                Some(p) => format!("{mode} {p}={}", ax.x[&idx]),
                None => mode.to_string(),
            };
            let mut s = Series::new(&name);
            for e in 0..episodes {
                let vals: Vec<f64> = runs.iter().map(|r| r.result.return_curve[e]).collect();
                let sm = summarise(&vals);
                w.write_record([
                    ax.param.clone().unwrap_or_default(),
                    fmt_opt(runs[0].sweep_value),
                    mode.to_string(),
                    e.to_string(),
                    sm.runs.to_string(),
                    sm.median.to_string(),
                    sm.q25.to_string(),
                    sm.q75.to_string(),
                ])?;
                s.points.push((e as f64, sm.median));
                if sm.runs > 1 {
                    s.band.push((e as f64, sm.q25, sm.q75));
                }
            }
            series.push(s);
        }
    }
    w.flush().map_err(Error::io(path))?;
    Ok(Plot {
        title: "Episode return".into(),
        x_label: "episode".into(),
        y_label: "median return".into(),
        log_x: false,
        series,
    })
}

/// Columns: sweep_param, sweep_value, generator_median, baseline_median, speedup.
fn speedup(records: &[RunRecord], path: &PathBuf) -> Result<Plot> {
    let ax = axis(records);
    let mut rows = Vec::new();
    for (idx, modes) in group(records) {
        let med = |m: Mode| modes.get(&m).map(|runs| summarise(&runs.iter().map(|r| r.result.hit_or_budget() as f64).collect::<Vec<_>>()).median);
        if let (Some(g), Some(b)) = (med(Mode::Generator), med(Mode::Baseline)) {
            rows.push((idx, g, b));
        }
    }
    if rows.is_empty() {
        return Err(Error::NoData("speedup needs runs of both modes at some sweep point".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sweep_param", "sweep_value", "generator_median", "baseline_median", "speedup"])?;
    let mut s = Series::new("baseline / generator");
    for (idx, g, b) in rows {
        let value = records.iter().find(|r| r.sweep_index == idx).and_then(|r| r.sweep_value);
        w.write_record([ax.param.clone().unwrap_or_default(), fmt_opt(value), g.to_string(), b.to_string(), (b / g).to_string()])?;
        s.points.push((ax.x[&idx], b / g));
    }
    w.flush().map_err(Error::io(path))?;
    Ok(Plot {
        title: "First-hit speedup".into(),
        x_label: ax.param.unwrap_or_else(|| "sweep point".into()),
        y_label: "baseline median / generator median".into(),
        log_x: ax.log,
        series: vec![s],
    })
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Shaded `(x, lo, hi)` band.
    pub band: Vec<(f64, f64, f64)>,
    /// Vertical `(x, lo, hi)` error bars.
    pub whiskers: Vec<(f64, f64, f64)>,
}

impl Series {
    pub fn new(name: &str) -> Self {
        Self { name: name.into(), points: Vec::new(), band: Vec::new(), whiskers: Vec::new() }
    }
}

/// Minimal line chart.
#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn render(&self) -> String {
        let tx = |x: f64| if self.log_x { x.ln() } else { x };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            xs.extend(s.points.iter().map(|p| tx(p.0)));
            ys.extend(s.points.iter().map(|p| p.1));
            for &(_, lo, hi) in s.band.iter().chain(&s.whiskers) {
                ys.extend([lo, hi]);
            }
        }
        let range = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = range(&xs);
        let (y0, y1) = range(&ys);
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let px = |x: f64| LEFT + (tx(x) - x0) / (x1 - x0) * pw;
        let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut out = String::new();
        let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#);
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&self.title));
        let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let yv = y0 + f * (y1 - y0);
            let y = py(yv);
            let _ = writeln!(out, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 5.0, y + 4.0, label(yv));
            let xt = x0 + f * (x1 - x0);
            let xv = if self.log_x { xt.exp() } else { xt };
            let x = LEFT + f * pw;
            let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 15.0, label(xv));
        }
        let axis_note = if self.log_x { " (log scale)" } else { "" };
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}{axis_note}</text>"#, LEFT + pw / 2.0, H - 10.0, escape(&self.x_label));
        let _ = writeln!(
            out,
            r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            if !s.band.is_empty() {
                let mut pts: Vec<String> = s.band.iter().map(|&(x, _, hi)| format!("{:.2},{:.2}", px(x), py(hi))).collect();
                pts.extend(s.band.iter().rev().map(|&(x, lo, _)| format!("{:.2},{:.2}", px(x), py(lo))));
                let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, pts.join(" "));
            }
            for &(x, lo, hi) in &s.whiskers {
                let _ = writeln!(out, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{color}"/>"#, px(x), py(lo), py(hi));
            }
            let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
            for &(x, y) in &s.points {
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(x), py(y));
            }
            let ly = TOP + 10.0 + 16.0 * i as f64;
            let lx = LEFT + pw + 10.0;
            let _ = writeln!(out, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 24.0, ly + 4.0, escape(&s.name));
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_quantiles() {
        let s = summarise(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((s.runs, s.median, s.q25, s.q75), (5, 3.0, 2.0, 4.0));
    }

    #[test]
    fn render_is_deterministic_and_escaped() {
        let mut s = Series::new("a<b");
        s.points = vec![(1.0, 2.0), (10.0, 1.0)];
        let p = Plot { title: "t".into(), x_label: "x".into(), y_label: "y".into(), log_x: true, series: vec![s] };
        let a = p.render();
        assert_eq!(a, p.render());
        assert!(a.contains("a&lt;b") && a.contains("(log scale)"));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
    }

    #[test]
    fn single_point_does_not_divide_by_zero() {
        let mut s = Series::new("one");
        s.points = vec![(0.0, 3.0)];
        let p = Plot { title: "t".into(), x_label: "x".into(), y_label: "y".into(), log_x: false, series: vec![s] };
        assert!(!p.render().contains("NaN"));
    }
}
