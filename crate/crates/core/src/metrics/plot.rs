//! Self-contained SVG line and scatter charts for sweep results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::engine::Scenario;
use crate::metrics::{MetricsError, ResultRow};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Scatter,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

/// A labelled horizontal reference line.
#[derive(Debug, Clone)]
pub struct Reference {
    pub name: String,
    pub y: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub references: Vec<Reference>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Rounded tick spacing for `span` with about `target` ticks.
fn tick_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Chart::default()
        }
    }

    fn ranges(&self) -> ((f64, f64), (f64, f64)) {
        let xs = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        let ys = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .chain(self.references.iter().map(|r| r.y));
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
                (lo - pad, hi + pad)
            } else {
                let pad = (hi - lo) * 0.05;
                (lo - pad, hi + pad)
            }
        };
        (span(&mut { xs }), span(&mut { ys }))
    }

    /// Renders the chart; an empty chart still yields valid SVG with axes.
    pub fn to_svg(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.ranges();
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<g class="axes" stroke="black" fill="none"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></g>"#
        );

        let mut ticks = String::new();
        let step = tick_step(x1 - x0, 6.0);
        let mut t = (x0 / step).ceil() * step;
        while t <= x1 + 1e-9 * step {
            let px = sx(t);
            let _ = writeln!(
                ticks,
                r##"<line x1="{px:.2}" y1="{b:.2}" x2="{px:.2}" y2="{b2:.2}" stroke="black"/><text x="{px:.2}" y="{ty:.2}" text-anchor="middle">{}</text>"##,
                fmt_tick(t),
                b = TOP + ph,
                b2 = TOP + ph + 4.0,
                ty = TOP + ph + 16.0
            );
            t += step;
        }
        let step = tick_step(y1 - y0, 6.0);
        let mut t = (y0 / step).ceil() * step;
        while t <= y1 + 1e-9 * step {
            let py = sy(t);
            let _ = writeln!(
                ticks,
                r##"<line x1="{l2:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{tx:.2}" y="{ty:.2}" text-anchor="end">{}</text>"##,
                fmt_tick(t),
                l2 = LEFT - 4.0,
                tx = LEFT - 6.0,
                ty = py + 4.0
            );
            t += step;
        }
        let _ = writeln!(s, r#"<g class="ticks">{ticks}</g>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 15.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">{}</text>"#,
            escape(&self.y_label),
            y = TOP + ph / 2.0
        );

        for (i, r) in self.references.iter().enumerate() {
            let py = sy(r.y);
            let _ = writeln!(
                s,
                r##"<line class="reference" x1="{LEFT}" y1="{py:.3}" x2="{:.3}" y2="{py:.3}" stroke="black" stroke-dasharray="5,3"/>"##,
                LEFT + pw
            );
            let _ = writeln!(
                s,
                r##"<text x="{:.1}" y="{:.1}">{}</text>"##,
                LEFT + pw + 8.0,
                TOP + 14.0 * (self.series.len() + i) as f64 + 10.0,
                escape(&format!("--- {}", r.name))
            );
        }

        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<(f64, f64)> = series
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| (sx(x), sy(y)))
                .collect();
            match series.style {
                Style::Line => {
                    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline class="series" data-name="{}" fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
                        escape(&series.name),
                        coords.join(" ")
                    );
                    for (x, y) in &pts {
                        let _ = writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="2.5" fill="{color}"/>"#);
                    }
                }
                Style::Scatter => {
                    let _ = writeln!(s, r#"<g class="series" data-name="{}">"#, escape(&series.name));
                    for (x, y) in &pts {
                        let _ = writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="3.5" fill="{color}"/>"#);
                    }
                    let _ = writeln!(s, "</g>");
                }
            }
            let ly = TOP + 14.0 * i as f64 + 10.0;
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                LEFT + pw + 8.0,
                ly - 9.0,
                LEFT + pw + 22.0,
                ly,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn t_w_label(t: Option<f64>) -> String {
    match t {
        Some(t) => format!("t_W={}min", fmt_tick(t / 60.0)),
        None => "empirical".into(),
    }
}

/// Builds the figure family from result rows, keyed by file name.
pub fn charts(rows: &[ResultRow]) -> BTreeMap<&'static str, Chart> {
    let mut out = BTreeMap::new();
    let uncapped = || rows.iter().filter(|r| r.cap.is_none());
    let main = |r: &&ResultRow| r.adoption == 1.0 && r.t_w_s == Some(3600.0);

    let by = |filter: &dyn Fn(&ResultRow) -> bool, label: &dyn Fn(&ResultRow) -> String, x: &dyn Fn(&ResultRow) -> f64, y: &dyn Fn(&ResultRow) -> f64| {
        let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for r in rows.iter().filter(|r| filter(r)) {
            groups.entry(label(r)).or_default().push((x(r), y(r)));
        }
        groups
            .into_iter()
            .map(|(name, mut points)| {
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                Series {
                    name,
                    points,
                    style: Style::Line,
                }
            })
            .collect::<Vec<_>>()
    };

    let mut c = Chart::new("Parking demand vs r_max", "r_max (m)", "N_P / N_P(S1)");
    c.series = by(&|r| r.cap.is_none() && main(&r), &|r| r.scenario.to_string(), &|r| r.r_max_m, &|r| r.np_rel_s1);
    c.references.push(Reference {
        name: "S1".into(),
        y: 1.0,
    });
    out.insert("parking_vs_rmax.svg", c);

    let mut c = Chart::new("Shared fleet size vs r_max", "r_max (m)", "N_C / N_U");
    c.series = by(
        &|r| r.cap.is_none() && main(&r) && r.scenario.is_shared(),
        &|r| r.scenario.to_string(),
        &|r| r.r_max_m,
        &|r| r.nc_rel,
    );
    c.references.push(Reference {
        name: "S1/S2".into(),
        y: 1.0,
    });
    out.insert("cars_vs_rmax.svg", c);

    let mut c = Chart::new("Parking demand vs adoption rate", "adoption rate", "N_P / (2 adopters)");
    c.series = by(
        &|r| r.cap.is_none() && r.scenario.is_shared() && r.t_w_s == Some(3600.0),
        &|r| format!("{} r_max={}m", r.scenario, r.r_max_m),
        &|r| r.adoption,
        &|r| r.np_rel_s1,
    );
    out.insert("adoption.svg", c);

    let mut c = Chart::new("Extra VMT vs parking reduction", "1 - N_P / N_P(S1)", "extra VMT / base VMT");
    let scatter = |cap: bool| {
        let mut g: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.cap.is_some() == cap && r.adoption == 1.0) {
            let name = if cap { format!("{} capped", r.scenario) } else { r.scenario.to_string() };
            g.entry(name).or_default().push((1.0 - r.np_rel_s1, r.extra_vmt_rel));
        }
        g.into_iter().map(|(name, points)| Series {
            name,
            points,
            style: Style::Scatter,
        })
    };
    c.series = scatter(false).chain(scatter(true)).collect();
    out.insert("vmt_tradeoff.svg", c);

    let mut c = Chart::new("Parking demand vs commute window", "t_W (min)", "N_P");
    c.series = by(
        &|r| r.cap.is_none() && r.adoption == 1.0 && r.t_w_s.is_some() && r.scenario.is_shared(),
        &|r| format!("{} r_max={}m", r.scenario, r.r_max_m),
        &|r| r.t_w_s.unwrap_or(0.0) / 60.0,
        &|r| r.np_mean,
    );
    let mut bounds: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in uncapped().filter(|r| r.adoption == 1.0 && r.scenario.is_shared()) {
        if let Some(b) = r.bound_np_mean {
            let e = bounds.entry(format!("bound r_max={}m", r.r_max_m)).or_default();
            e.0 += b;
            e.1 += 1;
        }
    }
    c.references = bounds
        .into_iter()
        .map(|(name, (sum, n))| Reference { name, y: sum / n as f64 })
        .collect();
    let empirical: Vec<_> = uncapped().filter(|r| r.t_w_s.is_none()).collect();
    for r in empirical {
        c.references.push(Reference {
            name: format!("{} {} r_max={}m", r.scenario, t_w_label(None), r.r_max_m),
            y: r.np_mean,
        });
    }
    out.insert("tw_sensitivity.svg", c);
    out
}

/// Writes every chart under `dir`, returning the paths written.
pub fn render_plots(rows: &[ResultRow], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, MetricsError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, chart) in charts(rows) {
        let path = dir.join(name);
        fs::write(&path, chart.to_svg())?;
        written.push(path);
    }
    Ok(written)
}

/// Scenarios present in `rows`, in order.
pub fn scenarios(rows: &[ResultRow]) -> Vec<Scenario> {
    let mut s: Vec<Scenario> = rows.iter().map(|r| r.scenario).collect();
    s.sort();
    s.dedup();
    s
}
