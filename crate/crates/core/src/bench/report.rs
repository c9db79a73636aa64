use std::fmt::Write;

use serde_json::{json, Value};

use super::{CampaignStats, CorrelationReport, ScheduleSearchResult};

fn stats_value(s: &CampaignStats) -> Value {
    json!({
        "dataset": s.dataset,
        "acquisition": s.acquisition.as_str(),
        "trials": s.trials(),
        "budget": s.budget,
        "curve": s.curve,
        "n_to_max": s.n_to_max,
        "n_to_99": s.n_to_99,
        "initial_yield_norm": s.initial_yield_norm,
    })
}

/// JSON array with one report object per arm.
pub fn report_json(stats: &[&CampaignStats]) -> String {
    let v: Vec<Value> = stats.iter().map(|s| stats_value(s)).collect();
    serde_json::to_string_pretty(&v).expect("serializable") + "\n"
}

/// One row per iteration with `mean_best_<acq>` and `se_<acq>` columns per arm.
pub fn curve_csv(stats: &[&CampaignStats]) -> String {
    let mut out = String::from("n");
    for s in stats {
        let a = s.acquisition.as_str();
        write!(out, ",mean_best_{a},se_{a}").unwrap();
    }
    out.push('\n');
    let rows = stats.iter().map(|s| s.curve.len()).max().unwrap_or(0);
    for j in 0..rows {
        write!(out, "{}", j + 1).unwrap();
        for s in stats {
            match s.curve.get(j) {
                Some(p) => write!(out, ",{},{}", p.mean_best, p.se).unwrap(),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn correlation_json(r: &CorrelationReport) -> String {
    let v = json!({
        "pearson_r": r.pearson_r,
        "p_value": r.p_value,
        "n": r.n,
    });
    serde_json::to_string_pretty(&v).expect("serializable") + "\n"
}

pub fn search_json(r: &ScheduleSearchResult) -> String {
    serde_json::to_string_pretty(r).expect("serializable") + "\n"
}

pub fn search_csv(r: &ScheduleSearchResult) -> String {
    let mut out = String::from("trial,v1,v2,c1,c2,objective\n");
    for (i, t) in r.trials.iter().enumerate() {
        writeln!(out, "{i},{},{},{},{},{}", t.v1, t.v2, t.c1, t.c2, t.objective).unwrap();
    }
    out
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        let (x0, x1) = span(&mut xs.clone());
        let (y0, y1) = span(&mut ys.clone());
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let (l, r, t, b) = (PAD, W - PAD, PAD, H - PAD);
        writeln!(out, r##"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="#000"/>"##).unwrap();
        writeln!(out, r##"<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="#000"/>"##).unwrap();
        for (v, x) in [(self.x0, l), (self.x1, r)] {
            writeln!(out, r#"<text x="{x}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, b + 15.0, tick(v)).unwrap();
        }
        for (v, y) in [(self.y0, b), (self.y1, t)] {
            writeln!(out, r#"<text x="{}" y="{y}" font-size="11" text-anchor="end">{}</text>"#, l - 5.0, tick(v)).unwrap();
        }
        writeln!(out, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(xlabel)).unwrap();
        writeln!(
            out,
            r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(ylabel)
        )
        .unwrap();
    }
}

fn tick(v: f64) -> String {
    format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(out: &mut String, title: &str) {
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(out, r#"<title>{}</title>"#, escape(title)).unwrap();
    writeln!(out, r##"<rect width="{W}" height="{H}" fill="#fff"/>"##).unwrap();
}

/// Mean running-best curves with ±1 SE bands.
pub fn curves_svg(stats: &[&CampaignStats]) -> String {
    let frame = Frame::new(
        stats.iter().flat_map(|s| s.curve.iter().map(|p| p.n as f64)),
        stats.iter().flat_map(|s| s.curve.iter().flat_map(|p| [p.mean_best - p.se, p.mean_best + p.se])),
    );
    let title = stats.first().map(|s| s.dataset.as_str()).unwrap_or("");
    let mut out = String::new();
    open(&mut out, title);
    frame.axes(&mut out, "experiments", "best yield so far");
    for (k, s) in stats.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let upper = s.curve.iter().map(|p| (frame.px(p.n as f64), frame.py(p.mean_best + p.se)));
        let lower = s.curve.iter().rev().map(|p| (frame.px(p.n as f64), frame.py(p.mean_best - p.se)));
        let band: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" ")).unwrap();
        let line: Vec<String> = s
            .curve
            .iter()
            .map(|p| format!("{:.2},{:.2}", frame.px(p.n as f64), frame.py(p.mean_best)))
            .collect();
        writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" ")).unwrap();
        let ly = PAD + 16.0 * k as f64;
        writeln!(
            out,
            r#"<text x="{}" y="{ly}" font-size="12" fill="{color}" text-anchor="end">{}</text>"#,
            W - PAD,
            escape(s.acquisition.as_str())
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Utility against yield, one panel's worth of points.
pub fn scatter_svg(title: &str, r: &CorrelationReport) -> String {
    let frame = Frame::new(r.scatter.iter().map(|p| p.0), r.scatter.iter().map(|p| p.1));
    let mut out = String::new();
    open(&mut out, title);
    frame.axes(&mut out, "utility", "yield");
    for (u, y) in &r.scatter {
        writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#1f77b4" fill-opacity="0.6"/>"##,
            frame.px(*u),
            frame.py(*y)
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="end">r = {:.3}</text>"#,
        W - PAD,
        PAD,
        r.pearson_r
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}
