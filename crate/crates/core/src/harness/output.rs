//! Run artifacts: regret.csv, detection.csv, detected_users.json,
//! run_meta.json and regret.svg in one directory per run.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{io_err, Error, Result};

use super::config::ExperimentConfig;
use super::run::{Diagnostics, RunResult};

pub const REGRET_CSV: &str = "regret.csv";
pub const DETECTION_CSV: &str = "detection.csv";
pub const DETECTED_JSON: &str = "detected_users.json";
pub const META_JSON: &str = "run_meta.json";
pub const REGRET_SVG: &str = "regret.svg";

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

/// `t,<label>…` followed by one row per trace round.
pub fn regret_csv(r: &RunResult) -> String {
    let mut s = String::from("t");
    for p in &r.policies {
        s.push(',');
        s.push_str(&p.label);
    }
    s.push('\n');
    if r.policies.is_empty() {
        return s;
    }
    for (k, t) in r.trace_rounds.iter().enumerate() {
        let _ = write!(s, "{t}");
        for p in &r.policies {
            let _ = write!(s, ",{}", p.trace[k]);
        }
        s.push('\n');
    }
    s
}

/// Parses [`regret_csv`] output back into `(rounds, labels, columns)`.
/// Trace rounds, policy labels, and one regret column per label.
pub type RegretTable = (Vec<u64>, Vec<String>, Vec<Vec<f64>>);

pub fn parse_regret_csv(text: &str) -> Result<RegretTable> {
    let bad = |line: usize, msg: String| Error::Parse {
        path: REGRET_CSV.into(),
        line,
        msg,
    };
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad(1, "missing header".into()))?;
    let labels: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    let mut rounds = Vec::new();
    let mut cols = vec![Vec::new(); labels.len()];
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let t = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad(i + 2, "bad round".into()))?;
        rounds.push(t);
        for col in cols.iter_mut() {
            let v = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| bad(i + 2, "bad value".into()))?;
            col.push(v);
        }
    }
    Ok((rounds, labels, cols))
}

/// `checkpoint_t,policy,detector,auc,flagged`; checkpoints whose ground
/// truth has a single class have no AUC and are left out.
pub fn detection_csv(r: &RunResult) -> String {
    let mut s = String::from("checkpoint_t,policy,detector,auc,flagged\n");
    for p in &r.policies {
        for c in &p.checkpoints {
            for (rep, a) in [(&c.occud, c.occud_auc), (&c.gcud, c.gcud_auc)] {
                if let Some(a) = a {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{}",
                        c.t,
                        p.label,
                        rep.algorithm,
                        a,
                        rep.detected.len()
                    );
                }
            }
        }
    }
    s
}

#[derive(Serialize)]
struct DetectedEntry<'a> {
    t: u64,
    policy: &'a str,
    detector: String,
    detected: &'a [usize],
    scores: Vec<f64>,
    auc: Option<f64>,
}

pub fn detected_users_json(r: &RunResult) -> Result<String> {
    let mut entries = Vec::new();
    for p in &r.policies {
        for c in &p.checkpoints {
            for (rep, a) in [(&c.occud, c.occud_auc), (&c.gcud, c.gcud_auc)] {
                entries.push(DetectedEntry {
                    t: c.t,
                    policy: &p.label,
                    detector: rep.algorithm.to_string(),
                    detected: &rep.detected,
                    scores: rep.scores(),
                    auc: a,
                });
            }
        }
    }
    Ok(serde_json::to_string_pretty(&entries)?)
}

#[derive(Serialize)]
struct PolicyMeta<'a> {
    label: &'a str,
    kind: String,
    params: &'a crate::bandits::PolicyParams,
    total_regret: f64,
    realized_budget: f64,
    final_components: Option<usize>,
    potential: Option<&'a super::run::PotentialSummary>,
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    horizon: u64,
    /// Every policy saw the same users, arm sets and noise.
    identical_draws: bool,
    config: &'a ExperimentConfig,
    gamma: Option<f64>,
    corrupted_users: &'a [usize],
    policies: Vec<PolicyMeta<'a>>,
    diagnostics: Option<&'a Diagnostics>,
    diagnostics_error: Option<String>,
}

pub fn run_meta_json(
    r: &RunResult,
    cfg: &ExperimentConfig,
    diag: &std::result::Result<Diagnostics, String>,
) -> Result<String> {
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: r.seed,
        horizon: r.horizon,
        identical_draws: true,
        config: cfg,
        gamma: r.gamma,
        corrupted_users: &r.corrupted_users,
        policies: r
            .policies
            .iter()
            .map(|p| PolicyMeta {
                label: &p.label,
                kind: p.kind.to_string(),
                params: &p.params,
                total_regret: p.total_regret,
                realized_budget: p.realized_budget,
                final_components: p.final_components.as_ref().map(Vec::len),
                potential: p.potential.as_ref(),
            })
            .collect(),
        diagnostics: diag.as_ref().ok(),
        diagnostics_error: diag.as_ref().err().cloned(),
    };
    Ok(serde_json::to_string_pretty(&meta)?)
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Cumulative-regret polylines with axis ticks and a legend.
pub fn regret_svg(r: &RunResult) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 160.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x_max = r.horizon.max(1) as f64;
    let y_max = r
        .policies
        .iter()
        .flat_map(|p| p.trace.iter().copied())
        .fold(0.0, f64::max)
        .max(1e-9);
    let sx = |t: f64| left + pw * t / x_max;
    let sy = |v: f64| top + ph * (1.0 - v / y_max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let (x, y) = (left + pw * f, top + ph * (1.0 - f));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="black"/><text x="{x:.1}" y="{}" text-anchor="middle">{}</text>"#,
            top + ph,
            top + ph + 5.0,
            top + ph + 18.0,
            tick(x_max * f)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y:.1}" x2="{left}" y2="{y:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 5.0,
            left - 8.0,
            y + 4.0,
            tick(y_max * f)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">round</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">cumulative regret</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, p) in r.policies.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = format!("{left:.1},{:.1}", sy(0.0));
        for (t, v) in r.trace_rounds.iter().zip(&p.trace) {
            let _ = write!(pts, " {:.1},{:.1}", sx(*t as f64), sy(*v));
        }
        let _ = writeln!(
            s,
            r#"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
        );
        let ly = top + 15.0 * i as f64 + 10.0;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            xml_escape(&p.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v >= 1e4 {
        format!("{:.0}k", v / 1e3)
    } else if v >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes every artifact of `r` into `dir` (created if needed).
pub fn emit_outputs(
    r: &RunResult,
    cfg: &ExperimentConfig,
    diag: &std::result::Result<Diagnostics, String>,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write(&dir.join(REGRET_CSV), &regret_csv(r))?;
    write(&dir.join(DETECTION_CSV), &detection_csv(r))?;
    write(&dir.join(DETECTED_JSON), &detected_users_json(r)?)?;
    write(&dir.join(META_JSON), &run_meta_json(r, cfg, diag)?)?;
    write(&dir.join(REGRET_SVG), &regret_svg(r))?;
    Ok(())
}
