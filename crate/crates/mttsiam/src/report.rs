//! Metric report files.
//!
//! `report.txt` is a flat `key = value` list: overall `frames`,
//! `success_auc` and `precision_at_20`, the same three keys per sequence under
//! `sequence.<name>.`, then the `sequences` count. `success.csv` has a
//! `threshold,overall,<name>...` header and one row per IoU threshold;
//! `precision.csv` is the same over center-error thresholds in pixels.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use mttsiam_core::metrics::{precision_threshold, success_threshold, MetricReport};

pub const REPORT_FILE: &str = "report.txt";
pub const SUCCESS_FILE: &str = "success.csv";
pub const PRECISION_FILE: &str = "precision.csv";

/// Overall report plus the per-sequence breakdown it was averaged from.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall: MetricReport,
    pub sequences: Vec<(String, MetricReport)>,
}

pub fn report_text(r: &EvalReport) -> String {
    let mut o = String::new();
    let mut block = |prefix: &str, m: &MetricReport| {
        let _ = writeln!(o, "{prefix}frames = {}", m.frames);
        let _ = writeln!(o, "{prefix}success_auc = {}", m.success_auc);
        let _ = writeln!(o, "{prefix}precision_at_20 = {}", m.precision_at_20);
    };
    block("", &r.overall);
    for (name, m) in &r.sequences {
        block(&format!("sequence.{name}."), m);
    }
    let _ = writeln!(o, "sequences = {}", r.sequences.len());
    o
}

fn curve_csv(r: &EvalReport, threshold: fn(usize) -> f64, pick: fn(&MetricReport) -> &Vec<f64>) -> String {
    let mut o = String::from("threshold,overall");
    for (name, _) in &r.sequences {
        o.push(',');
        o.push_str(name);
    }
    o.push('\n');
    for i in 0..pick(&r.overall).len() {
        let _ = write!(o, "{},{}", threshold(i), pick(&r.overall)[i]);
        for (_, m) in &r.sequences {
            let _ = write!(o, ",{}", pick(m)[i]);
        }
        o.push('\n');
    }
    o
}

pub fn success_csv(r: &EvalReport) -> String {
    curve_csv(r, success_threshold, |m| &m.success_curve)
}

pub fn precision_csv(r: &EvalReport) -> String {
    curve_csv(r, precision_threshold, |m| &m.precision_curve)
}

/// Writes the three report files into `dir`.
pub fn write_report(dir: &Path, r: &EvalReport) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(REPORT_FILE), report_text(r))?;
    std::fs::write(dir.join(SUCCESS_FILE), success_csv(r))?;
    std::fs::write(dir.join(PRECISION_FILE), precision_csv(r))
}

/// `key = value` pairs of a report file, in order.
pub fn parse_report(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}
