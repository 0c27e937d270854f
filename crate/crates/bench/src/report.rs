use std::fmt::Write;

use crate::run::RunResult;

/// CSV and aligned text renderings of the same rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub csv: String,
    pub table: String,
}

const HEADER: [&str; 5] = ["mode", "throughput_msg_s", "latency_median_ms", "latency_p95_ms", "overhead_pct"];

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3}")).unwrap_or_default()
}

pub fn emit_report(results: &[RunResult]) -> Report {
    let rows: Vec<[String; 5]> = results
        .iter()
        .map(|r| {
            [
                r.mode.clone(),
                format!("{:.1}", r.throughput),
                cell(r.latency_median_ms),
                cell(r.latency_p95_ms),
                r.overhead_pct.map(|o| format!("{o:.2}")).unwrap_or_default(),
            ]
        })
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for row in &rows {
        w.write_record(row).expect("in-memory write");
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");

    let mut widths = HEADER.map(str::len);
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut table = String::new();
    let mut line = |cells: [&str; 5]| {
        let _ = write!(table, "{:<w$}", cells[0], w = widths[0]);
        for (c, w) in cells[1..].iter().zip(&widths[1..]) {
            let _ = write!(table, "  {:>w$}", if c.is_empty() { "-" } else { c }, w = *w);
        }
        table.push('\n');
    };
    line(HEADER);
    for row in &rows {
        line([&row[0], &row[1], &row[2], &row[3], &row[4]]);
    }
    Report { csv, table }
}
