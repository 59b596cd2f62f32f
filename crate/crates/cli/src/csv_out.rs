//! Metrics CSV with a fixed column order.
//!
//! Floats are printed with Rust's shortest round-trip formatting, so a file
//! parses back to exactly the values that were computed and identical runs
//! produce identical bytes. Metrics a run doesn't have (f_gap when the
//! optimum is unknown, B for methods without a tree) are empty fields, not
//! zeros.

use std::io::{self, Write};

use btpp_core::MetricsRecord;

pub const HEADER: &str =
    "iter,algo,engine,n,B,seed,gamma,grad_norm_sq,consensus_err,dist_to_opt,f_gap,vectors_sent";

pub fn format_record(r: &MetricsRecord) -> String {
    let branch = r.branch.map(|b| b.to_string()).unwrap_or_default();
    let dist = r.dist_to_opt.map(|v| format!("{v:?}")).unwrap_or_default();
    let gap = r.f_gap.map(|v| format!("{v:?}")).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{:?},{:?},{:?},{},{},{}",
        r.iter,
        r.algo,
        r.engine,
        r.agents,
        branch,
        r.seed,
        r.gamma,
        r.grad_norm_sq,
        r.consensus_err,
        dist,
        gap,
        r.vectors_sent
    )
}

/// Writes header plus one line per record to `path`, or stdout without one.
pub fn write_records(records: &[MetricsRecord], path: Option<&str>) -> io::Result<()> {
    let mut lines = String::with_capacity(64 * (records.len() + 1));
    lines.push_str(HEADER);
    lines.push('\n');
    for r in records {
        lines.push_str(&format_record(r));
        lines.push('\n');
    }
    write_text(&lines, path)
}

pub fn write_text(text: &str, path: Option<&str>) -> io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}
