//! Aggregation behind `btpp report`: groups metrics rows by run coordinates
//! and emits count, mean, and sample standard deviation per metric, ready
//! for plotting error bars over seeds.
//!
//! Only files this tool wrote are accepted (exact header match), which is
//! what lets the parser be a plain comma split: no field we emit ever
//! contains a comma or a quote. Absent metric fields stay absent — a group
//! where nobody measured f_gap reports empty mean/std fields for it,
//! never a fabricated zero.

use std::collections::HashMap;

use crate::csv_out::HEADER;

/// Columns a group key may use: everything that identifies a run
/// coordinate rather than a measured value.
const COORDS: [&str; 7] = ["iter", "algo", "engine", "n", "B", "seed", "gamma"];
const METRICS: [&str; 5] = [
    "grad_norm_sq",
    "consensus_err",
    "dist_to_opt",
    "f_gap",
    "vectors_sent",
];

pub const DEFAULT_GROUP_BY: &str = "iter,algo,engine,n,B,gamma";

fn column(name: &str) -> usize {
    HEADER
        .split(',')
        .position(|c| c == name)
        .expect("column names come from the header")
}

/// Sort key that orders numbers numerically and everything else lexically,
/// with empty fields first; raw text breaks ties so the order is total.
#[derive(PartialEq)]
enum KeyPart {
    Empty,
    Num(f64),
    Text(String),
}

fn key_part(raw: &str) -> KeyPart {
    if raw.is_empty() {
        KeyPart::Empty
    } else if let Ok(v) = raw.parse::<f64>() {
        KeyPart::Num(v)
    } else {
        KeyPart::Text(raw.to_string())
    }
}

fn cmp_keys(a: &[String], b: &[String]) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    for (x, y) in a.iter().zip(b) {
        let rank = |p: &KeyPart| match p {
            KeyPart::Empty => 0u8,
            KeyPart::Num(_) => 1,
            KeyPart::Text(_) => 2,
        };
        let (px, py) = (key_part(x), key_part(y));
        let ord = match (&px, &py) {
            (KeyPart::Num(u), KeyPart::Num(v)) => u.total_cmp(v),
            (KeyPart::Text(u), KeyPart::Text(v)) => u.cmp(v),
            _ => rank(&px).cmp(&rank(&py)),
        }
        .then_with(|| x.cmp(y));
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Reads the given CSVs and produces the aggregated CSV text.
pub fn aggregate(paths: &[String], group_by: &str) -> Result<String, String> {
    let keys: Vec<String> = group_by
        .split(',')
        .map(|k| k.trim().to_string())
        .collect();
    for k in &keys {
        if !COORDS.contains(&k.as_str()) {
            return Err(format!(
                "--group-by column `{k}` is not a run coordinate; choose from {}",
                COORDS.join(",")
            ));
        }
    }
    if keys.is_empty() {
        return Err("--group-by needs at least one column".into());
    }
    let mut sorted = keys.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != keys.len() {
        return Err("--group-by lists a column twice".into());
    }

    let key_cols: Vec<usize> = keys.iter().map(|k| column(k)).collect();
    let metric_cols: Vec<usize> = METRICS.iter().map(|m| column(m)).collect();
    let width = HEADER.split(',').count();

    // group key -> per-metric present values, plus row count
    let mut groups: HashMap<Vec<String>, (u64, Vec<Vec<f64>>)> = HashMap::new();

    for path in paths {
        let text =
            std::fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == HEADER => {}
            Some(h) => {
                return Err(format!(
                    "{path}: header mismatch\n  expected: {HEADER}\n  found:    {h}"
                ))
            }
            None => return Err(format!("{path}: empty file")),
        }
        for (idx, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(format!(
                    "{path}:{}: expected {width} fields, found {}",
                    idx + 2,
                    fields.len()
                ));
            }
            let key: Vec<String> = key_cols.iter().map(|&c| fields[c].to_string()).collect();
            let entry = groups
                .entry(key)
                .or_insert_with(|| (0, vec![Vec::new(); METRICS.len()]));
            entry.0 += 1;
            for (slot, &c) in entry.1.iter_mut().zip(&metric_cols) {
                let raw = fields[c];
                if raw.is_empty() {
                    continue;
                }
                let v: f64 = raw.parse().map_err(|_| {
                    format!("{path}:{}: bad number `{raw}` in {}", idx + 2, HEADER.split(',').nth(c).unwrap())
                })?;
                slot.push(v);
            }
        }
    }

    let mut ordered: Vec<(Vec<String>, (u64, Vec<Vec<f64>>))> = groups.into_iter().collect();
    ordered.sort_by(|a, b| cmp_keys(&a.0, &b.0));

    let mut out = String::new();
    out.push_str(&keys.join(","));
    out.push_str(",count");
    for m in METRICS {
        out.push_str(&format!(",mean_{m},std_{m}"));
    }
    out.push('\n');
    for (key, (count, values)) in ordered {
        out.push_str(&key.join(","));
        out.push_str(&format!(",{count}"));
        for vals in &values {
            if vals.is_empty() {
                out.push_str(",,");
            } else {
                let (mean, std) = mean_and_sample_std(vals);
                out.push_str(&format!(",{mean:?},{std:?}"));
            }
        }
        out.push('\n');
    }
    Ok(out)
}
