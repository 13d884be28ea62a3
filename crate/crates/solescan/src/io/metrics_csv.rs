//! Metrics CSV writer: header row plus one row per entry, fixed column
//! order, '.' decimal separator, 6 significant digits.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct MetricsRow {
    pub label: String,
    pub cd: f64,
    pub hd: f64,
    /// Extra columns; every row must carry the same keys in the same order.
    pub extras: Vec<(String, f64)>,
}

impl MetricsRow {
    pub fn new(label: impl Into<String>, cd: f64, hd: f64) -> Self {
        MetricsRow {
            label: label.into(),
            cd,
            hd,
            extras: Vec::new(),
        }
    }

    pub fn with_extra(mut self, key: impl Into<String>, value: f64) -> Self {
        self.extras.push((key.into(), value));
        self
    }
}

/// 6 significant digits, '.' decimal separator, locale-independent.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0.00000".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    // Keep plain decimal notation in a readable range, else exponent form.
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.5e}")
    }
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let extras: Vec<String> = rows
        .first()
        .map(|r| r.extras.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    out.push_str("label,cd,hd");
    for k in &extras {
        out.push(',');
        out.push_str(k);
    }
    out.push('\n');
    for row in rows {
        let keys: Vec<&String> = row.extras.iter().map(|(k, _)| k).collect();
        if keys.len() != extras.len() || keys.iter().zip(extras.iter()).any(|(a, b)| **a != *b) {
            return Err(Error::InvalidInput(format!(
                "row '{}' extra columns do not match the first row",
                row.label
            )));
        }
        out.push_str(&row.label);
        out.push(',');
        out.push_str(&format_sig6(row.cd));
        out.push(',');
        out.push_str(&format_sig6(row.hd));
        for (_, v) in &row.extras {
            out.push(',');
            out.push_str(&format_sig6(*v));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parse a metrics CSV back into rows (used by tests and the sweep plot).
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<MetricsRow>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        location: "line 1".into(),
        message: "empty file".into(),
    })?;
    let cols: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
    if cols.len() < 3 || cols[0] != "label" || cols[1] != "cd" || cols[2] != "hd" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            location: "line 1".into(),
            message: format!("unexpected header '{header}'"),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != cols.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                location: format!("line {}", i + 1),
                message: "column count mismatch".into(),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                location: format!("line {}", i + 1),
                message: e.to_string(),
            })
        };
        let mut extras = Vec::new();
        for (k, v) in cols[3..].iter().zip(&parts[3..]) {
            extras.push((k.clone(), parse(v)?));
        }
        rows.push(MetricsRow {
            label: parts[0].to_string(),
            cd: parse(parts[1])?,
            hd: parse(parts[2])?,
            extras,
        });
    }
    Ok((cols, rows))
}
