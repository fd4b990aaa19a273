//! Report emission: JSON with sorted keys and 17 significant digits, and
//! RFC 4180 CSV tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Formats a float with 17 significant digits (round-trip exact).
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    format!("{x:.16e}")
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = "  ".repeat(indent + 1);
    let close = "  ".repeat(indent);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                out.push_str(&pad);
                write_value(out, item, indent + 1);
                if k + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&close);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            // serde_json's default map is ordered by key
            out.push_str("{\n");
            let len = map.len();
            for (k, (key, item)) in map.iter().enumerate() {
                out.push_str(&pad);
                out.push_str(&Value::String(key.clone()).to_string());
                out.push_str(": ");
                write_value(out, item, indent + 1);
                if k + 1 < len {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&close);
            out.push('}');
        }
    }
}

/// Canonical JSON text of any serialisable report; non-finite floats become
/// `null`.
pub fn to_json<T: Serialize>(report: &T) -> Result<String> {
    let value = serde_json::to_value(report).context("report is not serialisable")?;
    let mut out = String::new();
    write_value(&mut out, &value, 0);
    out.push('\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, report: &T) -> Result<PathBuf> {
    let text = to_json(report)?;
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

/// One CSV cell.
pub enum Cell {
    Float(f64),
    OptFloat(Option<f64>),
    Int(usize),
    OptBool(Option<bool>),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => render_float(*x),
            Cell::OptFloat(x) => x.map(render_float).unwrap_or_default(),
            Cell::Int(i) => i.to_string(),
            Cell::OptBool(b) => b.map(|b| b.to_string()).unwrap_or_default(),
        }
    }
}

fn render_float(x: f64) -> String {
    if x.is_finite() {
        format_float(x)
    } else {
        String::new()
    }
}

/// Writes a table with header; refuses to create a file for empty results.
pub fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<PathBuf> {
    if rows.is_empty() {
        bail!("no results to write to {name}");
    }
    let path = dir.join(name);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(&path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(format_float(0.75), "7.5000000000000000e-1");
        assert_eq!(format_float(1.0 / 3.0), "3.3333333333333331e-1");
        let x = 0.1f64 + 0.2;
        assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn keys_sorted_and_nonfinite_null() {
        let v = json!({"b": 1, "a": [0.5, null], "c": {"z": true, "y": "s"}});
        let text = to_json(&v).unwrap();
        let a = text.find("\"a\"").unwrap();
        let b = text.find("\"b\"").unwrap();
        assert!(a < b);
        assert!(text.find("\"y\"").unwrap() < text.find("\"z\"").unwrap());
        #[derive(Serialize)]
        struct R {
            x: f64,
        }
        assert!(to_json(&R { x: f64::NAN }).unwrap().contains("null"));
    }

    #[test]
    fn csv_empty_is_an_error_and_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_csv(dir.path(), "t.csv", &["a"], &[]).is_err());
        assert!(!dir.path().join("t.csv").exists());
    }

    #[test]
    fn csv_single_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            dir.path(),
            "t.csv",
            &["p", "i", "bound", "pass"],
            &[vec![Cell::Float(2.0), Cell::Int(1), Cell::OptFloat(None), Cell::OptBool(Some(true))]],
        )
        .unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "p,i,bound,pass\r\n2.0000000000000000e0,1,,true\r\n");
    }
}
