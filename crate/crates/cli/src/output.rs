use std::io::Write;

use serde_json::Value;
use sphere_energy::manifest::RunManifest;

use crate::{Cli, Format};

/// Shortest text that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
}

/// `key,value` rows of every scalar leaf, keys joined with dots.
pub fn flatten(value: &Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(map) => map.iter().for_each(|(k, v)| walk(&join(k), v, out)),
            Value::Array(items) => items.iter().enumerate().for_each(|(i, v)| walk(&join(&i.to_string()), v, out)),
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            Value::Null => out.push((prefix.to_string(), String::new())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

pub fn csv_string(header: &[String], rows: &[Vec<String>]) -> Result<String, String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| e.to_string())?;
    for r in rows {
        w.write_record(r).map_err(|e| e.to_string())?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    String::from_utf8(bytes).map_err(|e| e.to_string())
}

pub fn emit(cli: &Cli, manifest: &RunManifest, table: Option<(Vec<String>, Vec<Vec<String>>)>) -> Result<(), String> {
    let json = manifest.to_json_pretty();
    if let Some(path) = &cli.out {
        std::fs::write(path, format!("{json}\n")).map_err(|e| format!("writing {}: {e}", path.display()))?;
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.format {
        Format::Json => writeln!(out, "{json}").map_err(|e| e.to_string()),
        Format::Csv => {
            let (header, rows) = table.unwrap_or_else(|| {
                let rows = flatten(&manifest.outputs).into_iter().map(|(k, v)| vec![k, v]).collect();
                (vec!["key".into(), "value".into()], rows)
            });
            write!(out, "{}", csv_string(&header, &rows)?).map_err(|e| e.to_string())?;
            if cli.out.is_none() {
                eprintln!("{}", serde_json::to_string(manifest).map_err(|e| e.to_string())?);
            }
            Ok(())
        }
    }
}
