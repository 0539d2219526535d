use std::fs::File;
use std::io::{self, Write};

use clap::ValueEnum;
use serde_json::{json, Value};

use crate::commands::Report;
use crate::{Common, Failure};

pub const REPORT_SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

fn envelope(r: &Report) -> Value {
    json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": r.command,
        "ok": r.ok,
        "result": r.result,
    })
}

/// `path,value` rows of a JSON document; array elements use their index.
fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, x)| flatten(&key(k), x, rows)),
        Value::Array(xs) => xs.iter().enumerate().for_each(|(i, x)| flatten(&key(&i.to_string()), x, rows)),
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        Value::Null => rows.push((prefix.to_string(), String::new())),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

fn render(r: &Report, format: Format) -> Result<Vec<u8>, Failure> {
    let io_err = |e: csv::Error| Failure::user("io", e.to_string());
    Ok(match format {
        Format::Text => {
            let mut s = r.text.clone();
            s.push('\n');
            s.into_bytes()
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&envelope(r)).expect("report document");
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => match &r.table {
            Some(t) => t.clone(),
            None => {
                let mut rows = vec![("command".to_string(), r.command.to_string()), ("ok".to_string(), r.ok.to_string())];
                flatten("", &r.result, &mut rows);
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["key", "value"]).map_err(io_err)?;
                for (k, v) in rows {
                    w.write_record([k, v]).map_err(io_err)?;
                }
                w.into_inner().map_err(|e| Failure::user("io", e.to_string()))?
            }
        },
    })
}

fn write_out(bytes: &[u8], common: &Common) -> Result<(), Failure> {
    let io = |e: io::Error| Failure::user("io", e.to_string());
    match &common.output {
        Some(path) => File::create(path)
            .and_then(|mut f| f.write_all(bytes))
            .map_err(|e| Failure::user("io", format!("{}: {e}", path.display()))),
        None => {
            let mut out = io::stdout().lock();
            match out.write_all(bytes).and_then(|_| out.flush()) {
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
                r => r.map_err(io),
            }
        }
    }
}

pub fn emit(r: &Report, common: &Common) -> Result<(), Failure> {
    write_out(&render(r, common.format)?, common)?;
    if !r.ok {
        eprintln!("minmax-bounds {}: failed", r.command);
    }
    Ok(())
}

/// One diagnostic line on stderr; under `--format json` also an error
/// document on stdout.
pub fn emit_error(command: &str, f: &Failure, common: &Common) {
    eprintln!("minmax-bounds {command}: error [{}]: {}", f.kind, f.message);
    if common.format == Format::Json {
        let class = match f.class {
            minmax_bounds::ErrorClass::User => "user",
            minmax_bounds::ErrorClass::Numerical => "numerical",
        };
        let doc = json!({
            "schema_version": REPORT_SCHEMA_VERSION,
            "command": command,
            "ok": false,
            "error": { "class": class, "kind": f.kind, "message": f.message },
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("error document"));
    }
}
