use anyhow::{bail, Context, Result};
use fracwave::exponents::format_sig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

pub const SCHEMA: u32 = 1;
pub const HEADER: [&str; 8] = ["kind", "d", "alpha", "s_or_q", "scale", "value", "aux1", "aux2"];

/// One line of the shared CSV schema. Numbers are pre-rendered so that every
/// writer uses the same 12-digit format.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub kind: String,
    pub d: String,
    pub alpha: String,
    pub s_or_q: String,
    pub scale: String,
    pub value: String,
    pub aux1: String,
    pub aux2: String,
}

pub fn num(v: f64) -> String {
    format_sig(v, 12)
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn to_csv(rows: &[Row]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Reads a CSV in the shared schema; errors carry the offending line.
pub fn read_csv(path: &Path) -> Result<Vec<Row>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim().is_empty() {
        bail!("{} is empty", path.display());
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        bail!("{}: line 1: expected header {}", path.display(), HEADER.join(","));
    }
    let mut rows = Vec::new();
    for (k, rec) in reader.deserialize::<Row>().enumerate() {
        let row = rec.with_context(|| format!("{}: line {}", path.display(), k + 2))?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{} has a header but no rows", path.display());
    }
    Ok(rows)
}

/// What a command produced; `pass` is `Some` for commands with a verdict.
pub struct Artifacts {
    pub command: &'static str,
    pub csv: Option<String>,
    pub json: Option<Value>,
    pub pass: Option<bool>,
}

/// Wraps a payload with the schema version, command name, crate version and config echo.
pub fn envelope(command: &str, config: Value, payload: Value) -> Value {
    let mut out = serde_json::json!({
        "schema": SCHEMA,
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    if let (Value::Object(o), Value::Object(p)) = (&mut out, payload) {
        o.extend(p);
    }
    out
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialise");
    s.push('\n');
    s
}
