//! Manifest, JSON and CSV writers.

use std::collections::BTreeMap;
use std::io::{self, Write};

use pathint_core::Error;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = "pathint";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

/// Rows for CSV output. Cells are JSON scalars so both writers share one
/// number formatter.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

/// What a subcommand hands back for writing.
#[derive(Debug, Default)]
pub struct Report {
    pub result: Value,
    pub table: Option<Table>,
    pub seed: Option<u64>,
    /// Run-time facts for the manifest (acceptance rates, tuned widths, warnings).
    pub run: Map<String, Value>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub config_hash: String,
    /// Arguments that reproduce this run.
    pub argv: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub run: Map<String, Value>,
}

impl Manifest {
    pub fn new(command: &str, config: BTreeMap<String, String>, output_args: Vec<String>, report: &Report) -> Self {
        let canonical = serde_json::to_string(&(command, &config)).expect("string map serializes");
        let config_hash = hex::encode(Sha256::digest(canonical.as_bytes()));
        let mut argv = vec![TOOL.to_string(), command.to_string()];
        for (k, v) in &config {
            argv.push(format!("--{k}"));
            argv.push(v.clone());
        }
        argv.extend(output_args);
        Manifest {
            schema_version: SCHEMA_VERSION,
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            config_hash,
            argv,
            seed: report.seed,
            run: report.run.clone(),
        }
    }
}

/// `None` gives shortest round-trip decimals; `Some(d)` gives `d`
/// significant digits in scientific notation.
pub fn format_number(x: f64, digits: Option<usize>) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    match digits {
        None => serde_json::Number::from_f64(x).map(|n| n.to_string()).unwrap_or_default(),
        Some(d) => format!("{:.*e}", d.saturating_sub(1), x),
    }
}

struct DigitsFormatter<'a> {
    inner: PrettyFormatter<'a>,
    digits: Option<usize>,
}

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.inner.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for DigitsFormatter<'_> {
    forward!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );

    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        match self.digits {
            Some(_) => w.write_all(format_number(value, self.digits).as_bytes()),
            None => self.inner.write_f64(w, value),
        }
    }
}

pub fn to_json(value: &impl Serialize, digits: Option<usize>) -> Result<Vec<u8>, Error> {
    let mut buf = Vec::new();
    let fmt = DigitsFormatter { inner: PrettyFormatter::new(), digits };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser).map_err(|e| Error::Io(e.to_string()))?;
    buf.push(b'\n');
    Ok(buf)
}

fn cell(v: &Value, digits: Option<usize>) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match (n.as_f64(), n.is_f64()) {
            (Some(x), true) => format_number(x, digits),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

/// Leaves of a JSON value as `(dotted.path, scalar)` rows.
pub fn flatten(value: &Value) -> Table {
    fn walk(prefix: &str, v: &Value, rows: &mut Vec<Vec<Value>>) {
        let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(m) => m.iter().for_each(|(k, v)| walk(&join(k), v, rows)),
            Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| walk(&join(&i.to_string()), v, rows)),
            scalar => rows.push(vec![Value::String(prefix.to_string()), scalar.clone()]),
        }
    }
    let mut rows = Vec::new();
    walk("", value, &mut rows);
    Table { header: vec!["key", "value"], rows }
}

pub fn to_csv(table: &Table, digits: Option<usize>) -> Result<Vec<u8>, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&table.header).map_err(io_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| cell(v, digits))).map_err(io_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}
