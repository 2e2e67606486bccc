//! Output files: CSV with `#` metadata lines, or a single JSON document.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Provenance written at the top of every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config: Value,
}

impl Metadata {
    pub fn new(command: &'static str, seed: u64, config: Value) -> Self {
        Self {
            tool: "coupled-hmc",
            version: coupled_hmc::VERSION,
            command,
            seed,
            config,
        }
    }
}

/// A table with a fixed header.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let obj = self
                        .header
                        .iter()
                        .zip(r)
                        .map(|(h, v)| (h.to_string(), cell_json(v)))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

fn cell_json(v: &str) -> Value {
    if let Ok(i) = v.parse::<i64>() {
        return Value::from(i);
    }
    if let Ok(b) = v.parse::<bool>() {
        return Value::from(b);
    }
    match v.parse::<f64>() {
        Ok(f) if f.is_finite() => Value::from(f),
        _ => Value::from(v),
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

/// Writes `<stem>.csv` with metadata comment lines.
pub fn write_csv(dir: &Path, stem: &str, meta: &Metadata, table: &Table) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.csv"));
    let mut buf: Vec<u8> = Vec::new();
    writeln!(buf, "# tool: {} {}", meta.tool, meta.version)?;
    writeln!(buf, "# command: {}", meta.command)?;
    writeln!(buf, "# seed: {}", meta.seed)?;
    writeln!(buf, "# config: {}", serde_json::to_string(&meta.config)?)?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Writes `<stem>.json` holding the metadata and named sections.
pub fn write_json(dir: &Path, stem: &str, meta: &Metadata, sections: Vec<(&str, Value)>) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.json"));
    let mut doc = serde_json::Map::new();
    doc.insert("metadata".into(), serde_json::to_value(meta)?);
    for (name, value) in sections {
        doc.insert(name.to_string(), value);
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Writes tables as CSV files or as one JSON document named after the first.
pub fn write_tables(
    dir: &Path,
    json: bool,
    meta: &Metadata,
    tables: &[(&str, &Table)],
    extra: Vec<(&str, Value)>,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    if json {
        let mut sections: Vec<(&str, Value)> = tables.iter().map(|(n, t)| (*n, t.to_json())).collect();
        sections.extend(extra);
        Ok(vec![write_json(dir, tables[0].0, meta, sections)?])
    } else {
        tables.iter().map(|(name, t)| write_csv(dir, name, meta, t)).collect()
    }
}

/// Shortest round-trip representation of a float.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}
