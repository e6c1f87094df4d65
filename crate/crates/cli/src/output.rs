use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use multiplicity::Error;
use serde::Serialize;
use serde_json::{json, Map, Value};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_BUDGET: u8 = 4;

/// Raised when `--certify` finds a disagreement with an oracle.
#[derive(Debug)]
pub struct CertifyError(pub String);

impl std::fmt::Display for CertifyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "certification failed: {}", self.0)
    }
}

impl std::error::Error for CertifyError {}

pub fn report_error(kind: &str, message: &str) {
    let v = json!({ "error": kind, "message": message });
    eprintln!("{v}");
}

pub fn classify(e: &anyhow::Error) -> (&'static str, u8) {
    if e.downcast_ref::<CertifyError>().is_some() {
        return ("certification", EXIT_FAILURE);
    }
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) => match root(err) {
            Error::Config(_) | Error::InvalidKappa(_) | Error::KappaOutOfRange { .. } | Error::Pattern { .. } => {
                ("usage", EXIT_USAGE)
            }
            _ => ("data", EXIT_DATA),
        },
        None => ("io", EXIT_DATA),
    }
}

fn root(e: &Error) -> &Error {
    match e {
        Error::Phase { source, .. } => root(source),
        other => other,
    }
}

/// Replay information embedded in every output.
#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub params: Map<String, Value>,
}

impl Metadata {
    pub fn new(command: &'static str) -> Self {
        Metadata {
            tool: "multiplicity",
            version: env!("CARGO_PKG_VERSION"),
            command,
            params: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.params
            .insert(key.to_string(), serde_json::to_value(value).expect("serializable"));
        self
    }

    /// `# key: value` lines for CSV outputs.
    pub fn csv_header(&self) -> String {
        let mut s = format!("# tool: {} {}\n# command: {}\n", self.tool, self.version, self.command);
        for (k, v) in &self.params {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        s
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// CSV with a metadata comment block; `body` writes the table itself.
pub fn write_csv_with<F>(path: &Path, meta: &Metadata, body: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> multiplicity::Result<()>,
{
    let mut buf = meta.csv_header().into_bytes();
    body(&mut buf)?;
    let mut w = create(path)?;
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
