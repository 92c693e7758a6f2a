//! Reading inputs and writing artifacts. Every artifact carries the resolved
//! run configuration: JSON files in a `run` field, CSV files in a
//! `<name>.meta.json` sidecar.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use xmold_core::doe::{parse_factors, read_csv, table3_factors};
use xmold_core::{Dataset, FactorSpec};

use crate::error::{CliError, CliResult};

pub const TOOL: &str = "xmold";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Resolved configuration echoed into artifacts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Value,
}

impl RunConfig {
    pub fn new(command: &str, args: &impl Serialize) -> CliResult<Self> {
        Ok(Self {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            args: serde_json::to_value(args)?,
        })
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

/// Where relative paths resolve. The CLI uses the working directory;
/// `reproduce` uses its output directory so echoed paths stay relative.
#[derive(Debug, Clone, Default)]
pub struct Ctx {
    pub base: Option<PathBuf>,
}

impl Ctx {
    pub fn under(base: impl Into<PathBuf>) -> Self {
        Self {
            base: Some(base.into()),
        }
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        match &self.base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn read_string(&self, p: &Path) -> CliResult<String> {
        let full = self.path(p);
        fs::read_to_string(&full).map_err(|e| CliError::io(&full, e))
    }

    pub fn factors(&self, p: Option<&Path>) -> CliResult<Vec<FactorSpec>> {
        match p {
            None => Ok(table3_factors()),
            Some(p) => parse_factors(&self.read_string(p)?).map_err(|e| CliError::in_file(p, e)),
        }
    }

    pub fn dataset(&self, p: &Path, factors: &[FactorSpec]) -> CliResult<Dataset> {
        let full = self.path(p);
        let file = fs::File::open(&full).map_err(|e| CliError::io(&full, e))?;
        read_csv(std::io::BufReader::new(file), factors).map_err(|e| CliError::in_file(p, e))
    }

    fn create(&self, p: &Path) -> CliResult<BufWriter<fs::File>> {
        let full = self.path(p);
        if let Some(dir) = full.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let file = fs::File::create(&full).map_err(|e| CliError::io(&full, e))?;
        Ok(BufWriter::new(file))
    }

    /// Write pretty JSON with a trailing newline.
    pub fn write_json(&self, p: &Path, value: &impl Serialize) -> CliResult<()> {
        let mut w = self.create(p)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n").map_err(|e| CliError::io(p, e))?;
        w.flush().map_err(|e| CliError::io(p, e))
    }

    /// Write JSON after setting its top-level `run` field.
    pub fn write_artifact(&self, p: &Path, value: &impl Serialize, run: &RunConfig) -> CliResult<()> {
        let mut v = serde_json::to_value(value)?;
        match &mut v {
            Value::Object(map) => {
                map.insert("run".into(), run.to_value());
            }
            _ => unreachable!("artifacts are JSON objects"),
        }
        self.write_json(p, &v)
    }

    /// Write a CSV through `body`, plus its metadata sidecar.
    pub fn write_csv<F>(&self, p: &Path, run: &RunConfig, body: F) -> CliResult<()>
    where
        F: FnOnce(&mut dyn Write) -> CliResult<()>,
    {
        let mut w = self.create(p)?;
        body(&mut w)?;
        w.flush().map_err(|e| CliError::io(p, e))?;
        self.write_json(&meta_path(p), &serde_json::json!({ "file": file_name(p), "run": run }))
    }
}

pub fn meta_path(p: &Path) -> PathBuf {
    let mut name = p.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}
