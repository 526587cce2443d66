//! Run manifests, report envelopes and output files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to reproduce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub seed: Option<u64>,
    /// Seconds since the epoch, taken from `SOURCE_DATE_EPOCH` when set.
    pub created_unix_s: Option<u64>,
    pub config: Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: Value) -> Self {
        Self {
            command: command.to_string(),
            toolkit_version: TOOLKIT_VERSION.to_string(),
            seed,
            created_unix_s: std::env::var("SOURCE_DATE_EPOCH")
                .ok()
                .and_then(|s| s.trim().parse().ok()),
            config,
        }
    }

    /// Reads the manifest embedded in a previously written report.
    pub fn from_report(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let report: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let manifest = report
            .get("manifest")
            .ok_or_else(|| CliError::Config(format!("{}: no `manifest` field", path.display())))?;
        serde_json::from_value(manifest.clone())
            .map_err(|e| CliError::Config(format!("{}: manifest: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

/// Output of one command before it is rendered.
pub struct CommandOutput {
    pub result: Value,
    pub text: String,
    /// Rows for `--format csv` on stdout (header first).
    pub csv_rows: Vec<Vec<String>>,
    /// Extra files written next to the report.
    pub files: Vec<(String, Vec<u8>)>,
}

impl CommandOutput {
    /// Output whose CSV form is the flattened result.
    pub fn from_result(result: Value, text: String) -> Self {
        let mut rows = vec![vec!["key".to_string(), "value".to_string()]];
        flatten("", &result, &mut rows);
        Self {
            result,
            text,
            csv_rows: rows,
            files: Vec::new(),
        }
    }
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<Vec<String>>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&join(k), v, rows)),
        Value::Array(a) => a
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&join(&i.to_string()), v, rows)),
        Value::String(s) => rows.push(vec![prefix.to_string(), s.clone()]),
        other => rows.push(vec![prefix.to_string(), other.to_string()]),
    }
}

pub fn envelope(manifest: &RunManifest, result: &Value) -> Value {
    serde_json::json!({ "manifest": manifest, "result": result })
}

pub fn to_json_bytes(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("JSON values always serialize");
    out.push(b'\n');
    out
}

pub fn csv_bytes(rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp: PathBuf = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)
}

/// Writes `<command>.json` and any extra files into `dir`.
pub fn write_outputs(
    dir: &Path,
    manifest: &RunManifest,
    output: &CommandOutput,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let report = dir.join(format!("{}.json", manifest.command));
    write_atomic(&report, &to_json_bytes(&envelope(manifest, &output.result)))?;
    written.push(report);
    for (name, bytes) in &output.files {
        let p = dir.join(name);
        write_atomic(&p, bytes)?;
        written.push(p);
    }
    Ok(written)
}

pub fn render_stdout(
    format: Format,
    manifest: &RunManifest,
    output: &CommandOutput,
) -> Result<Vec<u8>, CliError> {
    Ok(match format {
        Format::Json => to_json_bytes(&envelope(manifest, &output.result)),
        Format::Csv => csv_bytes(&output.csv_rows)?,
        Format::Text => output.text.clone().into_bytes(),
    })
}
