//! Output files of a run: provenance headers, deterministic number
//! formatting, the resolved-config snapshot and the run log.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{self, Params};
use crate::error::{CliError, CliResult};
use prefgeom::hash;

pub const FORMAT_VERSION: u32 = 1;
pub const RUN_LOG: &str = "run.jsonl";

/// `x` with 12 significant digits, without trailing zeros.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), num)
}

/// A tab-separated table.
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    /// Two-column `key`/`value` table.
    pub fn key_value(pairs: Vec<(&str, String)>) -> Self {
        let mut t = Table::new(&["key", "value"]);
        for (k, v) in pairs {
            t.push(vec![k.to_string(), v]);
        }
        t
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Tabs and line breaks inside a cell would corrupt the table.
fn cell(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub format_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    /// Snapshot file name inside the output directory.
    pub snapshot: String,
    pub section: String,
    pub inputs: BTreeMap<String, InputRecord>,
    /// Output file name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

pub struct Run {
    out: PathBuf,
    record: RunRecord,
    snapshot_text: String,
}

impl Run {
    pub fn new<P: Params>(command: &str, out: &Path, params: &P) -> CliResult<Self> {
        fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("--out {}: {e}", out.display())))?;
        let slug = command.replace(' ', "-");
        Ok(Run {
            out: out.to_path_buf(),
            snapshot_text: config::snapshot(command, params, FORMAT_VERSION)?,
            record: RunRecord {
                command: command.to_string(),
                format_version: FORMAT_VERSION,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash: config::config_hash(params)?,
                snapshot: format!("{slug}.resolved.toml"),
                section: P::SECTION.to_string(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        })
    }

    /// Records an input file, which must exist, under the flag it came from.
    pub fn input(&mut self, flag: &str, path: &Path) -> CliResult<()> {
        if !path.is_file() {
            return Err(CliError::Validation(format!(
                "--{}: no such file `{}`",
                flag.replace('_', "-"),
                path.display()
            )));
        }
        let sha256 = hash::file_sha256(path)?;
        self.record.inputs.insert(flag.to_string(), InputRecord { path: path.to_path_buf(), sha256 });
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn header(&self) -> String {
        let mut h = format!(
            "# prefgeom {}\n# format_version={}\n# config_hash={}\n",
            self.record.command, FORMAT_VERSION, self.record.config_hash
        );
        for (k, v) in &self.record.inputs {
            h.push_str(&format!("# input {k}={}\n", v.sha256));
        }
        h
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        self.record.outputs.insert(name.to_string(), hash::sha256_hex(bytes));
        Ok(())
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> CliResult<()> {
        let mut s = self.header();
        s.push_str(&table.columns.join("\t"));
        s.push('\n');
        for row in &table.rows {
            let cells: Vec<String> = row.iter().map(|c| cell(c)).collect();
            s.push_str(&cells.join("\t"));
            s.push('\n');
        }
        self.write_bytes(name, s.as_bytes())
    }

    /// JSON document with the provenance fields next to `result`.
    pub fn write_json<T: Serialize>(&mut self, name: &str, result: &T) -> CliResult<()> {
        let inputs: BTreeMap<&String, &String> = self.record.inputs.iter().map(|(k, v)| (k, &v.sha256)).collect();
        let doc = serde_json::json!({
            "format_version": FORMAT_VERSION,
            "command": self.record.command,
            "config_hash": self.record.config_hash,
            "inputs": inputs,
            "result": result,
        });
        let mut bytes = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Runtime(e.to_string()))?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// A file in its own format; provenance lives in the run log.
    pub fn write_raw(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        self.write_bytes(name, bytes)
    }

    /// Records a file written by library code.
    pub fn record_file(&mut self, name: &str) -> CliResult<()> {
        let sha = hash::file_sha256(&self.path(name))?;
        self.record.outputs.insert(name.to_string(), sha);
        Ok(())
    }

    /// Writes the snapshot and appends the run record.
    pub fn finish(self) -> CliResult<()> {
        fs::write(self.path(&self.record.snapshot), &self.snapshot_text)?;
        let mut line = serde_json::to_string(&self.record).map_err(|e| CliError::Runtime(e.to_string()))?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(RUN_LOG))?;
        f.write_all(line.as_bytes())?;
        for name in self.record.outputs.keys() {
            println!("wrote {}", self.out.join(name).display());
        }
        Ok(())
    }
}
