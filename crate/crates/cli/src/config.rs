//! Parameter resolution: built-in defaults, then the matching section of a
//! TOML config file, then flags given on the command line.

use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;
use prefgeom::hash;

/// Sections a config file may contain. `run` holds the metadata of a
/// resolved snapshot so that snapshots can be fed back as configs.
pub const SECTIONS: &[&str] = &[
    "run",
    "ingest",
    "triplets",
    "eval",
    "fit",
    "sweep",
    "synthetic",
    "bands",
    "stats",
    "cluster",
    "likert",
    "angles",
    "embed",
];

/// A command's parameter set.
pub trait Params: clap::Args + Serialize + DeserializeOwned + Default {
    /// Section of the config file holding these parameters.
    const SECTION: &'static str;
    /// Keys naming input files. Their contents are hashed separately, so the
    /// paths stay out of the config hash.
    const INPUTS: &'static [&'static str];
}

pub fn read_config(path: &Path) -> Result<toml::Table, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))?;
    let table: toml::Table =
        text.parse().map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))?;
    for (key, value) in &table {
        if !SECTIONS.contains(&key.as_str()) {
            return Err(CliError::Validation(format!("--config: unknown section or key `{key}`")));
        }
        if !value.is_table() {
            return Err(CliError::Validation(format!("--config: `{key}` must be a section")));
        }
    }
    Ok(table)
}

fn to_table<T: Serialize>(value: &T) -> Result<toml::Table, CliError> {
    toml::Table::try_from(value)
        .map_err(|e| CliError::Validation(format!("parameters do not fit the config format: {e}")))
}

/// Merges defaults, the config section and explicit flags, rejecting unknown keys.
pub fn resolve<P: Params>(parsed: &P, matches: &ArgMatches, config: Option<&toml::Table>) -> Result<P, CliError> {
    let mut merged = to_table(&P::default())?;
    if let Some(section) = config.and_then(|c| c.get(P::SECTION)).and_then(|s| s.as_table()) {
        for (k, v) in section {
            merged.insert(k.clone(), v.clone());
        }
    }
    for (k, v) in to_table(parsed)? {
        if matches.value_source(&k) == Some(ValueSource::CommandLine) {
            merged.insert(k, v);
        }
    }
    toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Validation(format!("[{}] {}", P::SECTION, e.message())))
}

/// Hash of the resolved parameters without the input paths, keyed by the
/// section name so that commands with equal parameters still differ.
pub fn config_hash_of(name: &str, section: &toml::Table, inputs: &[&str]) -> Result<String, CliError> {
    let mut t = section.clone();
    for k in inputs {
        t.remove(*k);
    }
    let json = serde_json::json!({ name: t });
    hash::json_sha256(&json).map_err(CliError::from)
}

pub fn config_hash<P: Params>(params: &P) -> Result<String, CliError> {
    config_hash_of(P::SECTION, &to_table(params)?, P::INPUTS)
}

/// The snapshot written next to the outputs of every run.
pub fn snapshot<P: Params>(command: &str, params: &P, format_version: u32) -> Result<String, CliError> {
    let mut run = toml::Table::new();
    run.insert("command".into(), command.into());
    run.insert("format_version".into(), i64::from(format_version).into());
    run.insert("config_hash".into(), config_hash(params)?.into());
    let mut doc = toml::Table::new();
    doc.insert("run".into(), run.into());
    doc.insert(P::SECTION.into(), to_table(params)?.into());
    let body = toml::to_string(&doc).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(format!("# Resolved parameters of `prefgeom {command}`; usable as --config.\n{body}"))
}
