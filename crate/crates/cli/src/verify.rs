use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use prefgeom::hash;

use crate::config::{config_hash_of, Params};
use crate::error::{CliError, CliResult};
use crate::output::{RunRecord, RUN_LOG};

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Output directory holding run.jsonl.
    pub dir: PathBuf,
}

/// Re-hashes inputs, outputs and config snapshots recorded in the run log.
///
/// Every record's inputs must still match. An output file is compared with
/// the last record that wrote it, since later runs may overwrite it.
pub fn run(args: VerifyArgs) -> CliResult<()> {
    let log = args.dir.join(RUN_LOG);
    let text = std::fs::read_to_string(&log).map_err(|e| CliError::Validation(format!("{}: {e}", log.display())))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: RunRecord = serde_json::from_str(line)
            .map_err(|e| CliError::Validation(format!("{}:{}: {e}", log.display(), i + 1)))?;
        records.push(r);
    }
    let mut problems = Vec::new();
    let mut latest_output: BTreeMap<&str, &str> = BTreeMap::new();
    let mut latest_snapshot: BTreeMap<&str, &RunRecord> = BTreeMap::new();
    for r in &records {
        for (key, input) in &r.inputs {
            match hash::file_sha256(&input.path) {
                Ok(h) if h == input.sha256 => {}
                Ok(_) => problems.push(format!("{}: input --{key} `{}` changed", r.command, input.path.display())),
                Err(e) => problems.push(format!("{}: input --{key}: {e}", r.command)),
            }
        }
        for (name, sha) in &r.outputs {
            latest_output.insert(name, sha);
        }
        latest_snapshot.insert(&r.snapshot, r);
    }
    for (name, sha) in &latest_output {
        match hash::file_sha256(&args.dir.join(name)) {
            Ok(h) if h == *sha => {}
            Ok(_) => problems.push(format!("output {name} changed")),
            Err(e) => problems.push(format!("output {name}: {e}")),
        }
    }
    for (file, r) in &latest_snapshot {
        let path = args.dir.join(file);
        let check = || -> CliResult<bool> {
            let doc: toml::Table = std::fs::read_to_string(&path)?
                .parse()
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            let section = doc
                .get(&r.section)
                .and_then(|s| s.as_table())
                .ok_or_else(|| CliError::Validation(format!("{}: no [{}] section", path.display(), r.section)))?;
            let inputs = input_keys(&r.section)
                .ok_or_else(|| CliError::Validation(format!("{}: unknown section `{}`", path.display(), r.section)))?;
            Ok(config_hash_of(&r.section, section, inputs)? == r.config_hash)
        };
        match check() {
            Ok(true) => {}
            Ok(false) => problems.push(format!("{file}: config hash does not match the run log")),
            Err(e) => problems.push(e.to_string()),
        }
    }
    if problems.is_empty() {
        println!("verified {} runs and {} outputs in {}", records.len(), latest_output.len(), args.dir.display());
        Ok(())
    } else {
        for p in &problems {
            eprintln!("mismatch: {p}");
        }
        Err(CliError::Validation(format!("{} hash mismatches in {}", problems.len(), args.dir.display())))
    }
}

fn input_keys(section: &str) -> Option<&'static [&'static str]> {
    use crate::{analysis, data, model, synthetic};
    fn of<P: Params>() -> Option<&'static [&'static str]> {
        Some(P::INPUTS)
    }
    match section {
        "ingest" => of::<data::IngestArgs>(),
        "triplets" => of::<data::TripletsArgs>(),
        "embed" => of::<data::EmbedArgs>(),
        "eval" => of::<model::EvalArgs>(),
        "fit" => of::<model::FitArgs>(),
        "sweep" => of::<model::SweepArgs>(),
        "angles" => of::<model::AnglesArgs>(),
        "synthetic" => of::<synthetic::SyntheticArgs>(),
        "bands" => of::<analysis::BandsArgs>(),
        "stats" => of::<analysis::StatsArgs>(),
        "cluster" => of::<analysis::ClusterArgs>(),
        "likert" => of::<analysis::LikertArgs>(),
        _ => None,
    }
}
