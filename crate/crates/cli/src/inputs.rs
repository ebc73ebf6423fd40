//! Loading input files with the flag name attached to every failure.

use std::path::{Path, PathBuf};

use prefgeom::ingest::{
    load_authorship, load_embeddings, load_votes, Authorship, EmbeddingStore, TripletSet, VoteKind, VoteTable,
};
use prefgeom::scorers::ScorerFile;
use prefgeom::{AnchorTable, Scorer, TripletData};

use crate::error::{for_flag, CliError, CliResult};
use crate::output::Run;

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

/// The value of an input flag that the command cannot do without.
pub fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Validation(format!("--{} is required (flag or config key `{key}`)", flag(key))))
}

pub fn store(run: &mut Run, key: &str, path: &Path) -> CliResult<EmbeddingStore> {
    run.input(key, path)?;
    let (store, report) = load_embeddings(path, true).map_err(|e| for_flag(&flag(key), e))?;
    if report.renormalized > 0 {
        log::warn!("--{}: renormalized {} vectors whose norm drifted from 1", flag(key), report.renormalized);
    }
    Ok(store)
}

pub fn votes(run: &mut Run, key: &str, path: &Path, kind: VoteKind) -> CliResult<VoteTable> {
    run.input(key, path)?;
    let table = load_votes(path, kind).map_err(|e| for_flag(&flag(key), e))?;
    if table.dropped_pass() > 0 {
        log::info!("--{}: dropped {} pass votes", flag(key), table.dropped_pass());
    }
    Ok(table)
}

pub fn authorship(run: &mut Run, key: &str, path: Option<&Path>) -> CliResult<Option<Authorship>> {
    let Some(path) = path else { return Ok(None) };
    run.input(key, path)?;
    load_authorship(path).map(Some).map_err(|e| for_flag(&flag(key), e))
}

pub fn triplets(run: &mut Run, key: &str, path: &Path) -> CliResult<TripletSet> {
    run.input(key, path)?;
    TripletSet::load(path).map_err(|e| for_flag(&flag(key), e))
}

/// Pooled anchors of every author, or none when anchors are looked up by id.
pub fn anchors(authorship: Option<&Authorship>, store: &EmbeddingStore) -> CliResult<AnchorTable> {
    match authorship {
        Some(a) => AnchorTable::build(&a.participants(), store).map_err(|e| for_flag("authorship", e)),
        None => Ok(AnchorTable::default()),
    }
}

pub fn resolve(set: &TripletSet, store: &EmbeddingStore, anchors: &AnchorTable, key: &str) -> CliResult<TripletData> {
    TripletData::resolve(set, store, anchors).map_err(|e| for_flag(&flag(key), e))
}

/// A scorer file, or the built-in `cosine`.
pub fn scorer(run: &mut Run, name: &str) -> CliResult<(String, Scorer)> {
    if name == "cosine" {
        return Ok(("cosine".into(), Scorer::Cosine));
    }
    let path = Path::new(name);
    let label = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CliError::Validation(format!("--scorers: cannot name scorer file `{name}`")))?
        .to_string();
    run.input(&format!("scorer.{label}"), path)
        .map_err(|_| CliError::Validation(format!("--scorers: no such file `{name}`")))?;
    let file = ScorerFile::load(path).map_err(|e| for_flag("scorers", e))?;
    Ok((label, file.scorer))
}
