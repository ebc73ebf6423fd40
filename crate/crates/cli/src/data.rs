use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use prefgeom::ingest::{
    build_triplets, fetch_embeddings_remote, manifest_path, parse_fractions, save_votes, split_participants,
    Participant, RemoteConfig, VoteKind, VoteTable,
};
use serde::{Deserialize, Serialize};

use crate::error::{for_flag, CliError, CliResult};
use crate::inputs::{self, required};
use crate::output::{Run, Table};
use crate::Ctx;

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(default, deny_unknown_fields)]
pub struct IngestArgs {
    /// Embeddings, one JSON record {id, vector, text?} per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Votes CSV with header participant_id,statement_id,value.
    #[arg(long)]
    pub votes: Option<PathBuf>,
    /// Vote scale: binary (agree 1, disagree 0, pass dropped) or likert (0 to 6).
    #[arg(long, default_value_t = VoteKind::Binary)]
    pub kind: VoteKind,
}
params!(IngestArgs, "ingest", ["embeddings", "votes"]);

pub fn ingest(ctx: &Ctx, args: IngestArgs) -> CliResult<()> {
    let a = ctx.resolve(&args)?;
    let mut run = Run::new("ingest", &ctx.out, &a)?;
    let store = inputs::store(&mut run, "embeddings", required(&a.embeddings, "embeddings")?)?;
    let mut rows = vec![
        ("embeddings", store.len().to_string()),
        ("dim", store.dim().to_string()),
        ("embeddings_hash", store.content_hash()),
    ];
    store.save(&run.path("embeddings.jsonl"))?;
    run.record_file("embeddings.jsonl")?;
    let manifest = manifest_path(Path::new("embeddings.jsonl"));
    run.record_file(&manifest.to_string_lossy())?;

    if let Some(path) = &a.votes {
        let votes = inputs::votes(&mut run, "votes", path, a.kind)?;
        let missing: Vec<&str> = votes
            .votes()
            .iter()
            .map(|v| v.statement.as_str())
            .filter(|s| !store.contains(s))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        if let Some(first) = missing.first() {
            return Err(CliError::Validation(format!(
                "--votes: {} statement ids have no embedding, first `{first}`",
                missing.len()
            )));
        }
        let statements: HashSet<&str> = votes.votes().iter().map(|v| v.statement.as_str()).collect();
        rows.extend([
            ("kind", a.kind.to_string()),
            ("votes", votes.len().to_string()),
            ("dropped_pass", votes.dropped_pass().to_string()),
            ("participants", votes.participants().len().to_string()),
            ("statements", statements.len().to_string()),
        ]);
        save_votes(&votes, &run.path("votes.csv"))?;
        run.record_file("votes.csv")?;
    }
    run.write_table("ingest.tsv", &Table::key_value(rows))?;
    run.finish()
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(default, deny_unknown_fields)]
pub struct TripletsArgs {
    /// Votes CSV with header participant_id,statement_id,value.
    #[arg(long)]
    pub votes: Option<PathBuf>,
    #[arg(long, default_value_t = VoteKind::Binary)]
    pub kind: VoteKind,
    /// CSV participant_id,text_id[,about_statement]. Without it every voter
    /// is anchored on the embedding stored under their own id.
    #[arg(long)]
    pub authorship: Option<PathBuf>,
    /// Train, validation and test fractions of participants.
    #[arg(long, default_value = "0.6,0.2,0.2")]
    pub split: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Minimum number of votes on statements the participant did not write.
    #[arg(long, default_value_t = 5)]
    pub min_votes: usize,
}
params!(TripletsArgs, "triplets", ["votes", "authorship"]);

pub fn triplets(ctx: &Ctx, args: TripletsArgs) -> CliResult<()> {
    let a = ctx.resolve(&args)?;
    let fractions = parse_fractions(&a.split).map_err(|e| for_flag("split", e))?;
    let mut run = Run::new("triplets", &ctx.out, &a)?;
    let votes = inputs::votes(&mut run, "votes", required(&a.votes, "votes")?, a.kind)?;
    let authorship = inputs::authorship(&mut run, "authorship", a.authorship.as_deref())?;

    // Votes on one's own statements say nothing about preferences over others.
    let own = |participant: &str, statement: &str| {
        authorship.as_ref().and_then(|au| au.author_of(statement)) == Some(participant)
    };
    let kept: Vec<_> = votes.votes().iter().filter(|v| !own(&v.participant, &v.statement)).cloned().collect();
    let own_votes = votes.len() - kept.len();
    let votes = VoteTable::new(votes.kind(), kept)?;
    let by = votes.by_participant();
    let candidates: Vec<Participant> = match &authorship {
        Some(au) => au.participants(),
        None => votes.participants().into_iter().map(Participant::self_anchored).collect(),
    };
    let eligible: Vec<Participant> =
        candidates.into_iter().filter(|p| by.get(p.id.as_str()).is_some_and(|v| v.len() >= a.min_votes)).collect();
    let ids: Vec<String> = eligible.iter().map(|p| p.id.clone()).collect();
    let split = split_participants(&ids, fractions, a.seed)?;
    let all = build_triplets(&votes, &eligible);

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in all.iter() {
        *counts.entry(t.anchor.as_str()).or_default() += 1;
    }
    let mut table = Table::new(&["participant", "split", "triplets"]);
    let mut summary = vec![
        ("participants", ids.len().to_string()),
        ("own_votes_dropped", own_votes.to_string()),
        ("triplets", all.len().to_string()),
    ];
    for (name, members) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        for m in members {
            table.push(vec![m.clone(), name.into(), counts.get(m.as_str()).copied().unwrap_or(0).to_string()]);
        }
        let keep: HashSet<&str> = members.iter().map(String::as_str).collect();
        let part = all.filter_anchors(&keep);
        let file = format!("triplets.{name}.jsonl");
        run.write_raw(&file, &part.to_jsonl())?;
        summary.push((name, part.len().to_string()));
    }
    run.write_table("split.tsv", &table)?;
    run.write_table("triplets.tsv", &Table::key_value(summary))?;
    run.finish()
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedArgs {
    /// Texts, one JSON record {id, text} per line.
    #[arg(long)]
    pub texts: Option<PathBuf>,
    /// URL accepting {model, input: [text]} and answering {data: [{index, embedding}]}.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value = "")]
    pub model: String,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    pub key_env: Option<String>,
    /// Texts per request.
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Retries of a batch after 429, 5xx or transport errors.
    #[arg(long, default_value_t = 5)]
    pub retries: u32,
    /// Concurrent requests.
    #[arg(long, default_value_t = 1)]
    pub max_in_flight: usize,
    /// First retry delay in milliseconds; doubles per retry up to 30 s.
    #[arg(long, default_value_t = 500)]
    pub backoff_ms: u64,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
}
params!(EmbedArgs, "embed", ["texts"]);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TextRecord {
    id: String,
    text: String,
}

pub fn embed(ctx: &Ctx, args: EmbedArgs) -> CliResult<()> {
    let a = ctx.resolve(&args)?;
    let endpoint = a
        .endpoint
        .clone()
        .ok_or_else(|| CliError::Validation("--endpoint is required (flag or config key `endpoint`)".into()))?;
    let mut run = Run::new("embed", &ctx.out, &a)?;
    let path = required(&a.texts, "texts")?;
    run.input("texts", path)?;
    let content = std::fs::read_to_string(path)?;
    let mut texts = Vec::new();
    for (i, line) in content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: TextRecord = serde_json::from_str(line)
            .map_err(|e| CliError::Validation(format!("--texts {}:{}: {e}", path.display(), i + 1)))?;
        texts.push((r.id, r.text));
    }
    let cfg = RemoteConfig {
        endpoint,
        model: a.model.clone(),
        api_key_env: a.key_env.clone(),
        batch_size: a.batch,
        retries: a.retries,
        initial_backoff: Duration::from_millis(a.backoff_ms),
        max_in_flight: a.max_in_flight,
        timeout: Duration::from_secs(a.timeout_secs),
        ..RemoteConfig::default()
    };
    let store = fetch_embeddings_remote(&texts, &cfg)?;
    store.save(&run.path("embeddings.jsonl"))?;
    run.record_file("embeddings.jsonl")?;
    run.record_file(&manifest_path(Path::new("embeddings.jsonl")).to_string_lossy())?;
    run.write_table(
        "embed.tsv",
        &Table::key_value(vec![
            ("texts", store.len().to_string()),
            ("dim", store.dim().to_string()),
            ("embeddings_hash", store.content_hash()),
        ]),
    )?;
    run.finish()
}
