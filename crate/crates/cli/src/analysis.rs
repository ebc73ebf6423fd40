use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use prefgeom::diagnostics::cluster::{DEFAULT_KMEANS_SEEDS, DEFAULT_MAX_ITER, DEFAULT_PERMUTATIONS};
use prefgeom::diagnostics::{
    cluster_coherence, kmeans, likert_correlation, paired_model_comparison, proximity_bands, Exclusion, DEFAULT_BANDS,
};
use prefgeom::ingest::{pool_anchor, VoteKind};
use prefgeom::stats::{mcnemar_exact, PMethod};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{for_flag, CliError, CliResult};
use crate::inputs::{self, required};
use crate::output::{num, opt, Run, Table};
use crate::Ctx;

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(default, deny_unknown_fields)]
pub struct BandsArgs {
    /// Embeddings, one JSON record {id, vector, text?} per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Binary votes CSV with header participant_id,statement_id,value.
    #[arg(long)]
    pub votes: Option<PathBuf>,
    /// CSV participant_id,text_id[,about_statement] for pooled anchors.
    #[arg(long)]
    pub authorship: Option<PathBuf>,
    /// Scorer file written by `fit`, or `cosine`.
    #[arg(long, default_value = "cosine")]
    pub scorer: String,
    /// Number of similarity quantile bands.
    #[arg(long, default_value_t = DEFAULT_BANDS)]
    pub bands: usize,
}
params!(BandsArgs, "bands", ["embeddings", "votes", "authorship", "scorer"]);

pub fn bands(ctx: &Ctx, args: BandsArgs) -> CliResult<()> {
    let a = ctx.resolve(&args)?;
    let mut run = Run::new("bands", &ctx.out, &a)?;
    let store = inputs::store(&mut run, "embeddings", required(&a.embeddings, "embeddings")?)?;
    let votes = inputs::votes(&mut run, "votes", required(&a.votes, "votes")?, VoteKind::Binary)?;
    let authorship = inputs::authorship(&mut run, "authorship", a.authorship.as_deref())?;
    let anchors = inputs::anchors(authorship.as_ref(), &store)?;
    let (_, scorer) = inputs::scorer(&mut run, &a.scorer)?;
    let table = proximity_bands(&votes, &store, &anchors, &scorer, a.bands).map_err(|e| for_flag("votes", e))?;
    let mut t = Table::new(&["band", "lo", "hi", "votes", "approvals", "rate"]);
    for (i, b) in table.bands.iter().enumerate() {
        t.push(vec![i.to_string(), num(b.lo), num(b.hi), b.count.to_string(), b.approvals.to_string(), opt(b.rate)]);
    }
    run.write_table("bands.tsv", &t)?;
    run.finish()
}

#[derive(Subcommand)]
pub enum StatsCommand {
    /// Signed-rank test on per-participant accuracies.
    Wilcoxon(StatsArgs),
    /// Exact test on the discordant triplets.
    Mcnemar(StatsArgs),
    /// Paired t-test on per-participant accuracies.
    PairedT(StatsArgs),
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(default, deny_unknown_fields)]
pub struct StatsArgs {
    /// Outcome file of model A written by `eval`.
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// Outcome file of model B on the same triplets.
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// McNemar only: discordant counts `b,c` (A right and B wrong, then the
    /// reverse) instead of outcome files.
    #[arg(long)]
    pub counts: Option<String>,
}
params!(StatsArgs, "stats", ["a", "b"]);

struct Outcomes {
    participants: Vec<String>,
    correct: Vec<bool>,
}

fn read_outcomes(run: &mut Run, key: &str, path: &Path) -> CliResult<Outcomes> {
    run.input(key, path)?;
    let text = std::fs::read_to_string(path)?;
    let bad = |line: usize, m: &str| CliError::Validation(format!("--{key} {}:{line}: {m}", path.display()));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    match lines.next() {
        Some((_, "triplet\tparticipant\tcorrect")) => {}
        Some((i, _)) => return Err(bad(i + 1, "expected header triplet, participant, correct")),
        None => return Err(bad(0, "empty outcome file")),
    }
    let mut out = Outcomes { participants: Vec::new(), correct: Vec::new() };
    for (i, line) in lines {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 || f[0].parse::<usize>().ok() != Some(out.correct.len()) {
            return Err(bad(i + 1, "expected consecutive triplet index, participant and 0/1"));
        }
        out.participants.push(f[1].to_string());
        out.correct.push(match f[2] {
            "1" => true,
            "0" => false,
            _ => return Err(bad(i + 1, "correct must be 0 or 1")),
        });
    }
    Ok(out)
}

pub fn stats(ctx: &Ctx, cmd: StatsCommand) -> CliResult<()> {
    let (name, args) = match cmd {
        StatsCommand::Wilcoxon(a) => ("wilcoxon", a),
        StatsCommand::Mcnemar(a) => ("mcnemar", a),
        StatsCommand::PairedT(a) => ("paired-t", a),
    };
    let a = ctx.resolve(&args)?;
    let mut run = Run::new(&format!("stats {name}"), &ctx.out, &a)?;
    if name == "mcnemar" {
        if let Some(counts) = &a.counts {
            let parsed: Vec<u64> = counts
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Validation(format!("--counts: expected two counts b,c, got `{counts}`")))?;
            let [b, c] = parsed[..] else {
                return Err(CliError::Validation(format!("--counts: expected two counts b,c, got `{counts}`")));
            };
            let m = mcnemar_exact(b, c);
            return write_mcnemar(run, m);
        }
    } else if a.counts.is_some() {
        return Err(CliError::Validation("--counts applies to mcnemar only".into()));
    }
    let oa = read_outcomes(&mut run, "a", required(&a.a, "a")?)?;
    let ob = read_outcomes(&mut run, "b", required(&a.b, "b")?)?;
    if oa.participants != ob.participants {
        return Err(CliError::Validation("--a and --b were not evaluated on the same triplets".into()));
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let groups: Vec<usize> = oa
        .participants
        .iter()
        .map(|p| {
            let next = index.len();
            *index.entry(p.as_str()).or_insert(next)
        })
        .collect();
    let cmp = paired_model_comparison(&oa.correct, &ob.correct, &groups)?;
    let mut rows = vec![
        ("triplets", cmp.n_triplets.to_string()),
        ("participants", cmp.n_participants.to_string()),
        ("macro_a", num(cmp.macro_a)),
        ("macro_b", num(cmp.macro_b)),
        ("share_a_better", num(cmp.wins)),
        ("share_tied", num(cmp.ties)),
        ("share_b_better", num(cmp.losses)),
    ];
    match name {
        "mcnemar" => return write_mcnemar(run, cmp.mcnemar),
        "wilcoxon" => match cmp.wilcoxon {
            Some(w) => rows.extend([
                ("statistic", num(w.statistic)),
                ("nonzero", w.n.to_string()),
                ("p", num(w.p)),
                ("method", if w.method == PMethod::Exact { "exact" } else { "normal" }.to_string()),
            ]),
            None => rows.push(("p", "NA".into())),
        },
        _ => match cmp.paired_t {
            Some(t) => rows.extend([
                ("t", num(t.t)),
                ("df", num(t.df)),
                ("p", num(t.p)),
                ("mean_difference", num(t.mean_difference)),
            ]),
            None => rows.push(("p", "NA".into())),
        },
    }
    let p = rows.iter().find(|r| r.0 == "p").map(|r| r.1.clone()).unwrap_or_default();
    println!("{name}: p = {p}");
    run.write_table("stats.tsv", &Table::key_value(rows))?;
    run.finish()
}

fn write_mcnemar(mut run: Run, m: prefgeom::stats::McNemar) -> CliResult<()> {
    println!("mcnemar: b={} c={} p={} log10 p={}", m.b, m.c, num(m.p), num(m.log10_p));
    run.write_table(
        "stats.tsv",
        &Table::key_value(vec![
            ("b", m.b.to_string()),
            ("c", m.c.to_string()),
            ("p", num(m.p)),
            ("log10_p", num(m.log10_p)),
        ]),
    )?;
    run.finish()
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterArgs {
    /// Embeddings, one JSON record {id, vector, text?} per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Binary votes CSV with header participant_id,statement_id,value.
    #[arg(long)]
    pub votes: Option<PathBuf>,
    /// CSV participant_id,text_id[,about_statement]; authors are clustered on
    /// their pooled texts and comments are attributed to them.
    #[arg(long)]
    pub authorship: Option<PathBuf>,
    /// Cluster counts.
    #[arg(long, value_delimiter = ',', default_value = "3,5,8,10")]
    pub k_list: Vec<usize>,
    /// k-means runs per k, with seeds seed, seed+1, ...
    #[arg(long, default_value_t = DEFAULT_KMEANS_SEEDS)]
    pub kmeans_seeds: usize,
    /// Label permutations for the null.
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub perms: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
}
params!(ClusterArgs, "cluster", ["embeddings", "votes", "authorship"]);

pub fn cluster(ctx: &Ctx, args: ClusterArgs) -> CliResult<()> {
    let a = ctx.resolve(&args)?;
    let mut run = Run::new("cluster", &ctx.out, &a)?;
    let store = inputs::store(&mut run, "embeddings", required(&a.embeddings, "embeddings")?)?;
    let votes = inputs::votes(&mut run, "votes", required(&a.votes, "votes")?, VoteKind::Binary)?;
    let authorship =
        inputs::authorship(&mut run, "authorship", Some(required(&a.authorship, "authorship")?))?.expect("path given");
    let mut participants = authorship.participants();
    participants.sort_by(|x, y| x.id.cmp(&y.id));
    let none = Default::default();
    let points = participants
        .iter()
        .map(|p| pool_anchor(p, &store, &none))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| for_flag("authorship", e))?;
    if a.kmeans_seeds == 0 {
        return Err(CliError::Validation("--kmeans-seeds must be at least 1".into()));
    }

    let jobs: Vec<(usize, u64)> =
        a.k_list.iter().flat_map(|&k| (0..a.kmeans_seeds as u64).map(move |s| (k, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(k, s)| {
            let km = kmeans(&points, k, a.seed + s, 1, a.max_iter).map_err(|e| for_flag("k-list", e))?;
            let labels: HashMap<String, usize> =
                participants.iter().zip(&km.assignments).map(|(p, &c)| (p.id.clone(), c)).collect();
            let coh = cluster_coherence(&labels, &votes, &authorship, a.perms, a.seed + s)?;
            Ok((km, coh))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut t = Table::new(&[
        "k",
        "kmeans_seed",
        "inertia",
        "clusters",
        "within",
        "across",
        "delta",
        "shuffle_mean_abs",
        "users_used",
        "users_excluded",
        "skipped_votes",
    ]);
    for (&(k, s), (km, c)) in jobs.iter().zip(&results) {
        t.push(vec![
            k.to_string(),
            (a.seed + s).to_string(),
            num(km.inertia),
            c.clusters.to_string(),
            opt(c.within),
            opt(c.across),
            opt(c.delta),
            opt(c.shuffle_mean_abs),
            c.users_used.to_string(),
            c.users_excluded.to_string(),
            c.skipped_votes.to_string(),
        ]);
    }
    run.write_table("cluster.tsv", &t)?;

    let mut summary = Table::new(&["k", "mean_delta", "mean_shuffle_abs"]);
    for (&k, chunk) in a.k_list.iter().zip(results.chunks(a.kmeans_seeds)) {
        let mean = |f: fn(&prefgeom::diagnostics::Coherence) -> Option<f64>| {
            let v: Vec<f64> = chunk.iter().filter_map(|(_, c)| f(c)).collect();
            (!v.is_empty()).then(|| prefgeom::stats::mean(&v))
        };
        let (d, s) = (mean(|c| c.delta), mean(|c| c.shuffle_mean_abs));
        println!("k={k}: lift {} (shuffled |lift| {})", opt(d), opt(s));
        summary.push(vec![k.to_string(), opt(d), opt(s)]);
    }
    run.write_table("cluster_summary.tsv", &summary)?;
    run.finish()
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(default, deny_unknown_fields)]
pub struct LikertArgs {
    /// Embeddings, one JSON record {id, vector, text?} per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Likert ratings CSV (0 to 6) with header participant_id,statement_id,value.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// CSV participant_id,text_id[,about_statement]; the anchor pools each
    /// participant's texts.
    #[arg(long)]
    pub authorship: Option<PathBuf>,
    /// Texts left out of the anchor for each rating: about-statement or none.
    #[arg(long, default_value_t = Exclusion::AboutStatement)]
    pub exclusion: Exclusion,
    /// Scorer file written by `fit`, or `cosine`.
    #[arg(long, default_value = "cosine")]
    pub scorer: String,
}
params!(LikertArgs, "likert", ["embeddings", "ratings", "authorship", "scorer"]);

pub fn likert(ctx: &Ctx, args: LikertArgs) -> CliResult<()> {
    let a = ctx.resolve(&args)?;
    let mut run = Run::new("likert", &ctx.out, &a)?;
    let store = inputs::store(&mut run, "embeddings", required(&a.embeddings, "embeddings")?)?;
    let ratings = inputs::votes(&mut run, "ratings", required(&a.ratings, "ratings")?, VoteKind::Likert)?;
    let authorship =
        inputs::authorship(&mut run, "authorship", Some(required(&a.authorship, "authorship")?))?.expect("path given");
    let (_, scorer) = inputs::scorer(&mut run, &a.scorer)?;
    let rep = likert_correlation(&ratings, &authorship, &store, a.exclusion, &scorer)?;
    println!("Spearman rho {} over {} ratings", num(rep.rho), rep.rows);
    run.write_table(
        "likert.tsv",
        &Table::key_value(vec![
            ("rho", num(rep.rho)),
            ("rows", rep.rows.to_string()),
            ("skipped_rows", rep.skipped_rows.to_string()),
            ("exclusion", rep.exclusion.to_string()),
        ]),
    )?;
    run.finish()
}
