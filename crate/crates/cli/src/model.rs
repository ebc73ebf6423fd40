use std::path::PathBuf;

use clap::{Args, ValueEnum};
use prefgeom::diagnostics::{subspace_report, triplet_accuracy};
use prefgeom::scorers::{ScorerFile, DEFAULT_MLP_HIDDEN};
use prefgeom::train::{self, sweep_data, sweep_rank, FitResult, Loss, TrainConfig};
use prefgeom::{Scorer, Variant};
use serde::{Deserialize, Serialize};

use crate::error::{for_flag, CliError, CliResult};
use crate::inputs::{self, required};
use crate::output::{num, Run, Table};
use crate::Ctx;

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    /// Embeddings, one JSON record {id, vector, text?} per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Triplets, one JSON record {anchor, pos, neg, strength?} per line.
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    /// CSV participant_id,text_id[,about_statement]; anchors are the pooled
    /// texts of each author, or the embedding stored under the participant id.
    #[arg(long)]
    pub authorship: Option<PathBuf>,
    /// Scorer files written by `fit`, or `cosine`.
    #[arg(long, value_delimiter = ',', default_value = "cosine")]
    pub scorers: Vec<String>,
}
params!(EvalArgs, "eval", ["embeddings", "triplets", "authorship", "scorers"]);

pub fn eval(ctx: &Ctx, args: EvalArgs) -> CliResult<()> {
    let a = ctx.resolve(&args)?;
    let mut run = Run::new("eval", &ctx.out, &a)?;
    let store = inputs::store(&mut run, "embeddings", required(&a.embeddings, "embeddings")?)?;
    let set = inputs::triplets(&mut run, "triplets", required(&a.triplets, "triplets")?)?;
    let authorship = inputs::authorship(&mut run, "authorship", a.authorship.as_deref())?;
    let data = inputs::resolve(&set, &store, &inputs::anchors(authorship.as_ref(), &store)?, "triplets")?;
    if a.scorers.is_empty() {
        return Err(CliError::Validation("--scorers needs at least one scorer".into()));
    }
    let mut scorers = Vec::new();
    for name in &a.scorers {
        let (label, s) = inputs::scorer(&mut run, name)?;
        if scorers.iter().any(|(l, _)| l == &label) {
            return Err(CliError::Validation(format!("--scorers: two scorers are named `{label}`")));
        }
        scorers.push((label, s));
    }

    let mut table = Table::new(&["scorer", "triplets", "participants", "micro", "macro"]);
    for (label, s) in &scorers {
        let rep = triplet_accuracy(s, &data)?;
        table.push(vec![
            label.clone(),
            rep.outcomes.len().to_string(),
            rep.participants.len().to_string(),
            num(rep.micro),
            num(rep.macro_accuracy),
        ]);
        let mut outcomes = Table::new(&["triplet", "participant", "correct"]);
        for (i, (&ok, &g)) in rep.outcomes.iter().zip(&rep.groups).enumerate() {
            outcomes.push(vec![i.to_string(), data.groups()[g].clone(), u8::from(ok).to_string()]);
        }
        run.write_table(&format!("outcomes.{label}.tsv"), &outcomes)?;
        println!("{label}: micro {} macro {}", num(rep.micro), num(rep.macro_accuracy));
    }
    run.write_table("eval.tsv", &table)?;
    run.finish()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Bradley-Terry on the triplet margin.
    Bt,
    /// In-batch contrastive loss.
    Infonce,
}

/// Fields shared by `fit` and `sweep`.
macro_rules! train_fields {
    ($name:ident { $($extra:tt)* }) => {
        #[derive(Args, Serialize, Deserialize, Debug, Clone)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            /// Embeddings, one JSON record {id, vector, text?} per line.
            #[arg(long)]
            pub embeddings: Option<PathBuf>,
            /// Training triplets (JSON lines).
            #[arg(long)]
            pub train: Option<PathBuf>,
            /// Validation triplets for epoch selection.
            #[arg(long)]
            pub val: Option<PathBuf>,
            /// CSV participant_id,text_id[,about_statement] for pooled anchors.
            #[arg(long)]
            pub authorship: Option<PathBuf>,
            /// bilinear, ideal_point, inner_product, asymmetric or mlp.
            #[arg(long, default_value_t = Variant::IdealPoint)]
            pub variant: Variant,
            /// Projection rank.
            #[arg(long, default_value_t = train::DEFAULT_RANK)]
            pub rank: usize,
            #[arg(long, value_enum, default_value_t = LossKind::Bt)]
            pub loss: LossKind,
            /// InfoNCE temperature.
            #[arg(long, default_value_t = 0.05)]
            pub temperature: f64,
            #[arg(long, default_value_t = train::DEFAULT_LR)]
            pub lr: f64,
            #[arg(long, default_value_t = train::DEFAULT_EPOCHS)]
            pub epochs: usize,
            #[arg(long, default_value_t = train::DEFAULT_BATCH_SIZE)]
            pub batch_size: usize,
            /// Decoupled weight decay.
            #[arg(long, default_value_t = 0.0)]
            pub weight_decay: f64,
            /// Initial weights are N(0, 1) times init-scale over the square root of the fan-in.
            #[arg(long, default_value_t = 1.0)]
            pub init_scale: f64,
            /// Hidden width of the mlp variant.
            #[arg(long, default_value_t = DEFAULT_MLP_HIDDEN)]
            pub hidden: usize,
            $($extra)*
        }

        impl $name {
            fn train_config(&self, seed: u64) -> TrainConfig {
                TrainConfig {
                    variant: self.variant,
                    rank: self.rank,
                    lr: self.lr,
                    epochs: self.epochs,
                    batch_size: self.batch_size,
                    seed,
                    weight_decay: self.weight_decay,
                    loss: match self.loss {
                        LossKind::Bt => Loss::BradleyTerry,
                        LossKind::Infonce => Loss::Infonce { temperature: self.temperature },
                    },
                    init_scale: self.init_scale,
                    hidden: self.hidden,
                }
            }
        }
    };
}

train_fields!(FitArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
});
params!(FitArgs, "fit", ["embeddings", "train", "val", "authorship"]);

pub fn fit(ctx: &Ctx, args: FitArgs) -> CliResult<()> {
    let a = ctx.resolve(&args)?;
    let cfg = a.train_config(a.seed);
    cfg.validate()?;
    let mut run = Run::new("fit", &ctx.out, &a)?;
    let store = inputs::store(&mut run, "embeddings", required(&a.embeddings, "embeddings")?)?;
    let train_set = inputs::triplets(&mut run, "train", required(&a.train, "train")?)?;
    let val_set = inputs::triplets(&mut run, "val", required(&a.val, "val")?)?;
    let authorship = inputs::authorship(&mut run, "authorship", a.authorship.as_deref())?;
    let anchors = inputs::anchors(authorship.as_ref(), &store)?;
    let train_data = inputs::resolve(&train_set, &store, &anchors, "train")?;
    let val_data = inputs::resolve(&val_set, &store, &anchors, "val")?;

    let res = train::fit(&train_data, &val_data, &cfg)?;
    let mut file = ScorerFile::new(res.scorer.clone());
    file.seed = Some(res.seed);
    file.config_hash = Some(res.config_hash.clone());
    file.data_hash = Some(res.data_hash.clone());
    run.write_raw("scorer.json", &file.to_json()?)?;
    run.write_json("fit.json", &res)?;

    let mut trace = Table::new(&["epoch", "train_loss", "val_accuracy"]);
    for (e, acc) in res.val_accuracy.iter().enumerate() {
        let loss = if e == 0 { "NA".to_string() } else { num(res.train_loss[e - 1]) };
        trace.push(vec![e.to_string(), loss, num(*acc)]);
    }
    run.write_table("fit_trace.tsv", &trace)?;
    run.write_table(
        "fit.tsv",
        &Table::key_value(vec![
            ("variant", a.variant.to_string()),
            ("params", res.scorer.param_count().to_string()),
            ("selected_epoch", res.selected_epoch.to_string()),
            ("best_val_accuracy", num(res.best_val_accuracy())),
            ("train_triplets", train_data.len().to_string()),
            ("val_triplets", val_data.len().to_string()),
        ]),
    )?;
    println!("selected epoch {} with validation accuracy {}", res.selected_epoch, num(res.best_val_accuracy()));
    run.finish()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// One fit per projection rank.
    Rank,
    /// One fit per number of sampled training triplets.
    Data,
}

train_fields!(SweepArgs {
    /// Test triplets the accuracies are measured on.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SweepKind::Rank)]
    pub sweep: SweepKind,
    /// Ranks, or training-set sizes for a data sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
    pub values: Vec<usize>,
    /// One fit per seed and value.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
});
params!(SweepArgs, "sweep", ["embeddings", "train", "val", "test", "authorship"]);

pub fn sweep(ctx: &Ctx, args: SweepArgs) -> CliResult<()> {
    let a = ctx.resolve(&args)?;
    let cfg = a.train_config(0);
    cfg.validate()?;
    let mut run = Run::new("sweep", &ctx.out, &a)?;
    let store = inputs::store(&mut run, "embeddings", required(&a.embeddings, "embeddings")?)?;
    let authorship = inputs::authorship(&mut run, "authorship", a.authorship.as_deref())?;
    let anchors = inputs::anchors(authorship.as_ref(), &store)?;
    let mut load = |key: &str, path: &Option<PathBuf>| -> CliResult<_> {
        let set = inputs::triplets(&mut run, key, required(path, key)?)?;
        inputs::resolve(&set, &store, &anchors, key)
    };
    let (tr, va, te) = (load("train", &a.train)?, load("val", &a.val)?, load("test", &a.test)?);
    let rows = match a.sweep {
        SweepKind::Rank => sweep_rank(&a.values, &a.seeds, &tr, &va, &te, &cfg),
        SweepKind::Data => sweep_data(&a.values, &a.seeds, &tr, &va, &te, &cfg),
    }
    .map_err(|e| for_flag("values", e))?;

    let mut table = Table::new(&["value", "mean", "std", "se", "accuracies"]);
    for r in &rows {
        let accs: Vec<String> = r.accuracies.iter().map(|x| num(*x)).collect();
        table.push(vec![r.value.to_string(), num(r.mean), num(r.std), num(r.se), accs.join(",")]);
        println!("{}: {} ± {}", r.value, num(r.mean), num(r.std));
    }
    run.write_table("sweep.tsv", &table)?;
    run.finish()
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(default, deny_unknown_fields)]
pub struct AnglesArgs {
    /// `fit.json` or `scorer.json` of the first scorer.
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// `fit.json` or `scorer.json` of the second scorer.
    #[arg(long)]
    pub b: Option<PathBuf>,
}
params!(AnglesArgs, "angles", ["a", "b"]);

/// The scorer inside a `fit.json` document or a scorer file.
fn load_projection(run: &mut Run, key: &str, path: &std::path::Path) -> CliResult<prefgeom::Matrix> {
    run.input(key, path)?;
    let bytes = std::fs::read(path)?;
    let scorer: Scorer = match ScorerFile::from_json(&bytes) {
        Ok(f) => f.scorer,
        Err(_) => {
            let doc: serde_json::Value =
                serde_json::from_slice(&bytes).map_err(|e| CliError::Validation(format!("--{key}: {e}")))?;
            let res: FitResult = serde_json::from_value(doc["result"].clone())
                .map_err(|e| CliError::Validation(format!("--{key}: neither a scorer file nor fit output: {e}")))?;
            res.scorer
        }
    };
    scorer.projection().cloned().ok_or_else(|| {
        CliError::Validation(format!("--{key}: the {} scorer has no single projection", scorer.variant()))
    })
}

pub fn angles(ctx: &Ctx, args: AnglesArgs) -> CliResult<()> {
    let a = ctx.resolve(&args)?;
    let mut run = Run::new("angles", &ctx.out, &a)?;
    let l1 = load_projection(&mut run, "a", required(&a.a, "a")?)?;
    let l2 = load_projection(&mut run, "b", required(&a.b, "b")?)?;
    let rep = subspace_report(&l1, &l2)?;
    let mut table = Table::new(&["index", "cosine"]);
    for (i, c) in rep.cosines.iter().enumerate() {
        table.push(vec![i.to_string(), num(*c)]);
    }
    run.write_table("angles.tsv", &table)?;
    run.write_table(
        "angles_summary.tsv",
        &Table::key_value(vec![("max", num(rep.max)), ("median", num(rep.median)), ("min", num(rep.min))]),
    )?;
    println!("principal-angle cosines: max {} median {} min {}", num(rep.max), num(rep.median), num(rep.min));
    run.finish()
}
