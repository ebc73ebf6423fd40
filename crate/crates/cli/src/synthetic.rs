use clap::{Args, Subcommand};
use prefgeom::ingest::manifest_path;
use prefgeom::synthetic::{
    derivative_from_parts, generate, risk_curve_from_parts, verify_hard_condition, MarginParts, PlantedModel, Regime,
    SyntheticConfig, SyntheticSet, DEFAULT_BINS, FD_STEP,
};
use prefgeom::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{for_flag, CliResult};
use crate::output::{num, Run, Table};
use crate::Ctx;

#[derive(Subcommand)]
pub enum SyntheticCommand {
    /// Write planted-subspace embeddings, triplets and the planted basis.
    Generate(SyntheticArgs),
    /// Empirical risk along the nuisance weight λ with a monotonicity verdict.
    RiskCurve(SyntheticArgs),
    /// Slope of the risk at λ = 0 with a finite-difference cross-check.
    DerivativeAtZero(SyntheticArgs),
    /// Mean nuisance margin within quantile bins of the subspace margin.
    VerifyHardCondition(SyntheticArgs),
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticArgs {
    /// Ambient dimension d.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Preference subspace dimension k.
    #[arg(long, default_value_t = 8)]
    pub subspace_dim: usize,
    #[arg(long, default_value_t = 10_000)]
    pub triplets: usize,
    /// Scale of the in-subspace cosine gap; gaps are drawn from gap times U(0.1, 1.9).
    #[arg(long, default_value_t = 1.0)]
    pub gap: f64,
    /// Squared-norm share of the nuisance component.
    #[arg(long, default_value_t = 0.5)]
    pub nuisance: f64,
    /// hard, natural or neutral coupling of nuisance directions.
    #[arg(long, default_value_t = Regime::Hard)]
    pub regime: Regime,
    /// Cosine between the anchor's nuisance direction and the coupled item's.
    #[arg(long, default_value_t = 0.8)]
    pub rho: f64,
    /// Standard deviation of label noise on the preferred item's gap.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Grid of nuisance weights for the risk curve.
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub lambdas: Vec<f64>,
    /// Quantile bins of the subspace margin for the hard-condition check.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Step of the central difference at λ = 0.
    #[arg(long, default_value_t = FD_STEP)]
    pub fd_step: f64,
}
params!(SyntheticArgs, "synthetic", []);

impl SyntheticArgs {
    fn config(&self) -> SyntheticConfig {
        SyntheticConfig {
            dim: self.dim,
            subspace_dim: self.subspace_dim,
            triplets: self.triplets,
            gap: self.gap,
            nuisance: self.nuisance,
            regime: self.regime,
            rho: self.rho,
            noise: self.noise,
            seed: self.seed,
        }
    }
}

fn parts(set: &SyntheticSet) -> CliResult<MarginParts> {
    let b = Matrix::identity(set.model.config.subspace_dim);
    Ok(MarginParts::compute(&b, &set.data, &set.model.basis)?)
}

pub fn run(ctx: &Ctx, cmd: SyntheticCommand) -> CliResult<()> {
    let (name, args) = match cmd {
        SyntheticCommand::Generate(a) => ("generate", a),
        SyntheticCommand::RiskCurve(a) => ("risk-curve", a),
        SyntheticCommand::DerivativeAtZero(a) => ("derivative-at-zero", a),
        SyntheticCommand::VerifyHardCondition(a) => ("verify-hard-condition", a),
    };
    let a = ctx.resolve(&args)?;
    let set = generate(&a.config())?;
    let mut run = Run::new(&format!("synthetic {name}"), &ctx.out, &a)?;
    match name {
        "generate" => {
            let (store, triplets) = set.to_ingest()?;
            store.save(&run.path("embeddings.jsonl"))?;
            run.record_file("embeddings.jsonl")?;
            run.record_file(&manifest_path(std::path::Path::new("embeddings.jsonl")).to_string_lossy())?;
            run.write_raw("triplets.jsonl", &triplets.to_jsonl())?;
            set.model.save(&run.path("planted.json"))?;
            run.record_file("planted.json")?;
            run.write_table(
                "synthetic.tsv",
                &Table::key_value(vec![
                    ("triplets", set.data.len().to_string()),
                    ("dim", a.dim.to_string()),
                    ("subspace_dim", a.subspace_dim.to_string()),
                    ("violation_rate", num(set.model.violation_rate())),
                    ("expected_violation_rate", num(PlantedModel::expected_violation_rate(&a.config()))),
                ]),
            )?;
        }
        "risk-curve" => {
            let curve = risk_curve_from_parts(&parts(&set)?, &a.lambdas).map_err(|e| for_flag("lambdas", e))?;
            let mut t = Table::new(&["lambda", "risk", "se", "step", "step_se"]);
            for (i, (l, r)) in curve.lambdas.iter().zip(&curve.risk).enumerate() {
                let (step, se) = match i.checked_sub(1).map(|j| curve.steps[j]) {
                    Some(s) => (num(s.mean), num(s.se)),
                    None => ("NA".into(), "NA".into()),
                };
                t.push(vec![num(*l), num(r.mean), num(r.se), step, se]);
                println!("λ={:<5} R̂={} (SE {})", num(*l), num(r.mean), num(r.se));
            }
            run.write_table("risk_curve.tsv", &t)?;
            run.write_table(
                "risk_verdict.tsv",
                &Table::key_value(vec![
                    ("regime", a.regime.to_string()),
                    ("triplets", set.data.len().to_string()),
                    ("verdict", curve.verdict.to_string()),
                ]),
            )?;
            println!("verdict: {}", curve.verdict);
        }
        "derivative-at-zero" => {
            let d = derivative_from_parts(&parts(&set)?, a.fd_step).map_err(|e| for_flag("fd-step", e))?;
            run.write_table(
                "derivative.tsv",
                &Table::key_value(vec![
                    ("estimate", num(d.estimate.mean)),
                    ("estimate_se", num(d.estimate.se)),
                    ("finite_difference", num(d.finite_difference.mean)),
                    ("finite_difference_se", num(d.finite_difference.se)),
                    ("step", num(d.step)),
                    ("agrees", d.agrees.to_string()),
                    ("positive", d.positive().to_string()),
                ]),
            )?;
            println!(
                "R'(0) = {} (SE {}), finite difference {}; agrees {}, positive {}",
                num(d.estimate.mean),
                num(d.estimate.se),
                num(d.finite_difference.mean),
                d.agrees,
                d.positive()
            );
        }
        _ => {
            let rep = verify_hard_condition(&set.data, &set.model.basis, a.bins).map_err(|e| for_flag("bins", e))?;
            let mut t = Table::new(&["bin", "delta_s_lo", "delta_s_hi", "triplets", "delta_t_mean", "delta_t_se"]);
            for (i, b) in rep.bins.iter().enumerate() {
                t.push(vec![
                    i.to_string(),
                    num(b.lo),
                    num(b.hi),
                    b.delta_t.n.to_string(),
                    num(b.delta_t.mean),
                    num(b.delta_t.se),
                ]);
            }
            run.write_table("hard_condition.tsv", &t)?;
            run.write_table(
                "hard_condition_summary.tsv",
                &Table::key_value(vec![
                    ("collapsed_bins", rep.collapsed.to_string()),
                    ("holds", rep.holds.to_string()),
                ]),
            )?;
            println!("hard condition holds: {}", rep.holds);
        }
    }
    run.finish()
}
