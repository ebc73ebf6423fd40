//! `prefgeom`: preference-geometry workflows over frozen text embeddings.
//!
//! Every command resolves its parameters from built-in defaults, an optional
//! `--config` TOML file and explicit flags, writes outputs with provenance
//! headers into `--out`, and appends a record to `run.jsonl` there.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

/// Implements [`config::Params`] and a `Default` that equals the clap defaults.
macro_rules! params {
    ($ty:ty, $section:literal, [$($input:literal),* $(,)?]) => {
        impl Default for $ty {
            fn default() -> Self {
                let cmd = <$ty as clap::Args>::augment_args(clap::Command::new("defaults"));
                let m = cmd.get_matches_from(["defaults"]);
                <$ty as clap::FromArgMatches>::from_arg_matches(&m).expect("defaults parse")
            }
        }

        impl $crate::config::Params for $ty {
            const SECTION: &'static str = $section;
            const INPUTS: &'static [&'static str] = &[$($input),*];
        }
    };
}

mod analysis;
mod config;
mod data;
mod error;
mod inputs;
mod model;
mod output;
mod synthetic;
mod verify;

use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "prefgeom", version, about = "Preference geometry over frozen text embeddings")]
struct Cli {
    /// TOML file with one section per command; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "prefgeom-out")]
    out: PathBuf,
    /// Worker threads for independent fits and evaluations (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate embeddings and votes and write normalized copies with a manifest.
    Ingest(data::IngestArgs),
    /// Build preference triplets and a participant split from votes.
    Triplets(data::TripletsArgs),
    /// Micro and macro triplet accuracy of one or more scorers.
    Eval(model::EvalArgs),
    /// Fit a trainable scorer with validation-based epoch selection.
    Fit(model::FitArgs),
    /// Test accuracy across projection ranks or training-set sizes.
    Sweep(model::SweepArgs),
    /// Planted-subspace data and the nuisance-risk checks.
    #[command(subcommand)]
    Synthetic(synthetic::SyntheticCommand),
    /// Approval rate by similarity band.
    Bands(analysis::BandsArgs),
    /// Paired tests between two outcome files written by `eval`.
    #[command(subcommand)]
    Stats(analysis::StatsCommand),
    /// k-means over participant anchors with a label-permutation null.
    Cluster(analysis::ClusterArgs),
    /// Spearman correlation between scores and Likert ratings.
    Likert(analysis::LikertArgs),
    /// Principal angles between the projections of two fitted scorers.
    Angles(model::AnglesArgs),
    /// Fetch embeddings from a remote endpoint.
    Embed(data::EmbedArgs),
    /// Re-check the hashes recorded in an output directory's run log.
    Verify(verify::VerifyArgs),
}

/// Shared state for one invocation.
pub struct Ctx<'a> {
    pub out: PathBuf,
    config: Option<toml::Table>,
    matches: &'a ArgMatches,
}

impl Ctx<'_> {
    pub fn resolve<P: config::Params>(&self, parsed: &P) -> CliResult<P> {
        config::resolve(parsed, self.matches, self.config.as_ref())
    }
}

fn leaf(m: &ArgMatches) -> &ArgMatches {
    match m.subcommand() {
        Some((_, sub)) => leaf(sub),
        None => m,
    }
}

fn run(cli: Cli, matches: &ArgMatches) -> CliResult<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("--jobs: {e}")))?;
    }
    let config = cli.config.as_deref().map(config::read_config).transpose()?;
    let ctx = Ctx { out: cli.out, config, matches: leaf(matches) };
    match cli.command {
        Command::Ingest(a) => data::ingest(&ctx, a),
        Command::Triplets(a) => data::triplets(&ctx, a),
        Command::Eval(a) => model::eval(&ctx, a),
        Command::Fit(a) => model::fit(&ctx, a),
        Command::Sweep(a) => model::sweep(&ctx, a),
        Command::Synthetic(c) => synthetic::run(&ctx, c),
        Command::Bands(a) => analysis::bands(&ctx, a),
        Command::Stats(c) => analysis::stats(&ctx, c),
        Command::Cluster(a) => analysis::cluster(&ctx, a),
        Command::Likert(a) => analysis::likert(&ctx, a),
        Command::Angles(a) => model::angles(&ctx, a),
        Command::Embed(a) => data::embed(&ctx, a),
        Command::Verify(a) => verify::run(a),
    }
}

fn main() -> ExitCode {
    // Usage errors are validation errors (exit 1), not clap's default 2.
    let parsed = Cli::command().try_get_matches().and_then(|m| Cli::from_arg_matches(&m).map(|c| (c, m)));
    let (cli, matches) = match parsed {
        Ok(p) => p,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
