//! `mousedyn` command-line driver.

mod artifacts;
mod commands;
mod fetch;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mousedyn::eval::{Protocol, Scenario};
use mousedyn::resample::ResampleMethod;
use mousedyn::ActionKind;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "mousedyn", version, about = "Mouse-dynamics impostor detection pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every subcommand. Each can also be set through the
/// matching `MOUSEDYN_*` environment variable.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Global {
    /// Corpus root holding training_files/ and test_files/.
    #[arg(long, global = true, env = "MOUSEDYN_DATA_ROOT")]
    pub data_root: Option<PathBuf>,
    /// Labels CSV for the test part (filename,is_illegal).
    #[arg(long, global = true, env = "MOUSEDYN_LABELS")]
    pub labels: Option<PathBuf>,
    #[arg(long, global = true, env = "MOUSEDYN_SEED", default_value_t = 42)]
    pub seed: u64,
    #[arg(long, global = true, env = "MOUSEDYN_TREES", default_value_t = 100)]
    pub trees: usize,
    /// none | linear | spline
    #[arg(long, global = true, env = "MOUSEDYN_RESAMPLE", default_value = "none", value_parser = parse_resample)]
    #[serde(skip)]
    pub resample: ResampleMethod,
    #[arg(long, global = true, env = "MOUSEDYN_HZ", default_value_t = 20.0)]
    pub hz: f64,
    /// Output directory (for `train`, the model file).
    #[arg(long, global = true, env = "MOUSEDYN_OUT", default_value = "out")]
    #[serde(skip)]
    pub out: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true, env = "MOUSEDYN_JOBS")]
    #[serde(skip)]
    pub jobs: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long, global = true, env = "MOUSEDYN_FORCE")]
    #[serde(skip)]
    pub force: bool,
    /// TOML file with cleaning, segmentation and evaluation settings.
    #[arg(long, global = true, env = "MOUSEDYN_CONFIG")]
    pub config: Option<PathBuf>,
}

fn parse_resample(s: &str) -> Result<ResampleMethod, String> {
    s.parse()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
pub enum RankTarget {
    /// Per-user balanced datasets, gain ratios averaged over users.
    PerUser,
    /// Pooled genuine/impostor rows of every user's balanced dataset.
    Binary,
    /// User identity over all training actions.
    User,
}

impl From<RankTarget> for mousedyn::pipeline::RankTarget {
    fn from(t: RankTarget) -> Self {
        match t {
            RankTarget::User => Self::User,
            RankTarget::Binary => Self::PooledBinary,
            RankTarget::PerUser => Self::PerUserMean,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Download the corpus archive, verify or record its SHA-256, unpack it.
    Fetch {
        #[arg(long, env = "MOUSEDYN_FETCH_URL")]
        url: String,
        /// Expected SHA-256 of the archive.
        #[arg(long, env = "MOUSEDYN_FETCH_SHA256")]
        sha256: Option<String>,
    },
    /// Write a synthetic corpus under --data-root, for trying the pipeline
    /// without the real data.
    Synth {
        #[arg(long, default_value_t = 5)]
        users: u32,
        #[arg(long, default_value_t = 3)]
        training_sessions: usize,
        /// Genuine and impostor test sessions per user, each.
        #[arg(long, default_value_t = 2)]
        test_sessions: usize,
        #[arg(long, default_value_t = 60)]
        actions: usize,
    },
    /// Session counts and action-type histograms per part and per user.
    Stats,
    /// Segment sessions into actions: segments.csv plus actions.jsonl.
    Segment,
    /// Extract per-action features: features_train.csv and features_test.csv.
    Features {
        /// Read actions.jsonl from `segment` instead of the corpus.
        #[arg(long)]
        actions: Option<PathBuf>,
    },
    /// Train one user's model.
    Train {
        #[arg(long)]
        user: u32,
        /// Directory with features_train.csv from `features`.
        #[arg(long)]
        features_dir: Option<PathBuf>,
    },
    /// Run an evaluation scenario and write reports, tables, ROC points and a manifest.
    Run {
        #[arg(long, value_parser = parse_scenario)]
        scenario: Scenario,
        /// action | set:<k> | session
        #[arg(long, default_value = "action", value_parser = parse_protocol)]
        protocol: Protocol,
        /// Restrict scenario A to one action kind (MM, PC or DD).
        #[arg(long, value_parser = parse_kind)]
        kind: Option<ActionKind>,
        /// Directory with feature CSVs from `features`.
        #[arg(long)]
        features_dir: Option<PathBuf>,
        /// Scenario B session protocol once per resampling method.
        #[arg(long)]
        smoothing: bool,
    },
    /// Rank features by gain ratio.
    RankFeatures {
        #[arg(long, value_enum, default_value = "per-user")]
        target: RankTarget,
        #[arg(long)]
        features_dir: Option<PathBuf>,
    },
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse()
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse()
}

fn parse_kind(s: &str) -> Result<ActionKind, String> {
    s.to_ascii_uppercase().parse()
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let settings = settings::Settings::load(cli.global.config.as_deref())?;
    let ctx = commands::Ctx {
        global: cli.global,
        settings,
    };
    match cli.cmd {
        Cmd::Fetch { url, sha256 } => {
            let dest = ctx.global.data_root.clone().unwrap_or_else(|| ctx.global.out.clone());
            let rec = fetch::fetch(&url, &dest, sha256.as_deref(), ctx.global.force)?;
            println!("{}", serde_json::to_string(&rec)?);
            Ok(())
        }
        Cmd::Synth {
            users,
            training_sessions,
            test_sessions,
            actions,
        } => commands::synth(
            &ctx,
            mousedyn::synth::SynthConfig {
                users,
                training_sessions,
                test_sessions,
                actions_per_session: actions,
                messy: false,
                seed: ctx.global.seed,
            },
        ),
        Cmd::Stats => commands::stats(&ctx),
        Cmd::Segment => commands::segment(&ctx),
        Cmd::Features { actions } => commands::features(&ctx, actions.as_deref()),
        Cmd::Train { user, features_dir } => commands::train(&ctx, user, features_dir.as_deref()),
        Cmd::Run {
            scenario,
            protocol,
            kind,
            features_dir,
            smoothing,
        } => commands::run(
            &ctx,
            commands::RunArgs {
                scenario,
                protocol,
                kind,
                features_dir,
                smoothing,
            },
        ),
        Cmd::RankFeatures { target, features_dir } => commands::rank_features(&ctx, target, features_dir.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": format!("{e:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
