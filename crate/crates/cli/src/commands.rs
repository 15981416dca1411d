use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use serde::Serialize;

use mousedyn::eval::{
    action_set_table, compute_roc, cross_validate, pooled_window_scores, scenario_a_report, scenario_b,
    smoothing_experiment, train_user_models, EvalReport, RocCurve, ScenarioAReport, ScenarioBReport, ScoreSet, Summary,
    UserCrossVal,
};
use mousedyn::features::{read_features_csv, write_features_csv, ActionFeatures};
use mousedyn::forest::{build_user_dataset, train_forest};
use mousedyn::ingest::{load_corpus, role_counts, RoleCounts, Session};
use mousedyn::pipeline::{
    build_feature_corpus, corpus_stats, group_by_user, group_test_sessions, segment_corpus, FeatureConfig,
    FeatureCorpus, SessionActions,
};
use mousedyn::resample::{ResampleConfig, ResampleMethod};
use mousedyn::seed::{derive_seed, TAG_MODEL};
use mousedyn::{ActionKind, EvalParams, ForestParams, Protocol, Scenario};

use crate::artifacts::{config_hash, corpus_hash, create_file, git_describe, Manifest, OutDir, Stamp};
use crate::settings::Settings;
use crate::{Global, RankTarget};

pub const FEATURES_TRAIN: &str = "features_train.csv";
pub const FEATURES_TEST: &str = "features_test.csv";

pub struct Ctx {
    pub global: Global,
    pub settings: Settings,
}

/// Everything that determines a command's results; hashed into every artifact.
#[derive(Debug, Serialize)]
struct EchoConfig<'a> {
    command: &'a str,
    #[serde(flatten)]
    global: &'a Global,
    resample: ResampleConfig,
    settings: &'a Settings,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<serde_json::Value>,
}

impl Ctx {
    fn resample(&self) -> anyhow::Result<ResampleConfig> {
        Ok(ResampleConfig::new(self.global.resample, self.global.hz)?)
    }

    fn feature_config(&self) -> anyhow::Result<FeatureConfig> {
        Ok(FeatureConfig {
            resample: self.resample()?,
            sharp_threshold: self.settings.sharp_threshold,
        })
    }

    fn eval_params(&self) -> EvalParams {
        EvalParams {
            seed: self.global.seed,
            folds: self.settings.folds,
            forest: ForestParams {
                num_trees: self.global.trees,
                ..ForestParams::default()
            },
            threshold: self.settings.threshold,
        }
    }

    fn stamp(&self, command: &str, extra: Option<serde_json::Value>) -> anyhow::Result<(Stamp, serde_json::Value)> {
        let echo = EchoConfig {
            command,
            global: &self.global,
            resample: self.resample()?,
            settings: &self.settings,
            extra,
        };
        let value = serde_json::to_value(&echo)?;
        Ok((
            Stamp {
                seed: self.global.seed,
                config_hash: config_hash(&value),
            },
            value,
        ))
    }

    fn data_root(&self) -> anyhow::Result<&Path> {
        self.global
            .data_root
            .as_deref()
            .context("--data-root (or MOUSEDYN_DATA_ROOT) is required")
    }

    fn labels(&self) -> anyhow::Result<&Path> {
        let p = self
            .global
            .labels
            .as_deref()
            .context("labeled test data required: pass --labels (or MOUSEDYN_LABELS)")?;
        ensure!(p.is_file(), "labels file {} not found", p.display());
        Ok(p)
    }

    fn load(&self, training_only: bool) -> anyhow::Result<Vec<Session>> {
        let root = self.data_root()?;
        ensure!(root.is_dir(), "data root {} is not a directory", root.display());
        let labels = if training_only {
            None
        } else {
            self.global.labels.as_deref()
        };
        let sessions = load_corpus(root, labels, &self.settings.load_options(training_only))
            .with_context(|| format!("loading corpus under {}", root.display()))?;
        ensure!(
            !sessions.is_empty(),
            "empty corpus: no session files under {}",
            root.display()
        );
        Ok(sessions)
    }

    fn segmented(&self, training_only: bool) -> anyhow::Result<Vec<SessionActions>> {
        Ok(segment_corpus(
            &self.load(training_only)?,
            &self.settings.segment_config(),
        ))
    }

    fn corpus_hash(&self) -> anyhow::Result<Option<String>> {
        match &self.global.data_root {
            Some(root) if root.is_dir() => Ok(Some(corpus_hash(root, self.global.labels.as_deref())?)),
            _ => Ok(None),
        }
    }

    /// Training features (and test sessions when `with_test`) from a feature
    /// directory or straight from the corpus.
    fn feature_corpus(&self, features_dir: Option<&Path>, with_test: bool) -> anyhow::Result<FeatureCorpus> {
        if let Some(dir) = features_dir {
            if self.global.resample != ResampleMethod::None {
                log::warn!("--resample is ignored when features are read from {}", dir.display());
            }
            let training = group_by_user(read_features(&dir.join(FEATURES_TRAIN))?);
            let test = if with_test {
                group_test_sessions(read_features(&dir.join(FEATURES_TEST))?)
            } else {
                Vec::new()
            };
            return Ok(FeatureCorpus { training, test });
        }
        let sessions = self.segmented(!with_test)?;
        Ok(build_feature_corpus(&sessions, &self.feature_config()?)?)
    }

    fn finish_manifest(
        &self,
        out: &OutDir,
        name: &str,
        stamp: &Stamp,
        config: &serde_json::Value,
        artifacts: Vec<String>,
    ) -> anyhow::Result<()> {
        let manifest = Manifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            git_describe: git_describe(),
            corpus_sha256: self.corpus_hash()?,
            seed: stamp.seed,
            config_hash: &stamp.config_hash,
            config,
            artifacts,
        };
        out.write_json(name, &manifest)
    }
}

fn read_features(path: &Path) -> anyhow::Result<Vec<ActionFeatures>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_features_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

/// `name.csv` with the stamp preamble followed by `rows`.
fn write_table<R: Serialize>(out: &OutDir, name: &str, stamp: &Stamp, rows: &[R]) -> anyhow::Result<()> {
    let mut w = out.create(name)?;
    stamp.write_preamble(&mut w)?;
    let mut c = csv_writer(w);
    for r in rows {
        c.serialize(r)?;
    }
    c.flush()?;
    Ok(())
}

pub fn synth(ctx: &Ctx, cfg: mousedyn::synth::SynthConfig) -> anyhow::Result<()> {
    let root = ctx.data_root()?;
    for part in [mousedyn::ingest::TRAINING_DIR, mousedyn::ingest::TEST_DIR] {
        crate::artifacts::check_writable(&root.join(part), ctx.global.force)?;
    }
    let corpus = mousedyn::synth::generate(&cfg);
    let labels = mousedyn::synth::write_corpus(&corpus, root)?;
    println!(
        "{} sessions written; labels in {}",
        corpus.sessions.len(),
        labels.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct HistRow {
    name: String,
    sessions: usize,
    mm: usize,
    pc: usize,
    dd: usize,
    total: usize,
}

#[derive(Serialize)]
struct StatsReport<'a> {
    seed: u64,
    config_hash: &'a str,
    sessions: RoleCounts,
    training: mousedyn::segment::ActionHistogram,
    test: mousedyn::segment::ActionHistogram,
    per_user: &'a BTreeMap<u32, mousedyn::segment::ActionHistogram>,
}

pub fn stats(ctx: &Ctx) -> anyhow::Result<()> {
    let out = OutDir::new(&ctx.global.out, ctx.global.force)?;
    let names = [
        "stats.json",
        "stats_parts.csv",
        "stats_users.csv",
        "manifest_stats.json",
    ]
    .map(String::from);
    out.claim(&names)?;
    let (stamp, config) = ctx.stamp("stats", None)?;
    let training_only = ctx.global.labels.is_none();
    if training_only {
        log::warn!("no --labels given; the test part is skipped");
    }
    let sessions = ctx.load(training_only)?;
    let counts = role_counts(&sessions);
    let actions = segment_corpus(&sessions, &ctx.settings.segment_config());
    let st = corpus_stats(&actions);

    let mut per_user_sessions: BTreeMap<u32, usize> = BTreeMap::new();
    for s in sessions.iter().filter(|s| !s.role.is_test()) {
        *per_user_sessions.entry(s.user_id).or_default() += 1;
    }
    let row = |name: String, sessions: usize, h: &mousedyn::segment::ActionHistogram| HistRow {
        name,
        sessions,
        mm: h.mm,
        pc: h.pc,
        dd: h.dd,
        total: h.total(),
    };
    let parts = vec![
        row("training".into(), counts.training, &st.training),
        row("test".into(), counts.test_positive + counts.test_negative, &st.test),
    ];
    let users: Vec<HistRow> = st
        .per_user
        .iter()
        .map(|(u, h)| row(format!("user{u}"), per_user_sessions.get(u).copied().unwrap_or(0), h))
        .collect();
    out.write_json(
        "stats.json",
        &StatsReport {
            seed: stamp.seed,
            config_hash: &stamp.config_hash,
            sessions: counts,
            training: st.training,
            test: st.test,
            per_user: &st.per_user,
        },
    )?;
    write_table(&out, "stats_parts.csv", &stamp, &parts)?;
    write_table(&out, "stats_users.csv", &stamp, &users)?;
    ctx.finish_manifest(&out, "manifest_stats.json", &stamp, &config, names[..3].to_vec())?;
    println!(
        "training: {} sessions, MM {} PC {} DD {} (total {})",
        counts.training,
        st.training.mm,
        st.training.pc,
        st.training.dd,
        st.training.total()
    );
    println!(
        "test: {} positive, {} negative sessions, MM {} PC {} DD {} (total {})",
        counts.test_positive,
        counts.test_negative,
        st.test.mm,
        st.test.pc,
        st.test.dd,
        st.test.total()
    );
    Ok(())
}

#[derive(Serialize)]
struct SegmentRow<'a> {
    user_id: u32,
    session_id: &'a str,
    kind: ActionKind,
    n_points: usize,
    start_t: f64,
    end_t: f64,
}

pub fn segment(ctx: &Ctx) -> anyhow::Result<()> {
    let out = OutDir::new(&ctx.global.out, ctx.global.force)?;
    let names = ["segments.csv", "actions.jsonl", "manifest_segment.json"].map(String::from);
    out.claim(&names)?;
    let (stamp, config) = ctx.stamp("segment", None)?;
    let sessions = ctx.segmented(ctx.global.labels.is_none())?;

    let mut rows = Vec::new();
    for sa in &sessions {
        for a in &sa.actions {
            rows.push(SegmentRow {
                user_id: sa.user_id,
                session_id: &sa.session_id,
                kind: a.kind,
                n_points: a.len(),
                start_t: a.start_time(),
                end_t: a.end_time(),
            });
        }
    }
    write_table(&out, "segments.csv", &stamp, &rows)?;
    let mut w = out.create("actions.jsonl")?;
    for sa in &sessions {
        serde_json::to_writer(&mut w, sa)?;
        writeln!(w)?;
    }
    w.flush()?;
    ctx.finish_manifest(&out, "manifest_segment.json", &stamp, &config, names[..2].to_vec())?;
    println!("{} actions from {} sessions", rows.len(), sessions.len());
    Ok(())
}

fn read_actions(path: &Path) -> anyhow::Result<Vec<SessionActions>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| {
            let l = l?;
            serde_json::from_str(&l).with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

pub fn features(ctx: &Ctx, actions: Option<&Path>) -> anyhow::Result<()> {
    let out = OutDir::new(&ctx.global.out, ctx.global.force)?;
    let names = [FEATURES_TRAIN, FEATURES_TEST, "manifest_features.json"].map(String::from);
    out.claim(&names)?;
    let (stamp, config) = ctx.stamp("features", None)?;
    let sessions = match actions {
        Some(p) => read_actions(p)?,
        None => ctx.segmented(ctx.global.labels.is_none())?,
    };
    let corpus = build_feature_corpus(&sessions, &ctx.feature_config()?)?;
    let train: Vec<ActionFeatures> = corpus.training.values().flatten().cloned().collect();
    let test: Vec<ActionFeatures> = corpus.test.iter().flat_map(|s| s.actions.iter().cloned()).collect();
    write_features_csv(out.create(FEATURES_TRAIN)?, &stamp.preamble(), &train)?;
    write_features_csv(out.create(FEATURES_TEST)?, &stamp.preamble(), &test)?;
    ctx.finish_manifest(&out, "manifest_features.json", &stamp, &config, names[..2].to_vec())?;
    println!("{} training and {} test feature rows", train.len(), test.len());
    Ok(())
}

/// Model path: `--out` itself when it names a file, else a file inside it.
fn model_path(out: &Path, user: u32) -> PathBuf {
    if out.is_dir() || out.extension().is_none() {
        out.join(format!("model_user{user}.bin"))
    } else {
        out.to_path_buf()
    }
}

pub fn train(ctx: &Ctx, user: u32, features_dir: Option<&Path>) -> anyhow::Result<()> {
    let path = model_path(&ctx.global.out, user);
    crate::artifacts::check_writable(&path, ctx.global.force)?;
    let corpus = ctx.feature_corpus(features_dir, false)?;
    ensure!(
        corpus.training.contains_key(&user),
        "user {user} has no training actions"
    );
    let params = ctx.eval_params();
    let ds = build_user_dataset(&corpus.training, user, params.seed)?;
    let model = train_forest(
        &ds,
        ForestParams {
            seed: derive_seed(params.seed, &[TAG_MODEL, u64::from(user)]),
            ..params.forest
        },
    )?;
    let mut w = create_file(&path, ctx.global.force)?;
    model.save(&mut w)?;
    w.flush()?;
    println!(
        "model for user {user} ({} rows) written to {}",
        ds.len(),
        path.display()
    );
    Ok(())
}

pub struct RunArgs {
    pub scenario: Scenario,
    pub protocol: Protocol,
    pub kind: Option<ActionKind>,
    pub features_dir: Option<PathBuf>,
    pub smoothing: bool,
}

#[derive(Serialize)]
struct UserRow {
    user: String,
    acc: f64,
    auc: f64,
    eer: f64,
    eer_threshold: Option<f64>,
    fnr: f64,
    fpr: f64,
    n_positive: Option<usize>,
    n_negative: Option<usize>,
}

fn user_rows(per_user: &[EvalReport], mean: Option<Summary>, std: Option<Summary>) -> Vec<UserRow> {
    let mut rows: Vec<UserRow> = per_user
        .iter()
        .map(|r| UserRow {
            user: r.user.map_or_else(|| "all".into(), |u| u.to_string()),
            acc: r.acc,
            auc: r.auc,
            eer: r.eer,
            eer_threshold: Some(r.eer_threshold),
            fnr: r.fnr,
            fpr: r.fpr,
            n_positive: Some(r.n_positive),
            n_negative: Some(r.n_negative),
        })
        .collect();
    for (name, s) in [("avg", mean), ("std", std)] {
        if let Some(s) = s {
            rows.push(UserRow {
                user: name.into(),
                acc: s.acc,
                auc: s.auc,
                eer: s.eer,
                eer_threshold: None,
                fnr: s.fnr,
                fpr: s.fpr,
                n_positive: None,
                n_negative: None,
            });
        }
    }
    rows
}

#[derive(Serialize)]
struct RocRow {
    threshold: f64,
    fpr: f64,
    tpr: f64,
}

fn write_roc(out: &OutDir, name: &str, stamp: &Stamp, roc: &RocCurve) -> anyhow::Result<()> {
    let rows: Vec<RocRow> = roc
        .points
        .iter()
        .map(|p| RocRow {
            threshold: p.threshold,
            fpr: p.fpr,
            tpr: p.tpr,
        })
        .collect();
    write_table(out, name, stamp, &rows)
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    seed: u64,
    config_hash: &'a str,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct GlobalRoc {
    auc: f64,
    auc_trapezoid: f64,
    eer: f64,
    eer_threshold: f64,
}

impl From<&RocCurve> for GlobalRoc {
    fn from(r: &RocCurve) -> Self {
        Self {
            auc: r.auc,
            auc_trapezoid: r.auc_trapezoid,
            eer: r.eer,
            eer_threshold: r.eer_threshold,
        }
    }
}

#[derive(Serialize)]
struct ScenarioAOut<'a> {
    report: &'a ScenarioAReport,
    pooled: GlobalRoc,
}

#[derive(Serialize)]
struct ScenarioBOut<'a> {
    global: &'a EvalReport,
    per_user: &'a [EvalReport],
    mean: Option<Summary>,
    std: Option<Summary>,
    skipped_sessions: usize,
    auc_trapezoid: f64,
}

fn pooled_cv(cv: &[UserCrossVal]) -> ScoreSet {
    let mut s = ScoreSet::default();
    for c in cv {
        s.extend(&c.score_set());
    }
    s
}

fn experiment_name(args: &RunArgs) -> String {
    let proto = match args.protocol {
        Protocol::ActionSet(k) => format!("set{k}"),
        p => p.to_string(),
    };
    let mut name = format!(
        "{}_{}",
        args.scenario,
        if args.smoothing { "smoothing".into() } else { proto }
    );
    if let Some(k) = args.kind {
        name.push_str(&format!("_{k}"));
    }
    name
}

pub fn run(ctx: &Ctx, args: RunArgs) -> anyhow::Result<()> {
    match (args.scenario, args.protocol) {
        (Scenario::A, Protocol::Session) => bail!("scenario A has no session protocol (use action or set:<k>)"),
        (Scenario::B, _) if args.kind.is_some() => bail!("--kind applies to scenario A only"),
        (Scenario::A, _) if args.smoothing => bail!("--smoothing applies to scenario B only"),
        (_, _) if args.smoothing && args.features_dir.is_some() => {
            bail!("--smoothing re-extracts features and needs the corpus, not --features-dir")
        }
        _ => {}
    }
    let with_test = args.scenario == Scenario::B;
    if with_test && args.features_dir.is_none() {
        // Fail before any loading or training work.
        ctx.labels()?;
    }
    let name = experiment_name(&args);
    let out = OutDir::new(&ctx.global.out, ctx.global.force)?;
    let report = format!("report_{name}.json");
    let table = format!("table_{name}.csv");
    let roc = format!("roc_{name}.csv");
    let manifest = format!("manifest_{name}.json");
    out.claim(&[report.clone(), table.clone(), roc.clone(), manifest.clone()])?;
    let extra = serde_json::json!({
        "scenario": args.scenario,
        "protocol": args.protocol,
        "kind": args.kind,
        "features_dir": args.features_dir,
        "smoothing": args.smoothing,
    });
    let (stamp, config) = ctx.stamp("run", Some(extra))?;
    let params = ctx.eval_params();
    let mut artifacts = vec![report.clone(), table.clone()];

    if args.smoothing {
        let sessions = ctx.segmented(false)?;
        let cfgs = [
            ResampleMethod::None,
            ResampleMethod::Linear,
            ResampleMethod::CubicSpline,
        ]
        .map(|m| ResampleConfig::new(m, ctx.global.hz))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let rows = smoothing_experiment(&sessions, &cfgs, ctx.settings.sharp_threshold, &params)?;
        #[derive(Serialize)]
        struct Row {
            method: String,
            hz: f64,
            auc: f64,
            eer: f64,
            acc: f64,
            n_positive: usize,
            n_negative: usize,
        }
        let table_rows: Vec<Row> = rows
            .iter()
            .map(|r| Row {
                method: format!("{:?}", r.resample.method).to_lowercase(),
                hz: r.resample.frequency,
                auc: r.report.auc,
                eer: r.report.eer,
                acc: r.report.acc,
                n_positive: r.report.n_positive,
                n_negative: r.report.n_negative,
            })
            .collect();
        out.write_json(
            &report,
            &Stamped {
                seed: stamp.seed,
                config_hash: &stamp.config_hash,
                body: serde_json::json!({ "rows": &rows }),
            },
        )?;
        write_table(&out, &table, &stamp, &table_rows)?;
        for r in &table_rows {
            println!("{} @ {} Hz: AUC {:.4} EER {:.4}", r.method, r.hz, r.auc, r.eer);
        }
    } else if args.scenario == Scenario::A {
        let corpus = ctx.feature_corpus(args.features_dir.as_deref(), false)?;
        let cv = cross_validate(&corpus.training, args.kind, &params)?;
        match args.protocol {
            Protocol::ActionSet(k) => {
                let ks: Vec<usize> = (1..=k).collect();
                let rows = action_set_table(&cv, &ks, params.folds)?;
                let curve = compute_roc(&pooled_window_scores(&cv, k, params.folds))?;
                out.write_json(
                    &report,
                    &Stamped {
                        seed: stamp.seed,
                        config_hash: &stamp.config_hash,
                        body: serde_json::json!({ "kind": args.kind, "rows": rows, "fold_digests": fold_digests(&cv) }),
                    },
                )?;
                write_table(&out, &table, &stamp, &rows)?;
                write_roc(&out, &roc, &stamp, &curve)?;
                artifacts.push(roc.clone());
                for r in &rows {
                    println!("k={:>3} AUC {:.4} EER {:.4}", r.k, r.auc, r.eer);
                }
            }
            _ => {
                let rep = scenario_a_report(&cv, args.kind, &params)?;
                let curve = compute_roc(&pooled_cv(&cv))?;
                out.write_json(
                    &report,
                    &Stamped {
                        seed: stamp.seed,
                        config_hash: &stamp.config_hash,
                        body: ScenarioAOut {
                            report: &rep,
                            pooled: (&curve).into(),
                        },
                    },
                )?;
                write_table(
                    &out,
                    &table,
                    &stamp,
                    &user_rows(&rep.per_user, Some(rep.mean), Some(rep.std)),
                )?;
                write_roc(&out, &roc, &stamp, &curve)?;
                artifacts.push(roc.clone());
                println!(
                    "avg ACC {:.4} AUC {:.4} EER {:.4}",
                    rep.mean.acc, rep.mean.auc, rep.mean.eer
                );
            }
        }
    } else {
        let corpus = ctx.feature_corpus(args.features_dir.as_deref(), true)?;
        let models = train_user_models(&corpus.training, &params)?;
        let b: ScenarioBReport = scenario_b(&models, &corpus.test, args.protocol, params.threshold)?;
        out.write_json(
            &report,
            &Stamped {
                seed: stamp.seed,
                config_hash: &stamp.config_hash,
                body: ScenarioBOut {
                    global: &b.global,
                    per_user: &b.per_user,
                    mean: b.mean,
                    std: b.std,
                    skipped_sessions: b.skipped_sessions,
                    auc_trapezoid: b.roc.auc_trapezoid,
                },
            },
        )?;
        let mut rows = user_rows(&b.per_user, b.mean, b.std);
        rows.extend(user_rows(std::slice::from_ref(&b.global), None, None));
        write_table(&out, &table, &stamp, &rows)?;
        write_roc(&out, &roc, &stamp, &b.roc)?;
        artifacts.push(roc.clone());
        println!(
            "{} scores ({} positive, {} negative): AUC {:.4} EER {:.4} ACC {:.4}",
            b.global.n_positive + b.global.n_negative,
            b.global.n_positive,
            b.global.n_negative,
            b.global.auc,
            b.global.eer,
            b.global.acc
        );
    }
    ctx.finish_manifest(&out, &manifest, &stamp, &config, artifacts)
}

fn fold_digests(cv: &[UserCrossVal]) -> BTreeMap<u32, &str> {
    cv.iter().map(|c| (c.user, c.fold_digest.as_str())).collect()
}

pub fn rank_features(ctx: &Ctx, target: RankTarget, features_dir: Option<&Path>) -> anyhow::Result<()> {
    let out = OutDir::new(&ctx.global.out, ctx.global.force)?;
    let target_name = match target {
        RankTarget::User => "user",
        RankTarget::Binary => "binary",
        RankTarget::PerUser => "per_user",
    };
    let table = format!("ranking_{target_name}.csv");
    let manifest = format!("manifest_ranking_{target_name}.json");
    out.claim(&[table.clone(), manifest.clone()])?;
    let (stamp, config) = ctx.stamp("rank-features", Some(serde_json::json!({ "target": target })))?;
    let corpus = ctx.feature_corpus(features_dir, false)?;
    ensure!(corpus.training.len() >= 2, "feature ranking needs at least two users");
    let ranking = mousedyn::pipeline::rank_features(&corpus.training, target.into(), ctx.global.seed)?;

    #[derive(Serialize)]
    struct Row<'a> {
        rank: usize,
        feature: &'a str,
        gain_ratio: f64,
    }
    let rows: Vec<Row> = ranking
        .iter()
        .enumerate()
        .map(|(i, (f, g))| Row {
            rank: i + 1,
            feature: f,
            gain_ratio: *g,
        })
        .collect();
    write_table(&out, &table, &stamp, &rows)?;
    ctx.finish_manifest(&out, &manifest, &stamp, &config, vec![table])?;
    for r in rows.iter().take(10) {
        println!("{:>2} {:<28} {:.4}", r.rank, r.feature, r.gain_ratio);
    }
    Ok(())
}
