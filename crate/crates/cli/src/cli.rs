use std::ffi::OsString;
use std::fs;
use std::io::{self, Read, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use apifk_core::knowledge::{self, mine_knowledge, MineConfig};
use apifk_core::log_model::{load_log, write_log};
use apifk_core::metrics::compute_sr;
use apifk_core::predictor::{checkpoint, precision, split_holdout, train_with};
use apifk_core::{generate, ApiCallRecord, ApiCatalog, ConvNetModel, ModelCfg, OutcomeLabel, RankWeights, Scenario, TrainCfg, Variant};
use clap::{Args, Parser, Subcommand};

use crate::server::{self, AppState};

pub const KNOWLEDGE_DIR_ENV: &str = "APIFK_KNOWLEDGE_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "apifk", version, about = "Mine API call logs and predict call outcomes before execution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic call log from a scenario.
    Simulate(SimulateArgs),
    /// Mine per-API knowledge documents from a call log.
    Mine(MineArgs),
    /// Train the outcome predictor on a call log.
    Train(TrainArgs),
    /// Predict the outcome of one request.
    Predict(PredictArgs),
    /// Serve knowledge, predictions and simulated calls over HTTP.
    Serve(ServeArgs),
    /// Success rate of the calls in a log.
    Sr(SrArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file (JSON); the built-in SMS scenario when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Restrict the scenario to one API.
    #[arg(long)]
    pub api: Option<String>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Output directory; `APIFK_KNOWLEDGE_DIR` takes precedence.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// API catalog (JSON list of specs); defaults to the scenario's catalog.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Distinct-value bound for enumerations.
    #[arg(long, default_value_t = 20)]
    pub threshold: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Producers kept per input parameter.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Checkpoint path.
    #[arg(long = "out", visible_alias = "model")]
    pub model: PathBuf,
    #[arg(long, default_value = "tiny", value_parser = ["large", "small", "tiny"])]
    pub variant: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop after this many epochs instead of the full schedule.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Defaults to 16 for tiny and 128 otherwise.
    #[arg(long)]
    pub minibatch: Option<usize>,
    /// Fraction of the log held out for evaluation.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Request JSON `{"api": ..., "params": {...}}`; `-` reads stdin.
    #[arg(long)]
    pub request: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Knowledge directory; `APIFK_KNOWLEDGE_DIR` takes precedence.
    #[arg(long)]
    pub knowledge: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct SrArgs {
    #[arg(long)]
    pub log: PathBuf,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let env_dir = std::env::var_os(KNOWLEDGE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let stdout = io::stdout();
    match execute(cli.command, env_dir, &mut stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn knowledge_dir(env_dir: Option<PathBuf>, flag: Option<PathBuf>, flag_name: &str) -> Result<PathBuf> {
    env_dir
        .or(flag)
        .with_context(|| format!("no knowledge directory: pass {flag_name} or set {KNOWLEDGE_DIR_ENV}"))
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario> {
    let scenario = match &args.scenario {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
            Scenario::from_json(&text).with_context(|| format!("parsing scenario {}", path.display()))?
        }
        None => Scenario::default(),
    };
    Ok(match args.seed {
        Some(seed) => scenario.with_seed(seed),
        None => scenario,
    })
}

fn read_records(path: &Path) -> Result<Vec<ApiCallRecord>> {
    let loaded = load_log(path).with_context(|| format!("reading log {}", path.display()))?;
    if loaded.skipped > 0 {
        eprintln!("skipped {} malformed line(s) in {}", loaded.skipped, path.display());
    }
    Ok(loaded.records)
}

fn emit(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string(value)?)?;
    Ok(())
}

/// Runs one command, writing results to `out`.
pub fn execute(command: Command, env_dir: Option<PathBuf>, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Simulate(args) => {
            let mut scenario = load_scenario(&args.scenario)?;
            if let Some(api) = &args.api {
                scenario = scenario.only(api)?;
            }
            let records = generate(&scenario, args.n)?;
            write_log(&args.out, &records).with_context(|| format!("writing {}", args.out.display()))?;
            emit(out, &serde_json::json!({ "records": records.len(), "out": args.out }))
        }
        Command::Mine(args) => {
            let dir = knowledge_dir(env_dir, args.out, "--out")?;
            let catalog = match &args.catalog {
                Some(path) => ApiCatalog::from_json(&fs::read_to_string(path)?)
                    .with_context(|| format!("parsing catalog {}", path.display()))?,
                None => load_scenario(&args.scenario)?.catalog()?,
            };
            let cfg = MineConfig {
                enum_threshold: args.threshold,
                edge_k: args.k,
                weights: RankWeights::new(args.alpha, args.beta, args.sigma)?,
                ..MineConfig::default()
            };
            let records = read_records(&args.log)?;
            let docs = mine_knowledge(&records, &catalog, &cfg)?;
            let paths = knowledge::save_all(&dir, &docs)?;
            emit(out, &serde_json::json!({ "records": records.len(), "documents": paths }))
        }
        Command::Train(args) => {
            if !(0.0..1.0).contains(&args.holdout) {
                bail!("--holdout must be in [0, 1)");
            }
            let variant: Variant = args.variant.parse()?;
            let records = read_records(&args.log)?;
            let (train_set, holdout) = split_holdout(&records, args.holdout, args.seed);
            // Labels come from the whole log so holdout-only codes keep an index.
            let labels = ModelCfg::canonical_labels(records.iter().map(|r| &r.outcome));
            let model_cfg = ModelCfg::for_variant(variant, labels);
            let shell = ConvNetModel::zeroed(model_cfg.clone())?;
            let examples = train_set.iter().map(|r| shell.example(r)).collect::<Result<Vec<_>, _>>()?;
            let cfg = TrainCfg {
                minibatch: args.minibatch.unwrap_or(if variant == Variant::Tiny { 16 } else { 128 }),
                seed: args.seed,
                epochs: args.epochs,
                ..TrainCfg::default()
            };
            let mut epoch_err = None;
            let trained = train_with(&examples, model_cfg, &cfg, |m| {
                if epoch_err.is_none() {
                    epoch_err = emit(out, m).err();
                }
            })?;
            if let Some(e) = epoch_err {
                return Err(e);
            }
            checkpoint::save(&trained.model, &args.model)
                .with_context(|| format!("writing {}", args.model.display()))?;
            let report = if holdout.is_empty() {
                None
            } else {
                let preds = holdout
                    .iter()
                    .map(|r| trained.model.predict(r).map(|p| p.label))
                    .collect::<Result<Vec<_>, _>>()?;
                let truth: Vec<OutcomeLabel> = holdout.iter().map(|r| r.outcome.clone()).collect();
                Some(precision(&preds, &truth)?)
            };
            emit(
                out,
                &serde_json::json!({ "model": args.model, "train": train_set.len(), "holdout": report }),
            )
        }
        Command::Predict(args) => {
            let model = checkpoint::load(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
            let text = if args.request.as_os_str() == "-" {
                let mut s = String::new();
                io::stdin().read_to_string(&mut s)?;
                s
            } else {
                fs::read_to_string(&args.request).with_context(|| format!("reading {}", args.request.display()))?
            };
            let body = server::parse_call_body(text.as_bytes()).map_err(|e| anyhow::anyhow!(e.message))?;
            let record = ApiCallRecord {
                api: body.api,
                params: body.params,
                outcome: OutcomeLabel::Right,
                session_id: String::new(),
                timestamp: 0,
            };
            let p = model.predict(&record)?;
            let probabilities: Vec<_> = p
                .probabilities
                .iter()
                .map(|(l, q)| serde_json::json!({ "label": l, "probability": q }))
                .collect();
            emit(
                out,
                &serde_json::json!({ "label": p.label, "probability": p.probability, "probabilities": probabilities }),
            )
        }
        Command::Serve(args) => {
            let dir = knowledge_dir(env_dir, args.knowledge, "--knowledge")?;
            fs::create_dir_all(&dir)?;
            let docs = knowledge::load_all(&dir).with_context(|| format!("loading knowledge from {}", dir.display()))?;
            let model = match &args.model {
                Some(path) => Some(checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?),
                None => None,
            };
            let state = Arc::new(AppState::new(
                docs,
                model,
                load_scenario(&args.scenario)?,
                Some(dir),
                MineConfig::default(),
            ));
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(server::serve(state, SocketAddr::new(args.host, args.port)))
        }
        Command::Sr(args) => {
            let records = read_records(&args.log)?;
            emit(out, &compute_sr(&records))
        }
    }
}
