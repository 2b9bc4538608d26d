//! The `bagclean` command line: `generate`, `train`, `evaluate`, `compare`.
//!
//! [`run`] parses arguments, executes one subcommand and returns the process
//! exit code: 0 on success, 2 for usage errors and missing files, 1 for
//! anything wrong with the data itself. Diagnostics go to standard error,
//! verbosity from `BAGCLEAN_LOG`; data only ever goes to files.

use std::ffi::OsString;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::classifier::ClassifierCheckpoint;
use crate::datagen::{generate, GenConfig};
use crate::dataset::{read_dataset, split, write_dataset, Dataset};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::{compare_runs, pr_auc, pr_curve, selection_metrics, write_curve_csv, RunMetrics, SelectionQuality};
use crate::policy::PolicyCheckpoint;
use crate::rules::{compile_rules, RuleSet};
use crate::trainer::{
    classifier_predictions, gold_facts, greedy_select, prepare_bags, train_and_evaluate, write_metrics_csv, Mode,
    TrainConfig,
};

pub const LOG_ENV: &str = "BAGCLEAN_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "bagclean",
    version,
    about = "Rule-guided instance selection for distantly supervised bags"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus (dataset.jsonl, train.jsonl, test.jsonl) and its rules.json.
    Generate(GenerateArgs),
    /// Train the selector and classifier; write metrics and checkpoints.
    Train(TrainArgs),
    /// Score a classifier (and the selector's choices) against a dataset.
    Evaluate(EvaluateArgs),
    /// Summarize several runs' metrics.json files.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub mode: Mode,
    #[arg(long)]
    pub episodes: usize,
    #[arg(long, required_unless_present = "seeds", conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// One independent run per seed, each under `<out>/seed-<s>/`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Worker threads for a `--seeds` sweep.
    #[arg(long, default_value_t = 1, requires = "seeds")]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON training config; may also name `eval_data`, a held-out dataset.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub classifier: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse `args` (program name first) and execute; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            eprintln!("{}", rendered.lines().next().unwrap_or("usage error"));
            return 2;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("bagclean: {e}");
            exit_code(&e)
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "error");
    let _ = env_logger::Builder::from_env(env)
        .target(env_logger::Target::Stderr)
        .try_init();
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { source, .. } if source.kind() == ErrorKind::NotFound => 2,
        _ => 1,
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Compare(a) => compare_cmd(a),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| json_error(path, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn generate_cmd(a: &GenerateArgs) -> Result<()> {
    let mut config: GenConfig = read_json(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let generated = generate(&config)?;
    let (train, test) = split(&generated.dataset.bags, config.train_fraction, config.seed)?;
    let meta = generated.dataset.meta.clone();

    create_dir(&a.out)?;
    write_dataset(&generated.dataset, a.out.join("dataset.jsonl"))?;
    write_dataset(
        &Dataset {
            meta: meta.clone(),
            bags: train,
        },
        a.out.join("train.jsonl"),
    )?;
    write_dataset(&Dataset { meta, bags: test }, a.out.join("test.jsonl"))?;
    let rules_path = a.out.join("rules.json");
    fs::write(&rules_path, generated.rules.to_json()? + "\n").map_err(|e| Error::io(&rules_path, e))?;
    let s = &generated.summary;
    info!(
        "generated {} bags, {} instances ({} noise, {} rule-matched)",
        s.n_bags, s.n_instances, s.n_noise, s.n_rule_matched
    );
    Ok(())
}

/// A training config file: [`TrainConfig`] fields plus an optional
/// `eval_data` path (relative paths resolve against the file's directory).
pub fn load_train_config(path: &Path) -> Result<(TrainConfig, Option<PathBuf>)> {
    let mut value: serde_json::Value = read_json(path)?;
    let eval = value.as_object_mut().and_then(|o| o.remove("eval_data"));
    let eval_data = match eval {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(p)) => {
            let p = PathBuf::from(p);
            Some(if p.is_relative() {
                path.parent().unwrap_or(Path::new("")).join(p)
            } else {
                p
            })
        }
        Some(other) => return Err(Error::Config(format!("eval_data must be a path string, got {other}"))),
    };
    let config = serde_json::from_value(value).map_err(|e| json_error(path, e))?;
    Ok((config, eval_data))
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let (mut config, eval_path) = match &a.config {
        Some(p) => load_train_config(p)?,
        None => (TrainConfig::default(), None),
    };
    config.mode = a.mode;
    config.episodes = a.episodes;
    config.validate()?;

    let data = read_dataset(&a.data)?;
    let rules = compile_rules(&read_text(&a.rules)?)?;
    let holdout = eval_path.as_deref().map(read_dataset).transpose()?;

    let Some(seeds) = &a.seeds else {
        config.seed = a.seed.expect("clap requires --seed without --seeds");
        return train_one(&data, holdout.as_ref(), &rules, &config, &a.out);
    };
    if a.jobs == 0 {
        return Err(Error::Argument("--jobs must be at least 1".into()));
    }
    let next = AtomicUsize::new(0);
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..a.jobs.min(seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = seeds.get(i) else { break };
                let config = TrainConfig { seed, ..config.clone() };
                let out = a.out.join(format!("seed-{seed}"));
                if let Err(e) = train_one(&data, holdout.as_ref(), &rules, &config, &out) {
                    first_error.lock().expect("error slot poisoned").get_or_insert(e);
                }
            });
        }
    });
    match first_error.into_inner().expect("error slot poisoned") {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn train_one(
    data: &Dataset,
    holdout: Option<&Dataset>,
    rules: &RuleSet,
    config: &TrainConfig,
    out: &Path,
) -> Result<()> {
    let (outcome, metrics) = train_and_evaluate(data, holdout, rules, config)?;
    create_dir(out)?;
    write_metrics_csv(&metrics.episodes, out.join("metrics.csv"))?;
    metrics.save(out.join("metrics.json"))?;
    let meta = &data.meta;
    PolicyCheckpoint::new(&outcome.state.policy_live, meta.d_s, meta.d_e).save(out.join("policy.json"))?;
    ClassifierCheckpoint::new(&outcome.state.classifier_live, &meta.relations, config.hash_seed)
        .save(out.join("classifier.json"))?;
    info!(
        "seed {}: pr_auc {:.4}, written to {}",
        config.seed,
        metrics.pr_auc,
        out.display()
    );
    Ok(())
}

/// Written by `evaluate` as `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct EvaluationReport {
    pub n_bags: usize,
    pub n_predictions: usize,
    pub n_gold_facts: usize,
    pub pr_auc: f64,
    /// Fraction of instances the selector keeps when acting greedily.
    pub selection_rate: f64,
    /// Greedy selections against gold flags, when the dataset has them.
    pub selection: Option<SelectionQuality>,
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let policy_ck: PolicyCheckpoint = read_json(&a.policy)?;
    let classifier_ck: ClassifierCheckpoint = read_json(&a.classifier)?;
    let policy = policy_ck.params()?;
    let classifier = classifier_ck.params()?;
    let data = read_dataset(&a.data)?;
    let meta = &data.meta;
    if classifier_ck.relations != meta.relations {
        return Err(Error::Validation(format!(
            "classifier relations {:?} differ from dataset relations {:?}",
            classifier_ck.relations, meta.relations
        )));
    }
    if policy_ck.d_s != meta.d_s || classifier_ck.d_s != meta.d_s || policy_ck.d_e != meta.d_e {
        return Err(Error::Validation(format!(
            "checkpoint dimensions (policy d_s {} d_e {}, classifier d_s {}) do not fit dataset (d_s {}, d_e {})",
            policy_ck.d_s, policy_ck.d_e, classifier_ck.d_s, meta.d_s, meta.d_e
        )));
    }

    let encoder = EncoderConfig {
        d_s: meta.d_s,
        hash_seed: classifier_ck.hash_seed,
    };
    let bags = prepare_bags(&data, &RuleSet::empty(), &encoder)?;
    let predictions = classifier_predictions(&bags, &classifier, &meta.relations)?;
    let gold = gold_facts(&bags, &meta.relations);
    let curve = pr_curve(&predictions, &gold)?;

    let chosen = bags
        .iter()
        .map(|b| greedy_select(b, &policy))
        .collect::<Result<Vec<_>>>()?;
    let kept: usize = chosen.iter().map(Vec::len).sum();
    let total: usize = bags.iter().map(|b| b.len()).sum();
    let selection = if data.has_gold() {
        Some(selection_metrics(&chosen, &data.gold_flags())?)
    } else {
        None
    };
    let report = EvaluationReport {
        n_bags: bags.len(),
        n_predictions: predictions.len(),
        n_gold_facts: gold.len(),
        pr_auc: pr_auc(&curve),
        selection_rate: if total == 0 { 0.0 } else { kept as f64 / total as f64 },
        selection,
    };

    create_dir(&a.out)?;
    write_curve_csv(&curve, a.out.join("curve.csv"))?;
    write_json(&report, &a.out.join("report.json"))?;
    info!("pr_auc {:.4} over {} bags", report.pr_auc, report.n_bags);
    Ok(())
}

fn compare_cmd(a: &CompareArgs) -> Result<()> {
    let runs = a
        .runs
        .iter()
        .map(|p| Ok((p.display().to_string(), read_json::<RunMetrics>(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let report = compare_runs(&runs)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    report.save(&a.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("bagclean").chain(args.iter().copied()))
    }

    #[test]
    fn train_needs_a_seed() {
        let base = [
            "train",
            "--data",
            "d",
            "--rules",
            "r",
            "--mode",
            "pr",
            "--episodes",
            "3",
            "--out",
            "o",
        ];
        assert!(parse(&base).is_err());
        let with_seed: Vec<&str> = base.iter().copied().chain(["--seed", "4"]).collect();
        assert!(parse(&with_seed).is_ok());
        let sweep: Vec<&str> = base
            .iter()
            .copied()
            .chain(["--seeds", "1,2,3", "--jobs", "2"])
            .collect();
        match parse(&sweep).unwrap().command {
            Command::Train(t) => assert_eq!(t.seeds, Some(vec![1, 2, 3])),
            other => panic!("parsed as {other:?}"),
        }
    }

    #[test]
    fn unknown_mode_and_flag_are_usage_errors() {
        let bad_mode = [
            "train",
            "--data",
            "d",
            "--rules",
            "r",
            "--mode",
            "greedy",
            "--episodes",
            "3",
            "--seed",
            "1",
            "--out",
            "o",
        ];
        assert!(parse(&bad_mode).is_err());
        assert_eq!(run(["bagclean", "compare", "--bogus"]), 2);
        assert_eq!(run(["bagclean"]), 2);
    }

    #[test]
    fn missing_file_exits_2() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("nope.json");
        let code = run([
            "bagclean".as_ref(),
            "generate".as_ref(),
            "--config".as_ref(),
            cfg.as_os_str(),
            "--out".as_ref(),
            dir.path().as_os_str(),
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn eval_data_resolves_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("train.json");
        fs::write(&p, r#"{"lr_policy": 0.02, "eval_data": "test.jsonl"}"#).unwrap();
        let (cfg, eval) = load_train_config(&p).unwrap();
        assert_eq!(cfg.lr_policy, 0.02);
        assert_eq!(cfg.tau, 0.005);
        assert_eq!(eval, Some(dir.path().join("test.jsonl")));
    }

    #[test]
    fn bad_config_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gen.json");
        fs::write(&p, r#"{"noise_rate": 1.5}"#).unwrap();
        let code = run([
            "bagclean".as_ref(),
            "generate".as_ref(),
            "--config".as_ref(),
            p.as_os_str(),
            "--out".as_ref(),
            dir.path().join("o").as_os_str(),
        ]);
        assert_eq!(code, 1);
    }
}
