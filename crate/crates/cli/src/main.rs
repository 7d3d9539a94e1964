use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use dualpath::artifacts::{
    read_study_metrics, write_curve, write_jsonl, write_json, write_study_means, write_study_metrics, write_t_tests,
    write_trace, write_training_curve, Manifest,
};
use dualpath::config::{ExperimentConfig, ModelEntry};
use dualpath::harness::{run_simulation, run_study, run_trial, summarize, StudyReport};
use dualpath::hpo::{run_hpo, HpoBase};
use dualpath::model::Variant;
use dualpath::rng::stream;
use dualpath::task::TrialSpec;

#[derive(Parser)]
#[command(name = "dualpath", version, about = "Reservoir pathway models on a temporal two-arm bandit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one model, writing per-trial logs and the training curve.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the first seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Picks a model when the config lists several.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Train and evaluate every model under every seed and compare against M0.
    Study {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hyperparameter search for one variant; resumes an existing study log in `--out`.
    Hpo {
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        trials: usize,
        /// Supplies the base model, timing, choice mode and training length.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep the configured leak rates instead of searching them.
        #[arg(long)]
        fix_leak_rates: bool,
    },
    /// Summarize a study directory.
    Report {
        #[arg(long)]
        study: PathBuf,
    },
    /// Train a model, then record its outputs at every step of one trial.
    Trace {
        #[arg(long)]
        config: PathBuf,
        /// Trial as inline JSON or a path to a JSON file.
        #[arg(long)]
        trial: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        variant: Option<Variant>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out, seed, variant } => train(&config, &out, seed, variant),
        Command::Study { config, out } => study(&config, out),
        Command::Hpo { variant, trials, config, out, seed, fix_leak_rates } => {
            hpo(variant, trials, config.as_deref(), out, seed, fix_leak_rates)
        }
        Command::Report { study } => report(&study),
        Command::Trace { config, trial, out, seed, variant } => trace(&config, &trial, out, seed, variant),
    }
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn manifest(command: &str, cfg: &ExperimentConfig, seeds: Vec<u64>) -> Manifest {
    Manifest::new(command, cfg.hash(), seeds).with_version(env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

fn save_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml_string()).with_context(|| format!("writing {}", path.display()))
}

fn pick_model(cfg: &ExperimentConfig, variant: Option<Variant>) -> Result<ModelEntry> {
    match variant {
        Some(v) => cfg.models.iter().find(|m| m.variant == v).cloned().with_context(|| format!("config has no {v} model")),
        None if cfg.models.len() == 1 => Ok(cfg.models[0].clone()),
        None => bail!("config lists {} models; choose one with --variant", cfg.models.len()),
    }
}

/// The config reduced to the single model and seed a run actually uses.
fn single_run(mut cfg: ExperimentConfig, seed: Option<u64>, variant: Option<Variant>) -> Result<ExperimentConfig> {
    let model = pick_model(&cfg, variant)?;
    cfg.models = vec![model];
    cfg.seeds = vec![seed.unwrap_or(cfg.seeds[0])];
    Ok(cfg)
}

fn train(config: &Path, out: &Path, seed: Option<u64>, variant: Option<Variant>) -> Result<()> {
    let cfg = single_run(load(config)?, seed, variant)?;
    let seed = cfg.seeds[0];
    let spec = cfg.simulation_spec(&cfg.models[0])?;
    info!("training {} with seed {seed}", spec.model.variant);
    let res = run_simulation(&spec, seed)?;
    save_config(out, &cfg)?;
    write_jsonl(&out.join("train_log.jsonl"), &res.history)?;
    write_training_curve(&out.join("training_curve.csv"), &res.history)?;
    write_jsonl(&out.join("eval_log.jsonl"), &res.eval_records)?;
    write_json(&out.join("metrics.json"), &res.metrics)?;
    manifest("train", &cfg, cfg.seeds.clone()).write(out)?;
    println!("{} seed {seed}: evaluation success {:.3}", spec.model.variant, res.metrics.overall);
    Ok(())
}

fn print_report(report: &StudyReport) {
    let cell = |x: f64| if x.is_nan() { "-".to_string() } else { format!("{x:.3}") };
    println!("{:<8}{:>10}{:>12}{:>12}", "variant", "overall", "best_first", "best_last");
    for m in &report.means {
        println!("{:<8}{:>10}{:>12}{:>12}", m.variant.as_str(), cell(m.overall), cell(m.best_first), cell(m.best_last));
    }
    for (v, t) in &report.t_tests {
        match t {
            Some(t) => println!("{v} vs M0: t = {:.4}, p = {:.4} (df {})", t.t, t.p, t.df),
            None => println!("{v} vs M0: no test (degenerate differences)"),
        }
    }
}

fn study(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = load(config)?;
    let out = out.unwrap_or_else(|| cfg.output_dir.clone());
    let specs = cfg.simulation_specs()?;
    info!("study: {} model(s) x {} seed(s)", specs.len(), cfg.seeds.len());
    let report = run_study(&specs, &cfg.seeds)?;
    save_config(&out, &cfg)?;
    write_study_metrics(&out.join("study_metrics.csv"), &report.rows)?;
    write_study_means(&out.join("study_means.csv"), &report)?;
    write_t_tests(&out.join("t_tests.csv"), &report)?;
    for row in &report.rows {
        let success: Vec<f64> = row.train_correct.iter().map(|&c| f64::from(u8::from(c))).collect();
        write_curve(&out.join("curves").join(format!("{}_seed{}.csv", row.variant, row.seed)), &success, None)?;
    }
    manifest("study", &cfg, cfg.seeds.clone()).write(&out)?;
    print_report(&report);
    Ok(())
}

fn hpo(variant: Variant, trials: usize, config: Option<&Path>, out: Option<PathBuf>, seed: u64, fix_leak_rates: bool) -> Result<()> {
    let mut cfg = match config {
        Some(path) => load(path)?,
        None => ExperimentConfig::from_toml_str(&format!("[[models]]\nvariant = \"{variant}\"\n"))?,
    };
    let entry = cfg.models.iter().find(|m| m.variant == variant).cloned().unwrap_or_else(|| ModelEntry::new(variant));
    let out = out.unwrap_or_else(|| PathBuf::from(format!("results/hpo_{variant}")));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let base = HpoBase {
        model: entry.model_config()?,
        policy: entry.policy.clone(),
        timing: cfg.timing.clone(),
        mode: cfg.choice_mode,
        n_train: cfg.n_train,
        fix_leak_rates,
    };
    info!("hpo for {variant}: {trials} trial(s)");
    let outcome = run_hpo(&base, trials, seed, Some(&out.join("hpo_study.csv")))?;
    cfg.models = vec![ModelEntry::from_parts(&outcome.best_model, &outcome.best_policy)];
    std::fs::write(out.join("best_config.toml"), cfg.to_toml_string())
        .with_context(|| format!("writing {}", out.join("best_config.toml").display()))?;
    manifest("hpo", &cfg, vec![seed]).write(&out)?;
    println!("{variant}: best objective {:.3} over {} trial(s)", outcome.best_objective, outcome.state.trials.len());
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        bail!("study directory {} does not exist", dir.display());
    }
    let path = dir.join("study_metrics.csv");
    if !path.exists() {
        bail!("{} has no study_metrics.csv", dir.display());
    }
    let rows = read_study_metrics(&path)?;
    if rows.is_empty() {
        bail!("{} has no rows", path.display());
    }
    print_report(&summarize(rows));
    Ok(())
}

fn read_trial(arg: &str) -> Result<TrialSpec> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading trial file {arg}"))?
    };
    let trial: TrialSpec = serde_json::from_str(text.trim()).context("parsing trial JSON")?;
    trial.validate()?;
    Ok(trial)
}

fn trace(config: &Path, trial: &str, out: Option<PathBuf>, seed: Option<u64>, variant: Option<Variant>) -> Result<()> {
    let trial = read_trial(trial)?;
    let cfg = single_run(load(config)?, seed, variant)?;
    let out = out.unwrap_or_else(|| cfg.output_dir.clone());
    let seed = cfg.seeds[0];
    let spec = cfg.simulation_spec(&cfg.models[0])?;
    let mut learner = run_simulation(&spec, seed)?.learner;
    learner.record_outputs = true;
    let record = run_trial(&mut learner, 0, &trial, 0.0, false, &mut stream(seed, "trace"))?;
    let outputs = record.outputs.clone().unwrap_or_default();
    save_config(&out, &cfg)?;
    write_trace(&out.join("trace.csv"), &outputs)?;
    write_jsonl(&out.join("trace_trial.jsonl"), &[record.clone()])?;
    manifest("trace", &cfg, cfg.seeds.clone()).write(&out)?;
    println!("{} chose position {} (correct: {})", spec.model.variant, record.choice, record.correct);
    Ok(())
}
