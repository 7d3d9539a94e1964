//! Trials, training, evaluation and multi-seed studies.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{build, route_inputs, Model, ModelConfig, Variant};
use crate::policy::{epsilon_at, select_action, update_readout, PolicyParams};
use crate::rng::{derive_seed, stream, SimRng};
use crate::stats::{paired_t_test, TTest};
use crate::task::{
    classify_scenario, correct_action, reward_for_action, sample_trial, ChoiceMode, Scenario, TimingRanges, TrialLine,
    TrialSpec, N_OPTIONS,
};

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub trial_idx: usize,
    #[serde(flatten, with = "trial_line")]
    pub trial: TrialSpec,
    pub scenario: Scenario,
    /// 1-based position (or identity when motor indirection is removed).
    pub choice: u8,
    pub correct: bool,
    pub reward: f64,
    pub epsilon: f64,
    #[serde(skip)]
    pub outputs: Option<Vec<[f64; N_OPTIONS]>>,
}

mod trial_line {
    use super::*;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(t: &TrialSpec, s: S) -> std::result::Result<S::Ok, S::Error> {
        TrialLine::from(*t).serialize(s)
    }
}

/// Something that answers trials.
pub trait Agent {
    fn mode(&self) -> ChoiceMode;

    /// Plays `trial` and returns the 0-based action plus, when recorded, the
    /// per-step outputs.
    fn play(&mut self, trial: &TrialSpec, epsilon: f64, learn: bool, rng: &mut SimRng) -> Result<(usize, Option<Vec<[f64; N_OPTIONS]>>)>;
}

/// A model with its learning rule.
#[derive(Debug, Clone)]
pub struct Learner {
    pub model: Model,
    pub policy: PolicyParams,
    pub mode: ChoiceMode,
    pub record_outputs: bool,
}

impl Learner {
    pub fn new(model: Model, policy: PolicyParams, mode: ChoiceMode) -> Self {
        Learner { model, policy, mode, record_outputs: false }
    }
}

impl Agent for Learner {
    fn mode(&self) -> ChoiceMode {
        self.mode
    }

    fn play(&mut self, trial: &TrialSpec, epsilon: f64, learn: bool, rng: &mut SimRng) -> Result<(usize, Option<Vec<[f64; N_OPTIONS]>>)> {
        self.model.reset();
        let streams = route_inputs(self.model.variant, trial);
        let mut y = [0.0; N_OPTIONS];
        let mut trace = self.record_outputs.then(Vec::new);
        for t in 0..=trial.t_reward {
            let inputs: Vec<&[f64]> = streams.iter().map(|s| s[t].as_slice()).collect();
            y = self.model.forward_step(&inputs, &y)?;
            if let Some(tr) = trace.as_mut() {
                tr.push(y);
            }
        }
        let action = select_action(&y, epsilon, rng);
        if learn {
            let reward = reward_for_action(trial, self.mode, action);
            let x = self.model.state().to_vec();
            update_readout(&mut self.model.readout, action, reward, &y, &x, &self.policy);
        }
        Ok((action, trace))
    }
}

/// Uniformly random answers.
#[derive(Debug, Clone, Default)]
pub struct RandomAgent {
    pub mode: ChoiceMode,
}

impl Agent for RandomAgent {
    fn mode(&self) -> ChoiceMode {
        self.mode
    }

    fn play(&mut self, _: &TrialSpec, _: f64, _: bool, rng: &mut SimRng) -> Result<(usize, Option<Vec<[f64; N_OPTIONS]>>)> {
        Ok((rng.gen_range(0..N_OPTIONS), None))
    }
}

/// Steps the agent through one trial and scores its answer.
pub fn run_trial<A: Agent>(agent: &mut A, trial_idx: usize, trial: &TrialSpec, epsilon: f64, learn: bool, rng: &mut SimRng) -> Result<ExperimentRecord> {
    let (action, outputs) = agent.play(trial, epsilon, learn, rng)?;
    let mode = agent.mode();
    Ok(ExperimentRecord {
        trial_idx,
        trial: *trial,
        scenario: classify_scenario(trial),
        choice: (action + 1) as u8,
        correct: action == correct_action(trial, mode),
        reward: reward_for_action(trial, mode, action),
        epsilon,
        outputs,
    })
}

/// Random streams of one simulation.
pub struct SimRngs {
    pub trials: SimRng,
    pub explore: SimRng,
}

impl SimRngs {
    pub fn new(seed: u64, phase: &str) -> Self {
        SimRngs { trials: stream(seed, &format!("{phase}/trials")), explore: stream(seed, &format!("{phase}/explore")) }
    }
}

/// `n_trials` learning trials with epsilon decaying linearly from 1 to 0.
pub fn train<A: Agent>(agent: &mut A, n_trials: usize, ranges: &TimingRanges, rngs: &mut SimRngs) -> Result<Vec<ExperimentRecord>> {
    let mut history = Vec::with_capacity(n_trials);
    for i in 0..n_trials {
        let trial = sample_trial(&mut rngs.trials, ranges)?;
        let eps = epsilon_at(i, n_trials)?;
        history.push(run_trial(agent, i, &trial, eps, true, &mut rngs.explore)?);
    }
    Ok(history)
}

/// Greedy play without learning on fresh trials.
pub fn evaluate_records<A: Agent>(agent: &mut A, n_trials: usize, ranges: &TimingRanges, rngs: &mut SimRngs) -> Result<Vec<ExperimentRecord>> {
    (0..n_trials)
        .map(|i| {
            let trial = sample_trial(&mut rngs.trials, ranges)?;
            run_trial(agent, i, &trial, 0.0, false, &mut rngs.explore)
        })
        .collect()
}

pub fn evaluate<A: Agent>(agent: &mut A, n_trials: usize, ranges: &TimingRanges, rngs: &mut SimRngs) -> Result<Metrics> {
    Ok(Metrics::from_records(&evaluate_records(agent, n_trials, ranges, rngs)?))
}

/// Success rates overall and per scenario. Category rates are `None` when the
/// category is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall: f64,
    pub best_first: Option<f64>,
    pub best_last: Option<f64>,
    pub simultaneous: Option<f64>,
    pub n_trials: usize,
    pub n_best_first: usize,
    pub n_best_last: usize,
    pub n_simultaneous: usize,
}

impl Metrics {
    pub fn from_records(records: &[ExperimentRecord]) -> Self {
        let rate = |s: Option<Scenario>| -> (Option<f64>, usize) {
            let (hits, n) = records
                .iter()
                .filter(|r| s.is_none_or(|s| r.scenario == s))
                .fold((0usize, 0usize), |(h, n), r| (h + usize::from(r.correct), n + 1));
            ((n > 0).then(|| hits as f64 / n as f64), n)
        };
        let (overall, n) = rate(None);
        let (best_first, n_bf) = rate(Some(Scenario::BestFirst));
        let (best_last, n_bl) = rate(Some(Scenario::BestLast));
        let (simultaneous, n_sim) = rate(Some(Scenario::Simultaneous));
        Metrics {
            overall: overall.unwrap_or(0.0),
            best_first,
            best_last,
            simultaneous,
            n_trials: n,
            n_best_first: n_bf,
            n_best_last: n_bl,
            n_simultaneous: n_sim,
        }
    }
}

/// Success fraction over the last `window` records.
pub fn tail_success(history: &[ExperimentRecord], window: usize) -> f64 {
    let tail = &history[history.len().saturating_sub(window)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().filter(|r| r.correct).count() as f64 / tail.len() as f64
}

/// Trailing mean over at most `window` values ending at each index.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (t, v) in values.iter().enumerate() {
        sum += v;
        if t >= window {
            sum -= values[t - window];
        }
        let n = (t + 1).min(window);
        // Recompute exactly on window boundaries to keep rounding from drifting.
        if t % 1024 == 0 {
            sum = values[t + 1 - n..=t].iter().sum();
        }
        out.push(sum / n as f64);
    }
    out
}

/// Everything needed to run one simulation apart from its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub model: ModelConfig,
    pub policy: PolicyParams,
    pub timing: TimingRanges,
    pub mode: ChoiceMode,
    pub n_train: usize,
    pub n_eval: usize,
}

pub struct SimulationResult {
    pub learner: Learner,
    pub history: Vec<ExperimentRecord>,
    pub eval_records: Vec<ExperimentRecord>,
    pub metrics: Metrics,
}

/// Builds, trains and evaluates one model under `seed`. Trial sequences depend on
/// the seed only, so different variants with the same seed see the same trials.
pub fn run_simulation(spec: &SimulationSpec, seed: u64) -> Result<SimulationResult> {
    spec.policy.validate()?;
    let mut config = spec.model.clone();
    config.seed = derive_seed(seed, "weights");
    let model = build(&config)?;
    let mut learner = Learner::new(model, spec.policy.clone(), spec.mode);
    let history = train(&mut learner, spec.n_train, &spec.timing, &mut SimRngs::new(seed, "train"))?;
    let eval_records = evaluate_records(&mut learner, spec.n_eval, &spec.timing, &mut SimRngs::new(seed, "eval"))?;
    let metrics = Metrics::from_records(&eval_records);
    Ok(SimulationResult { learner, history, eval_records, metrics })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub variant: Variant,
    pub seed: u64,
    pub metrics: Metrics,
    /// Per-trial success during training.
    #[serde(skip)]
    pub train_correct: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub overall: f64,
    pub best_first: f64,
    pub best_last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub means: Vec<VariantSummary>,
    /// Paired test of each variant's overall success against M0 (None when degenerate).
    pub t_tests: Vec<(Variant, Option<TTest>)>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> f64 {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Trains and evaluates every simulation spec under every seed (in parallel) and
/// compares each variant with M0.
pub fn run_study(specs: &[SimulationSpec], seeds: &[u64]) -> Result<StudyReport> {
    let jobs: Vec<(usize, u64)> = (0..specs.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let res = run_simulation(&specs[i], seed)?;
            Ok(StudyRow {
                variant: specs[i].model.variant,
                seed,
                metrics: res.metrics,
                train_correct: res.history.iter().map(|r| r.correct).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(rows))
}

pub fn summarize(rows: Vec<StudyRow>) -> StudyReport {
    let mut order: Vec<Variant> = Vec::new();
    for r in &rows {
        if !order.contains(&r.variant) {
            order.push(r.variant);
        }
    }
    let means = order
        .iter()
        .map(|&v| {
            let mine = || rows.iter().filter(move |r| r.variant == v);
            VariantSummary {
                variant: v,
                overall: mean_of(mine().map(|r| Some(r.metrics.overall))),
                best_first: mean_of(mine().map(|r| r.metrics.best_first)),
                best_last: mean_of(mine().map(|r| r.metrics.best_last)),
            }
        })
        .collect();
    let by_seed = |v: Variant| -> BTreeMap<u64, f64> {
        rows.iter().filter(|r| r.variant == v).map(|r| (r.seed, r.metrics.overall)).collect()
    };
    let mut t_tests = Vec::new();
    if order.contains(&Variant::M0) {
        let base = by_seed(Variant::M0);
        for &v in order.iter().filter(|&&v| v != Variant::M0) {
            let other = by_seed(v);
            let (a, b): (Vec<f64>, Vec<f64>) =
                other.iter().filter_map(|(s, x)| base.get(s).map(|y| (*x, *y))).unzip();
            t_tests.push((v, paired_t_test(&a, &b).ok()));
        }
    }
    StudyReport { rows, means, t_tests }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::StimulusSpec;

    #[test]
    fn moving_average_cases() {
        assert_eq!(moving_average(&[1.0; 80], 50), vec![1.0; 80]);
        let step: Vec<f64> = (0..100).map(|i| if i < 50 { 0.0 } else { 1.0 }).collect();
        assert_eq!(moving_average(&step, 50)[99], 1.0);
        let ramp: Vec<f64> = (0..100).map(f64::from).collect();
        let ma = moving_average(&ramp, 50);
        assert_eq!(ma[99], 74.5);
        assert_eq!(ma[0], 0.0);
        assert_eq!(ma[3], 1.5);
        assert!(moving_average(&[], 50).is_empty());
    }

    struct Oracle;

    impl Agent for Oracle {
        fn mode(&self) -> ChoiceMode {
            ChoiceMode::Position
        }

        fn play(&mut self, trial: &TrialSpec, _: f64, _: bool, _: &mut SimRng) -> Result<(usize, Option<Vec<[f64; N_OPTIONS]>>)> {
            Ok((correct_action(trial, ChoiceMode::Position), None))
        }
    }

    #[test]
    fn perfect_agent_scores_one() {
        let m = evaluate(&mut Oracle, 300, &TimingRanges::default(), &mut SimRngs::new(1, "eval")).unwrap();
        assert_eq!(m.overall, 1.0);
        assert_eq!(m.best_first, Some(1.0));
        assert_eq!(m.best_last, Some(1.0));
        assert_eq!(m.n_best_first + m.n_best_last + m.n_simultaneous, 300);
    }

    #[test]
    fn untrained_model_picks_first_position() {
        let model = build(&ModelConfig::for_variant(Variant::M1)).unwrap();
        let mut learner = Learner::new(model, PolicyParams::default(), ChoiceMode::Position);
        let before = learner.model.readout.clone();
        let trial = TrialSpec {
            stim_a: StimulusSpec { identity: 1, position: 2, onset: 5, offset: 15 },
            stim_b: StimulusSpec { identity: 3, position: 1, onset: 9, offset: 20 },
            t_reward: 29,
            length: 30,
        };
        let rec = run_trial(&mut learner, 0, &trial, 0.0, false, &mut stream(0, "x")).unwrap();
        assert_eq!(rec.choice, 1);
        assert!(!rec.correct);
        assert_eq!(rec.reward, 0.5);
        assert_eq!(learner.model.readout, before);
    }

    #[test]
    fn empty_training() {
        let model = build(&ModelConfig::for_variant(Variant::M0)).unwrap();
        let mut learner = Learner::new(model, PolicyParams::default(), ChoiceMode::Position);
        let h = train(&mut learner, 0, &TimingRanges::default(), &mut SimRngs::new(0, "train")).unwrap();
        assert!(h.is_empty());
    }

    #[test]
    fn metrics_weighting() {
        let m = evaluate(&mut RandomAgent::default(), 500, &TimingRanges::default(), &mut SimRngs::new(3, "eval")).unwrap();
        let weighted = [m.best_first.map(|r| r * m.n_best_first as f64), m.best_last.map(|r| r * m.n_best_last as f64), m.simultaneous.map(|r| r * m.n_simultaneous as f64)]
            .into_iter()
            .flatten()
            .sum::<f64>()
            / m.n_trials as f64;
        assert!((weighted - m.overall).abs() < 1e-12);
    }

    #[test]
    fn record_serializes_flat() {
        let trial = TrialSpec {
            stim_a: StimulusSpec { identity: 1, position: 2, onset: 5, offset: 15 },
            stim_b: StimulusSpec { identity: 3, position: 1, onset: 9, offset: 20 },
            t_reward: 29,
            length: 30,
        };
        let rec = run_trial(&mut RandomAgent::default(), 4, &trial, 0.5, false, &mut stream(0, "x")).unwrap();
        let v: serde_json::Value = serde_json::to_value(&rec).unwrap();
        assert_eq!(v["id_a"], 1);
        assert_eq!(v["off_b"], 20);
        assert_eq!(v["scenario"], "best_first");
        assert_eq!(v["trial_idx"], 4);
    }
}
