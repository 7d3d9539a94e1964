//! Hyperparameter search: random sampling and a Tree-structured Parzen Estimator.
//!
//! The objective is the success fraction over the last 200 of 1000 training trials.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{tail_success, train, Learner, SimRngs};
use crate::model::{build, ModelConfig, PathwayConfig, TopologyConfig};
#[cfg(test)]
use crate::model::Variant;
use crate::policy::PolicyParams;
use crate::rng::{derive_seed, stream, SimRng};
use crate::task::{ChoiceMode, TimingRanges};

/// Number of final training trials the objective scores.
pub const OBJECTIVE_WINDOW: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub log: bool,
}

impl ParamSpec {
    pub fn linear(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        ParamSpec { name: name.into(), lo, hi, log: false }
    }

    pub fn log(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        ParamSpec { name: name.into(), lo, hi, log: true }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) {
            return Err(Error::Config(format!("{}: empty range [{}, {}]", self.name, self.lo, self.hi)));
        }
        if self.log && self.lo <= 0.0 {
            return Err(Error::Config(format!("{}: log scale needs a positive lower bound", self.name)));
        }
        Ok(())
    }

    /// Bounds in the space the sampler works in (log for log-scaled parameters).
    fn internal_bounds(&self) -> (f64, f64) {
        if self.log {
            (self.lo.ln(), self.hi.ln())
        } else {
            (self.lo, self.hi)
        }
    }

    fn to_internal(&self, v: f64) -> f64 {
        if self.log {
            v.ln()
        } else {
            v
        }
    }

    fn from_internal(&self, v: f64) -> f64 {
        let v = if self.log { v.exp() } else { v };
        v.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        for p in &params {
            p.validate()?;
        }
        Ok(SearchSpace { params })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.len() && self.params.iter().zip(point).all(|(p, &v)| v >= p.lo && v <= p.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpeSettings {
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
}

impl Default for TpeSettings {
    fn default() -> Self {
        TpeSettings { gamma: 0.25, n_startup: 20, n_candidates: 24 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedTrial {
    pub params: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StudyState {
    pub trials: Vec<CompletedTrial>,
    pub settings: TpeSettings,
    /// Points evaluated, in order, before any sampling.
    #[serde(default)]
    pub enqueued: Vec<Vec<f64>>,
}

impl StudyState {
    pub fn best(&self) -> Option<&CompletedTrial> {
        // First of the maxima, so ties resolve to the earliest trial.
        self.trials
            .iter()
            .fold(None, |best: Option<&CompletedTrial>, t| match best {
                Some(b) if b.objective >= t.objective => Some(b),
                _ => Some(t),
            })
    }
}

/// Uniform draw per dimension (log-uniform for log-scaled parameters).
pub fn suggest_random<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Vec<f64> {
    space
        .params
        .iter()
        .map(|p| {
            let (lo, hi) = p.internal_bounds();
            p.from_internal(rng.gen_range(lo..=hi))
        })
        .collect()
}

/// One-dimensional Gaussian mixture over observations plus a flat prior kernel.
#[derive(Debug, Clone)]
struct Parzen {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl Parzen {
    fn fit(observed: &[f64], lo: f64, hi: f64) -> Self {
        let range = hi - lo;
        let mut sorted: Vec<f64> = observed.to_vec();
        sorted.sort_by(f64::total_cmp);
        let floor = range / (1.0 + sorted.len() as f64).min(100.0);
        let mut mus = Vec::with_capacity(sorted.len() + 1);
        let mut sigmas = Vec::with_capacity(sorted.len() + 1);
        for (i, &m) in sorted.iter().enumerate() {
            let left = if i == 0 { m - lo } else { m - sorted[i - 1] };
            let right = if i + 1 == sorted.len() { hi - m } else { sorted[i + 1] - m };
            let nearest = match (i > 0, i + 1 < sorted.len()) {
                (true, true) => left.min(right),
                (true, false) => left,
                (false, true) => right,
                (false, false) => left.max(right),
            };
            mus.push(m);
            sigmas.push(nearest.clamp(floor, range));
        }
        // Prior: a broad kernel over the whole range.
        mus.push(0.5 * (lo + hi));
        sigmas.push(range);
        Parzen { mus, sigmas, lo, hi }
    }

    fn log_pdf(&self, x: f64) -> f64 {
        let k = self.mus.len() as f64;
        let dens: f64 = self
            .mus
            .iter()
            .zip(&self.sigmas)
            .map(|(m, s)| {
                let z = (x - m) / s;
                (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            })
            .sum::<f64>()
            / k;
        dens.max(f64::MIN_POSITIVE).ln()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = rng.gen_range(0..self.mus.len());
        let normal = Normal::new(self.mus[k], self.sigmas[k]).expect("positive bandwidth");
        normal.sample(rng).clamp(self.lo, self.hi)
    }
}

/// TPE proposal: split the history at the `gamma` quantile of the objective
/// (higher is better), fit per-dimension Parzen densities `l` on the good trials
/// and `g` on the rest, draw candidates from `l` and keep the one maximizing `l/g`.
pub fn suggest_tpe<R: Rng + ?Sized>(study: &StudyState, space: &SearchSpace, rng: &mut R) -> Vec<f64> {
    let n = study.trials.len();
    let s = &study.settings;
    if n < s.n_startup.max(2) {
        return suggest_random(space, rng);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| study.trials[b].objective.total_cmp(&study.trials[a].objective).then(a.cmp(&b)));
    let n_good = ((s.gamma * n as f64).ceil() as usize).clamp(1, n - 1);
    let (good, bad) = order.split_at(n_good);

    let models: Vec<(Parzen, Parzen)> = space
        .params
        .iter()
        .enumerate()
        .map(|(d, p)| {
            let (lo, hi) = p.internal_bounds();
            let vals = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| p.to_internal(study.trials[i].params[d])).collect() };
            (Parzen::fit(&vals(good), lo, hi), Parzen::fit(&vals(bad), lo, hi))
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..s.n_candidates.max(1) {
        let cand: Vec<f64> = models.iter().map(|(l, _)| l.sample(rng)).collect();
        let score: f64 = models.iter().zip(&cand).map(|((l, g), &x)| l.log_pdf(x) - g.log_pdf(x)).sum();
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, cand));
        }
    }
    let (_, internal) = best.expect("at least one candidate");
    space.params.iter().zip(internal).map(|(p, v)| p.from_internal(v)).collect()
}

/// Fixed parts of an HPO run: everything the search does not vary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoBase {
    pub model: ModelConfig,
    pub policy: PolicyParams,
    pub timing: TimingRanges,
    pub mode: ChoiceMode,
    pub n_train: usize,
    /// Keep the configured leak rates instead of searching them.
    pub fix_leak_rates: bool,
}

impl HpoBase {
    pub fn new(model: ModelConfig) -> Self {
        HpoBase {
            model,
            policy: PolicyParams::default(),
            timing: TimingRanges::default(),
            mode: ChoiceMode::Position,
            n_train: 1000,
            fix_leak_rates: false,
        }
    }
}

/// Default search space for the base model's variant. Structural parameters are
/// per pathway, leak rates per reservoir.
pub fn search_space(base: &HpoBase) -> SearchSpace {
    let v = base.model.variant;
    let mut params = Vec::new();
    for (p, pathway) in base.model.pathways.iter().enumerate() {
        let p = p + 1;
        if !base.fix_leak_rates {
            for r in 1..=pathway.leak_rates.len() {
                params.push(ParamSpec::log(format!("leak_p{p}_r{r}"), 0.01, 1.0));
            }
        }
        params.push(ParamSpec::linear(format!("sr_p{p}"), 0.1, 2.0));
        params.push(ParamSpec::log(format!("in_conn_p{p}"), 0.01, 1.0));
        params.push(ParamSpec::log(format!("in_scale_p{p}"), 0.1, 10.0));
        if v.is_spatial() {
            params.push(ParamSpec::linear(format!("radius_p{p}"), 0.05, 0.5));
            params.push(ParamSpec::linear(format!("angle_p{p}"), 1.0, 180.0));
            params.push(ParamSpec::log(format!("p_connect_p{p}"), 0.01, 1.0));
            params.push(ParamSpec::log(format!("input_decay_p{p}"), 0.02, 1.0));
        } else {
            params.push(ParamSpec::log(format!("rec_conn_p{p}"), 0.01, 1.0));
        }
    }
    params.push(ParamSpec::log("readout_density", 0.01, 1.0));
    params.push(ParamSpec::log("eta", 1e-4, 1.0));
    params.push(ParamSpec::linear("beta", 1.0, 20.0));
    SearchSpace::new(params).expect("default ranges are valid")
}

/// Writes a parameter vector into copies of the base model and policy.
/// For spatial pathways the spectral radius only applies to cones wider than 90°.
pub fn apply_params(base: &HpoBase, space: &SearchSpace, point: &[f64]) -> Result<(ModelConfig, PolicyParams)> {
    let mut model = base.model.clone();
    let mut policy = base.policy.clone();
    for (spec, &val) in space.params.iter().zip(point) {
        let name = spec.name.as_str();
        match name {
            "readout_density" => model.readout_sparsity = 1.0 - val,
            "eta" => policy.eta = val,
            "beta" => policy.beta = val,
            _ => {
                let (key, idx) = name
                    .rsplit_once("_p")
                    .ok_or_else(|| Error::Config(format!("unknown search parameter `{name}`")))?;
                let (p, r) = match idx.split_once("_r") {
                    Some((p, r)) => (p, Some(r)),
                    None => (idx, None),
                };
                let p: usize = p.parse().map_err(|_| Error::Config(format!("bad pathway index in `{name}`")))?;
                let pathway = model
                    .pathways
                    .get_mut(p.wrapping_sub(1))
                    .ok_or_else(|| Error::Config(format!("no pathway {p} for `{name}`")))?;
                fn topo<'a>(pw: &'a mut PathwayConfig, name: &str) -> Result<&'a mut TopologyConfig> {
                    pw.topology.as_mut().ok_or_else(|| Error::Config(format!("`{name}` needs a spatial pathway")))
                }
                match (key, r) {
                    ("leak", Some(r)) => {
                        let r: usize = r.parse().map_err(|_| Error::Config(format!("bad reservoir index in `{name}`")))?;
                        *pathway
                            .leak_rates
                            .get_mut(r.wrapping_sub(1))
                            .ok_or_else(|| Error::Config(format!("no reservoir {r} for `{name}`")))? = val;
                    }
                    ("sr", None) => pathway.spectral_radius = Some(val),
                    ("in_conn", None) => pathway.input_connectivity = val,
                    ("in_scale", None) => pathway.input_scaling = val,
                    ("rec_conn", None) => pathway.rec_connectivity = val,
                    ("radius", None) => topo(pathway, name)?.radius = val,
                    ("angle", None) => topo(pathway, name)?.angle_deg = val,
                    ("p_connect", None) => topo(pathway, name)?.p_connect = val,
                    ("input_decay", None) => topo(pathway, name)?.input_decay = val,
                    _ => return Err(Error::Config(format!("unknown search parameter `{name}`"))),
                }
            }
        }
    }
    for pathway in &mut model.pathways {
        if let Some(t) = &pathway.topology {
            if t.angle_deg <= 90.0 {
                pathway.spectral_radius = None;
            }
        }
    }
    Ok((model, policy))
}

/// The base configuration as a point of `space`, clamped into range.
pub fn base_point(base: &HpoBase, space: &SearchSpace) -> Result<Vec<f64>> {
    let model = &base.model;
    space
        .params
        .iter()
        .map(|spec| {
            let name = spec.name.as_str();
            let v = match name {
                "readout_density" => 1.0 - model.readout_sparsity,
                "eta" => base.policy.eta,
                "beta" => base.policy.beta,
                _ => {
                    let bad = || Error::Config(format!("unknown search parameter `{name}`"));
                    let (key, idx) = name.rsplit_once("_p").ok_or_else(bad)?;
                    let (p, r) = match idx.split_once("_r") {
                        Some((p, r)) => (p, r.parse::<usize>().ok()),
                        None => (idx, None),
                    };
                    let pw = p
                        .parse::<usize>()
                        .ok()
                        .and_then(|p| model.pathways.get(p.wrapping_sub(1)))
                        .ok_or_else(bad)?;
                    let topo = pw.topology.as_ref();
                    match (key, r) {
                        ("leak", Some(r)) => *pw.leak_rates.get(r.wrapping_sub(1)).ok_or_else(bad)?,
                        ("sr", None) => pw.spectral_radius.unwrap_or(0.9),
                        ("in_conn", None) => pw.input_connectivity,
                        ("in_scale", None) => pw.input_scaling,
                        ("rec_conn", None) => pw.rec_connectivity,
                        ("radius", None) => topo.ok_or_else(bad)?.radius,
                        ("angle", None) => topo.ok_or_else(bad)?.angle_deg,
                        ("p_connect", None) => topo.ok_or_else(bad)?.p_connect,
                        ("input_decay", None) => topo.ok_or_else(bad)?.input_decay,
                        _ => return Err(bad()),
                    }
                }
            };
            Ok(v.clamp(spec.lo, spec.hi))
        })
        .collect()
}

/// Builds the model for `point`, trains it and scores the last 200 trials.
/// Failures to build or run score 0.
pub fn objective(base: &HpoBase, space: &SearchSpace, point: &[f64], seed: u64) -> f64 {
    let run = || -> Result<f64> {
        let (mut model_cfg, policy) = apply_params(base, space, point)?;
        policy.validate()?;
        model_cfg.seed = derive_seed(seed, "weights");
        let model = build(&model_cfg)?;
        let mut learner = Learner::new(model, policy, base.mode);
        let history = train(&mut learner, base.n_train, &base.timing, &mut SimRngs::new(seed, "train"))?;
        Ok(tail_success(&history, OBJECTIVE_WINDOW))
    };
    match run() {
        Ok(v) => v,
        Err(e) => {
            log::warn!("objective failed for {point:?}: {e}");
            0.0
        }
    }
}

/// Deterministic per-trial stream so resumed studies propose the same points.
fn suggestion_rng(seed: u64, trial_idx: usize) -> SimRng {
    stream(seed, &format!("hpo/suggest/{trial_idx}"))
}

/// Runs (or continues) a study. `evaluate` scores one point; `on_trial` sees each
/// completed trial as it finishes.
pub fn run_study_with<F, G>(
    space: &SearchSpace,
    state: &mut StudyState,
    n_trials: usize,
    seed: u64,
    use_tpe: bool,
    mut evaluate: F,
    mut on_trial: G,
) -> Result<()>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(usize, &CompletedTrial) -> Result<()>,
{
    while state.trials.len() < n_trials {
        let idx = state.trials.len();
        let mut rng = suggestion_rng(seed, idx);
        let point = match state.enqueued.get(idx) {
            Some(p) => p.clone(),
            None if use_tpe => suggest_tpe(state, space, &mut rng),
            None => suggest_random(space, &mut rng),
        };
        let objective = evaluate(&point);
        let done = CompletedTrial { params: point, objective };
        on_trial(idx, &done)?;
        state.trials.push(done);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct HpoOutcome {
    pub space: SearchSpace,
    pub state: StudyState,
    pub best_model: ModelConfig,
    pub best_policy: PolicyParams,
    pub best_objective: f64,
}

/// TPE search over the default space of `base`, starting from the base point itself,
/// persisted to `log_path` (CSV)
/// after every trial. An existing log with the same columns is resumed.
pub fn run_hpo(base: &HpoBase, n_trials: usize, seed: u64, log_path: Option<&Path>) -> Result<HpoOutcome> {
    run_hpo_in(base, &search_space(base), n_trials, seed, log_path)
}

pub fn run_hpo_in(base: &HpoBase, space: &SearchSpace, n_trials: usize, seed: u64, log_path: Option<&Path>) -> Result<HpoOutcome> {
    let mut state = StudyState { enqueued: vec![base_point(base, space)?], ..Default::default() };
    if let Some(path) = log_path {
        if path.exists() {
            state.trials = read_study_csv(path, space)?;
        } else {
            write_study_header(path, space)?;
        }
    }
    let objective_seed = derive_seed(seed, "hpo/objective");
    run_study_with(
        space,
        &mut state,
        n_trials,
        seed,
        true,
        |point| objective(base, space, point, objective_seed),
        |idx, trial| match log_path {
            Some(path) => append_study_row(path, idx, trial),
            None => Ok(()),
        },
    )?;
    let best = state.best().ok_or_else(|| Error::Config("study has no trials".into()))?.clone();
    let (best_model, best_policy) = apply_params(base, space, &best.params)?;
    Ok(HpoOutcome { space: space.clone(), best_objective: best.objective, best_model, best_policy, state })
}

fn study_columns(space: &SearchSpace) -> Vec<String> {
    std::iter::once("trial_idx".to_string())
        .chain(space.names().into_iter().map(String::from))
        .chain(std::iter::once("objective".to_string()))
        .collect()
}

fn write_study_header(path: &Path, space: &SearchSpace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    w.write_record(study_columns(space)).map_err(|e| Error::parse(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn append_study_row(path: &Path, idx: usize, trial: &CompletedTrial) -> Result<()> {
    let mut fields = vec![idx.to_string()];
    fields.extend(trial.params.iter().map(|v| format!("{v:?}")));
    fields.push(format!("{:?}", trial.objective));
    let mut file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "{}", fields.join(",")).map_err(|e| Error::io(path, e))
}

/// Reads a persisted study; the header must match the search space.
pub fn read_study_csv(path: &Path, space: &SearchSpace) -> Result<Vec<CompletedTrial>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| Error::parse(path, e))?.iter().map(String::from).collect();
    if header != study_columns(space) {
        return Err(Error::parse(path, format!("columns {header:?} do not match the search space")));
    }
    let mut trials = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, format!("row {}: {e}", i + 1)))?;
        if nums[0] as usize != i {
            return Err(Error::parse(path, format!("row {} has trial_idx {}", i + 1, nums[0])));
        }
        let objective = *nums.last().expect("objective column");
        trials.push(CompletedTrial { params: nums[1..nums.len() - 1].to_vec(), objective });
    }
    Ok(trials)
}

/// Column layout helper for callers that want to label points.
pub fn describe(space: &SearchSpace, point: &[f64]) -> Vec<(String, f64)> {
    space.names().into_iter().map(String::from).zip(point.iter().copied()).collect()
}
