//! The five architectures: a single reservoir (M0), dual pathways of one, two or
//! three chained reservoirs (M1-M3) and dual spatial feed-forward pathways (M*).
//!
//! Pathway P1 receives the earliest stimulus and P2 the latest. The pathways
//! never connect to each other; every reservoir feeds the readout and receives
//! the previous output as feedback.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::ReadoutWeights;
use crate::reservoir::{init_weights, step_into, ReservoirParams, WeightSet};
use crate::rng::{derive_seed, stream};
use crate::task::{encode, TrialSpec, CHANNEL_DIM, N_OPTIONS};
use crate::topology::{build_spatial, SpatialLayout, TopoParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    M0,
    M1,
    M2,
    M3,
    #[serde(alias = "M*")]
    Mstar,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::M0, Variant::M1, Variant::M2, Variant::M3, Variant::Mstar];

    pub fn n_pathways(self) -> usize {
        match self {
            Variant::M0 => 1,
            _ => 2,
        }
    }

    pub fn depth(self) -> usize {
        match self {
            Variant::M0 | Variant::M1 | Variant::Mstar => 1,
            Variant::M2 => 2,
            Variant::M3 => 3,
        }
    }

    pub fn is_spatial(self) -> bool {
        self == Variant::Mstar
    }

    /// Units per reservoir, grouped by pathway. Remainders go to the earlier pathway
    /// and, within a pathway, to the first reservoir of the chain.
    pub fn unit_split(self, total: usize) -> Vec<Vec<usize>> {
        let split = |n: usize, k: usize| -> Vec<usize> { (0..k).map(|i| n / k + usize::from(i < n % k)).collect() };
        split(total, self.n_pathways())
            .into_iter()
            .map(|n| split(n, self.depth()))
            .collect()
    }

    /// Width of the external input of each pathway's first reservoir.
    pub fn input_dim(self) -> usize {
        match self {
            Variant::M0 => 2 * CHANNEL_DIM,
            _ => CHANNEL_DIM,
        }
    }

    /// Mean leak rates reported for the optimized models, per reservoir and pathway.
    pub fn reference_leak_rates(self) -> Vec<Vec<f64>> {
        match self {
            Variant::M0 => vec![vec![0.06]],
            Variant::M1 => vec![vec![0.068], vec![0.67]],
            Variant::M2 => vec![vec![0.06, 0.28], vec![0.50, 0.07]],
            Variant::M3 => vec![vec![0.16, 0.10, 0.43], vec![0.07, 0.72, 0.99]],
            Variant::Mstar => vec![vec![0.23], vec![0.59]],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::M0 => "M0",
            Variant::M1 => "M1",
            Variant::M2 => "M2",
            Variant::M3 => "M3",
            Variant::Mstar => "Mstar",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M0" | "m0" => Ok(Variant::M0),
            "M1" | "m1" => Ok(Variant::M1),
            "M2" | "m2" => Ok(Variant::M2),
            "M3" | "m3" => Ok(Variant::M3),
            "Mstar" | "M*" | "mstar" => Ok(Variant::Mstar),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Geometry of a spatial pathway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub radius: f64,
    pub angle_deg: f64,
    pub p_connect: f64,
    pub input_decay: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        let t = TopoParams::default();
        TopologyConfig { radius: t.radius, angle_deg: t.angle_deg, p_connect: t.p_connect, input_decay: t.input_decay }
    }
}

/// Parameters shared by the reservoirs of one pathway, plus one leak rate per reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathwayConfig {
    pub leak_rates: Vec<f64>,
    pub spectral_radius: Option<f64>,
    pub rec_connectivity: f64,
    pub input_connectivity: f64,
    pub input_scaling: f64,
    pub feedback_scaling: f64,
    pub topology: Option<TopologyConfig>,
}

impl Default for PathwayConfig {
    fn default() -> Self {
        let r = ReservoirParams::default();
        PathwayConfig {
            leak_rates: vec![r.leak_rate],
            spectral_radius: r.spectral_radius,
            rec_connectivity: r.rec_connectivity,
            input_connectivity: r.input_connectivity,
            // One-hot inputs need stronger drive than the bare reservoir default.
            input_scaling: 5.0,
            feedback_scaling: r.feedback_scaling,
            topology: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    #[serde(default = "default_total_units")]
    pub total_units: usize,
    #[serde(default)]
    pub readout_sparsity: f64,
    pub pathways: Vec<PathwayConfig>,
    #[serde(default)]
    pub seed: u64,
}

fn default_total_units() -> usize {
    500
}

impl ModelConfig {
    /// Default parameters with the reference leak rates of `variant`.
    pub fn for_variant(variant: Variant) -> Self {
        let pathways = variant
            .reference_leak_rates()
            .into_iter()
            .map(|leak_rates| PathwayConfig {
                leak_rates,
                topology: variant.is_spatial().then(TopologyConfig::default),
                spectral_radius: if variant.is_spatial() { None } else { Some(0.9) },
                ..Default::default()
            })
            .collect();
        ModelConfig { variant, total_units: 500, readout_sparsity: 0.0, pathways, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.variant;
        if self.pathways.len() != v.n_pathways() {
            return Err(Error::Config(format!("{v} needs {} pathway(s), got {}", v.n_pathways(), self.pathways.len())));
        }
        if self.total_units < v.n_pathways() * v.depth() {
            return Err(Error::Config(format!("{v} needs at least one unit per reservoir")));
        }
        if !(0.0..1.0).contains(&self.readout_sparsity) {
            return Err(Error::param("readout_sparsity", "must lie in [0, 1)"));
        }
        for (i, p) in self.pathways.iter().enumerate() {
            if p.leak_rates.len() != v.depth() {
                return Err(Error::Config(format!(
                    "pathway {} of {v} needs {} leak rate(s), got {}",
                    i + 1,
                    v.depth(),
                    p.leak_rates.len()
                )));
            }
            if v.is_spatial() != p.topology.is_some() {
                return Err(Error::Config(format!(
                    "pathway {}: topology must be given for Mstar and only for Mstar",
                    i + 1
                )));
            }
        }
        // Component-level checks on the concrete parameters.
        for (res, topo) in self.reservoir_params() {
            res.validate()?;
            if let Some(t) = topo {
                t.validate()?;
            }
        }
        Ok(())
    }

    /// Concrete per-reservoir parameters in pathway order, each with its own seed.
    pub fn reservoir_params(&self) -> Vec<(ReservoirParams, Option<TopoParams>)> {
        let split = self.variant.unit_split(self.total_units);
        let mut out = Vec::new();
        for (p, (pathway, sizes)) in self.pathways.iter().zip(split).enumerate() {
            for (r, (&leak, n)) in pathway.leak_rates.iter().zip(sizes).enumerate() {
                let seed = derive_seed(self.seed, &format!("pathway{p}/reservoir{r}"));
                let res = ReservoirParams {
                    n_units: n,
                    leak_rate: leak,
                    spectral_radius: pathway.spectral_radius,
                    rec_connectivity: pathway.rec_connectivity,
                    input_connectivity: pathway.input_connectivity,
                    input_scaling: pathway.input_scaling,
                    feedback_scaling: pathway.feedback_scaling,
                    seed,
                };
                let topo = pathway.topology.as_ref().map(|t| TopoParams {
                    n_units: n,
                    radius: t.radius,
                    angle_deg: t.angle_deg,
                    p_connect: t.p_connect,
                    input_decay: t.input_decay,
                    seed,
                });
                out.push((res, topo));
            }
        }
        out
    }
}

/// One reservoir inside a model. For chained reservoirs `weights.w_in` is the
/// chain matrix reading the predecessor's state.
#[derive(Debug, Clone)]
pub struct Stage {
    pub leak_rate: f64,
    pub weights: WeightSet,
    pub layout: Option<SpatialLayout>,
    state: Vec<f64>,
    next: Vec<f64>,
}

impl Stage {
    pub fn new(leak_rate: f64, weights: WeightSet, layout: Option<SpatialLayout>) -> Self {
        let n = weights.n_units();
        Stage { leak_rate, weights, layout, state: vec![0.0; n], next: vec![0.0; n] }
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn n_units(&self) -> usize {
        self.state.len()
    }
}

#[derive(Debug, Clone)]
pub struct Pathway {
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub variant: Variant,
    pub pathways: Vec<Pathway>,
    pub readout: ReadoutWeights,
    concat: Vec<f64>,
}

/// Instantiates every reservoir of `config` and a zero readout.
pub fn build(config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    let v = config.variant;
    let params = config.reservoir_params();
    let mut params = params.into_iter();
    let mut pathways = Vec::with_capacity(v.n_pathways());
    for _ in 0..v.n_pathways() {
        let mut stages: Vec<Stage> = Vec::with_capacity(v.depth());
        for _ in 0..v.depth() {
            let (res, topo) = params.next().expect("one parameter set per reservoir");
            let input_dim = stages.last().map_or(v.input_dim(), |prev| prev.n_units());
            let stage = match topo {
                Some(topo) => {
                    let spatial = build_spatial(&topo, &res, input_dim, N_OPTIONS)?;
                    Stage::new(res.leak_rate, spatial.weights, Some(spatial.layout))
                }
                None => Stage::new(res.leak_rate, init_weights(&res, input_dim, N_OPTIONS)?, None),
            };
            stages.push(stage);
        }
        pathways.push(Pathway { stages });
    }
    Ok(Model::from_pathways(v, pathways, config.readout_sparsity, config.seed))
}

impl Model {
    /// Assembles a model from prebuilt stages.
    pub fn from_pathways(variant: Variant, pathways: Vec<Pathway>, readout_sparsity: f64, seed: u64) -> Self {
        let n: usize = pathways.iter().flat_map(|p| &p.stages).map(Stage::n_units).sum();
        let mut rng = stream(seed, "readout/mask");
        let readout = ReadoutWeights::new(N_OPTIONS, n, readout_sparsity, &mut rng);
        Model { variant, pathways, readout, concat: vec![0.0; n] }
    }

    pub fn n_units(&self) -> usize {
        self.concat.len()
    }

    pub fn reservoir_sizes(&self) -> Vec<Vec<usize>> {
        self.pathways.iter().map(|p| p.stages.iter().map(Stage::n_units).collect()).collect()
    }

    /// Concatenated states of all reservoirs in pathway order.
    pub fn state(&self) -> &[f64] {
        &self.concat
    }

    pub fn reset(&mut self) {
        for stage in self.pathways.iter_mut().flat_map(|p| p.stages.iter_mut()) {
            stage.state.iter_mut().for_each(|v| *v = 0.0);
        }
        self.concat.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Advances every reservoir by one step from previous-step values and returns
    /// the new readout. `inputs[p]` is the external input of pathway `p`.
    pub fn forward_step(&mut self, inputs: &[&[f64]], y_prev: &[f64]) -> Result<[f64; N_OPTIONS]> {
        if inputs.len() != self.pathways.len() {
            return Err(Error::DimensionMismatch { matrix: "pathway inputs", expected: self.pathways.len(), actual: inputs.len() });
        }
        if y_prev.len() != N_OPTIONS {
            return Err(Error::DimensionMismatch { matrix: "W_fb", expected: N_OPTIONS, actual: y_prev.len() });
        }
        for (pathway, u) in self.pathways.iter_mut().zip(inputs) {
            let expected = pathway.stages[0].weights.w_in.cols();
            if u.len() != expected {
                return Err(Error::DimensionMismatch { matrix: "W_in", expected, actual: u.len() });
            }
            for k in 0..pathway.stages.len() {
                let (before, rest) = pathway.stages.split_at_mut(k);
                let stage = &mut rest[0];
                let drive: &[f64] = match before.last() {
                    Some(prev) => &prev.state,
                    None => u,
                };
                step_into(&stage.state, &stage.weights, drive, y_prev, stage.leak_rate, &mut stage.next);
            }
        }
        let mut offset = 0;
        for stage in self.pathways.iter_mut().flat_map(|p| p.stages.iter_mut()) {
            std::mem::swap(&mut stage.state, &mut stage.next);
            self.concat[offset..offset + stage.state.len()].copy_from_slice(&stage.state);
            offset += stage.state.len();
        }
        Ok(self.output())
    }

    /// `W_out` applied to the current concatenated state.
    pub fn output(&self) -> [f64; N_OPTIONS] {
        let mut y = [0.0; N_OPTIONS];
        for (a, ya) in y.iter_mut().enumerate() {
            *ya = self.readout.w_out.row(a).iter().zip(&self.concat).map(|(w, x)| w * x).sum();
        }
        y
    }
}

/// Per-pathway input streams for a trial: M0 gets both channels concatenated
/// (earliest first); dual models send the earliest stimulus to P1 and the latest
/// to P2, with onset ties resolved in favour of `stim_a`.
pub fn route_inputs(variant: Variant, trial: &TrialSpec) -> Vec<Vec<Vec<f64>>> {
    let tensor = encode(trial);
    let (early, late) = if trial.stim_b.onset < trial.stim_a.onset {
        (&tensor.channel_b, &tensor.channel_a)
    } else {
        (&tensor.channel_a, &tensor.channel_b)
    };
    match variant {
        Variant::M0 => vec![early.iter().zip(late).map(|(a, b)| a.iter().chain(b).copied().collect()).collect()],
        _ => vec![
            early.iter().map(|a| a.to_vec()).collect(),
            late.iter().map(|b| b.to_vec()).collect(),
        ],
    }
}
