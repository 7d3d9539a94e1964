//! Spatially embedded reservoirs with a feed-forward bias.
//!
//! Units are scattered over the unit square with blue-noise spacing. A unit may
//! project to any neighbour within `radius` whose direction lies inside a cone of
//! half-angle `angle_deg` around the +x axis, so activity flows from the input
//! edge (x = 0) towards x = 1. Input channels attach with a probability that
//! decays exponentially with the distance from the input edge.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{scale_to_spectral_radius, CsrMatrix};
use crate::reservoir::{ReservoirParams, WeightSet};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialLayout {
    pub points: Vec<[f64; 2]>,
}

impl SpatialLayout {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.min(distance(a, b));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoParams {
    pub n_units: usize,
    pub radius: f64,
    pub angle_deg: f64,
    pub p_connect: f64,
    pub input_decay: f64,
    pub seed: u64,
}

impl Default for TopoParams {
    fn default() -> Self {
        TopoParams {
            n_units: 250,
            radius: 0.3,
            angle_deg: 90.0,
            p_connect: 0.3,
            input_decay: 0.2,
            seed: 0,
        }
    }
}

impl TopoParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 {
            return Err(Error::param("n_units", "must be at least 1"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::param("radius", format!("must be positive, got {}", self.radius)));
        }
        if !(self.angle_deg > 0.0 && self.angle_deg <= 180.0) {
            return Err(Error::param("angle_deg", format!("must lie in (0, 180], got {}", self.angle_deg)));
        }
        if !(0.0..=1.0).contains(&self.p_connect) {
            return Err(Error::param("p_connect", format!("must lie in [0, 1], got {}", self.p_connect)));
        }
        if !(self.input_decay > 0.0) {
            return Err(Error::param("input_decay", "must be positive"));
        }
        Ok(())
    }
}

fn distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Bridson's Poisson-disc sampler over the unit square.
fn poisson_disc<R: Rng + ?Sized>(min_dist: f64, rng: &mut R) -> Vec<[f64; 2]> {
    const ATTEMPTS: usize = 30;
    let cell = min_dist / std::f64::consts::SQRT_2;
    let side = (1.0 / cell).ceil() as usize;
    let mut grid: Vec<Option<usize>> = vec![None; side * side];
    let cell_of = |p: &[f64; 2]| {
        let cx = ((p[0] / cell) as usize).min(side - 1);
        let cy = ((p[1] / cell) as usize).min(side - 1);
        (cx, cy)
    };

    let first = [rng.gen::<f64>(), rng.gen::<f64>()];
    let mut points = vec![first];
    let (cx, cy) = cell_of(&first);
    grid[cy * side + cx] = Some(0);
    let mut active = vec![0usize];

    while !active.is_empty() {
        let slot = rng.gen_range(0..active.len());
        let base = points[active[slot]];
        let mut placed = false;
        for _ in 0..ATTEMPTS {
            let theta = rng.gen::<f64>() * std::f64::consts::TAU;
            let r = min_dist * (1.0 + rng.gen::<f64>());
            let cand = [base[0] + r * theta.cos(), base[1] + r * theta.sin()];
            if !(0.0..1.0).contains(&cand[0]) || !(0.0..1.0).contains(&cand[1]) {
                continue;
            }
            let (cx, cy) = cell_of(&cand);
            let mut ok = true;
            'scan: for gy in cy.saturating_sub(2)..(cy + 3).min(side) {
                for gx in cx.saturating_sub(2)..(cx + 3).min(side) {
                    if let Some(k) = grid[gy * side + gx] {
                        if distance(&points[k], &cand) < min_dist {
                            ok = false;
                            break 'scan;
                        }
                    }
                }
            }
            if ok {
                grid[cy * side + cx] = Some(points.len());
                active.push(points.len());
                points.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            active.swap_remove(slot);
        }
    }
    points
}

/// `n` well-spread points in the unit square; pairwise distances are at least `0.5 / sqrt(n)`.
pub fn sample_positions(n: usize, seed: u64) -> Result<SpatialLayout> {
    if n == 0 {
        return Err(Error::param("n_units", "must be at least 1"));
    }
    let floor = 0.5 / (n as f64).sqrt();
    let mut rng = stream(seed, "topology/positions");
    // A maximal Poisson-disc set at spacing r holds roughly 0.7 / r^2 points, so
    // start a little above n and shrink the spacing until enough points exist.
    let mut min_dist = 0.75 / (n as f64).sqrt();
    loop {
        let mut points = poisson_disc(min_dist, &mut rng);
        if points.len() >= n {
            points.shuffle(&mut rng);
            points.truncate(n);
            return Ok(SpatialLayout { points });
        }
        min_dist = (min_dist * 0.95).max(floor);
    }
}

/// Whether unit `from` may project onto unit `to` under the cone rule.
fn edge_allowed(from: &[f64; 2], to: &[f64; 2], radius: f64, angle_deg: f64) -> bool {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    if dx == 0.0 && dy == 0.0 {
        return false;
    }
    if (dx * dx + dy * dy).sqrt() > radius {
        return false;
    }
    let angle = dy.abs().atan2(dx).to_degrees();
    if angle_deg <= 90.0 && dx <= 0.0 {
        return false;
    }
    angle <= angle_deg
}

/// Recurrent matrix (row = target, column = source) of the cone-constrained graph.
pub fn connect_recurrent(layout: &SpatialLayout, params: &TopoParams) -> Result<CsrMatrix> {
    params.validate()?;
    let n = layout.len();
    if n != params.n_units {
        return Err(Error::DimensionMismatch { matrix: "layout", expected: params.n_units, actual: n });
    }
    let mut rng = stream(params.seed, "topology/recurrent");
    let mut entries = Vec::new();
    for (src, p) in layout.points.iter().enumerate() {
        for (dst, q) in layout.points.iter().enumerate() {
            if !edge_allowed(p, q, params.radius, params.angle_deg) {
                continue;
            }
            if rng.gen::<f64>() < params.p_connect {
                let mut v = rng.gen_range(-1.0..=1.0);
                while v == 0.0 {
                    v = rng.gen_range(-1.0..=1.0);
                }
                entries.push((dst, src, v));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, entries))
}

/// Input matrix (units × channels): a unit at distance `d` from the x = 0 edge
/// receives each channel independently with probability `exp(-d / input_decay)`.
pub fn connect_input(layout: &SpatialLayout, n_inputs: usize, input_decay: f64, seed: u64) -> Result<CsrMatrix> {
    if n_inputs == 0 {
        return Err(Error::param("n_inputs", "must be at least 1"));
    }
    if !(input_decay > 0.0) {
        return Err(Error::param("input_decay", "must be positive"));
    }
    let mut rng = stream(seed, "topology/input");
    let mut entries = Vec::new();
    for (unit, p) in layout.points.iter().enumerate() {
        let prob = (-p[0] / input_decay).exp();
        for channel in 0..n_inputs {
            if rng.gen::<f64>() < prob {
                let mut v = rng.gen_range(-1.0..=1.0);
                while v == 0.0 {
                    v = rng.gen_range(-1.0..=1.0);
                }
                entries.push((unit, channel, v));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(layout.len(), n_inputs, entries))
}

/// True iff the directed graph of nonzeros is acyclic.
pub fn is_feed_forward(matrix: &CsrMatrix) -> bool {
    matrix.is_acyclic()
}

/// Layout plus weights of one spatial pathway.
#[derive(Debug, Clone)]
pub struct SpatialReservoir {
    pub layout: SpatialLayout,
    pub weights: WeightSet,
}

/// Builds a spatial reservoir. Recurrent weights stay as drawn unless the cone is
/// wider than 90 degrees and a spectral radius is requested.
pub fn build_spatial(
    topo: &TopoParams,
    res: &ReservoirParams,
    input_dim: usize,
    output_dim: usize,
) -> Result<SpatialReservoir> {
    topo.validate()?;
    res.validate()?;
    let layout = sample_positions(topo.n_units, topo.seed)?;
    let mut w = connect_recurrent(&layout, topo)?;
    if let Some(sr) = res.spectral_radius {
        if topo.angle_deg > 90.0 && w.nnz() > 0 && !w.is_acyclic() {
            w = scale_to_spectral_radius(&w, sr)?;
        }
    }
    let w_in = connect_input(&layout, input_dim, topo.input_decay, topo.seed)?.scaled(res.input_scaling);
    let mut rng = stream(topo.seed, "topology/feedback");
    let w_fb = CsrMatrix::random(topo.n_units, output_dim, res.input_connectivity, res.feedback_scaling, &mut rng);
    Ok(SpatialReservoir { layout, weights: WeightSet { w, w_in, w_fb } })
}

#[derive(Serialize)]
struct TopologyDump<'a> {
    points: &'a [[f64; 2]],
    /// `[source, target, weight]`
    edges: Vec<(usize, usize, f64)>,
}

/// Writes the layout and recurrent edges as a JSON document.
pub fn write_topology_json(path: &Path, layout: &SpatialLayout, w: &CsrMatrix) -> Result<()> {
    let dump = TopologyDump {
        points: &layout.points,
        edges: w.triplets().map(|(dst, src, v)| (src, dst, v)).collect(),
    };
    let text = serde_json::to_string_pretty(&dump).map_err(|e| Error::parse(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
