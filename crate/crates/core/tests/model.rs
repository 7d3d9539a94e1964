use dualpath::linalg::CsrMatrix;
use dualpath::model::{build, route_inputs, ModelConfig, Pathway, Stage, Variant};
use dualpath::policy::ReadoutWeights;
use dualpath::reservoir::{step, ReservoirState, WeightSet};
use dualpath::rng::stream;
use dualpath::task::{StimulusSpec, TrialSpec, CHANNEL_DIM};
use nalgebra::DMatrix;
use rand::Rng;

fn small(variant: Variant, units: usize, seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::for_variant(variant);
    cfg.total_units = units;
    cfg.seed = seed;
    cfg
}

fn random_output(model: &mut dualpath::model::Model, seed: u64) {
    let mut rng = stream(seed, "w_out");
    let n = model.n_units();
    model.readout = ReadoutWeights::dense(DMatrix::from_fn(4, n, |_, _| rng.gen_range(-0.5..0.5)));
}

fn unit(w: f64, w_in: &[(usize, f64)], w_fb: &[(usize, f64)]) -> WeightSet {
    WeightSet {
        w: CsrMatrix::from_triplets(1, 1, vec![(0, 0, w)]),
        w_in: CsrMatrix::from_triplets(1, CHANNEL_DIM, w_in.iter().map(|&(c, v)| (0, c, v)).collect()),
        w_fb: CsrMatrix::from_triplets(1, 4, w_fb.iter().map(|&(c, v)| (0, c, v)).collect()),
    }
}

#[test]
fn hand_weighted_dual_pathway_trajectory() {
    let p1 = Pathway { stages: vec![Stage::new(0.4, unit(0.5, &[(0, 1.0), (4, 0.5)], &[(0, 0.1)]), None)] };
    let p2 = Pathway { stages: vec![Stage::new(0.9, unit(-0.2, &[(1, 0.8), (6, -0.3)], &[(2, 0.2)]), None)] };
    let mut m = dualpath::model::Model::from_pathways(Variant::M1, vec![p1, p2], 0.0, 0);
    m.readout = ReadoutWeights::dense(DMatrix::from_row_slice(4, 2, &[1.0, 0.5, -0.5, 1.0, 0.25, 0.25, 0.0, -1.0]));
    let mut u1 = [0.0; CHANNEL_DIM];
    u1[0] = 1.0;
    u1[4] = 1.0;
    let mut u2 = [0.0; CHANNEL_DIM];
    u2[1] = 1.0;
    u2[6] = 1.0;
    let expected = [
        (0.36205930145794657, 0.41590544153400877, [0.570012022224951, 0.23487579080503548, 0.19449118574798885, -0.41590544153400877]),
        (0.593234719873857, 0.42551897867320154, [0.8059942092104577, 0.12890161873627304, 0.25468842463676467, -0.42551897867320154]),
        (0.737638392499977, 0.4338962321400225, [0.9545865085699883, 0.065077035890034, 0.2928836561599999, -0.4338962321400225]),
    ];
    let mut y = [0.0; 4];
    for (x1, x2, y_exp) in expected {
        y = m.forward_step(&[&u1, &u2], &y).unwrap();
        assert!((m.state()[0] - x1).abs() <= 1e-12);
        assert!((m.state()[1] - x2).abs() <= 1e-12);
        for (a, b) in y.iter().zip(y_exp) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn zero_readout_gives_zero_output() {
    let mut m = build(&small(Variant::M2, 80, 1)).unwrap();
    let u = [1.0; CHANNEL_DIM];
    for _ in 0..5 {
        assert_eq!(m.forward_step(&[&u, &u], &[0.0; 4]).unwrap(), [0.0; 4]);
    }
    assert!(m.state().iter().any(|&v| v != 0.0));
}

/// Advances every reservoir from a snapshot of the previous step, visiting the
/// stages last to first.
fn reference_step(snapshot: &[Vec<Vec<f64>>], model: &dualpath::model::Model, inputs: &[Vec<f64>], y: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let mut next: Vec<Vec<Vec<f64>>> = snapshot.iter().map(|p| vec![Vec::new(); p.len()]).collect();
    for (p, pathway) in model.pathways.iter().enumerate().rev() {
        for (k, stage) in pathway.stages.iter().enumerate().rev() {
            let drive = if k == 0 { inputs[p].clone() } else { snapshot[p][k - 1].clone() };
            let x = ReservoirState { x: snapshot[p][k].clone() };
            next[p][k] = step(&x, &stage.weights, &drive, y, stage.leak_rate).unwrap().x;
        }
    }
    next
}

#[test]
fn all_reservoirs_update_synchronously() {
    for variant in [Variant::M2, Variant::M3] {
        let mut m = build(&small(variant, 240, 3)).unwrap();
        random_output(&mut m, 3);
        let reference = m.clone();
        let mut snap: Vec<Vec<Vec<f64>>> = m.reservoir_sizes().iter().map(|p| p.iter().map(|&n| vec![0.0; n]).collect()).collect();
        let mut rng = stream(5, "sync");
        let mut y = [0.0; 4];
        for _ in 0..10 {
            let inputs: Vec<Vec<f64>> = (0..2).map(|_| (0..CHANNEL_DIM).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
            snap = reference_step(&snap, &reference, &inputs, &y);
            y = m.forward_step(&[&inputs[0], &inputs[1]], &y).unwrap();
            let flat: Vec<f64> = snap.iter().flatten().flatten().copied().collect();
            for (a, b) in m.state().iter().zip(&flat) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn pathways_do_not_share_state() {
    for variant in [Variant::M1, Variant::M3, Variant::Mstar] {
        let mut a = build(&small(variant, 100, 7)).unwrap();
        let mut b = a.clone();
        let n1: usize = a.reservoir_sizes()[0].iter().sum();
        let mut rng = stream(7, "seg");
        for _ in 0..20 {
            let u1: Vec<f64> = (0..CHANNEL_DIM).map(|_| rng.gen_range(0.0..1.0)).collect();
            let ua: Vec<f64> = (0..CHANNEL_DIM).map(|_| rng.gen_range(0.0..1.0)).collect();
            let ub: Vec<f64> = (0..CHANNEL_DIM).map(|_| rng.gen_range(0.0..1.0)).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            a.forward_step(&[&u1, &ua], &y).unwrap();
            b.forward_step(&[&u1, &ub], &y).unwrap();
            for (x, z) in a.state()[..n1].iter().zip(&b.state()[..n1]) {
                assert_eq!(x.to_bits(), z.to_bits(), "{variant}");
            }
        }
        assert_ne!(a.state()[n1..], b.state()[n1..]);
    }
}

#[test]
fn reset_restores_initial_behaviour() {
    let mut m = build(&small(Variant::M1, 60, 2)).unwrap();
    random_output(&mut m, 2);
    let u = [0.5; CHANNEL_DIM];
    let first = m.forward_step(&[&u, &u], &[0.0; 4]).unwrap();
    for _ in 0..7 {
        m.forward_step(&[&u, &u], &[0.1; 4]).unwrap();
    }
    m.reset();
    assert!(m.state().iter().all(|&v| v == 0.0));
    assert_eq!(m.output(), [0.0; 4]);
    assert_eq!(m.forward_step(&[&u, &u], &[0.0; 4]).unwrap(), first);
}

#[test]
fn build_is_seeded() {
    let a = build(&small(Variant::Mstar, 100, 4)).unwrap();
    let b = build(&small(Variant::Mstar, 100, 4)).unwrap();
    let c = build(&small(Variant::Mstar, 100, 5)).unwrap();
    let weights = |m: &dualpath::model::Model| m.pathways.iter().map(|p| p.stages[0].weights.clone()).collect::<Vec<_>>();
    assert_eq!(weights(&a), weights(&b));
    assert_ne!(weights(&a), weights(&c));
    assert_ne!(a.pathways[0].stages[0].weights, a.pathways[1].stages[0].weights);
}

#[test]
fn input_routing() {
    let t = TrialSpec {
        stim_a: StimulusSpec { identity: 3, position: 1, onset: 5, offset: 12 },
        stim_b: StimulusSpec { identity: 1, position: 4, onset: 9, offset: 20 },
        t_reward: 29,
        length: 30,
    };
    let single = route_inputs(Variant::M0, &t);
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].len(), 30);
    assert_eq!(single[0][10].len(), 2 * CHANNEL_DIM);
    assert_eq!(single[0][10][2], 1.0);
    assert_eq!(single[0][10][CHANNEL_DIM], 1.0);
    assert_eq!(single[0][10][CHANNEL_DIM + 4 + 3], 1.0);
    assert_eq!(single[0][15][..CHANNEL_DIM], [0.0; CHANNEL_DIM]);

    for v in [Variant::M1, Variant::M2, Variant::M3, Variant::Mstar] {
        let dual = route_inputs(v, &t);
        assert_eq!(dual.len(), 2);
        assert_eq!(dual[0][6], vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(dual[1][6], vec![0.0; CHANNEL_DIM]);
        assert_eq!(dual[1][9], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }
}

#[test]
fn malformed_configs_are_rejected() {
    let mut cfg = ModelConfig::for_variant(Variant::M2);
    cfg.pathways.pop();
    assert!(build(&cfg).is_err());
    let mut cfg = ModelConfig::for_variant(Variant::M3);
    cfg.pathways[1].leak_rates = vec![0.5];
    assert!(build(&cfg).is_err());
    let mut cfg = ModelConfig::for_variant(Variant::M1);
    cfg.pathways[0].leak_rates = vec![1.5];
    assert!(build(&cfg).is_err());
    let mut cfg = ModelConfig::for_variant(Variant::M0);
    cfg.pathways[0].topology = Some(Default::default());
    assert!(build(&cfg).is_err());
    let mut cfg = ModelConfig::for_variant(Variant::M3);
    cfg.total_units = 5;
    assert!(build(&cfg).is_err());

    let mut m = build(&small(Variant::M1, 40, 0)).unwrap();
    let u = [0.0; CHANNEL_DIM];
    assert!(m.forward_step(&[&u], &[0.0; 4]).is_err());
    assert!(m.forward_step(&[&u, &u[..7]], &[0.0; 4]).is_err());
    assert!(m.forward_step(&[&u, &u], &[0.0; 3]).is_err());
}
