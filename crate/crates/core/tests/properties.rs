use dualpath::policy::{argmax, softmax, update_readout, PolicyParams, ReadoutWeights};
use dualpath::reservoir::{init_weights, step, ReservoirParams, ReservoirState};
use dualpath::rng::stream;
use proptest::prelude::*;

fn unit_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn states_stay_bounded(
        seed in 0u64..1000,
        leak in 0.01f64..=1.0,
        x in unit_vec(40),
        u in prop::collection::vec(-50.0f64..50.0, 3),
        y in prop::collection::vec(-50.0f64..50.0, 4),
    ) {
        let p = ReservoirParams { n_units: 40, seed, input_scaling: 10.0, ..Default::default() };
        let w = init_weights(&p, 3, 4).unwrap();
        let mut s = ReservoirState { x };
        for _ in 0..5 {
            s = step(&s, &w, &u, &y, leak).unwrap();
            prop_assert!(s.x.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn step_is_pure(seed in 0u64..1000, leak in 0.01f64..=1.0, x in unit_vec(20), u in unit_vec(2), y in unit_vec(4)) {
        let w = init_weights(&ReservoirParams { n_units: 20, seed, ..Default::default() }, 2, 4).unwrap();
        let s = ReservoirState { x: x.clone() };
        let a = step(&s, &w, &u, &y, leak).unwrap();
        let b = step(&s, &w, &u, &y, leak).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&s.x, &x);
    }

    #[test]
    fn softmax_is_a_distribution(y in prop::collection::vec(-1e3f64..1e3, 4), beta in 1e-6f64..100.0) {
        let p = softmax(&y, beta);
        prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0 && *v <= 1.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn argmax_ignores_positive_scale(y in prop::collection::vec(-10.0f64..10.0, 4), k in 1e-3f64..1e3) {
        let scaled: Vec<f64> = y.iter().map(|v| v * k).collect();
        let i = argmax(&y);
        let j = argmax(&scaled);
        prop_assert!(i == j || y[i] == y[j]);
    }

    #[test]
    fn updates_respect_the_mask(
        seed in 0u64..1000,
        sparsity in 0.0f64..0.95,
        choice in 0usize..4,
        reward in 0.0f64..1.0,
        x in unit_vec(30),
        y in unit_vec(4),
    ) {
        let mut w = ReadoutWeights::new(4, 30, sparsity, &mut stream(seed, "mask"));
        update_readout(&mut w, choice, reward, &y, &x, &PolicyParams { eta: 0.5, beta: 3.0, x_th: 0.1 });
        for r in 0..4 {
            for c in 0..30 {
                if w.mask[(r, c)] == 0.0 || r != choice {
                    prop_assert_eq!(w.w_out[(r, c)], 0.0);
                }
            }
        }
    }
}
