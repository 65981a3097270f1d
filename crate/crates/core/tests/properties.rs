//! Randomized invariants over the numeric building blocks.

use edgepool::mlp::{fedavg, init_with_layout, Layout, MlpParameters};
use edgepool::pooling::{kmeans, sq_dist, PoolingPolicy};
use edgepool::resources::{account, reserve, CostModel};
use edgepool::sim::{SimConfig, TraceEvent, TrainingTrace};
use edgepool::surrogate::{GprHyperparams, GprSurrogate};
use edgepool::topology::{NetworkTopology, Point};
use proptest::prelude::*;

fn points(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec(prop::array::uniform2(-100.0..100.0f64), 2..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kmeans_objective_never_increases(pts in points(40), k in 1usize..6, seed in 0u64..1000) {
        let k = k.min(pts.len());
        let km = kmeans(&pts, k, seed, 100, 1e-12).unwrap();
        for w in km.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-9, "{:?}", km.objective_history);
        }
        let mut sizes = vec![0; k];
        for &a in &km.assignment {
            sizes[a] += 1;
        }
        prop_assert!(sizes.iter().all(|&s| s > 0));
    }

    #[test]
    fn kmeans_points_sit_with_their_nearest_centroid(pts in points(30), k in 1usize..5, seed in 0u64..1000) {
        let k = k.min(pts.len());
        let km = kmeans(&pts, k, seed, 300, 0.0).unwrap();
        for (p, &a) in pts.iter().zip(&km.assignment) {
            let own = sq_dist(p, &km.centroids[a]);
            let best = km.centroids.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min);
            let singleton = km.assignment.iter().filter(|&&b| b == a).count() == 1;
            prop_assert!(own <= best + 1e-9 || singleton);
        }
    }

    #[test]
    fn fedavg_ignores_weight_scale(w1 in 1u32..1000, w2 in 1u32..1000, exp in -8i32..8, seed in 0u64..100) {
        let layout = Layout { inputs: 3, hidden: 4, outputs: 2 };
        let models = [init_with_layout(layout, seed), init_with_layout(layout, seed + 1)];
        let c = 2f64.powi(exp);
        let base = fedavg(&models, &[w1 as f64, w2 as f64]).unwrap();
        let scaled = fedavg(&models, &[w1 as f64 * c, w2 as f64 * c]).unwrap();
        prop_assert_eq!(&base, &scaled);
        let swapped = fedavg(&[models[1].clone(), models[0].clone()], &[w2 as f64, w1 as f64]).unwrap();
        prop_assert_eq!(&base, &swapped);
    }

    #[test]
    fn gpr_is_invariant_to_training_order(
        xs in prop::collection::vec(prop::array::uniform2(0.0..10.0f64), 2..12),
        ys in prop::collection::vec(-5.0..5.0f64, 12),
        rot in 0usize..12,
        q in prop::array::uniform2(-2.0..12.0f64),
    ) {
        let n = xs.len();
        let inputs: Vec<Vec<f64>> = xs.iter().map(|x| x.to_vec()).collect();
        let targets = &ys[..n];
        let hyper = GprHyperparams::default();
        let a = GprSurrogate::fit(&inputs, targets, &hyper).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.rotate_left(rot % n);
        order.reverse();
        let pi: Vec<Vec<f64>> = order.iter().map(|&i| inputs[i].clone()).collect();
        let pt: Vec<f64> = order.iter().map(|&i| targets[i]).collect();
        let b = GprSurrogate::fit(&pi, &pt, &hyper).unwrap();
        let (ma, va) = a.predict(&q).unwrap();
        let (mb, vb) = b.predict(&q).unwrap();
        prop_assert!((ma - mb).abs() <= 1e-6 * (1.0 + ma.abs()), "{ma} vs {mb}");
        prop_assert!((va - vb).abs() <= 1e-6 * (1.0 + va));
        let bound = hyper.signal_variance * a.target_scale().powi(2);
        prop_assert!(va >= 0.0 && va <= bound * (1.0 + 1e-12), "{va} > {bound}");
    }

    #[test]
    fn ledger_scales_linearly_with_cost_constants(
        rates in prop::collection::vec(0.01..3.0f64, 6),
        assignment in prop::collection::vec(0usize..3, 6),
        events in prop::collection::vec((1u32..=20, 0usize..3, 0u64..8, any::<bool>()), 0..40),
        exp in -4i32..5,
    ) {
        let nodes: Vec<(Point, f64)> = rates.iter().enumerate().map(|(i, &r)| (Point { x: i as f64, y: 0.0 }, r)).collect();
        let topo = NetworkTopology::from_nodes(&nodes, 10.0).unwrap();
        // make sure every pool label is used
        let mut assignment = assignment;
        assignment[..3].copy_from_slice(&[0, 1, 2]);
        let policy = PoolingPolicy::from_assignment(&topo, &assignment).unwrap();
        let sim = SimConfig { horizon_s: 20, ..SimConfig::default() };

        let mut sorted = events;
        sorted.sort_by_key(|e| e.0);
        let mut trace = TrainingTrace::empty(20, 3);
        for (t, pool, units, train) in sorted {
            trace.events.push(if train {
                TraceEvent::LocalTrain { t, subpool: pool, ap: policy.aggregators[pool], samples: units, loss: 0.0 }
            } else {
                TraceEvent::Migration { t, from_ap: 0, to_ap: policy.aggregators[pool], subpool: pool, units }
            });
        }

        let model = CostModel::default();
        let c = 2f64.powi(exp);
        let scaled = model.scaled(c);
        let base = account(&trace, &reserve(&topo, &policy, &model, &sim).unwrap(), &model).unwrap();
        let big = account(&trace, &reserve(&topo, &policy, &scaled, &sim).unwrap(), &scaled).unwrap();
        prop_assert_eq!(big.migration_ru, c * base.migration_ru);
        prop_assert_eq!(big.processing_ru, c * base.processing_ru);
        prop_assert_eq!(big.exchange_ru, c * base.exchange_ru);
        prop_assert_eq!(big.training_ru, c * base.training_ru);
        prop_assert_eq!(big.communication_overage_ru, c * base.communication_overage_ru);
        prop_assert_eq!(big.computing_overage_ru, c * base.computing_overage_ru);
    }

    #[test]
    fn fedavg_of_identical_models_is_that_model(w in 0.001..1e6f64, n in 1usize..5, seed in 0u64..50) {
        let layout = Layout { inputs: 5, hidden: 3, outputs: 4 };
        let m: MlpParameters = init_with_layout(layout, seed);
        let one = fedavg(std::slice::from_ref(&m), &[w]).unwrap();
        prop_assert_eq!(&one, &m);
        let many = fedavg(&vec![m.clone(); n], &vec![1.0; n]).unwrap();
        for (a, b) in many.tensors().iter().zip(m.tensors()) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-15 * y.abs().max(1.0));
            }
        }
    }
}
