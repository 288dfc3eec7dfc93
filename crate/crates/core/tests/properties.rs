//! Property tests over the invariants that hold for arbitrary inputs.

use proptest::prelude::*;

use ndarray::{Array1, Array2};
use oes_core::earlystop::{StopDecision, StopTracker};
use oes_core::eval::bucket_sizes;
use oes_core::nn::{read_checkpoint, write_checkpoint, Topology, WeightSet};
use oes_core::oes::round_half_up;
use oes_core::panel::{rank_scale, PanelSlice};

fn slice_from_column(col: Vec<f64>) -> PanelSlice {
    let n = col.len();
    let mut x = Array2::zeros((n, 1));
    for (i, v) in col.iter().enumerate() {
        x[(i, 0)] = *v;
    }
    PanelSlice::new(
        0,
        "0".into(),
        (0..n).map(|i| format!("e{i}")).collect(),
        x,
        Array1::zeros(n),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn rank_scale_bounded_and_idempotent(
        col in prop::collection::vec(-1e6f64..1e6, 1..40),
    ) {
        let once = rank_scale(&slice_from_column(col));
        for v in once.x.iter() {
            prop_assert!(*v >= -1.0 && *v <= 1.0, "out of range: {v}");
        }
        let twice = rank_scale(&once);
        for (a, b) in once.x.iter().zip(twice.x.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_scale_invariant_under_monotone_map(
        col in prop::collection::vec(-50f64..50.0, 2..30),
    ) {
        let direct = rank_scale(&slice_from_column(col.clone()));
        let mapped: Vec<f64> = col.iter().map(|v| v.exp()).collect();
        let transformed = rank_scale(&slice_from_column(mapped));
        for (a, b) in direct.x.iter().zip(transformed.x.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn buckets_partition_any_population(n in 10usize..5000, k in 2usize..20) {
        let sizes = bucket_sizes(n, k);
        prop_assert_eq!(sizes.len(), k);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn rounding_is_within_half_and_monotone(a in 0f64..1e6, b in 0f64..1e6) {
        let ra = round_half_up(a) as f64;
        prop_assert!((a - ra).abs() <= 0.5);
        // Monotonicity: a <= b implies round(a) <= round(b).
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(round_half_up(lo) <= round_half_up(hi));
    }

    #[test]
    fn checkpoint_round_trip_any_topology(
        input_dim in 1usize..12,
        hidden in prop::collection::vec(1usize..9, 1..4),
        batch_norm in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let topo = Topology::new(input_dim, hidden, batch_norm).unwrap();
        let mut stream = oes_core::rng::SeedStream::new(seed);
        let w = WeightSet::init(&topo, &mut stream);
        let mut buf = Vec::new();
        write_checkpoint(&topo, &w, &mut buf).unwrap();
        let (topo2, w2) = read_checkpoint(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(topo, topo2);
        prop_assert_eq!(w, w2);
    }

    #[test]
    fn tracker_best_loss_is_trace_minimum(
        initial in 0.0f64..10.0,
        losses in prop::collection::vec(0.0f64..10.0, 1..60),
        tol in 1e-6f64..1.0,
        patience in 1usize..8,
    ) {
        let mut tracker = StopTracker::new(initial, tol, patience);
        for &l in &losses {
            if tracker.observe(l).1 == StopDecision::Stop {
                break;
            }
        }
        let seen = tracker.trace();
        let min = seen.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(tracker.best_loss(), min);
        prop_assert!((seen[tracker.best_step()] - min).abs() == 0.0);
        prop_assert!(tracker.steps_observed() <= losses.len());
    }
}
