//! Property-based invariants over randomly generated instances.

mod common;

use std::collections::BTreeSet;

use common::{random_instance, Regime, Shape, AGGREGATIONS};
use gnnverify::bounds::{
    max_bounds, mean_bounds, plain_bounds, propagate, sum_bounds, AggregationBoundProblem, Interval,
};
use gnnverify::graph::{apply_perturbation, validate_perturbation, EdgeEditSet};
use gnnverify::io;
use gnnverify::model::{forward, forward_all, forward_trace, Aggregation};
use gnnverify::oracle::{brute_force_verify, enumerate_structural, sample_attrs, sample_edits};
use gnnverify::verifier::Status;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shape() -> Shape {
    Shape {
        max_nodes: 6,
        max_units: 12,
        ..Shape::default()
    }
}

fn regime(i: u8) -> Regime {
    [Regime::Deletions, Regime::SampledAdditions, Regime::Mixed][usize::from(i) % 3]
}

/// Number of unit subsets of size at most `delta` respecting the local
/// budgets, counted by plain recursion.
fn count_subsets(heads: &[Vec<usize>], room: &mut Vec<usize>, start: usize, left: usize) -> usize {
    let mut total = 1;
    if left == 0 {
        return total;
    }
    for j in start..heads.len() {
        let fits = heads[j].iter().all(|&h| room[h] > 0) && {
            let mut need = vec![0; room.len()];
            heads[j].iter().for_each(|&h| need[h] += 1);
            need.iter().zip(room.iter()).all(|(n, r)| n <= r)
        };
        if fits {
            heads[j].iter().for_each(|&h| room[h] -= 1);
            total += count_subsets(heads, room, j + 1, left - 1);
            heads[j].iter().for_each(|&h| room[h] += 1);
        }
    }
    total
}

fn interval(lo: f64, width: f64) -> Interval {
    Interval::new(lo, lo + width)
}

fn problem_strategy() -> impl Strategy<Value = AggregationBoundProblem> {
    let iv = (-5.0f64..5.0, 0.0f64..4.0).prop_map(|(lo, w)| interval(lo, w));
    (
        prop::collection::vec(iv.clone(), 0..3),
        prop::collection::vec(iv.clone(), 0..3),
        prop::collection::vec(iv, 0..3),
        0usize..4,
    )
        .prop_map(|(f, d, i, s)| AggregationBoundProblem::new(f, d, i, s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_is_complete_distinct_and_admissible(seed in any::<u64>(), r in 0u8..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, &shape(), Aggregation::Sum, regime(r), 0.0);
        let all: Vec<EdgeEditSet> = enumerate_structural(&inst.graph, &inst.spec).unwrap().collect();
        let distinct: BTreeSet<_> = all.iter().map(|e| (e.deletions.clone(), e.insertions.clone())).collect();
        prop_assert_eq!(distinct.len(), all.len());
        for edits in &all {
            let report = validate_perturbation(&inst.graph, &inst.spec, edits, inst.graph.attrs()).unwrap();
            prop_assert!(report.is_valid(), "{}", report);
        }
        let units = inst.spec.units(&inst.graph);
        let heads: Vec<Vec<usize>> = units.iter().map(|u| u.heads().collect()).collect();
        let mut room: Vec<usize> = (0..inst.graph.num_nodes()).map(|v| inst.spec.local_budget(v).min(64)).collect();
        prop_assert_eq!(all.len(), count_subsets(&heads, &mut room, 0, inst.spec.delta()));
    }

    #[test]
    fn propagated_bounds_contain_sampled_runs(seed in any::<u64>(), a in 0usize..3, r in 0u8..3, eps in 0.0f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, &shape(), AGGREGATIONS[a], regime(r), eps);
        let table = propagate(&inst.model, &inst.graph, &inst.spec, inst.target).unwrap();
        for _ in 0..20 {
            let edits = sample_edits(&inst.graph, &inst.spec, &mut rng);
            let attrs = sample_attrs(&inst.graph, &inst.spec, &mut rng);
            let g = apply_perturbation(&inst.graph, &inst.spec, &edits, attrs).unwrap();
            let trace = forward_trace(&inst.model, &g, inst.target).unwrap();
            for (k, layer) in trace.layers.iter().enumerate() {
                for (&v, tr) in layer {
                    let nb = table.node(k + 1, v).unwrap();
                    for (b, &x) in nb.pre_activation.iter().zip(&tr.pre_activation) {
                        prop_assert!(b.contains(x, 1e-9 * (1.0 + x.abs())), "k{} v{v}: {x} not in [{}, {}]", k + 1, b.lo, b.hi);
                    }
                }
            }
        }
    }

    #[test]
    fn aggregation_bounds_cover_every_choice(p in problem_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bounds = [
            (Aggregation::Sum, sum_bounds(&p)),
            (Aggregation::Max, max_bounds(&p)),
            (Aggregation::Mean, mean_bounds(&p)),
        ];
        // The sum formula may fall below the plain lower bound, so only max
        // and mean are compared.
        for (aggr, tight) in bounds.into_iter().skip(1) {
            let plain = plain_bounds(aggr, &p);
            prop_assert!(tight.is_subset_of(&plain, 1e-9), "{aggr:?}: [{}, {}] vs plain [{}, {}]", tight.lo, tight.hi, plain.lo, plain.hi);
        }
        for _ in 0..50 {
            let mut budget = p.budget;
            let mut values: Vec<f64> = p.fixed.iter().map(|x| rng.gen_range(x.lo..=x.hi)).collect();
            for x in &p.deletable {
                if budget > 0 && rng.gen_bool(0.5) {
                    budget -= 1;
                } else {
                    values.push(rng.gen_range(x.lo..=x.hi));
                }
            }
            for x in &p.insertable {
                if budget > 0 && rng.gen_bool(0.5) {
                    budget -= 1;
                    values.push(rng.gen_range(x.lo..=x.hi));
                }
            }
            let n = values.len() as f64;
            let sum: f64 = values.iter().sum();
            let outputs = [
                (Aggregation::Sum, sum),
                (Aggregation::Max, if values.is_empty() { 0.0 } else { values.iter().copied().fold(f64::NEG_INFINITY, f64::max) }),
                (Aggregation::Mean, if values.is_empty() { 0.0 } else { sum / n }),
            ];
            for ((aggr, x), (_, b)) in outputs.into_iter().zip(bounds) {
                prop_assert!(b.contains(x, 1e-9), "{aggr:?}: {x} not in [{}, {}]", b.lo, b.hi);
            }
        }
    }

    #[test]
    fn larger_budgets_never_restore_robustness(seed in any::<u64>(), a in 0usize..3, r in 0u8..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, &shape(), AGGREGATIONS[a], regime(r), 0.0);
        let mut was_robust = true;
        for delta in 0..=3 {
            let spec = inst.spec.clone().with_delta(delta);
            let v = brute_force_verify(&inst.model, &inst.graph, &spec, inst.target).unwrap();
            let robust = v.status == Status::Robust;
            prop_assert!(was_robust || !robust, "robust again at delta {delta}");
            was_robust = robust;
        }
    }

    #[test]
    fn json_round_trips_preserve_predictions(seed in any::<u64>(), a in 0usize..3, r in 0u8..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, &shape(), AGGREGATIONS[a], regime(r), 0.1);
        let model = io::model_from_json(&io::model_to_json(&inst.model)).unwrap();
        let graph = io::graph_from_json(&io::graph_to_json(&inst.graph)).unwrap();
        let spec = io::spec_from_json(&io::spec_to_json(&inst.graph, &inst.spec), &graph).unwrap();
        prop_assert_eq!(&model, &inst.model);
        prop_assert_eq!(&spec, &inst.spec);
        prop_assert_eq!(forward_all(&model, &graph).unwrap(), forward_all(&inst.model, &inst.graph).unwrap());
    }

    #[test]
    fn receptive_field_forward_matches_full_pass(seed in any::<u64>(), a in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, &shape(), AGGREGATIONS[a], Regime::Deletions, 0.0);
        let all = forward_all(&inst.model, &inst.graph).unwrap();
        for (t, row) in all.iter().enumerate() {
            let local = forward(&inst.model, &inst.graph, t).unwrap().values;
            for (x, y) in local.iter().zip(row) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }
}
