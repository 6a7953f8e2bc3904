mod common;

use common::{chain_oracle, random_instance};
use goalrec::align::{brute_force_alignment, optimal_alignment, oracle_depth_bound, CostFunction};
use goalrec::discover::build_model;
use goalrec::quantize::Event;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn optimal_cost_matches_oracles(seed in any::<u64>()) {
        let (trace, model) = random_instance(seed);
        let costs = CostFunction::default();
        let a = optimal_alignment(&trace, &model, &costs).unwrap();
        a.check(&trace, &model).unwrap();
        let brute = brute_force_alignment(&trace, &model, &costs, oracle_depth_bound(&trace, &model)).unwrap();
        prop_assert_eq!(a.total_cost, brute);
        prop_assert_eq!(a.total_cost, chain_oracle(&trace, &model));
        prop_assert!(a.total_cost <= trace.len() as f64);
    }

    #[test]
    fn general_costs_match_the_dp_oracle(seed in any::<u64>(), log in 0.5f64..3.0, model_cost in 0.0f64..2.0, sync in 0.0f64..0.4) {
        let (trace, model) = random_instance(seed);
        let costs = CostFunction { sync, log, model: model_cost };
        let a = optimal_alignment(&trace, &model, &costs).unwrap();
        a.check(&trace, &model).unwrap();
        let brute = brute_force_alignment(&trace, &model, &costs, oracle_depth_bound(&trace, &model)).unwrap();
        prop_assert!((a.total_cost - brute).abs() < 1e-9, "{} vs {}", a.total_cost, brute);
    }

    #[test]
    fn extending_the_trace_never_lowers_the_cost(seed in any::<u64>(), extra in 0u32..6) {
        let (trace, model) = random_instance(seed);
        let costs = CostFunction::default();
        let mut longer = trace.clone();
        longer.push(Event(extra));
        let short = optimal_alignment(&trace, &model, &costs).unwrap().total_cost;
        let long = optimal_alignment(&longer, &model, &costs).unwrap().total_cost;
        prop_assert!(long >= short);
        prop_assert_eq!(long, chain_oracle(&longer, &model));
    }

    #[test]
    fn training_traces_align_for_free(log in prop::collection::vec(prop::collection::vec((0u32..5).prop_map(Event), 1..7), 1..5)) {
        let model = build_model("g", &log, 0.0).unwrap();
        for t in &log {
            let a = optimal_alignment(t, &model, &CostFunction::default()).unwrap();
            prop_assert_eq!(a.total_cost, 0.0);
            prop_assert!(a.moves.iter().all(|m| m.kind == goalrec::align::MoveKind::Sync));
        }
    }
}
