use goalrec::discover::{accepts, build_model, State};
use goalrec::quantize::Event;
use proptest::prelude::*;

fn log_strategy() -> impl Strategy<Value = Vec<Vec<Event>>> {
    prop::collection::vec(prop::collection::vec((0u32..6).prop_map(Event), 1..8), 1..6)
}

proptest! {
    #[test]
    fn unfiltered_model_accepts_its_log(log in log_strategy()) {
        let model = build_model("g", &log, 0.0).unwrap();
        for t in &log {
            prop_assert!(accepts(&model, t));
        }
    }

    #[test]
    fn arc_total_counts_every_transition(log in log_strategy()) {
        let model = build_model("g", &log, 0.0).unwrap();
        let expected: u64 = log.iter().map(|t| t.len() as u64 + 1).sum();
        prop_assert_eq!(model.total_arc_count(), expected);
        let starts: u64 = model.arcs.iter().filter(|a| a.from == State::Start).map(|a| a.count).sum();
        prop_assert_eq!(starts, log.len() as u64);
    }

    #[test]
    fn model_ignores_log_order(log in log_strategy(), threshold in 0.0f64..0.3, rotate in 0usize..6) {
        let mut permuted = log.clone();
        permuted.reverse();
        let n = permuted.len();
        permuted.rotate_left(rotate % n);
        let a = build_model("g", &log, threshold);
        let b = build_model("g", &permuted, threshold);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "outcome depends on log order"),
        }
    }
}
