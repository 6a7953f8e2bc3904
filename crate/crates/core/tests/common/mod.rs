#![allow(dead_code)]

use goalrec::discover::{build_model, GoalModel, State};
use goalrec::quantize::Event;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random small alignment instance: a trace of at most 6 events and a model
/// built from at most 4 traces of length at most 5, all over at most 6 symbols.
pub fn random_instance(seed: u64) -> (Vec<Event>, GoalModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symbols = rng.random_range(1..=6u32);
    let sym = |rng: &mut ChaCha8Rng| Event(rng.random_range(0..symbols));
    let log: Vec<Vec<Event>> = (0..rng.random_range(1..=4))
        .map(|_| (0..rng.random_range(1..=5)).map(|_| sym(&mut rng)).collect())
        .collect();
    let trace: Vec<Event> = (0..rng.random_range(0..=6)).map(|_| sym(&mut rng)).collect();
    (trace, build_model("g", &log, 0.0).expect("unfiltered model"))
}

/// Minimum alignment cost under LOG = 1, SYNC = MODEL = 0, computed as the
/// trace length minus the longest run of trace positions that some model
/// run can visit in order.
#[allow(clippy::needless_range_loop)]
pub fn chain_oracle(trace: &[Event], model: &GoalModel) -> f64 {
    let states = &model.states;
    let n = states.len();
    let index = |s: &State| states.iter().position(|x| x == s).unwrap();
    // reach[a][b]: a path of at least one arc leads from a to b.
    let mut reach = vec![vec![false; n]; n];
    for arc in &model.arcs {
        reach[index(&arc.from)][index(&arc.to)] = true;
    }
    for k in 0..n {
        for a in 0..n {
            if reach[a][k] {
                for b in 0..n {
                    if reach[k][b] {
                        reach[a][b] = true;
                    }
                }
            }
        }
    }
    let start = index(&State::Start);
    let end = index(&State::End);
    let node: Vec<Option<usize>> = trace
        .iter()
        .map(|e| states.iter().position(|s| *s == State::Event(*e)))
        .collect();
    let mut chain = vec![0usize; trace.len()];
    let mut best = 0;
    for i in 0..trace.len() {
        let Some(si) = node[i] else { continue };
        if !reach[start][si] {
            continue;
        }
        let mut c = 1;
        for j in 0..i {
            if chain[j] > 0 && reach[node[j].unwrap()][si] {
                c = c.max(chain[j] + 1);
            }
        }
        chain[i] = c;
        if reach[si][end] {
            best = best.max(c);
        }
    }
    (trace.len() - best) as f64
}
