//! Directly-follows discovery: one automaton per goal with artificial START
//! and END states and one state per observed event symbol.
//!
//! A run is a path `START -> s1 -> ... -> sk -> END`; its label sequence is
//! `<s1, ..., sk>`. An arc into an event state is a transition labeled with
//! that event; arcs into END are silent.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantize::{Event, EventLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum State {
    Start,
    Event(Event),
    End,
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Start => f.write_str("START"),
            State::End => f.write_str("END"),
            State::Event(e) => write!(f, "{e}"),
        }
    }
}

impl From<State> for String {
    fn from(s: State) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for State {
    type Error = Error;

    fn try_from(s: String) -> Result<State> {
        match s.as_str() {
            "START" => Ok(State::Start),
            "END" => Ok(State::End),
            other => other.parse().map(State::Event),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArc {
    pub from: State,
    pub to: State,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalModel {
    pub goal: String,
    pub filter_threshold: f64,
    /// Sorted: START, event states by symbol, END.
    pub states: Vec<State>,
    /// Sorted by `(from, to)`.
    pub arcs: Vec<ModelArc>,
}

/// Index-based adjacency used by the alignment search. Node 0 is START; END
/// is not a node, reaching it is recorded in `to_end`.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    pub labels: Vec<Option<Event>>,
    pub successors: Vec<Vec<usize>>,
    pub predecessors: Vec<Vec<usize>>,
    pub to_end: Vec<bool>,
    by_event: HashMap<Event, usize>,
}

impl ModelGraph {
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn node_of(&self, event: Event) -> Option<usize> {
        self.by_event.get(&event).copied()
    }

    /// Whether START can reach END.
    pub fn has_complete_run(&self) -> bool {
        let mut seen = vec![false; self.node_count()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            if self.to_end[n] {
                return true;
            }
            for &m in &self.successors[n] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        false
    }
}

impl GoalModel {
    pub fn arc_count(&self, from: State, to: State) -> Option<u64> {
        self.arcs
            .iter()
            .find(|a| a.from == from && a.to == to)
            .map(|a| a.count)
    }

    pub fn total_arc_count(&self) -> u64 {
        self.arcs.iter().map(|a| a.count).sum()
    }

    pub fn event_states(&self) -> impl Iterator<Item = Event> + '_ {
        self.states.iter().filter_map(|s| match s {
            State::Event(e) => Some(*e),
            _ => None,
        })
    }

    pub fn graph(&self) -> ModelGraph {
        let mut labels = vec![None];
        let mut by_event = HashMap::new();
        for e in self.event_states() {
            by_event.insert(e, labels.len());
            labels.push(Some(e));
        }
        let n = labels.len();
        let index = |s: State| match s {
            State::Start => Some(0),
            State::Event(e) => by_event.get(&e).copied(),
            State::End => None,
        };
        let mut successors = vec![Vec::new(); n];
        let mut predecessors = vec![Vec::new(); n];
        let mut to_end = vec![false; n];
        for arc in &self.arcs {
            let Some(from) = index(arc.from) else { continue };
            match arc.to {
                State::End => to_end[from] = true,
                to => {
                    if let Some(to) = index(to) {
                        successors[from].push(to);
                        predecessors[to].push(from);
                    }
                }
            }
        }
        for list in successors.iter_mut().chain(predecessors.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        ModelGraph {
            labels,
            successors,
            predecessors,
            to_end,
            by_event,
        }
    }

    /// Graphviz rendering; arc labels carry the frequencies.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", self.goal.replace('"', "'"));
        let _ = writeln!(out, "  rankdir=LR;");
        for s in &self.states {
            let shape = match s {
                State::Start | State::End => "circle",
                State::Event(_) => "box",
            };
            let _ = writeln!(out, "  \"{s}\" [shape={shape}];");
        }
        for a in &self.arcs {
            let _ = writeln!(out, "  \"{}\" -> \"{}\" [label=\"{}\"];", a.from, a.to, a.count);
        }
        out.push_str("}\n");
        out
    }
}

/// Builds the directly-follows automaton of `log`. Arcs whose share of the
/// total arc count is below `filter_threshold` are dropped, then states not
/// on some START-END path are pruned.
pub fn build_model<T: AsRef<[Event]>>(goal: &str, log: &[T], filter_threshold: f64) -> Result<GoalModel> {
    if !(0.0..1.0).contains(&filter_threshold) {
        return Err(Error::Domain(format!(
            "filter threshold {filter_threshold} outside [0, 1)"
        )));
    }
    if log.is_empty() {
        return Err(Error::Validation(format!("event log of goal '{goal}' is empty")));
    }
    let mut counts: BTreeMap<(State, State), u64> = BTreeMap::new();
    for (i, trace) in log.iter().enumerate() {
        let events = trace.as_ref();
        if events.is_empty() {
            return Err(Error::Validation(format!(
                "trace {i} of goal '{goal}' has no events"
            )));
        }
        let mut prev = State::Start;
        for &e in events {
            *counts.entry((prev, State::Event(e))).or_default() += 1;
            prev = State::Event(e);
        }
        *counts.entry((prev, State::End)).or_default() += 1;
    }

    let total: u64 = counts.values().sum();
    counts.retain(|_, c| (*c as f64) / (total as f64) >= filter_threshold);

    let forward = reachable(&counts, State::Start, |(from, to)| (*from, *to));
    let backward = reachable(&counts, State::End, |(from, to)| (*to, *from));
    if !forward.contains(&State::End) {
        return Err(Error::Discovery(format!(
            "filtering at {filter_threshold} disconnects START from END for goal '{goal}'"
        )));
    }
    let keep: BTreeSet<State> = forward.intersection(&backward).copied().collect();
    let arcs: Vec<ModelArc> = counts
        .into_iter()
        .filter(|((from, to), _)| keep.contains(from) && keep.contains(to))
        .map(|((from, to), count)| ModelArc { from, to, count })
        .collect();

    Ok(GoalModel {
        goal: goal.to_string(),
        filter_threshold,
        states: keep.into_iter().collect(),
        arcs,
    })
}

pub fn build_model_from_log(log: &EventLog, filter_threshold: f64) -> Result<GoalModel> {
    let traces: Vec<&[Event]> = log.traces.iter().map(|t| t.events.as_slice()).collect();
    build_model(&log.goal, &traces, filter_threshold)
}

fn reachable(
    counts: &BTreeMap<(State, State), u64>,
    origin: State,
    orient: impl Fn(&(State, State)) -> (State, State),
) -> BTreeSet<State> {
    let mut seen = BTreeSet::from([origin]);
    let mut stack = vec![origin];
    while let Some(s) = stack.pop() {
        for key in counts.keys() {
            let (a, b) = orient(key);
            if a == s && seen.insert(b) {
                stack.push(b);
            }
        }
    }
    seen
}

/// True iff `events` labels a complete START-END run of `model`.
pub fn accepts(model: &GoalModel, events: &[Event]) -> bool {
    let arcs: BTreeSet<(State, State)> = model.arcs.iter().map(|a| (a.from, a.to)).collect();
    let mut current = State::Start;
    for &e in events {
        let next = State::Event(e);
        if !arcs.contains(&(current, next)) {
            return false;
        }
        current = next;
    }
    arcs.contains(&(current, State::End))
}
