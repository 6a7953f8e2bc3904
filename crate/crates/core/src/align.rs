//! Optimal alignments between an event trace and a [`GoalModel`].
//!
//! The search runs over the synchronous product: node `(i, s)` means `i`
//! trace events consumed with the model in state `s`. Moves:
//!
//! * SYNC  `(i, s) -> (i+1, t)` when `s -> t` is an arc labeled `trace[i]`,
//! * LOG   `(i, s) -> (i+1, s)`,
//! * MODEL `(i, s) -> (i, t)` for any arc `s -> t`.
//!
//! Accepting nodes are `(len, s)` with an arc `s -> END`. Among minimum-cost
//! alignments the search returns the one with the fewest moves, and among
//! those the lexicographically smallest move sequence under the per-node
//! order SYNC < MODEL (by target state) < LOG. Counting moves as a secondary
//! weight keeps zero-cost MODEL cycles out of the result.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::discover::{GoalModel, ModelGraph};
use crate::error::{Error, Result};
use crate::quantize::Event;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MoveKind {
    Sync,
    Log,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub kind: MoveKind,
    pub trace_event: Option<Event>,
    pub model_event: Option<Event>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFunction {
    pub sync: f64,
    pub log: f64,
    pub model: f64,
}

impl Default for CostFunction {
    fn default() -> Self {
        Self {
            sync: 0.0,
            log: 1.0,
            model: 0.0,
        }
    }
}

impl CostFunction {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sync", self.sync), ("log", self.log), ("model", self.model)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("{name} move cost {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    fn of(&self, kind: MoveKind) -> f64 {
        match kind {
            MoveKind::Sync => self.sync,
            MoveKind::Log => self.log,
            MoveKind::Model => self.model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub moves: Vec<Move>,
    pub total_cost: f64,
}

impl Alignment {
    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn count(&self, kind: MoveKind) -> usize {
        self.moves.iter().filter(|m| m.kind == kind).count()
    }

    /// Length of the run of LOG moves that ends the alignment.
    pub fn trailing_log_moves(&self) -> usize {
        self.moves
            .iter()
            .rev()
            .take_while(|m| m.kind == MoveKind::Log)
            .count()
    }

    /// Trace events consumed by SYNC and LOG moves, in order.
    pub fn trace_projection(&self) -> Vec<Event> {
        self.moves
            .iter()
            .filter(|m| m.kind != MoveKind::Model)
            .filter_map(|m| m.trace_event)
            .collect()
    }

    /// Model labels fired by SYNC and MODEL moves, in order.
    pub fn model_projection(&self) -> Vec<Event> {
        self.moves
            .iter()
            .filter(|m| m.kind != MoveKind::Log)
            .filter_map(|m| m.model_event)
            .collect()
    }

    /// Verifies both projections and the cost sum; used to audit results.
    pub fn check(&self, events: &[Event], model: &GoalModel) -> Result<()> {
        if self.trace_projection() != events {
            return Err(Error::Alignment("trace projection differs from the trace".into()));
        }
        if !crate::discover::accepts(model, &self.model_projection()) {
            return Err(Error::Alignment("model projection is not a complete run".into()));
        }
        for m in &self.moves {
            let ok = match m.kind {
                MoveKind::Sync => m.trace_event.is_some() && m.trace_event == m.model_event,
                MoveKind::Log => m.trace_event.is_some() && m.model_event.is_none(),
                MoveKind::Model => m.trace_event.is_none() && m.model_event.is_some(),
            };
            if !ok {
                return Err(Error::Alignment(format!("malformed move {m:?}")));
            }
        }
        let sum: f64 = self.moves.iter().map(|m| m.cost).sum();
        if (sum - self.total_cost).abs() > 1e-9 * sum.abs().max(1.0) {
            return Err(Error::Alignment("total cost differs from the move sum".into()));
        }
        Ok(())
    }

    /// Two-row table, trace on top and model below, `≫` marking skips.
    pub fn to_table(&self) -> String {
        let cell = |e: Option<Event>| e.map_or_else(|| "≫".to_string(), |e| e.to_string());
        let top: Vec<String> = self.moves.iter().map(|m| cell(m.trace_event)).collect();
        let bottom: Vec<String> = self.moves.iter().map(|m| cell(m.model_event)).collect();
        let mut rows = [String::from("trace |"), String::from("model |")];
        for (t, b) in top.iter().zip(&bottom) {
            let width = t.chars().count().max(b.chars().count());
            let _ = write!(rows[0], " {t:<width$} |");
            let _ = write!(rows[1], " {b:<width$} |");
        }
        format!("{}\n{}\n", rows[0], rows[1])
    }
}

/// `(cost, moves)`, compared lexicographically.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Weight(f64, u32);

impl Weight {
    const INFINITE: Weight = Weight(f64::INFINITY, u32::MAX);

    fn cmp(&self, other: &Weight) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Debug, PartialEq)]
struct Queued {
    weight: Weight,
    node: usize,
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (weight, node).
        other
            .weight
            .cmp(&self.weight)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
struct Step {
    kind: MoveKind,
    /// SYNC = (0, 0), MODEL = (1, target state), LOG = (2, 0).
    rank: (u8, usize),
    target: usize,
}

pub fn optimal_alignment(events: &[Event], model: &GoalModel, costs: &CostFunction) -> Result<Alignment> {
    optimal_alignment_in(events, &model.graph(), costs)
}

/// Same as [`optimal_alignment`] on a precompiled graph.
///
/// Runs Dijkstra backwards from the accepting nodes, so every node knows its
/// remaining weight and its best first move; walking those moves from
/// `(0, START)` yields the canonical alignment.
pub fn optimal_alignment_in(events: &[Event], graph: &ModelGraph, costs: &CostFunction) -> Result<Alignment> {
    costs.validate()?;
    if !graph.has_complete_run() {
        return Err(Error::Alignment("model has no START-END run".into()));
    }
    let states = graph.node_count();
    let len = events.len();
    let node = |i: usize, s: usize| i * states + s;
    let total_nodes = (len + 1) * states;

    let mut dist = vec![Weight::INFINITE; total_nodes];
    let mut next: Vec<Option<Step>> = vec![None; total_nodes];
    let mut settled = vec![false; total_nodes];
    let mut heap = BinaryHeap::new();
    for s in (0..states).filter(|&s| graph.to_end[s]) {
        let v = node(len, s);
        dist[v] = Weight(0.0, 0);
        heap.push(Queued {
            weight: dist[v],
            node: v,
        });
    }

    let start = node(0, 0);
    while let Some(Queued { weight, node: v }) = heap.pop() {
        if settled[v] {
            continue;
        }
        settled[v] = true;
        if v == start {
            break;
        }
        let (i, t) = (v / states, v % states);
        let mut relax = |u: usize, kind: MoveKind, rank: (u8, usize)| {
            if settled[u] {
                return;
            }
            let cand = Weight(weight.0 + costs.of(kind), weight.1 + 1);
            let step = Step { kind, rank, target: v };
            match cand.cmp(&dist[u]) {
                Ordering::Less => {
                    dist[u] = cand;
                    next[u] = Some(step);
                    heap.push(Queued { weight: cand, node: u });
                }
                Ordering::Equal if next[u].is_some_and(|n| rank < n.rank) => {
                    next[u] = Some(step);
                }
                _ => {}
            }
        };
        if i > 0 {
            relax(node(i - 1, t), MoveKind::Log, (2, 0));
        }
        if t != 0 {
            let synced = i > 0 && graph.labels[t] == Some(events[i - 1]);
            for &s in &graph.predecessors[t] {
                if synced {
                    relax(node(i - 1, s), MoveKind::Sync, (0, 0));
                }
                relax(node(i, s), MoveKind::Model, (1, t));
            }
        }
    }

    if !settled[start] {
        return Err(Error::Alignment("no alignment reaches an accepting node".into()));
    }
    let mut moves = Vec::with_capacity(dist[start].1 as usize);
    let mut u = start;
    while let Some(step) = next[u] {
        let i = u / states;
        let t = step.target % states;
        let mv = match step.kind {
            MoveKind::Sync => Move {
                kind: MoveKind::Sync,
                trace_event: Some(events[i]),
                model_event: graph.labels[t],
                cost: costs.sync,
            },
            MoveKind::Log => Move {
                kind: MoveKind::Log,
                trace_event: Some(events[i]),
                model_event: None,
                cost: costs.log,
            },
            MoveKind::Model => Move {
                kind: MoveKind::Model,
                trace_event: None,
                model_event: graph.labels[t],
                cost: costs.model,
            },
        };
        moves.push(mv);
        u = step.target;
    }
    let total_cost = moves.iter().map(|m| m.cost).sum();
    Ok(Alignment { moves, total_cost })
}

/// Above this many node-depth evaluations the oracle refuses to run.
pub const ORACLE_EXPANSION_CAP: usize = 1_000_000;

/// Exhaustive minimum alignment cost over every move sequence of at most
/// `depth_cap` moves, by depth-bounded dynamic programming over the product.
/// A verification oracle for small instances.
pub fn brute_force_alignment(
    events: &[Event],
    model: &GoalModel,
    costs: &CostFunction,
    depth_cap: usize,
) -> Result<f64> {
    costs.validate()?;
    let graph = model.graph();
    let states = graph.node_count();
    let len = events.len();
    let nodes = (len + 1) * states;
    if nodes.saturating_mul(depth_cap.max(1)) > ORACLE_EXPANSION_CAP {
        return Err(Error::OracleInfeasible(format!(
            "{nodes} nodes x depth {depth_cap} exceeds {ORACLE_EXPANSION_CAP} expansions"
        )));
    }
    let accepting = |i: usize, s: usize| i == len && graph.to_end[s];
    // best[(i, s)] = cheapest completion within the current depth budget.
    let mut best = vec![f64::INFINITY; nodes];
    for s in 0..states {
        if accepting(len, s) {
            best[len * states + s] = 0.0;
        }
    }
    for _ in 0..depth_cap {
        let mut updated = best.clone();
        for i in 0..=len {
            for s in 0..states {
                let mut value = if accepting(i, s) { 0.0 } else { f64::INFINITY };
                if i < len {
                    value = value.min(costs.log + best[(i + 1) * states + s]);
                }
                for &t in &graph.successors[s] {
                    value = value.min(costs.model + best[i * states + t]);
                    if i < len && graph.labels[t] == Some(events[i]) {
                        value = value.min(costs.sync + best[(i + 1) * states + t]);
                    }
                }
                updated[i * states + s] = value;
            }
        }
        best = updated;
    }
    let cost = best[0];
    if cost.is_finite() {
        Ok(cost)
    } else {
        Err(Error::OracleInfeasible(format!(
            "no accepting sequence within {depth_cap} moves"
        )))
    }
}

/// A depth bound that always admits an optimal alignment: a cheapest path
/// never needs to revisit a product node.
pub fn oracle_depth_bound(events: &[Event], model: &GoalModel) -> usize {
    (events.len() + 1) * model.graph().node_count()
}
