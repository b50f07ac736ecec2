//! UCT tree search with one-step reward evaluation.
//!
//! Each iteration selects a leaf by UCT, asks the proposer for up to `k`
//! actions, materializes and scores every child immediately, and
//! backpropagates each valid child's total. Invalid children are kept in the
//! tree with the configured floor reward but are never visited.

mod trace;

use std::collections::HashSet;
use std::fmt::Debug;

use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use trace::{IterationRecord, NodeRecord, SearchTrace, TraceHeader, TRACE_SCHEMA};

/// Scalar type the engine is generic over.
pub trait Real: Float + Debug + Send + Sync + Serialize + 'static {}
impl<T: Float + Debug + Send + Sync + Serialize + 'static> Real for T {}

pub(crate) fn lit<F: Real>(x: f64) -> F {
    F::from(x).expect("representable constant")
}

pub const R_MIN: f64 = -100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTerms<F> {
    pub task: F,
    pub heuristic: F,
    pub penalty: F,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardBreakdown<F> {
    pub task: F,
    pub heuristic: F,
    pub penalty: F,
    pub lambda: F,
    pub gamma: F,
    pub total: F,
    pub valid: bool,
}

impl<F: Real> RewardBreakdown<F> {
    pub fn combine(terms: RewardTerms<F>, lambda: F, gamma: F) -> Self {
        RewardBreakdown {
            task: terms.task,
            heuristic: terms.heuristic,
            penalty: terms.penalty,
            lambda,
            gamma,
            total: terms.task + lambda * terms.heuristic + gamma * terms.penalty,
            valid: true,
        }
    }

    pub fn invalid(floor: F, lambda: F, gamma: F) -> Self {
        RewardBreakdown {
            task: F::zero(),
            heuristic: F::zero(),
            penalty: F::zero(),
            lambda,
            gamma,
            total: floor,
            valid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig<F> {
    pub iterations: usize,
    pub exploration: F,
    pub width: usize,
    pub lambda: F,
    pub gamma: F,
    pub seed: u64,
    pub dedup: bool,
    pub r_min: F,
}

impl<F: Real> SearchConfig<F> {
    pub fn optimization() -> Self {
        SearchConfig {
            iterations: 30,
            exploration: lit(std::f64::consts::SQRT_2),
            width: 5,
            lambda: lit(0.5),
            gamma: F::one(),
            seed: 0,
            dedup: true,
            r_min: lit(R_MIN),
        }
    }

    pub fn prediction() -> Self {
        SearchConfig {
            iterations: 100,
            ..Self::optimization()
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.to_string()));
        if self.width == 0 {
            return bad("width must be at least 1");
        }
        if !(self.exploration >= F::zero()) || !self.exploration.is_finite() {
            return bad("exploration constant must be finite and non-negative");
        }
        if !(self.lambda >= F::zero()) || !(self.gamma >= F::zero()) {
            return bad("lambda and gamma must be non-negative");
        }
        if !self.r_min.is_finite() {
            return bad("r_min must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("root state cannot be scored: {0}")]
    Root(String),
}

/// The problem being searched: states, actions, and how to score them.
pub trait SearchTask<F>: Sync {
    type State: Clone + Send + Sync;
    type Action: Clone + Send + Sync;

    fn root(&self) -> Self::State;
    /// Canonical identity used for deduplication.
    fn key(&self, state: &Self::State) -> String;
    fn describe_state(&self, state: &Self::State) -> String;
    fn describe_action(&self, action: &Self::Action) -> String;
    fn rationale(&self, _action: &Self::Action) -> String {
        String::new()
    }
    fn apply(&self, state: &Self::State, action: &Self::Action) -> Result<Self::State, String>;
    fn evaluate(&self, state: &Self::State) -> Result<RewardTerms<F>, String>;
}

/// Supplies candidate actions. An error stops the search; an empty list
/// marks the state as a dead end.
pub trait Proposer<F, T: SearchTask<F>> {
    fn id(&self) -> String;
    fn propose(&self, task: &T, state: &T::State, k: usize) -> Result<Vec<T::Action>, String>;
}

#[derive(Debug, Clone)]
pub struct SearchNode<F, S, A> {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// `None` when the action could not be materialized.
    pub state: Option<S>,
    pub action: Option<A>,
    pub state_text: String,
    pub action_text: String,
    pub rationale: String,
    /// Cumulative backed-up reward.
    pub q: F,
    pub n: u64,
    pub reward: RewardBreakdown<F>,
    pub expanded: bool,
    /// Expanded, and nothing selectable remains below.
    pub dead: bool,
    pub depth: usize,
}

impl<F: Real, S, A> SearchNode<F, S, A> {
    pub fn valid(&self) -> bool {
        self.reward.valid
    }

    pub fn selectable(&self) -> bool {
        self.reward.valid && !self.dead
    }

    pub fn mean(&self) -> F {
        self.q / lit(self.n.max(1) as f64)
    }
}

#[derive(Debug, Clone)]
pub struct SearchTree<F, S, A> {
    nodes: Vec<SearchNode<F, S, A>>,
}

/// Q/N + c·√(ln N_parent / N). Callers handle N = 0 separately.
pub fn uct_value<F: Real>(q: F, n: u64, parent_n: u64, c: F) -> F {
    let n = lit::<F>(n as f64);
    q / n + c * (lit::<F>(parent_n as f64).ln() / n).sqrt()
}

impl<F: Real, S, A> SearchTree<F, S, A> {
    pub fn with_root(state: S, state_text: String, reward: RewardBreakdown<F>) -> Self {
        let root = SearchNode {
            id: 0,
            parent: None,
            children: Vec::new(),
            state: Some(state),
            action: None,
            state_text,
            action_text: String::new(),
            rationale: String::new(),
            q: F::zero(),
            n: 0,
            reward,
            expanded: false,
            dead: false,
            depth: 0,
        };
        let mut t = SearchTree { nodes: vec![root] };
        t.backpropagate(0, reward.total);
        t
    }

    pub fn root(&self) -> &SearchNode<F, S, A> {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &SearchNode<F, S, A> {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[SearchNode<F, S, A>] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Appends a child; valid children are not visited until backpropagated.
    #[allow(clippy::too_many_arguments)]
    pub fn insert(
        &mut self,
        parent: usize,
        state: Option<S>,
        action: Option<A>,
        state_text: String,
        action_text: String,
        rationale: String,
        reward: RewardBreakdown<F>,
    ) -> usize {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(SearchNode {
            id,
            parent: Some(parent),
            children: Vec::new(),
            state,
            action,
            state_text,
            action_text,
            rationale,
            q: F::zero(),
            n: 0,
            reward,
            expanded: false,
            dead: false,
            depth,
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Adds `value` to Q and one to N on `node` and every ancestor.
    pub fn backpropagate(&mut self, node: usize, value: F) {
        let mut cur = Some(node);
        while let Some(id) = cur {
            let n = &mut self.nodes[id];
            n.q = n.q + value;
            n.n += 1;
            cur = n.parent;
        }
    }

    /// Child of `id` chosen by UCT among selectable children: unvisited
    /// first, otherwise the maximal UCT value; ties go to the earlier child.
    pub fn select_child(&self, id: usize, c: F) -> Option<usize> {
        let node = &self.nodes[id];
        let mut best: Option<(usize, F)> = None;
        for &ch in &node.children {
            let child = &self.nodes[ch];
            if !child.selectable() {
                continue;
            }
            if child.n == 0 {
                return Some(ch);
            }
            let v = uct_value(child.q, child.n, node.n, c);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((ch, v));
            }
        }
        best.map(|(ch, _)| ch)
    }

    /// Root-to-leaf path: descends until an unexpanded node or one without
    /// selectable children.
    pub fn uct_select(&self, c: F) -> Vec<usize> {
        let mut path = vec![0];
        let mut cur = 0;
        while self.nodes[cur].expanded {
            match self.select_child(cur, c) {
                Some(ch) => {
                    path.push(ch);
                    cur = ch;
                }
                None => break,
            }
        }
        path
    }

    /// Marks `id` dead if it has nothing selectable left, then repeats for
    /// its ancestors.
    fn propagate_dead(&mut self, id: usize) {
        let mut cur = Some(id);
        while let Some(i) = cur {
            let node = &self.nodes[i];
            if !node.expanded || node.children.iter().any(|&c| self.nodes[c].selectable()) {
                break;
            }
            self.nodes[i].dead = true;
            cur = self.nodes[i].parent;
        }
    }

    /// First node with the largest total among valid nodes.
    pub fn best(&self) -> usize {
        let mut best = 0;
        for n in &self.nodes {
            if n.valid() && n.reward.total > self.nodes[best].reward.total {
                best = n.id;
            }
        }
        best
    }

    /// Ids from the root down to `id`.
    pub fn ancestry(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut cur = self.nodes[id].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p].parent;
        }
        out.reverse();
        out
    }

    /// Bookkeeping invariants; returns the first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let tol = lit::<F>(1e-9);
        for n in &self.nodes {
            if n.valid() {
                let child_n: u64 = n.children.iter().map(|&c| self.nodes[c].n).sum();
                if n.n != 1 + child_n {
                    return Err(format!("node {}: N = {} but 1 + Σ child N = {}", n.id, n.n, 1 + child_n));
                }
                let child_q = n.children.iter().fold(F::zero(), |a, &c| a + self.nodes[c].q);
                let want = n.reward.total + child_q;
                if (n.q - want).abs() > tol * (F::one() + want.abs()) {
                    return Err(format!("node {}: Q = {:?} but expected {:?}", n.id, n.q, want));
                }
                let own = n.reward.total - (n.reward.task + n.reward.lambda * n.reward.heuristic + n.reward.gamma * n.reward.penalty);
                if own.abs() > tol * (F::one() + n.reward.total.abs()) {
                    return Err(format!("node {}: total disagrees with its terms", n.id));
                }
            } else if n.n != 0 || n.q != F::zero() || !n.children.is_empty() {
                return Err(format!("invalid node {} was visited or expanded", n.id));
            }
            for &c in &n.children {
                if self.nodes[c].parent != Some(n.id) {
                    return Err(format!("node {c} does not point back to {}", n.id));
                }
            }
        }
        Ok(())
    }
}

pub struct SearchOutcome<F, S, A> {
    pub tree: SearchTree<F, S, A>,
    pub best: usize,
    pub trace: SearchTrace<F>,
}

impl<F: Real, S: Clone, A> SearchOutcome<F, S, A> {
    pub fn best_state(&self) -> S {
        self.tree.node(self.best).state.clone().expect("best node is valid")
    }

    pub fn best_reward(&self) -> RewardBreakdown<F> {
        self.tree.node(self.best).reward
    }
}

/// A running search that can be stepped one iteration at a time.
pub struct Mcts<'a, F: Real, T: SearchTask<F>, P> {
    task: &'a T,
    proposer: &'a P,
    config: SearchConfig<F>,
    tree: SearchTree<F, T::State, T::Action>,
    seen: HashSet<String>,
    records: Vec<IterationRecord<F>>,
    truncated: Option<String>,
    exhausted: bool,
}

impl<'a, F: Real, T: SearchTask<F>, P: Proposer<F, T>> Mcts<'a, F, T, P> {
    pub fn new(task: &'a T, proposer: &'a P, config: SearchConfig<F>) -> Result<Self, SearchError> {
        config.validate()?;
        let root = task.root();
        let terms = task.evaluate(&root).map_err(SearchError::Root)?;
        let reward = RewardBreakdown::combine(terms, config.lambda, config.gamma);
        let mut seen = HashSet::new();
        seen.insert(task.key(&root));
        let text = task.describe_state(&root);
        Ok(Mcts {
            task,
            proposer,
            tree: SearchTree::with_root(root, text, reward),
            config,
            seen,
            records: Vec::new(),
            truncated: None,
            exhausted: false,
        })
    }

    pub fn tree(&self) -> &SearchTree<F, T::State, T::Action> {
        &self.tree
    }

    pub fn iterations_done(&self) -> usize {
        self.records.len()
    }

    /// One select/propose/expand/simulate/backpropagate round. Returns
    /// false once the search cannot continue.
    pub fn step(&mut self) -> bool {
        if self.truncated.is_some() || self.exhausted {
            return false;
        }
        if self.tree.root().dead {
            self.exhausted = true;
            return false;
        }
        let path = self.tree.uct_select(self.config.exploration);
        let leaf = *path.last().expect("path has the root");
        let state = self.tree.node(leaf).state.clone().expect("selected nodes are valid");
        let mut actions = match self.proposer.propose(self.task, &state, self.config.width) {
            Ok(a) => a,
            Err(e) => {
                log::warn!("proposer failed at iteration {}: {e}", self.records.len() + 1);
                self.truncated = Some(e);
                return false;
            }
        };
        actions.truncate(self.config.width);
        let task = self.task;
        let applied: Vec<Result<T::State, String>> = actions.par_iter().map(|a| task.apply(&state, a)).collect();

        // dedup sequentially so earlier proposals win
        let mut keep = Vec::with_capacity(actions.len());
        for (a, s) in actions.into_iter().zip(applied) {
            if let Ok(st) = &s {
                if !self.seen.insert(task.key(st)) && self.config.dedup {
                    continue;
                }
            }
            keep.push((a, s));
        }
        let scored: Vec<Option<Result<RewardTerms<F>, String>>> = keep
            .par_iter()
            .map(|(_, s)| s.as_ref().ok().map(|st| task.evaluate(st)))
            .collect();

        self.tree.nodes[leaf].expanded = true;
        let (lambda, gamma) = (self.config.lambda, self.config.gamma);
        let mut added = Vec::new();
        for ((action, state), score) in keep.into_iter().zip(scored) {
            let action_text = task.describe_action(&action);
            let rationale = task.rationale(&action);
            let (state, text, reward) = match (state, score) {
                (Ok(st), Some(Ok(terms))) => {
                    let text = task.describe_state(&st);
                    (Some(st), text, RewardBreakdown::combine(terms, lambda, gamma))
                }
                (Ok(st), Some(Err(e))) => {
                    log::info!("scoring failed for {action_text}: {e}");
                    let text = task.describe_state(&st);
                    (None, text, RewardBreakdown::invalid(self.config.r_min, lambda, gamma))
                }
                (Err(e), _) => {
                    log::info!("invalid action {action_text}: {e}");
                    (None, format!("invalid: {e}"), RewardBreakdown::invalid(self.config.r_min, lambda, gamma))
                }
                (Ok(_), None) => unreachable!("valid states are always scored"),
            };
            let id = self.tree.insert(leaf, state, Some(action), text, action_text, rationale, reward);
            if reward.valid {
                self.tree.backpropagate(id, reward.total);
            }
            added.push(id);
        }
        self.tree.propagate_dead(leaf);
        let best = self.tree.best();
        self.records.push(IterationRecord {
            iteration: self.records.len() + 1,
            selected: path,
            added,
            best_node: best,
            best_total: self.tree.node(best).reward.total,
        });
        true
    }

    pub fn run(mut self) -> SearchOutcome<F, T::State, T::Action> {
        while self.records.len() < self.config.iterations && self.step() {}
        self.finish()
    }

    pub fn finish(self) -> SearchOutcome<F, T::State, T::Action> {
        let best = self.tree.best();
        let header = TraceHeader {
            config: self.config.clone(),
            seed: self.config.seed,
            provider: self.proposer.id(),
            fingerprint_hash_seed: crate::molgraph::FINGERPRINT_HASH_SEED,
        };
        let trace = SearchTrace::build(header, &self.tree, self.records, best, self.truncated, self.exhausted);
        SearchOutcome {
            tree: self.tree,
            best,
            trace,
        }
    }
}

/// Runs a full search with `config.iterations` iterations.
pub fn search<F: Real, T: SearchTask<F>, P: Proposer<F, T>>(
    task: &T,
    proposer: &P,
    config: SearchConfig<F>,
) -> Result<SearchOutcome<F, T::State, T::Action>, SearchError> {
    Ok(Mcts::new(task, proposer, config)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Integers from 1; the value peaks at `peak`; stepping below 1 is invalid.
    struct Line {
        peak: i64,
    }

    impl SearchTask<f64> for Line {
        type State = i64;
        type Action = i64;
        fn root(&self) -> i64 {
            1
        }
        fn key(&self, s: &i64) -> String {
            s.to_string()
        }
        fn describe_state(&self, s: &i64) -> String {
            s.to_string()
        }
        fn describe_action(&self, a: &i64) -> String {
            format!("{a:+}")
        }
        fn apply(&self, s: &i64, a: &i64) -> Result<i64, String> {
            let n = s + a;
            if n < 1 {
                Err(format!("{n} is below 1"))
            } else {
                Ok(n)
            }
        }
        fn evaluate(&self, s: &i64) -> Result<RewardTerms<f64>, String> {
            Ok(RewardTerms {
                task: -((s - self.peak).abs() as f64),
                heuristic: 1.0,
                penalty: -0.5,
            })
        }
    }

    struct Steps(Vec<i64>);

    impl Proposer<f64, Line> for Steps {
        fn id(&self) -> String {
            "steps".into()
        }
        fn propose(&self, _: &Line, _: &i64, _: usize) -> Result<Vec<i64>, String> {
            Ok(self.0.clone())
        }
    }

    struct Failing;

    impl Proposer<f64, Line> for Failing {
        fn id(&self) -> String {
            "failing".into()
        }
        fn propose(&self, _: &Line, _: &i64, _: usize) -> Result<Vec<i64>, String> {
            Err("provider unreachable".into())
        }
    }

    fn config(iterations: usize) -> SearchConfig<f64> {
        SearchConfig {
            iterations,
            ..SearchConfig::optimization()
        }
    }

    #[test]
    fn uct_formula() {
        assert_abs_diff_eq!(uct_value(1.0, 2, 10, 1.414), 2.017, epsilon = 1e-3);
        assert!(uct_value(1.0, 2, 10, 1.414) > 1.9);
    }

    #[test]
    fn reward_combination() {
        let t = RewardTerms {
            task: 0.8,
            heuristic: 3.0,
            penalty: -0.2,
        };
        assert_abs_diff_eq!(RewardBreakdown::combine(t, 0.5, 1.0).total, 2.1, epsilon = 1e-12);
        assert_eq!(RewardBreakdown::combine(t, 0.0, 0.0).total, 0.8);
        let bad = RewardBreakdown::<f64>::invalid(R_MIN, 0.5, 1.0);
        assert_eq!((bad.total, bad.valid), (-100.0, false));
    }

    #[test]
    fn backpropagation_is_additive() {
        let r = RewardBreakdown::combine(
            RewardTerms {
                task: 1.0,
                heuristic: 0.0,
                penalty: 0.0,
            },
            0.0,
            0.0,
        );
        let mut t: SearchTree<f64, i64, i64> = SearchTree::with_root(0, "0".into(), r);
        assert_eq!((t.root().q, t.root().n), (1.0, 1));
        let a = t.insert(0, Some(1), Some(1), "1".into(), "+1".into(), String::new(), r);
        let b = t.insert(a, Some(2), Some(1), "2".into(), "+1".into(), String::new(), r);
        t.backpropagate(b, 2.0);
        t.backpropagate(a, 3.0);
        assert_eq!((t.node(b).q, t.node(b).n), (2.0, 1));
        assert_eq!((t.node(a).q, t.node(a).n), (5.0, 2));
        assert_eq!((t.root().q, t.root().n), (6.0, 3));
    }

    #[test]
    fn root_only_and_zero_budget() {
        let task = Line { peak: 4 };
        let steps = Steps(vec![1]);
        let m = Mcts::new(&task, &steps, config(0)).unwrap();
        assert_eq!(m.tree().uct_select(1.0), [0]);
        let out = m.run();
        assert_eq!(out.best_state(), 1);
        assert!(out.trace.iterations.is_empty());
    }

    #[test]
    fn invalid_children_are_penalized_and_never_selected() {
        let task = Line { peak: 6 };
        let out = search(&task, &Steps(vec![-5, 1, 2]), config(10)).unwrap();
        let invalid: Vec<_> = out.tree.nodes().iter().filter(|n| !n.valid()).collect();
        assert!(!invalid.is_empty());
        for n in &invalid {
            assert_eq!(n.reward.total, -100.0);
            assert_eq!(n.n, 0);
        }
        for rec in &out.trace.iterations {
            assert!(rec.selected.iter().all(|&id| out.tree.node(id).valid()));
        }
        assert_eq!(out.best_state(), 6);
        out.tree.check_invariants().unwrap();
    }

    #[test]
    fn dedup_skips_known_states() {
        let task = Line { peak: 3 };
        let out = search(&task, &Steps(vec![1, 1, -1 + 1]), config(1)).unwrap();
        // 1+1 once; the second +1 and the +0 self-loop are duplicates
        assert_eq!(out.tree.len(), 2);
        let mut cfg = config(1);
        cfg.dedup = false;
        assert_eq!(search(&task, &Steps(vec![1, 1]), cfg).unwrap().tree.len(), 3);
    }

    #[test]
    fn exhaustion_and_truncation() {
        let task = Line { peak: 3 };
        let out = search(&task, &Steps(vec![]), config(5)).unwrap();
        assert!(out.trace.exhausted);
        assert_eq!(out.trace.iterations.len(), 1);
        let out = search(&task, &Failing, config(5)).unwrap();
        assert_eq!(out.trace.truncated.as_deref(), Some("provider unreachable"));
        assert_eq!(out.best_state(), 1);
    }

    #[test]
    fn config_validation() {
        let mut c = config(1);
        c.width = 0;
        assert!(c.validate().is_err());
        let mut c = config(1);
        c.exploration = -1.0;
        assert!(c.validate().is_err());
    }
}
