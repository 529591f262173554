//! Monte Carlo tree search over prompt sets.
//!
//! Each iteration selects a leaf by UCT, expands it with the best of the
//! globally filtered candidate actions, rolls out greedily for a few steps
//! and backs up the undiscounted future return of every edge on the path.
//! The first iteration starts by evaluating every action at the root to
//! seed the global action statistics.
//!
//! The search only talks to an [`Environment`]: states are opaque ids with
//! a cached aggregate discrepancy `R`, and the reward of a transition is the
//! decrease of `R`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::step_reward;
use crate::strategist::ActionId;
use crate::types::StateId;

pub mod env;

pub use env::PromptEnvironment;

/// When selection stops descending.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Descend while the node has any child. A path that hits the depth
    /// bound widens the deepest ancestor that still has an unexpanded
    /// candidate.
    #[default]
    AnyChild,
    /// Descend only through nodes whose current candidates are all
    /// children.
    FullyExpanded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub max_depth: u32,
    pub candidates_per_step: usize,
    pub total_simulations: u32,
    pub c: f64,
    pub c_g: f64,
    pub rollout_length: u32,
    pub k_percent: f64,
    pub seed: u64,
    pub selection: SelectionRule,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_depth: 10,
            candidates_per_step: 3,
            total_simulations: 50,
            c: 1.4,
            c_g: 1.0,
            rollout_length: 3,
            k_percent: 10.0,
            seed: 0,
            selection: SelectionRule::AnyChild,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if self.candidates_per_step == 0 {
            return bad("candidates_per_step must be positive");
        }
        if self.total_simulations == 0 {
            return bad("total_simulations must be positive");
        }
        if !(self.c.is_finite() && self.c >= 0.0 && self.c_g.is_finite() && self.c_g >= 0.0) {
            return bad("exploration constants must be non-negative");
        }
        if !(self.k_percent > 0.0 && self.k_percent <= 100.0) {
            return bad("k_percent must lie in (0, 100]");
        }
        Ok(())
    }
}

/// What the search explores.
pub trait Environment {
    fn root(&self) -> StateId;
    /// Aggregate discrepancy `R` of a state (lower is better).
    fn value(&mut self, state: &StateId) -> Result<f64>;
    fn transition(&mut self, state: &StateId, action: ActionId) -> Result<StateId>;
}

/// Statistics of one outgoing edge of a node.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeStats {
    /// Future return of every rollout through this edge.
    pub returns: Vec<f64>,
}

impl EdgeStats {
    pub fn n(&self) -> u64 {
        self.returns.len() as u64
    }

    pub fn q(&self) -> f64 {
        if self.returns.is_empty() {
            0.0
        } else {
            self.returns.iter().sum::<f64>() / self.returns.len() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub state: StateId,
    pub parent: Option<usize>,
    pub action: Option<ActionId>,
    pub children: BTreeMap<ActionId, usize>,
    pub edges: BTreeMap<ActionId, EdgeStats>,
    /// Rollouts that passed through this node's outgoing edges.
    pub visits: u64,
    pub r_value: f64,
    pub depth: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalEntry {
    pub q: f64,
    pub n: u64,
}

/// Running mean immediate reward and usage count per action.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalActionStats {
    pub entries: BTreeMap<ActionId, GlobalEntry>,
}

impl GlobalActionStats {
    pub fn record(&mut self, a: ActionId, reward: f64) {
        let e = self.entries.entry(a).or_default();
        e.n += 1;
        e.q += (reward - e.q) / e.n as f64;
    }

    pub fn get(&self, a: ActionId) -> GlobalEntry {
        self.entries.get(&a).copied().unwrap_or_default()
    }

    pub fn total(&self) -> u64 {
        self.entries.values().map(|e| e.n).sum()
    }

    pub fn ucb(&self, a: ActionId, c_g: f64) -> f64 {
        let e = self.get(a);
        e.q + c_g * (((self.total() + 1) as f64).ln() / (e.n + 1) as f64).sqrt()
    }
}

/// `Q + c * sqrt(ln(N(s) + 1) / (N(s, a) + 1))`.
pub fn uct_score(q: f64, n_s: u64, n_sa: u64, c: f64) -> f64 {
    q + c * (((n_s + 1) as f64).ln() / (n_sa + 1) as f64).sqrt()
}

/// Top `n` actions by global UCB, ties to the lowest id.
pub fn global_filter(stats: &GlobalActionStats, actions: &[ActionId], n: usize, c_g: f64) -> Vec<ActionId> {
    let mut scored: Vec<(f64, ActionId)> = actions.iter().map(|a| (stats.ucb(*a, c_g), *a)).collect();
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    scored.into_iter().take(n).map(|(_, a)| a).collect()
}

/// Argmax with ties to the lowest id; `None` for an empty input.
fn argmax<I: IntoIterator<Item = (ActionId, f64)>>(it: I) -> Option<(ActionId, f64)> {
    it.into_iter().fold(None, |best, (a, v)| match best {
        Some((ba, bv)) if bv > v || (bv == v && ba < a) => Some((ba, bv)),
        _ => Some((a, v)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Expand,
    Rollout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Root {
        state: StateId,
        r: f64,
    },
    Iteration {
        index: u32,
    },
    Select {
        node: usize,
        path: Vec<ActionId>,
    },
    Evaluate {
        phase: Phase,
        state: StateId,
        action: ActionId,
        next: Option<StateId>,
        reward: Option<f64>,
        r_next: Option<f64>,
        error: Option<String>,
    },
    Expand {
        parent: usize,
        node: usize,
        action: ActionId,
    },
    Backprop {
        nodes: Vec<usize>,
        returns: Vec<f64>,
    },
    Aborted {
        reason: String,
    },
    Best {
        state: StateId,
        r: f64,
    },
}

/// Full search state; serializable so a run can be resumed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Search {
    pub config: SearchConfig,
    pub actions: Vec<ActionId>,
    pub nodes: Vec<SearchNode>,
    pub global: GlobalActionStats,
    pub iterations_done: u32,
    pub aborted_iterations: u32,
    pub failed_evaluations: u32,
    pub best_state: StateId,
    pub best_r: f64,
    pub trace: Vec<TraceEvent>,
}

struct Evaluated {
    action: ActionId,
    next: StateId,
    reward: f64,
    r_next: f64,
}

impl Search {
    pub fn new<E: Environment>(env: &mut E, actions: &[ActionId], config: SearchConfig) -> Result<Self> {
        config.validate()?;
        if actions.is_empty() {
            return Err(Error::Search("empty action space".into()));
        }
        let mut actions = actions.to_vec();
        actions.sort();
        actions.dedup();
        let root = env.root();
        let r = env
            .value(&root)
            .map_err(|e| Error::Search(format!("root evaluation failed: {e}")))?;
        Ok(Search {
            config,
            actions,
            nodes: vec![SearchNode {
                state: root.clone(),
                parent: None,
                action: None,
                children: BTreeMap::new(),
                edges: BTreeMap::new(),
                visits: 0,
                r_value: r,
                depth: 0,
            }],
            global: GlobalActionStats::default(),
            iterations_done: 0,
            aborted_iterations: 0,
            failed_evaluations: 0,
            best_state: root.clone(),
            best_r: r,
            trace: vec![TraceEvent::Root { state: root, r }],
        })
    }

    pub fn root_r(&self) -> f64 {
        self.nodes[0].r_value
    }

    pub fn is_done(&self) -> bool {
        self.iterations_done >= self.config.total_simulations
    }

    fn candidates(&self) -> Vec<ActionId> {
        let n = self.config.candidates_per_step.min(self.actions.len());
        global_filter(&self.global, &self.actions, n, self.config.c_g)
    }

    fn evaluate<E: Environment>(
        &mut self,
        env: &mut E,
        state: &StateId,
        action: ActionId,
        phase: Phase,
    ) -> Option<Evaluated> {
        let out = env.value(state).and_then(|r| {
            let next = env.transition(state, action)?;
            let r_next = env.value(&next)?;
            Ok((r, next, r_next))
        });
        match out {
            Ok((r, next, r_next)) => {
                let reward = step_reward(r, r_next);
                self.global.record(action, reward);
                if r_next < self.best_r {
                    self.best_r = r_next;
                    self.best_state = next.clone();
                }
                self.trace.push(TraceEvent::Evaluate {
                    phase,
                    state: state.clone(),
                    action,
                    next: Some(next.clone()),
                    reward: Some(reward),
                    r_next: Some(r_next),
                    error: None,
                });
                Some(Evaluated { action, next, reward, r_next })
            }
            Err(e) => {
                log::warn!("evaluation of {action} failed: {e}");
                self.failed_evaluations += 1;
                self.trace.push(TraceEvent::Evaluate {
                    phase,
                    state: state.clone(),
                    action,
                    next: None,
                    reward: None,
                    r_next: None,
                    error: Some(e.to_string()),
                });
                None
            }
        }
    }

    /// Evaluate `actions` from `state` and keep the best immediate reward.
    fn best_of<E: Environment>(
        &mut self,
        env: &mut E,
        state: &StateId,
        actions: &[ActionId],
        phase: Phase,
    ) -> Option<Evaluated> {
        let mut results: Vec<Evaluated> = Vec::new();
        for &a in actions {
            if let Some(e) = self.evaluate(env, state, a, phase) {
                results.push(e);
            }
        }
        let (a, _) = argmax(results.iter().map(|e| (e.action, e.reward)))?;
        results.into_iter().find(|e| e.action == a)
    }

    fn fully_expanded(&self, node: usize) -> bool {
        let n = &self.nodes[node];
        self.candidates().iter().all(|a| n.children.contains_key(a))
    }

    fn select(&self) -> usize {
        let rule = self.config.selection;
        let mut node = 0;
        loop {
            let n = &self.nodes[node];
            let descend = !n.children.is_empty()
                && (rule == SelectionRule::AnyChild || self.fully_expanded(node));
            if n.depth >= self.config.max_depth || !descend {
                break;
            }
            let pick = argmax(n.children.keys().map(|a| {
                let e = n.edges.get(a).cloned().unwrap_or_default();
                (*a, uct_score(e.q(), n.visits, e.n(), self.config.c))
            }))
            .expect("children exist");
            node = n.children[&pick.0];
        }
        if rule == SelectionRule::AnyChild && self.nodes[node].depth >= self.config.max_depth {
            let mut up = self.nodes[node].parent;
            while let Some(p) = up {
                if !self.fully_expanded(p) {
                    return p;
                }
                up = self.nodes[p].parent;
            }
        }
        node
    }

    fn path_to(&self, mut node: usize) -> Vec<usize> {
        let mut path = vec![node];
        while let Some(p) = self.nodes[node].parent {
            path.push(p);
            node = p;
        }
        path.reverse();
        path
    }

    /// Run one iteration.
    pub fn iterate<E: Environment>(&mut self, env: &mut E) {
        self.iterations_done += 1;
        let index = self.iterations_done;
        self.trace.push(TraceEvent::Iteration { index });
        if index == 1 {
            let root = self.nodes[0].state.clone();
            for a in self.actions.clone() {
                self.evaluate(env, &root, a, Phase::Warmup);
            }
        }

        let leaf = self.select();
        let path = self.path_to(leaf);
        self.trace.push(TraceEvent::Select {
            node: leaf,
            path: path.iter().filter_map(|n| self.nodes[*n].action).collect(),
        });

        let mut tail_rewards: Vec<f64> = Vec::new();
        let mut end = leaf;
        if self.nodes[leaf].depth < self.config.max_depth {
            let state = self.nodes[leaf].state.clone();
            let open: Vec<ActionId> = self
                .candidates()
                .into_iter()
                .filter(|a| !self.nodes[leaf].children.contains_key(a))
                .collect();
            let Some(best) = self.best_of(env, &state, &open, Phase::Expand) else {
                self.aborted_iterations += 1;
                self.trace.push(TraceEvent::Aborted {
                    reason: "every expansion candidate failed".into(),
                });
                return;
            };
            let child_r = best.r_next;
            let child = self.nodes.len();
            self.nodes.push(SearchNode {
                state: best.next.clone(),
                parent: Some(leaf),
                action: Some(best.action),
                children: BTreeMap::new(),
                edges: BTreeMap::new(),
                visits: 0,
                r_value: child_r,
                depth: self.nodes[leaf].depth + 1,
            });
            self.nodes[leaf].children.insert(best.action, child);
            self.trace.push(TraceEvent::Expand {
                parent: leaf,
                node: child,
                action: best.action,
            });
            end = child;

            let mut s = best.next;
            let mut depth = self.nodes[child].depth;
            for _ in 0..self.config.rollout_length {
                if depth >= self.config.max_depth {
                    break;
                }
                let cand = self.candidates();
                let Some(step) = self.best_of(env, &s, &cand, Phase::Rollout) else {
                    break;
                };
                tail_rewards.push(step.reward);
                s = step.next;
                depth += 1;
            }
        }

        // back-propagation: the return of an edge is the sum of every
        // reward after it
        let full = self.path_to(end);
        let tail: f64 = tail_rewards.iter().sum();
        let mut returns = Vec::new();
        let mut acc = tail;
        for w in full.windows(2).rev() {
            let (p, c) = (w[0], w[1]);
            acc += step_reward(self.nodes[p].r_value, self.nodes[c].r_value);
            let a = self.nodes[c].action.expect("non-root node has an action");
            self.nodes[p].edges.entry(a).or_default().returns.push(acc);
            self.nodes[p].visits += 1;
            returns.push(acc);
        }
        returns.reverse();
        self.trace.push(TraceEvent::Backprop {
            nodes: full,
            returns,
        });
        self.trace.push(TraceEvent::Best {
            state: self.best_state.clone(),
            r: self.best_r,
        });
    }

    /// Iterate until the configured budget is spent. `on_iteration` runs
    /// after each iteration (used for checkpointing).
    pub fn run<E: Environment>(&mut self, env: &mut E, mut on_iteration: impl FnMut(&Search) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            self.iterate(env);
            on_iteration(self)?;
        }
        if self.aborted_iterations == self.iterations_done {
            return Err(Error::Search(format!(
                "all {} iterations aborted ({} failed evaluations)",
                self.iterations_done, self.failed_evaluations
            )));
        }
        Ok(())
    }

    /// Structural checks: visit conservation, depth bound, child/edge
    /// consistency. Returns a description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            let sum: u64 = n.edges.values().map(|e| e.n()).sum();
            if n.visits != sum {
                return Err(format!("node {i}: N(s) = {} but edge visits sum to {sum}", n.visits));
            }
            if n.depth > self.config.max_depth {
                return Err(format!("node {i} at depth {} beyond the bound", n.depth));
            }
            for (a, c) in &n.children {
                let ch = &self.nodes[*c];
                if ch.parent != Some(i) || ch.action != Some(*a) || ch.depth != n.depth + 1 {
                    return Err(format!("node {c} is inconsistent with its parent {i}"));
                }
            }
            for a in n.edges.keys() {
                if !n.children.contains_key(a) {
                    return Err(format!("node {i} has statistics for unexpanded action {a}"));
                }
            }
        }
        Ok(())
    }
}

/// Result of [`run_search`].
#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub best_state: StateId,
    pub best_r: f64,
    pub root_r: f64,
    pub search: Search,
}

/// Search from the environment's root for the configured budget.
pub fn run_search<E: Environment>(env: &mut E, actions: &[ActionId], cfg: SearchConfig) -> Result<SearchOutcome> {
    let mut s = Search::new(env, actions, cfg)?;
    s.run(env, |_| Ok(()))?;
    Ok(SearchOutcome {
        best_state: s.best_state.clone(),
        best_r: s.best_r,
        root_r: s.root_r(),
        search: s,
    })
}
