//! The prompt-set environment: states are [`PromptSet`]s, transitions apply
//! an [`AdjustmentAction`], values come from generating trajectories and
//! scoring them against the guidance targets.
//!
//! States are keyed by content hash and transitions by `(state, action)`.
//! Trajectories are cached per user by the hash of the user's prompt, so a
//! transition only regenerates the users it modified.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::Environment;
use crate::error::{Error, Result};
use crate::generator::{Backend, UserStatus};
use crate::grid::GridSpec;
use crate::guidance::{evaluate_objectives, per_user_statistic, Evaluation, GuidanceConfig, MeasureId};
use crate::io;
use crate::rng::derive_seed;
use crate::strategist::{apply_action, ActionId, AdjustmentAction, PromptRewriter};
use crate::types::{PromptDoc, PromptSet, StateId, Trajectory, UserId};

struct StateData {
    prompts: Arc<PromptSet>,
    trajectories: Option<Vec<Arc<Trajectory>>>,
    evaluation: Option<Evaluation>,
    per_user: HashMap<MeasureId, BTreeMap<UserId, f64>>,
}

pub struct PromptEnvironment {
    grid: GridSpec,
    guidance: GuidanceConfig,
    backend: Backend,
    actions: BTreeMap<ActionId, AdjustmentAction>,
    k_percent: f64,
    seed: u64,
    root: StateId,
    states: HashMap<StateId, StateData>,
    transitions: HashMap<(StateId, ActionId), StateId>,
    user_cache: HashMap<String, Arc<Trajectory>>,
    store: Option<PathBuf>,
    rewriter: Option<PromptRewriter>,
    generations: u64,
}

fn doc_key(doc: &PromptDoc, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(serde_json::to_vec(doc).expect("prompt serializes"));
    hex::encode(&h.finalize()[..16])
}

impl PromptEnvironment {
    pub fn new(
        root: PromptSet,
        grid: GridSpec,
        guidance: GuidanceConfig,
        backend: Backend,
        actions: &[AdjustmentAction],
        k_percent: f64,
        seed: u64,
    ) -> Result<Self> {
        guidance.validate()?;
        if root.is_empty() {
            return Err(Error::EmptyInput("root prompt set"));
        }
        let id = root.content_hash();
        let mut env = PromptEnvironment {
            grid,
            guidance,
            backend,
            actions: actions.iter().map(|a| (a.id, a.clone())).collect(),
            k_percent,
            seed,
            root: id.clone(),
            states: HashMap::new(),
            transitions: HashMap::new(),
            user_cache: HashMap::new(),
            store: None,
            rewriter: None,
            generations: 0,
        };
        env.insert(root);
        Ok(env)
    }

    /// Persist every new state as `<dir>/<hash>.json`, and load unknown
    /// states from there.
    pub fn with_store(mut self, dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        self.store = Some(dir);
        let root = self.states[&self.root].prompts.clone();
        self.persist(&root)?;
        Ok(self)
    }

    /// Let an endpoint rewrite the constraints of modified users instead of
    /// appending the directive.
    pub fn with_rewriter(mut self, rewriter: PromptRewriter) -> Self {
        self.rewriter = Some(rewriter);
        self
    }

    fn persist(&self, ps: &PromptSet) -> Result<()> {
        if let Some(dir) = &self.store {
            let path = dir.join(format!("{}.json", ps.content_hash()));
            if !path.exists() {
                io::write_prompt_set(&path, ps)?;
            }
        }
        Ok(())
    }

    fn insert(&mut self, ps: PromptSet) -> StateId {
        let id = ps.content_hash();
        self.states.entry(id.clone()).or_insert_with(|| StateData {
            prompts: Arc::new(ps),
            trajectories: None,
            evaluation: None,
            per_user: HashMap::new(),
        });
        id
    }

    fn ensure_known(&mut self, s: &StateId) -> Result<()> {
        if self.states.contains_key(s) {
            return Ok(());
        }
        let Some(dir) = &self.store else {
            return Err(Error::Search(format!("unknown state {s}")));
        };
        let ps = io::read_prompt_set(&dir.join(format!("{s}.json")))?;
        if &ps.content_hash() != s {
            return Err(Error::Search(format!("stored state {s} does not match its hash")));
        }
        self.insert(ps);
        Ok(())
    }

    /// Replace the action space and forget cached transitions.
    pub fn set_actions(&mut self, actions: &[AdjustmentAction]) {
        self.actions = actions.iter().map(|a| (a.id, a.clone())).collect();
        self.transitions.clear();
    }

    pub fn prompts(&mut self, s: &StateId) -> Result<Arc<PromptSet>> {
        self.ensure_known(s)?;
        Ok(self.states[s].prompts.clone())
    }

    /// Number of individual trajectories generated so far.
    pub fn generations(&self) -> u64 {
        self.generations
    }

    pub fn guidance(&self) -> &GuidanceConfig {
        &self.guidance
    }

    pub fn trajectories(&mut self, s: &StateId) -> Result<Vec<Trajectory>> {
        self.ensure_generated(s)?;
        Ok(self.states[s]
            .trajectories
            .as_ref()
            .expect("generated")
            .iter()
            .map(|t| (**t).clone())
            .collect())
    }

    pub fn evaluation(&mut self, s: &StateId) -> Result<Evaluation> {
        self.value(s)?;
        Ok(self.states[s].evaluation.clone().expect("evaluated"))
    }

    fn ensure_generated(&mut self, s: &StateId) -> Result<()> {
        self.ensure_known(s)?;
        if self.states[s].trajectories.is_some() {
            return Ok(());
        }
        let ps = self.states[s].prompts.clone();
        let keys: BTreeMap<UserId, String> = ps
            .prompts
            .iter()
            .map(|(u, d)| (u.clone(), doc_key(d, ps.seed)))
            .collect();
        let missing: Vec<PromptDoc> = ps
            .prompts
            .iter()
            .filter(|(u, _)| !self.user_cache.contains_key(&keys[*u]))
            .map(|(_, d)| d.clone())
            .collect();
        if !missing.is_empty() {
            let sub = PromptSet {
                seed: ps.seed,
                prompts: missing.into_iter().map(|d| (d.profile.id.clone(), d)).collect(),
            };
            let out = self.backend.generate(&sub, &self.grid);
            self.generations += sub.len() as u64;
            let failures: Vec<String> = out
                .results
                .iter()
                .filter(|(_, r)| r.status != UserStatus::Ok)
                .map(|(u, r)| format!("{u}: {:?}", r.status))
                .collect();
            if !failures.is_empty() {
                return Err(Error::Backend(format!(
                    "{} of {} users failed: {}",
                    failures.len(),
                    sub.len(),
                    failures.join("; ")
                )));
            }
            for (u, r) in out.results {
                let t = r.trajectory.expect("ok status carries a trajectory");
                self.user_cache.insert(keys[&u].clone(), Arc::new(t));
            }
        }
        let trajs = keys.values().map(|k| self.user_cache[k].clone()).collect();
        self.states.get_mut(s).expect("known").trajectories = Some(trajs);
        Ok(())
    }

    fn per_user(&mut self, s: &StateId, m: MeasureId) -> Result<BTreeMap<UserId, f64>> {
        self.ensure_generated(s)?;
        if let Some(v) = self.states[s].per_user.get(&m) {
            return Ok(v.clone());
        }
        let trajs = self.trajectories(s)?;
        let v = per_user_statistic(m, &trajs, &self.grid);
        self.states.get_mut(s).expect("known").per_user.insert(m, v.clone());
        Ok(v)
    }
}

impl Environment for PromptEnvironment {
    fn root(&self) -> StateId {
        self.root.clone()
    }

    fn value(&mut self, s: &StateId) -> Result<f64> {
        self.ensure_known(s)?;
        if let Some(e) = &self.states[s].evaluation {
            return Ok(e.r);
        }
        let trajs = self.trajectories(s)?;
        let e = evaluate_objectives(&self.guidance, &trajs, &self.grid)?;
        let r = e.r;
        self.states.get_mut(s).expect("known").evaluation = Some(e);
        Ok(r)
    }

    fn transition(&mut self, s: &StateId, a: ActionId) -> Result<StateId> {
        if let Some(n) = self.transitions.get(&(s.clone(), a)) {
            return Ok(n.clone());
        }
        let action = self
            .actions
            .get(&a)
            .cloned()
            .ok_or_else(|| Error::Search(format!("unknown action {a}")))?;
        let values = self.per_user(s, action.group.measure)?;
        let ps = self.prompts(s)?;
        let seed = derive_seed(self.seed, &s.0);
        let mut out = apply_action(&ps, &action, self.k_percent, seed, &values)?;
        if let Some(rw) = self.rewriter.as_ref().filter(|_| !out.noop && !action.is_identity()) {
            rw.rewrite(&mut out.prompts, &ps, &out.modified, &action.directive_text);
        }
        self.persist(&out.prompts)?;
        let next = self.insert(out.prompts);
        self.transitions.insert((s.clone(), a), next.clone());
        Ok(next)
    }
}
