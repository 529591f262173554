//! Small deterministic environments for the search.

use std::collections::BTreeSet;

use mobsim::optimizer::Environment;
use mobsim::strategist::ActionId;
use mobsim::{Error, Result, StateId};

/// States are the action sequence taken from the root (`"s"`, `"s0"`,
/// `"s01"`, ...); `R` is computed from the counts of each action.
pub struct ToyEnv {
    pub r: fn(n0: u32, n1: u32) -> f64,
    /// Transitions with these actions fail.
    pub broken: BTreeSet<ActionId>,
    pub transitions: usize,
}

impl ToyEnv {
    pub fn new(r: fn(u32, u32) -> f64) -> Self {
        ToyEnv {
            r,
            broken: BTreeSet::new(),
            transitions: 0,
        }
    }

    /// `R = 1 - n0 / 4 - n1 / 8`; every value is exact in binary.
    pub fn linear() -> Self {
        Self::new(|n0, n1| 1.0 - 0.25 * n0 as f64 - 0.125 * n1 as f64)
    }

    /// Optimum at three uses of action 0 and two of action 1.
    pub fn bowl() -> Self {
        Self::new(|n0, n1| {
            let (a, b) = (n0 as f64 - 3.0, n1 as f64 - 2.0);
            0.05 + 0.1 * a * a + 0.07 * b * b + 0.01 * (((n0 * 7 + n1 * 3) % 5) as f64)
        })
    }
}

impl Environment for ToyEnv {
    fn root(&self) -> StateId {
        StateId("s".into())
    }

    fn value(&mut self, s: &StateId) -> Result<f64> {
        let n0 = s.0.matches('0').count() as u32;
        let n1 = s.0.matches('1').count() as u32;
        Ok((self.r)(n0, n1))
    }

    fn transition(&mut self, s: &StateId, a: ActionId) -> Result<StateId> {
        self.transitions += 1;
        if self.broken.contains(&a) {
            return Err(Error::Backend(format!("action {a} is broken")));
        }
        Ok(StateId(format!("{}{}", s.0, a.0)))
    }
}

pub fn two_actions() -> Vec<ActionId> {
    vec![ActionId(0), ActionId(1)]
}
