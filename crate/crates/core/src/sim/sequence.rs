use serde::{Deserialize, Serialize};

use super::spec::NUM_DOFS;

/// One command per DOF, each in [-1, 1].
pub type Action = [f64; NUM_DOFS];

/// Finite ordered list of actions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionSequence {
    actions: Vec<Action>,
}

fn clamp_action(a: &Action) -> Action {
    std::array::from_fn(|k| if a[k].is_nan() { 0.0 } else { a[k].clamp(-1.0, 1.0) })
}

impl ActionSequence {
    /// Builds a sequence, clamping every component to [-1, 1].
    pub fn new(actions: Vec<Action>) -> Self {
        ActionSequence { actions: actions.iter().map(clamp_action).collect() }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Sequence acting on a single DOF with the given commands.
    pub fn single_dof(dof: usize, values: &[f64]) -> Self {
        assert!(dof < NUM_DOFS, "dof index {dof} out of range");
        Self::new(
            values
                .iter()
                .map(|&v| {
                    let mut a = [0.0; NUM_DOFS];
                    a[dof] = v;
                    a
                })
                .collect(),
        )
    }

    /// Repeats `action` `n` times.
    pub fn repeat(action: Action, n: usize) -> Self {
        Self::new(vec![action; n])
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// `self` followed by `other`.
    pub fn compose(&self, other: &ActionSequence) -> ActionSequence {
        let mut actions = self.actions.clone();
        actions.extend_from_slice(&other.actions);
        ActionSequence { actions }
    }

    /// Reversed order with every component negated.
    pub fn invert(&self) -> ActionSequence {
        ActionSequence { actions: self.actions.iter().rev().map(|a| a.map(|v| -v)).collect() }
    }

    /// Reorders the actions: position `i` of the result holds `self[perm[i]]`.
    pub fn permuted(&self, perm: &[usize]) -> ActionSequence {
        assert_eq!(perm.len(), self.len(), "permutation length mismatch");
        ActionSequence { actions: perm.iter().map(|&i| self.actions[i]).collect() }
    }

    /// Commands of a single DOF across the sequence.
    pub fn dof_values(&self, dof: usize) -> Vec<f64> {
        self.actions.iter().map(|a| a[dof]).collect()
    }
}

impl From<Vec<Action>> for ActionSequence {
    fn from(v: Vec<Action>) -> Self {
        Self::new(v)
    }
}

pub fn compose(a: &ActionSequence, b: &ActionSequence) -> ActionSequence {
    a.compose(b)
}

pub fn invert_sequence(s: &ActionSequence) -> ActionSequence {
    s.invert()
}
