//! Exact finite-horizon expectimax over the belief tree.
//!
//! Chance nodes branch on the visible successor, which is the observation.
//! Decision nodes are memoized on (visible state, steps left, rounded belief).

use std::collections::{BTreeMap, HashMap};

use super::belief::{predict, Belief, BeliefKey};
use super::model::MixedObservabilityModel;
use super::policy::{Policy, PolicyMetadata};
use super::{PomdpError, TIE_EPSILON};

#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    /// Maximum number of expanded decision nodes.
    pub node_budget: usize,
    pub memoize: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self { node_budget: 2_000_000, memoize: true }
    }
}

#[derive(Debug, Clone)]
pub struct ExactPlan {
    pub policy: Policy,
    pub value: f64,
    /// Decision nodes expanded.
    pub nodes: usize,
}

/// Optimal lookup-tree policy and value from the model's initial condition.
pub fn exact_plan(model: &MixedObservabilityModel, options: ExactOptions) -> Result<ExactPlan, PomdpError> {
    let horizon = model.horizon().steps().ok_or(PomdpError::InfiniteHorizon)?;
    let mut search = Search::new(model, options);
    let value = search.value(model.initial_visible(), model.initial_belief(), horizon)?;
    let policy = Policy::from_lookup_tree(
        model.hidden_count(),
        search.tree,
        PolicyMetadata {
            solver: "exact-expectimax".into(),
            tolerance: None,
            model_digest: model.digest(),
            label: None,
            initial_value: Some(value),
            timestamp: None,
        },
    );
    Ok(ExactPlan { policy, value, nodes: search.nodes })
}

/// Q-values of every enabled action at (v, b) with `steps` decisions left,
/// computed by the same search used in [`exact_plan`].
pub fn exact_q_values(
    model: &MixedObservabilityModel,
    v: usize,
    b: &Belief,
    steps: usize,
    options: ExactOptions,
) -> Result<Vec<(usize, f64)>, PomdpError> {
    let mut search = Search::new(model, options);
    let mut actions = model.enabled_actions(v).to_vec();
    actions.sort_unstable();
    actions
        .into_iter()
        .map(|a| search.q_value(v, b, a, steps).map(|q| (a, q)))
        .collect()
}

struct Search<'m> {
    model: &'m MixedObservabilityModel,
    options: ExactOptions,
    successors: Vec<Vec<Vec<usize>>>,
    memo: HashMap<(usize, usize, BeliefKey), f64>,
    tree: BTreeMap<(usize, BeliefKey), usize>,
    nodes: usize,
}

impl<'m> Search<'m> {
    fn new(model: &'m MixedObservabilityModel, options: ExactOptions) -> Self {
        let successors = (0..model.visible_count())
            .map(|v| {
                (0..model.action_count())
                    .map(|a| {
                        if model.is_enabled(v, a) {
                            model.visible_successors(v, a)
                        } else {
                            Vec::new()
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            model,
            options,
            successors,
            memo: HashMap::new(),
            tree: BTreeMap::new(),
            nodes: 0,
        }
    }

    fn value(&mut self, v: usize, b: &Belief, steps: usize) -> Result<f64, PomdpError> {
        if steps == 0 || self.model.is_terminal(v) {
            return Ok(0.0);
        }
        let key = b.key();
        if self.options.memoize {
            if let Some(&cached) = self.memo.get(&(v, steps, key.clone())) {
                return Ok(cached);
            }
        }
        self.nodes += 1;
        if self.nodes > self.options.node_budget {
            return Err(PomdpError::BudgetExceeded(self.options.node_budget));
        }
        let mut actions = self.model.enabled_actions(v).to_vec();
        actions.sort_unstable();
        let mut best: Option<(usize, f64)> = None;
        for a in actions {
            let q = self.q_value(v, b, a, steps)?;
            best = match best {
                Some((_, bq)) if q <= bq + TIE_EPSILON => best,
                _ => Some((a, q)),
            };
        }
        let (action, value) = best.expect("nonterminal state has an enabled action");
        self.tree.entry((v, key.clone())).or_insert(action);
        if self.options.memoize {
            self.memo.insert((v, steps, key), value);
        }
        Ok(value)
    }

    fn q_value(&mut self, v: usize, b: &Belief, a: usize, steps: usize) -> Result<f64, PomdpError> {
        let model = self.model;
        let gamma = model.discount();
        let mut q = 0.0;
        for i in 0..self.successors[v][a].len() {
            let next = self.successors[v][a][i];
            let (weights, likelihood) = predict(model, b, v, a, next)?;
            if likelihood <= 0.0 {
                continue;
            }
            let mut reward = 0.0;
            for (h, &w) in b.weights().iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for t in model.kernel(v, h, a) {
                    if t.next_visible == next {
                        reward += w * t.prob * t.reward;
                    }
                }
            }
            let posterior = Belief::normalized_unchecked(weights, likelihood);
            let future = self.value(next, &posterior, steps - 1)?;
            q += reward + gamma * likelihood * future;
        }
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::model::fixtures::two_level_probe;
    use crate::pomdp::policy::policy_action;

    #[test]
    fn one_step_probe_value() {
        // reward 1 on "stayed": value = E[stay] = 0.5 * 0.2 + 0.5 * 0.8
        let m = two_level_probe([0.2, 0.8]);
        let plan = exact_plan(&m, ExactOptions::default()).unwrap();
        assert!((plan.value - 0.5).abs() < 1e-15);
        assert_eq!(policy_action(&plan.policy, 0, m.initial_belief()).unwrap(), 0);
    }

    #[test]
    fn budget_is_enforced() {
        let m = two_level_probe([0.2, 0.8]);
        let err = exact_plan(&m, ExactOptions { node_budget: 0, memoize: true }).unwrap_err();
        assert!(matches!(err, PomdpError::BudgetExceeded(0)));
    }
}
