//! Mixed-observability POMDP representation.
//!
//! The state is a pair (visible, hidden). The visible component is observed
//! exactly after every transition, so the observation emitted by a step is the
//! visible successor itself and no separate observation alphabet exists.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::belief::Belief;
use super::PomdpError;

/// Tolerance used when validating that kernel rows are distributions.
pub const KERNEL_TOLERANCE: f64 = 1e-9;

/// One outcome of the joint kernel for a given (visible, hidden, action).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub next_visible: usize,
    pub next_hidden: usize,
    pub prob: f64,
    /// R(v, h, a, v', h') for this outcome.
    pub reward: f64,
}

/// Planning horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(usize),
    Unbounded,
}

impl Horizon {
    pub fn steps(self) -> Option<usize> {
        match self {
            Horizon::Finite(n) => Some(n),
            Horizon::Unbounded => None,
        }
    }
}

/// Everything needed to construct a [`MixedObservabilityModel`].
///
/// `rows` is indexed by `(v * hidden + h) * actions + a`; rows for disabled
/// actions must be empty.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub visible_names: Vec<String>,
    pub hidden_names: Vec<String>,
    pub action_names: Vec<String>,
    pub enabled: Vec<Vec<usize>>,
    pub rows: Vec<Vec<Transition>>,
    pub discount: f64,
    pub horizon: Horizon,
    pub initial_visible: usize,
    pub initial_belief: Belief,
}

/// A validated mixed-observability POMDP. Immutable after construction.
#[derive(Debug, Clone, Serialize)]
pub struct MixedObservabilityModel {
    visible_names: Vec<String>,
    hidden_names: Vec<String>,
    action_names: Vec<String>,
    enabled: Vec<Vec<usize>>,
    #[serde(skip)]
    rows: Vec<Vec<Transition>>,
    discount: f64,
    horizon: Horizon,
    initial_visible: usize,
    initial_belief: Belief,
}

impl MixedObservabilityModel {
    pub fn new(spec: ModelSpec) -> Result<Self, PomdpError> {
        let nv = spec.visible_names.len();
        let nh = spec.hidden_names.len();
        let na = spec.action_names.len();
        if nv == 0 || nh == 0 {
            return Err(PomdpError::InvalidModel("empty visible or hidden state set".into()));
        }
        if spec.enabled.len() != nv {
            return Err(PomdpError::InvalidModel(format!(
                "enabled-action table has {} entries for {} visible states",
                spec.enabled.len(),
                nv
            )));
        }
        if spec.rows.len() != nv * nh * na {
            return Err(PomdpError::InvalidModel(format!(
                "kernel has {} rows, expected {}",
                spec.rows.len(),
                nv * nh * na
            )));
        }
        if !(spec.discount > 0.0 && spec.discount <= 1.0) {
            return Err(PomdpError::InvalidModel(format!(
                "discount {} outside (0, 1]",
                spec.discount
            )));
        }
        if let Horizon::Finite(0) = spec.horizon {
            return Err(PomdpError::InvalidModel("horizon must be positive".into()));
        }
        if spec.initial_visible >= nv {
            return Err(PomdpError::InvalidModel("initial visible state out of range".into()));
        }
        if spec.initial_belief.len() != nh {
            return Err(PomdpError::InvalidModel(format!(
                "initial belief has {} weights for {} hidden states",
                spec.initial_belief.len(),
                nh
            )));
        }
        for (v, acts) in spec.enabled.iter().enumerate() {
            let mut seen = vec![false; na];
            for &a in acts {
                if a >= na || seen[a] {
                    return Err(PomdpError::InvalidModel(format!(
                        "visible state {v}: bad or duplicate enabled action {a}"
                    )));
                }
                seen[a] = true;
            }
            for h in 0..nh {
                for a in 0..na {
                    let row = &spec.rows[(v * nh + h) * na + a];
                    if !seen[a] {
                        if !row.is_empty() {
                            return Err(PomdpError::InvalidModel(format!(
                                "kernel row for disabled action {a} at visible state {v}"
                            )));
                        }
                        continue;
                    }
                    let mut total = 0.0;
                    for t in row {
                        if t.next_visible >= nv || t.next_hidden >= nh {
                            return Err(PomdpError::InvalidModel(format!(
                                "kernel ({v},{h},{a}) points outside the state space"
                            )));
                        }
                        if !(t.prob >= 0.0) || !t.prob.is_finite() {
                            return Err(PomdpError::InvalidModel(format!(
                                "kernel ({v},{h},{a}) has probability {}",
                                t.prob
                            )));
                        }
                        if !t.reward.is_finite() {
                            return Err(PomdpError::InvalidModel(format!(
                                "kernel ({v},{h},{a}) has non-finite reward"
                            )));
                        }
                        total += t.prob;
                    }
                    if (total - 1.0).abs() > KERNEL_TOLERANCE {
                        return Err(PomdpError::InvalidModel(format!(
                            "kernel ({v},{h},{a}) sums to {total}"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            visible_names: spec.visible_names,
            hidden_names: spec.hidden_names,
            action_names: spec.action_names,
            enabled: spec.enabled,
            rows: spec.rows,
            discount: spec.discount,
            horizon: spec.horizon,
            initial_visible: spec.initial_visible,
            initial_belief: spec.initial_belief,
        })
    }

    pub fn visible_count(&self) -> usize {
        self.visible_names.len()
    }

    pub fn hidden_count(&self) -> usize {
        self.hidden_names.len()
    }

    pub fn action_count(&self) -> usize {
        self.action_names.len()
    }

    pub fn visible_name(&self, v: usize) -> &str {
        &self.visible_names[v]
    }

    pub fn hidden_name(&self, h: usize) -> &str {
        &self.hidden_names[h]
    }

    pub fn action_name(&self, a: usize) -> &str {
        &self.action_names[a]
    }

    pub fn enabled_actions(&self, v: usize) -> &[usize] {
        &self.enabled[v]
    }

    pub fn is_terminal(&self, v: usize) -> bool {
        self.enabled[v].is_empty()
    }

    pub fn is_enabled(&self, v: usize, a: usize) -> bool {
        self.enabled[v].contains(&a)
    }

    /// Joint successor distribution of (v, h, a). Empty for disabled actions.
    pub fn kernel(&self, v: usize, h: usize, a: usize) -> &[Transition] {
        &self.rows[(v * self.hidden_count() + h) * self.action_count() + a]
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn initial_visible(&self) -> usize {
        self.initial_visible
    }

    pub fn initial_belief(&self) -> &Belief {
        &self.initial_belief
    }

    /// Same model with every reward multiplied by `factor`.
    pub fn scale_rewards(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.rows {
            for t in row {
                t.reward *= factor;
            }
        }
        out
    }

    /// Same model with a different initial belief.
    pub fn with_initial_belief(&self, belief: Belief) -> Result<Self, PomdpError> {
        if belief.len() != self.hidden_count() {
            return Err(PomdpError::DimensionMismatch {
                expected: self.hidden_count(),
                found: belief.len(),
            });
        }
        let mut out = self.clone();
        out.initial_belief = belief;
        Ok(out)
    }

    /// Same model with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self, PomdpError> {
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(PomdpError::InvalidModel(format!("discount {discount} outside (0, 1]")));
        }
        let mut out = self.clone();
        out.discount = discount;
        Ok(out)
    }

    /// Smallest and largest reward appearing anywhere in the kernel.
    pub fn reward_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in self.rows.iter().flatten() {
            lo = lo.min(t.reward);
            hi = hi.max(t.reward);
        }
        if lo > hi {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }

    /// Distinct visible successors reachable from (v, a) under any hidden state,
    /// in ascending order.
    pub fn visible_successors(&self, v: usize, a: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.hidden_count())
            .flat_map(|h| self.kernel(v, h, a).iter().map(|t| t.next_visible))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Visible states in reverse topological order (successors first), or
    /// `None` if the visible transition graph has a cycle.
    pub fn reverse_topological_order(&self) -> Option<Vec<usize>> {
        let nv = self.visible_count();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); nv];
        for v in 0..nv {
            for &a in self.enabled_actions(v) {
                succ[v].extend(self.visible_successors(v, a));
            }
            succ[v].sort_unstable();
            succ[v].dedup();
        }
        // iterative DFS post-order
        let mut state = vec![0u8; nv];
        let mut order = Vec::with_capacity(nv);
        for root in 0..nv {
            if state[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            state[root] = 1;
            while let Some(&mut (node, ref mut idx)) = stack.last_mut() {
                if *idx < succ[node].len() {
                    let next = succ[node][*idx];
                    *idx += 1;
                    match state[next] {
                        0 => {
                            state[next] = 1;
                            stack.push((next, 0));
                        }
                        1 => return None,
                        _ => {}
                    }
                } else {
                    state[node] = 2;
                    order.push(node);
                    stack.pop();
                }
            }
        }
        Some(order)
    }

    /// Longest action path from `initial_visible` to a terminal state, when
    /// the visible graph is acyclic.
    pub fn longest_path_from_initial(&self) -> Option<usize> {
        let order = self.reverse_topological_order()?;
        let mut depth = vec![0usize; self.visible_count()];
        for &v in &order {
            let mut best = 0;
            for &a in self.enabled_actions(v) {
                for s in self.visible_successors(v, a) {
                    best = best.max(depth[s] + 1);
                }
            }
            depth[v] = best;
        }
        Some(depth[self.initial_visible])
    }

    /// Sparse dump of the model for debugging.
    pub fn to_debug_document(&self) -> ModelDocument {
        let mut kernel = Vec::new();
        for v in 0..self.visible_count() {
            for h in 0..self.hidden_count() {
                for &a in self.enabled_actions(v) {
                    for t in self.kernel(v, h, a) {
                        kernel.push(KernelEntry {
                            visible: v,
                            hidden: h,
                            action: a,
                            next_visible: t.next_visible,
                            next_hidden: t.next_hidden,
                            prob: t.prob,
                            reward: t.reward,
                        });
                    }
                }
            }
        }
        ModelDocument {
            schema_version: MODEL_SCHEMA_VERSION,
            visible_states: self.visible_names.clone(),
            hidden_states: self.hidden_names.clone(),
            actions: self.action_names.clone(),
            enabled_actions: self.enabled.clone(),
            discount: self.discount,
            horizon: self.horizon,
            initial_visible: self.initial_visible,
            initial_belief: self.initial_belief.weights().to_vec(),
            kernel,
        }
    }

    /// SHA-256 over the canonical debug document. Policies record it so that a
    /// policy can be matched to the model it was solved for.
    pub fn digest(&self) -> String {
        let doc = self.to_debug_document();
        let bytes = serde_json::to_vec(&doc).expect("model document serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// One sparse kernel triple of the debug dump.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KernelEntry {
    pub visible: usize,
    pub hidden: usize,
    pub action: usize,
    pub next_visible: usize,
    pub next_hidden: usize,
    pub prob: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase")]
pub struct ModelDocument {
    pub schema_version: u32,
    pub visible_states: Vec<String>,
    pub hidden_states: Vec<String>,
    pub actions: Vec<String>,
    pub enabled_actions: Vec<Vec<usize>>,
    pub discount: f64,
    pub horizon: Horizon,
    pub initial_visible: usize,
    pub initial_belief: Vec<f64>,
    pub kernel: Vec<KernelEntry>,
}

impl ModelDocument {
    /// Rebuild a validated model from a debug dump.
    pub fn into_model(self) -> Result<MixedObservabilityModel, PomdpError> {
        let nv = self.visible_states.len();
        let nh = self.hidden_states.len();
        let na = self.actions.len();
        let mut rows = vec![Vec::new(); nv * nh * na];
        for e in self.kernel {
            if e.visible >= nv || e.hidden >= nh || e.action >= na {
                return Err(PomdpError::InvalidModel("kernel entry out of range".into()));
            }
            rows[(e.visible * nh + e.hidden) * na + e.action].push(Transition {
                next_visible: e.next_visible,
                next_hidden: e.next_hidden,
                prob: e.prob,
                reward: e.reward,
            });
        }
        MixedObservabilityModel::new(ModelSpec {
            visible_names: self.visible_states,
            hidden_names: self.hidden_states,
            action_names: self.actions,
            enabled: self.enabled_actions,
            rows,
            discount: self.discount,
            horizon: self.horizon,
            initial_visible: self.initial_visible,
            initial_belief: Belief::new(self.initial_belief)?,
        })
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Two hidden levels, one "attempt" action from a start state into two
    /// terminal states ("stayed", "intervened"). Hidden state is static.
    pub fn two_level_probe(stay: [f64; 2]) -> MixedObservabilityModel {
        let mut rows = vec![Vec::new(); 3 * 2];
        for h in 0..2 {
            rows[h] = vec![
                Transition { next_visible: 1, next_hidden: h, prob: stay[h], reward: 1.0 },
                Transition { next_visible: 2, next_hidden: h, prob: 1.0 - stay[h], reward: 0.0 },
            ];
        }
        MixedObservabilityModel::new(ModelSpec {
            visible_names: vec!["start".into(), "stayed".into(), "intervened".into()],
            hidden_names: vec!["low".into(), "high".into()],
            action_names: vec!["attempt".into()],
            enabled: vec![vec![0], vec![], vec![]],
            rows,
            discount: 1.0,
            horizon: Horizon::Finite(1),
            initial_visible: 0,
            initial_belief: Belief::uniform(2),
        })
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_stochastic_rows() {
        let mut spec = ModelSpec {
            visible_names: vec!["s".into(), "t".into()],
            hidden_names: vec!["h".into()],
            action_names: vec!["a".into()],
            enabled: vec![vec![0], vec![]],
            rows: vec![
                vec![Transition { next_visible: 1, next_hidden: 0, prob: 0.9, reward: 0.0 }],
                vec![],
            ],
            discount: 0.9,
            horizon: Horizon::Finite(1),
            initial_visible: 0,
            initial_belief: Belief::uniform(1),
        };
        assert!(matches!(
            MixedObservabilityModel::new(spec.clone()),
            Err(PomdpError::InvalidModel(_))
        ));
        spec.rows[0][0].prob = 1.0;
        spec.rows[0][0].reward = f64::NAN;
        assert!(MixedObservabilityModel::new(spec.clone()).is_err());
        spec.rows[0][0].reward = 1.0;
        assert!(MixedObservabilityModel::new(spec).is_ok());
    }

    #[test]
    fn debug_document_round_trips() {
        let m = fixtures::two_level_probe([0.2, 0.8]);
        let doc = m.to_debug_document();
        let json = serde_json::to_string(&doc).unwrap();
        let back: ModelDocument = serde_json::from_str(&json).unwrap();
        let rebuilt = back.into_model().unwrap();
        assert_eq!(rebuilt.digest(), m.digest());
    }

    #[test]
    fn topological_order_and_depth() {
        let m = fixtures::two_level_probe([0.2, 0.8]);
        let order = m.reverse_topological_order().unwrap();
        assert_eq!(order.last(), Some(&0));
        assert_eq!(m.longest_path_from_initial(), Some(1));
    }
}
