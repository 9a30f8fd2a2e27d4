//! Seeded rollouts against simulated humans, policy evaluation and
//! comparison, and exhaustive enumeration of human action sequences.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learning::{Episode, EpisodeMetadata, LogSource, LogStep};
use crate::pomdp::{belief_update, policy_action, Belief, Policy, PomdpError};
use crate::rng::{derive_seed, rng_from_seed, sample_index};
use crate::stats::{mean_and_stderr, one_way_anova, welch_t_test, AnovaResult, WelchTest};
use crate::task::{build_model, resolve_outcome, ObjectStatus, RobotActionSpec, TaskConfig, TaskError, TaskModel, WorldState};
use crate::trust::{
    sample_human_action, sample_trust_transition, HumanAction, HumanBehaviorParams, ObjectCategory, OutcomeClass,
    TrustDynamicsParams, TrustError, TrustLevel, TRUST_LEVELS,
};

pub const MAX_ENUMERATION_HORIZON: usize = 12;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Pomdp(#[from] PomdpError),
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error("enumeration over {0} objects exceeds the limit of {MAX_ENUMERATION_HORIZON}")]
    HorizonTooLarge(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// The simulated human: how they decide, how their trust moves, and where
/// it starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HumanTruth {
    pub behavior: HumanBehaviorParams,
    pub dynamics: TrustDynamicsParams,
    pub initial: Belief,
}

impl HumanTruth {
    /// The human the planner assumes.
    pub fn from_config(config: &TaskConfig) -> Self {
        Self {
            behavior: config.human_model.clone(),
            dynamics: config.dynamics.clone(),
            initial: config.initial_trust_belief.clone(),
        }
    }
}

/// A planning model paired with a policy computed on it.
#[derive(Debug, Clone, Copy)]
pub struct Agent<'a> {
    pub model: &'a TaskModel,
    pub policy: &'a Policy,
}

impl<'a> Agent<'a> {
    pub fn new(model: &'a TaskModel, policy: &'a Policy) -> Self {
        Self { model, policy }
    }
}

fn expected_trust(b: &Belief) -> Option<f64> {
    (b.len() == TRUST_LEVELS).then(|| b.expect(|h| (h + 1) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RolloutStep {
    /// Planner belief before the action.
    pub belief: Vec<f64>,
    pub action: RobotActionSpec,
    pub action_name: String,
    pub human_action: HumanAction,
    pub outcome: OutcomeClass,
    pub status: ObjectStatus,
    pub trust_before: TrustLevel,
    pub trust_after: TrustLevel,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RolloutRecord {
    pub seed: u64,
    pub steps: Vec<RolloutStep>,
    pub final_belief: Vec<f64>,
    pub total_reward: f64,
    pub discounted_return: f64,
}

impl RolloutRecord {
    /// Interaction-log form; with `muir_from_truth` the ground-truth levels
    /// stand in for the ratings.
    pub fn to_episode(&self, muir_from_truth: bool) -> Episode {
        let rating = |t: TrustLevel| muir_from_truth.then(|| t.as_f64());
        Episode {
            initial_muir: self.steps.first().and_then(|s| rating(s.trust_before)),
            initial_muir_items: None,
            steps: self
                .steps
                .iter()
                .map(|s| LogStep {
                    robot_action: s.action,
                    human_action: s.human_action,
                    outcome: s.outcome,
                    post_muir: rating(s.trust_after),
                    post_muir_items: None,
                })
                .collect(),
            metadata: EpisodeMetadata {
                source: LogSource::Synthetic,
                config: None,
                object_count: Some(self.steps.len()),
                seed: Some(self.seed),
            },
        }
    }

    pub fn human_sequence(&self) -> String {
        self.steps.iter().map(|s| human_symbol(s.human_action)).collect()
    }
}

fn human_symbol(a: HumanAction) -> char {
    match a {
        HumanAction::StayPut => 'S',
        HumanAction::Intervene => 'I',
    }
}

/// One episode. Draw order: initial trust, then per step the human's choice,
/// the genuine-failure draw, and the trust transition.
pub fn rollout(config: &TaskConfig, agent: Agent<'_>, truth: &HumanTruth, seed: u64) -> Result<RolloutRecord, SimError> {
    if agent.policy.hidden_count() != agent.model.hidden_count() {
        return Err(SimError::InvalidArgument("policy was not computed for this model".into()));
    }
    truth.dynamics.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut trust = TrustLevel::from_index(sample_index(truth.initial.weights().iter().copied(), &mut rng));
    let mut world = WorldState::initial(config.objects.len());
    let mut v = agent.model.initial_visible();
    let mut belief = agent.model.initial_belief().clone();
    let mut steps = Vec::with_capacity(config.objects.len());
    let (mut total, mut discounted, mut factor) = (0.0, 0.0, 1.0);
    while !world.is_terminal() {
        let a = policy_action(agent.policy, v, &belief)?;
        let action = agent.model.actions[a];
        let object = &config.objects[action.target_object];
        let human = sample_human_action(&truth.behavior, object.stakes(), trust, &mut rng)?;
        let (next_world, class, reward) = resolve_outcome(config, &world, action, human, &mut rng)?;
        let next_trust = sample_trust_transition(&truth.dynamics, trust, class, &mut rng)?;
        let next_v = agent
            .model
            .state_index(&next_world)
            .ok_or_else(|| SimError::InvalidArgument(format!("state {next_world} missing from the model")))?;
        let next_belief = belief_update(agent.model, &belief, v, a, next_v)?;
        steps.push(RolloutStep {
            belief: belief.weights().to_vec(),
            action,
            action_name: agent.model.action_name(a).to_string(),
            human_action: human,
            outcome: class,
            status: next_world.statuses[action.target_object],
            trust_before: trust,
            trust_after: next_trust,
            reward,
        });
        total += reward;
        discounted += factor * reward;
        factor *= config.discount;
        world = next_world;
        trust = next_trust;
        v = next_v;
        belief = next_belief;
    }
    Ok(RolloutRecord { seed, steps, final_belief: belief.weights().to_vec(), total_reward: total, discounted_return: discounted })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalSummary {
    pub episodes: usize,
    /// Undiscounted accumulated reward.
    pub mean_reward: f64,
    pub stderr: f64,
    pub mean_discounted: f64,
    pub stderr_discounted: f64,
    /// Share of attempts on each category that the human took over.
    pub intervention_rate: BTreeMap<ObjectCategory, f64>,
    pub overall_intervention_rate: f64,
    /// Ground-truth mean trust before each step and after the last.
    pub mean_trust: Vec<f64>,
    /// Planner's belief-expected trust at the same points; absent for
    /// models without a trust variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_belief_trust: Option<Vec<f64>>,
    /// Empirical frequency of each human action sequence ("S"/"I" per step).
    pub sequence_frequencies: BTreeMap<String, f64>,
}

fn summarize(config: &TaskConfig, records: &[RolloutRecord]) -> EvalSummary {
    let n = records.len();
    let totals: Vec<f64> = records.iter().map(|r| r.total_reward).collect();
    let disc: Vec<f64> = records.iter().map(|r| r.discounted_return).collect();
    let (mean_reward, stderr) = mean_and_stderr(&totals);
    let (mean_discounted, stderr_discounted) = mean_and_stderr(&disc);
    let mut attempts: BTreeMap<ObjectCategory, usize> = BTreeMap::new();
    let mut interventions: BTreeMap<ObjectCategory, usize> = BTreeMap::new();
    let mut sequences: BTreeMap<String, usize> = BTreeMap::new();
    let len = config.objects.len();
    let mut trust_sum = vec![0.0; len + 1];
    let mut belief_sum = vec![0.0; len + 1];
    let mut has_trust_belief = true;
    for r in records {
        for (t, s) in r.steps.iter().enumerate() {
            *attempts.entry(s.outcome.category).or_default() += 1;
            if s.human_action == HumanAction::Intervene {
                *interventions.entry(s.outcome.category).or_default() += 1;
            }
            trust_sum[t] += s.trust_before.as_f64();
            match expected_trust(&Belief::new(s.belief.clone()).expect("tracked belief")) {
                Some(e) => belief_sum[t] += e,
                None => has_trust_belief = false,
            }
        }
        if let Some(last) = r.steps.last() {
            trust_sum[len] += last.trust_after.as_f64();
            if let Some(e) = Belief::new(r.final_belief.clone()).ok().as_ref().and_then(expected_trust) {
                belief_sum[len] += e;
            }
        }
        *sequences.entry(r.human_sequence()).or_default() += 1;
    }
    let nf = n as f64;
    let mut intervention_rate = BTreeMap::new();
    for o in &config.objects {
        let a = attempts.get(&o.category).copied().unwrap_or(0);
        let i = interventions.get(&o.category).copied().unwrap_or(0);
        intervention_rate.insert(o.category, if a == 0 { 0.0 } else { i as f64 / a as f64 });
    }
    let total_interventions: usize = interventions.values().sum();
    EvalSummary {
        episodes: n,
        mean_reward,
        stderr,
        mean_discounted,
        stderr_discounted,
        intervention_rate,
        overall_intervention_rate: total_interventions as f64 / (nf * len as f64),
        mean_trust: trust_sum.iter().map(|s| s / nf).collect(),
        mean_belief_trust: has_trust_belief.then(|| belief_sum.iter().map(|s| s / nf).collect()),
        sequence_frequencies: sequences.into_iter().map(|(k, c)| (k, c as f64 / nf)).collect(),
    }
}

/// Runs `episodes` rollouts; episode `i` uses `derive_seed(seed, i)`.
pub fn run_episodes(
    config: &TaskConfig,
    agent: Agent<'_>,
    truth: &HumanTruth,
    episodes: usize,
    seed: u64,
) -> Result<Vec<RolloutRecord>, SimError> {
    (0..episodes as u64).into_par_iter().map(|i| rollout(config, agent, truth, derive_seed(seed, i))).collect()
}

pub fn evaluate(
    config: &TaskConfig,
    agent: Agent<'_>,
    truth: &HumanTruth,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary, SimError> {
    if episodes == 0 {
        return Err(SimError::InvalidArgument("episodes must be at least 1".into()));
    }
    let records = run_episodes(config, agent, truth, episodes, seed)?;
    Ok(summarize(config, &records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NamedSummary {
    pub name: String,
    pub summary: EvalSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonReport {
    pub policies: Vec<NamedSummary>,
    /// Best against runner-up by mean reward.
    pub welch: WelchTest,
    pub anova: AnovaResult,
    /// Name of the best policy when the Welch test is significant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winner: Option<String>,
    pub verdict: String,
}

/// Evaluates every policy on the same per-episode seeds.
pub fn compare_policies(
    config: &TaskConfig,
    agents: &[(&str, Agent<'_>)],
    truth: &HumanTruth,
    episodes: usize,
    seed: u64,
) -> Result<ComparisonReport, SimError> {
    if agents.len() < 2 {
        return Err(SimError::InvalidArgument("comparison needs at least two policies".into()));
    }
    if episodes < 2 {
        return Err(SimError::InvalidArgument("comparison needs at least two episodes".into()));
    }
    let mut returns = Vec::new();
    let mut policies = Vec::new();
    for (name, agent) in agents {
        let records = run_episodes(config, *agent, truth, episodes, seed)?;
        returns.push(records.iter().map(|r| r.total_reward).collect::<Vec<f64>>());
        policies.push(NamedSummary { name: name.to_string(), summary: summarize(config, &records) });
    }
    let mut order: Vec<usize> = (0..policies.len()).collect();
    order.sort_by(|&a, &b| policies[b].summary.mean_reward.total_cmp(&policies[a].summary.mean_reward).then(a.cmp(&b)));
    let (best, second) = (order[0], order[1]);
    let welch = welch_t_test(&returns[best], &returns[second]);
    let groups: Vec<&[f64]> = returns.iter().map(|r| r.as_slice()).collect();
    let anova = one_way_anova(&groups);
    let significant = welch.p_value < SIGNIFICANCE_LEVEL && welch.mean_difference > 0.0;
    let winner = significant.then(|| policies[best].name.clone());
    let verdict = match &winner {
        Some(w) => format!("{w} ({:.3} vs {:.3}, p = {:.2e})", policies[best].summary.mean_reward, policies[second].summary.mean_reward, welch.p_value),
        None => "not significant".to_string(),
    };
    Ok(ComparisonReport { policies, welch, anova, winner, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SequenceRecord {
    pub human_actions: Vec<HumanAction>,
    pub symbols: String,
    pub likelihood: f64,
    /// Filtered expected ground-truth trust before each step and after the
    /// last, averaged over outcome branches consistent with the sequence.
    pub expected_trust: Vec<f64>,
    pub expected_reward: f64,
}

struct Aggregate {
    likelihood: f64,
    trust: Vec<f64>,
    reward: f64,
}

struct Enumerator<'a> {
    truth: &'a TaskModel,
    agent: Agent<'a>,
    config: &'a TaskConfig,
    out: BTreeMap<Vec<bool>, Aggregate>,
}

impl Enumerator<'_> {
    fn visit(
        &mut self,
        v: usize,
        joint: &[f64],
        belief: &Belief,
        stays: &mut Vec<bool>,
        trust_path: &mut Vec<f64>,
        reward: f64,
    ) -> Result<(), SimError> {
        let mass: f64 = joint.iter().sum();
        let e = joint.iter().enumerate().map(|(h, w)| (h + 1) as f64 * w).sum::<f64>() / mass;
        trust_path.push(e);
        if self.truth.is_terminal(v) {
            let agg = self.out.entry(stays.clone()).or_insert_with(|| Aggregate { likelihood: 0.0, trust: vec![0.0; trust_path.len()], reward: 0.0 });
            agg.likelihood += mass;
            agg.reward += mass * reward;
            for (acc, t) in agg.trust.iter_mut().zip(trust_path.iter()) {
                *acc += mass * t;
            }
            trust_path.pop();
            return Ok(());
        }
        let a_agent = policy_action(self.agent.policy, v, belief)?;
        let action = self.agent.model.actions[a_agent];
        let a = self.truth.action_index(action).ok_or_else(|| SimError::InvalidArgument("action missing from the task model".into()))?;
        let object = &self.config.objects[action.target_object];
        let mut next: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (h, w) in joint.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for t in self.truth.kernel(v, h, a) {
                next.entry(t.next_visible).or_insert_with(|| vec![0.0; joint.len()])[t.next_hidden] += w * t.prob;
            }
        }
        for (nv, nj) in next {
            if nj.iter().sum::<f64>() <= 0.0 {
                continue;
            }
            let status = self.truth.world(nv).statuses[action.target_object];
            let agent_v = self.agent.model.state_index(self.truth.world(nv)).expect("shared state space");
            let nb = belief_update(self.agent.model, belief, v, a_agent, agent_v)?;
            stays.push(status != ObjectStatus::RemovedHuman);
            self.visit(nv, &nj, &nb, stays, trust_path, reward + object.reward_for(status))?;
            stays.pop();
        }
        trust_path.pop();
        Ok(())
    }
}

/// Every human StayPut/Intervene sequence under the agent's policy with its
/// exact likelihood under the config's trust model.
pub fn enumerate_sequences(config: &TaskConfig, agent: Agent<'_>) -> Result<Vec<SequenceRecord>, SimError> {
    let n = config.objects.len();
    if n > MAX_ENUMERATION_HORIZON {
        return Err(SimError::HorizonTooLarge(n));
    }
    let truth = build_model(&config.clone().with_objective(Default::default()))?;
    let mut e = Enumerator { truth: &truth, agent, config, out: BTreeMap::new() };
    let joint = truth.initial_belief().weights().to_vec();
    e.visit(truth.initial_visible(), &joint, agent.model.initial_belief(), &mut Vec::new(), &mut Vec::new(), 0.0)?;
    let mut records: Vec<SequenceRecord> = e
        .out
        .into_iter()
        .map(|(stays, agg)| {
            let human_actions: Vec<HumanAction> =
                stays.iter().map(|s| if *s { HumanAction::StayPut } else { HumanAction::Intervene }).collect();
            SequenceRecord {
                symbols: human_actions.iter().map(|a| human_symbol(*a)).collect(),
                human_actions,
                likelihood: agg.likelihood,
                expected_trust: agg.trust.iter().map(|t| t / agg.likelihood).collect(),
                expected_reward: agg.reward / agg.likelihood,
            }
        })
        .collect();
    records.sort_by(|a, b| b.likelihood.total_cmp(&a.likelihood).then_with(|| a.symbols.cmp(&b.symbols)));
    Ok(records)
}

/// Likelihood-weighted expected reward over all sequences.
pub fn expected_reward(records: &[SequenceRecord]) -> f64 {
    records.iter().map(|r| r.likelihood * r.expected_reward).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PolicyTreeNode {
    pub world: String,
    pub probability: f64,
    pub belief: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_trust: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<PolicyTreeEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PolicyTreeEdge {
    pub human_action: HumanAction,
    pub status: ObjectStatus,
    pub probability: f64,
    pub reward: f64,
    pub node: PolicyTreeNode,
}

/// The agent's policy unrolled over all outcomes, with branch probabilities
/// under the agent's own model.
pub fn policy_tree(config: &TaskConfig, agent: Agent<'_>) -> Result<PolicyTreeNode, SimError> {
    if config.objects.len() > MAX_ENUMERATION_HORIZON {
        return Err(SimError::HorizonTooLarge(config.objects.len()));
    }
    tree_node(config, agent, agent.model.initial_visible(), agent.model.initial_belief().clone(), 1.0)
}

fn tree_node(config: &TaskConfig, agent: Agent<'_>, v: usize, b: Belief, probability: f64) -> Result<PolicyTreeNode, SimError> {
    let m = agent.model;
    let mut node = PolicyTreeNode {
        world: m.world(v).to_string(),
        probability,
        belief: b.weights().to_vec(),
        expected_trust: expected_trust(&b),
        action: None,
        children: Vec::new(),
    };
    if m.is_terminal(v) {
        return Ok(node);
    }
    let a = policy_action(agent.policy, v, &b)?;
    let action = m.actions[a];
    node.action = Some(m.action_name(a).to_string());
    for nv in m.visible_successors(v, a) {
        let p: f64 = (0..m.hidden_count())
            .map(|h| b.get(h) * m.kernel(v, h, a).iter().filter(|t| t.next_visible == nv).map(|t| t.prob).sum::<f64>())
            .sum();
        if p <= 0.0 {
            continue;
        }
        let status = m.world(nv).statuses[action.target_object];
        let nb = belief_update(m, &b, v, a, nv)?;
        node.children.push(PolicyTreeEdge {
            human_action: if status == ObjectStatus::RemovedHuman { HumanAction::Intervene } else { HumanAction::StayPut },
            status,
            probability: p,
            reward: config.objects[action.target_object].reward_for(status),
            node: tree_node(config, agent, nv, nb, probability * p)?,
        });
    }
    Ok(node)
}

/// Most likely path through the policy tree.
pub fn most_likely_actions(tree: &PolicyTreeNode) -> Vec<String> {
    let mut out = Vec::new();
    let mut node = tree;
    while let Some(action) = &node.action {
        out.push(action.clone());
        match node.children.iter().max_by(|a, b| a.probability.total_cmp(&b.probability)) {
            Some(edge) => node = &edge.node,
            None => break,
        }
    }
    out
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SequenceRow<'a> {
    sequence: &'a str,
    likelihood: f64,
    expected_reward: f64,
    expected_trust: String,
}

pub fn sequences_to_csv(records: &[SequenceRecord]) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(SequenceRow {
            sequence: &r.symbols,
            likelihood: r.likelihood,
            expected_reward: r.expected_reward,
            expected_trust: join(&r.expected_trust),
        })?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("utf-8"))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RolloutRow<'a> {
    seed: u64,
    step: usize,
    action: &'a str,
    human_action: char,
    outcome: String,
    trust_before: u8,
    trust_after: u8,
    reward: f64,
    belief: String,
}

/// One row per step.
pub fn rollouts_to_csv(records: &[RolloutRecord]) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        for (t, s) in r.steps.iter().enumerate() {
            w.serialize(RolloutRow {
                seed: r.seed,
                step: t,
                action: &s.action_name,
                human_action: human_symbol(s.human_action),
                outcome: s.outcome.key(),
                trust_before: s.trust_before.value(),
                trust_after: s.trust_after.value(),
                reward: s.reward,
                belief: join(&s.belief),
            })?;
        }
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("utf-8"))
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::{exact_plan, ExactOptions};
    use crate::task::{build_myopic_model, preset, reference_parameters, ObjectSpec};

    fn small_config(n: usize) -> TaskConfig {
        let mut c = preset("always-success", &reference_parameters()).unwrap();
        let cats = [ObjectCategory::Glass, ObjectCategory::Bottle, ObjectCategory::Can];
        c.objects = (0..n).map(|i| ObjectSpec::with_defaults(i, cats[i % 3])).collect();
        c
    }

    fn solve(model: &TaskModel) -> Policy {
        exact_plan(model, ExactOptions::default()).unwrap().policy
    }

    #[test]
    fn rollout_is_reproducible_and_consistent() {
        let c = small_config(3);
        let m = build_model(&c).unwrap();
        let p = solve(&m);
        let truth = HumanTruth::from_config(&c);
        let a = rollout(&c, Agent::new(&m, &p), &truth, 17).unwrap();
        let b = rollout(&c, Agent::new(&m, &p), &truth, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 3);
        assert!((a.total_reward - a.steps.iter().map(|s| s.reward).sum::<f64>()).abs() < 1e-12);
        for w in a.steps.windows(2) {
            assert_eq!(w[0].trust_after, w[1].trust_before);
        }
        let ep = a.to_episode(true);
        ep.validate().unwrap();
        assert_eq!(ep.initial_muir, Some(a.steps[0].trust_before.as_f64()));
    }

    #[test]
    fn single_object_reward_matches_outcome() {
        let c = small_config(1);
        let m = build_model(&c).unwrap();
        let p = solve(&m);
        for seed in 0..20 {
            let r = rollout(&c, Agent::new(&m, &p), &HumanTruth::from_config(&c), seed).unwrap();
            assert_eq!(r.steps.len(), 1);
            let expected = match r.steps[0].status {
                ObjectStatus::RemovedRobotSuccess => 3.0,
                ObjectStatus::RemovedRobotFail => -9.0,
                _ => 0.0,
            };
            assert_eq!(r.total_reward, expected);
        }
    }

    #[test]
    fn always_intervening_human_scores_zero() {
        // b = 0 leaves S(r^F) as the stay probability, negligible at r^F = −60
        let mut c = small_config(3);
        for o in &mut c.objects {
            *o = ObjectSpec { reward_success: 1.0, reward_fail: -60.0, ..*o };
        }
        let m = build_model(&c).unwrap();
        let p = solve(&m);
        let mut truth = HumanTruth::from_config(&c);
        truth.behavior = HumanBehaviorParams::trust_free(ObjectCategory::ALL.map(|c| (c, 0.0)));
        let s = evaluate(&c, Agent::new(&m, &p), &truth, 200, 1).unwrap();
        assert_eq!(s.mean_reward, 0.0);
        assert_eq!(s.overall_intervention_rate, 1.0);
    }

    #[test]
    fn evaluation_accounting() {
        let c = small_config(3);
        let m = build_model(&c).unwrap();
        let p = solve(&m);
        let truth = HumanTruth::from_config(&c);
        let records = run_episodes(&c, Agent::new(&m, &p), &truth, 500, 3).unwrap();
        let s = summarize(&c, &records);
        let interventions: usize =
            records.iter().flat_map(|r| r.steps.iter()).filter(|s| s.status == ObjectStatus::RemovedHuman).count();
        let removals: usize = records.iter().flat_map(|r| r.steps.iter()).filter(|s| s.status != ObjectStatus::RemovedHuman).count();
        assert_eq!(interventions + removals, 500 * 3);
        assert!((s.overall_intervention_rate * 500.0 * 3.0 - interventions as f64).abs() < 1e-9);
        assert!(s.intervention_rate.values().all(|r| (0.0..=1.0).contains(r)));
        assert!((s.sequence_frequencies.values().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(s.mean_trust.len(), 4);
    }

    #[test]
    fn self_comparison_is_not_significant() {
        let c = small_config(2);
        let m = build_model(&c).unwrap();
        let p = solve(&m);
        let a = Agent::new(&m, &p);
        let r = compare_policies(&c, &[("a", a), ("b", a)], &HumanTruth::from_config(&c), 300, 5).unwrap();
        assert_eq!(r.welch.mean_difference, 0.0);
        assert!(r.winner.is_none());
        assert_eq!(r.verdict, "not significant");
    }

    #[test]
    fn sequences_cover_all_mass() {
        let c = small_config(2);
        let m = build_model(&c).unwrap();
        let p = solve(&m);
        let seqs = enumerate_sequences(&c, Agent::new(&m, &p)).unwrap();
        assert_eq!(seqs.len(), 4);
        assert!((seqs.iter().map(|s| s.likelihood).sum::<f64>() - 1.0).abs() < 1e-9);
        let csv = sequences_to_csv(&seqs).unwrap();
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn certain_stays_give_one_sequence() {
        let mut c = small_config(3);
        c.human_model = HumanBehaviorParams::trust_free(ObjectCategory::ALL.map(|c| (c, 1.0)));
        for o in &mut c.objects {
            *o = ObjectSpec { reward_success: 60.0, reward_fail: 0.0, ..*o };
        }
        let m = build_myopic_model(&c).unwrap();
        let p = solve(&m);
        let seqs = enumerate_sequences(&c, Agent::new(&m, &p)).unwrap();
        assert_eq!(seqs.len(), 1);
        assert!((seqs[0].likelihood - 1.0).abs() < 1e-9);
        assert_eq!(seqs[0].symbols, "SSS");
    }

    #[test]
    fn too_many_objects_for_enumeration() {
        let mut c = small_config(1);
        c.objects = (0..13).map(|i| ObjectSpec::with_defaults(i, ObjectCategory::Bottle)).collect();
        let small = small_config(1);
        let m = build_model(&small).unwrap();
        let p = solve(&m);
        assert!(matches!(enumerate_sequences(&c, Agent::new(&m, &p)), Err(SimError::HorizonTooLarge(13))));
    }

    #[test]
    fn policy_tree_probabilities() {
        let c = small_config(2);
        let m = build_model(&c).unwrap();
        let p = solve(&m);
        let tree = policy_tree(&c, Agent::new(&m, &p)).unwrap();
        let total: f64 = tree.children.iter().map(|e| e.probability).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(most_likely_actions(&tree).len(), 2);
        serde_json::to_string(&tree).unwrap();
    }
}
