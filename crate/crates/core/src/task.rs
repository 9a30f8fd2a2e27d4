//! The table-clearing task: objects on a table, a robot that tries to
//! remove them one at a time, and a human who may intervene.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pomdp::{Belief, Horizon, MixedObservabilityModel, ModelSpec, PomdpError, Transition};
use crate::trust::{
    discretize_dynamics, sample_trust_transition, stay_put_probability, HumanAction, HumanBehaviorParams,
    LinearGaussian, ObjectCategory, ObjectStakes, OutcomeClass, OutcomeEvent, TransitionMatrix, TrustDynamicsParams,
    TrustError, TrustLevel, TRUST_LEVELS,
};

pub const PARAMS_SCHEMA_VERSION: u32 = 1;
pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_DISCOUNT: f64 = 0.99;

const REFERENCE_PARAMS: &str = include_str!("../data/reference_params.json");

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid task configuration: {0}")]
    Config(String),
    #[error("object {0} is not on the table")]
    IllegalTarget(usize),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("unknown world state")]
    UnknownWorldState,
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error(transparent)]
    Pomdp(#[from] PomdpError),
    #[error("parameter file: {0}")]
    Params(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectSpec {
    pub id: usize,
    pub category: ObjectCategory,
    pub reward_success: f64,
    pub reward_fail: f64,
    pub reward_intervene: f64,
    pub p_genuine_fail: f64,
}

impl ObjectSpec {
    /// An always-succeeding object with the default rewards of its category.
    pub fn with_defaults(id: usize, category: ObjectCategory) -> Self {
        let (reward_success, reward_fail) = match category {
            ObjectCategory::Bottle => (1.0, 0.0),
            ObjectCategory::Can => (2.0, -4.0),
            ObjectCategory::Glass => (3.0, -9.0),
        };
        Self { id, category, reward_success, reward_fail, reward_intervene: 0.0, p_genuine_fail: 0.0 }
    }

    pub fn stakes(&self) -> ObjectStakes {
        ObjectStakes { category: self.category, reward_success: self.reward_success, reward_fail: self.reward_fail }
    }

    pub fn reward_for(&self, status: ObjectStatus) -> f64 {
        match status {
            ObjectStatus::OnTable => 0.0,
            ObjectStatus::RemovedRobotSuccess => self.reward_success,
            ObjectStatus::RemovedRobotFail => self.reward_fail,
            ObjectStatus::RemovedHuman => self.reward_intervene,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ObjectStatus {
    OnTable,
    RemovedRobotSuccess,
    RemovedRobotFail,
    RemovedHuman,
}

impl ObjectStatus {
    fn symbol(self) -> char {
        match self {
            ObjectStatus::OnTable => 'T',
            ObjectStatus::RemovedRobotSuccess => 'S',
            ObjectStatus::RemovedRobotFail => 'F',
            ObjectStatus::RemovedHuman => 'H',
        }
    }

    pub fn event(self) -> Option<OutcomeEvent> {
        match self {
            ObjectStatus::OnTable => None,
            ObjectStatus::RemovedRobotSuccess => Some(OutcomeEvent::StayPutSuccess),
            ObjectStatus::RemovedRobotFail => Some(OutcomeEvent::StayPutFail),
            ObjectStatus::RemovedHuman => Some(OutcomeEvent::Intervened),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WorldState {
    pub statuses: Vec<ObjectStatus>,
}

impl WorldState {
    pub fn initial(objects: usize) -> Self {
        Self { statuses: vec![ObjectStatus::OnTable; objects] }
    }

    pub fn is_terminal(&self) -> bool {
        self.statuses.iter().all(|s| *s != ObjectStatus::OnTable)
    }

    pub fn on_table(&self) -> impl Iterator<Item = usize> + '_ {
        self.statuses.iter().enumerate().filter(|(_, s)| **s == ObjectStatus::OnTable).map(|(i, _)| i)
    }

    pub fn with_status(&self, object: usize, status: ObjectStatus) -> Self {
        let mut next = self.clone();
        next.statuses[object] = status;
        next
    }
}

impl fmt::Display for WorldState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.statuses {
            write!(f, "{}", s.symbol())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ActionMode {
    Genuine,
    IntentionalFail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RobotActionSpec {
    pub target_object: usize,
    pub mode: ActionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub enum Objective {
    #[default]
    Performance,
    TrustMaximizing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub objects: Vec<ObjectSpec>,
    pub allow_intentional_fail: bool,
    pub discount: f64,
    pub initial_trust_belief: Belief,
    pub dynamics: TrustDynamicsParams,
    pub human_model: HumanBehaviorParams,
    pub objective: Objective,
}

impl TaskConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.objects.is_empty() {
            return Err(TaskError::Config("at least one object is required".into()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.id != i {
                return Err(TaskError::Config(format!("object ids must be 0..n in order, found {} at {i}", o.id)));
            }
            if !(0.0..=1.0).contains(&o.p_genuine_fail) {
                return Err(TaskError::Config(format!("pGenuineFail of object {i} outside [0, 1]")));
            }
            if ![o.reward_success, o.reward_fail, o.reward_intervene].iter().all(|r| r.is_finite()) {
                return Err(TaskError::Config(format!("non-finite reward on object {i}")));
            }
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(TaskError::Config(format!("discount {} outside (0, 1]", self.discount)));
        }
        if self.initial_trust_belief.len() != TRUST_LEVELS {
            return Err(TaskError::Config(format!(
                "initial trust belief has {} weights, expected {TRUST_LEVELS}",
                self.initial_trust_belief.len()
            )));
        }
        self.dynamics.validate()?;
        self.human_model.validate()?;
        Ok(())
    }

    /// Robot actions in index order: every genuine attempt, then every
    /// intentional failure when enabled.
    pub fn actions(&self) -> Vec<RobotActionSpec> {
        let mut out: Vec<_> = (0..self.objects.len())
            .map(|i| RobotActionSpec { target_object: i, mode: ActionMode::Genuine })
            .collect();
        if self.allow_intentional_fail {
            out.extend(
                (0..self.objects.len()).map(|i| RobotActionSpec { target_object: i, mode: ActionMode::IntentionalFail }),
            );
        }
        out
    }

    pub fn action_index(&self, action: RobotActionSpec) -> Option<usize> {
        let n = self.objects.len();
        if action.target_object >= n {
            return None;
        }
        match action.mode {
            ActionMode::Genuine => Some(action.target_object),
            ActionMode::IntentionalFail if self.allow_intentional_fail => Some(n + action.target_object),
            ActionMode::IntentionalFail => None,
        }
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }

    pub fn with_initial_belief(mut self, belief: Belief) -> Self {
        self.initial_trust_belief = belief;
        self
    }

    pub fn with_human_model(mut self, human_model: HumanBehaviorParams) -> Self {
        self.human_model = human_model;
        self
    }
}

/// Outcome of one robot attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub world: WorldState,
    pub trust: TrustLevel,
    pub class: OutcomeClass,
    pub reward: f64,
}

/// Resolves the object status, outcome class and task reward of an attempt
/// given the human's choice. Genuine failures are drawn from `rng`.
pub fn resolve_outcome<R: Rng + ?Sized>(
    config: &TaskConfig,
    world: &WorldState,
    action: RobotActionSpec,
    human: HumanAction,
    rng: &mut R,
) -> Result<(WorldState, OutcomeClass, f64), TaskError> {
    let object = config.objects.get(action.target_object).ok_or(TaskError::IllegalTarget(action.target_object))?;
    if world.statuses.get(action.target_object) != Some(&ObjectStatus::OnTable) {
        return Err(TaskError::IllegalTarget(action.target_object));
    }
    if config.action_index(action).is_none() {
        return Err(TaskError::Config("intentional failures are disabled".into()));
    }
    let status = match (human, action.mode) {
        (HumanAction::Intervene, _) => ObjectStatus::RemovedHuman,
        (HumanAction::StayPut, ActionMode::IntentionalFail) => ObjectStatus::RemovedRobotFail,
        (HumanAction::StayPut, ActionMode::Genuine) => {
            if rng.random::<f64>() < object.p_genuine_fail {
                ObjectStatus::RemovedRobotFail
            } else {
                ObjectStatus::RemovedRobotSuccess
            }
        }
    };
    let class = OutcomeClass::new(object.category, status.event().expect("removed"));
    Ok((world.with_status(action.target_object, status), class, object.reward_for(status)))
}

/// One ground-truth transition: outcome, then trust update by outcome class.
pub fn step<R: Rng + ?Sized>(
    config: &TaskConfig,
    world: &WorldState,
    trust: TrustLevel,
    action: RobotActionSpec,
    human: HumanAction,
    rng: &mut R,
) -> Result<StepOutcome, TaskError> {
    let (world, class, reward) = resolve_outcome(config, world, action, human, rng)?;
    let trust = sample_trust_transition(&config.dynamics, trust, class, rng)?;
    Ok(StepOutcome { world, trust, class, reward })
}

/// A task model together with the mapping between model indices and task
/// objects.
#[derive(Debug, Clone)]
pub struct TaskModel {
    pub model: MixedObservabilityModel,
    pub states: Vec<WorldState>,
    pub actions: Vec<RobotActionSpec>,
    index: HashMap<WorldState, usize>,
}

impl TaskModel {
    pub fn state_index(&self, world: &WorldState) -> Option<usize> {
        self.index.get(world).copied()
    }

    pub fn action_index(&self, action: RobotActionSpec) -> Option<usize> {
        self.actions.iter().position(|a| *a == action)
    }

    pub fn world(&self, v: usize) -> &WorldState {
        &self.states[v]
    }
}

impl std::ops::Deref for TaskModel {
    type Target = MixedObservabilityModel;
    fn deref(&self) -> &Self::Target {
        &self.model
    }
}

#[derive(Clone, Copy)]
enum Variant {
    TrustAware { trust_reward: bool },
    Myopic,
}

/// The trust-POMDP of the configured task. With a trust-maximizing objective
/// the reward is the successor trust level instead of the task reward.
pub fn build_model(config: &TaskConfig) -> Result<TaskModel, TaskError> {
    config.validate()?;
    let trust_reward = config.objective == Objective::TrustMaximizing;
    build(config, Variant::TrustAware { trust_reward })
}

/// Trust-ignoring model: one hidden state and a human whose stay-put
/// probability does not depend on trust.
pub fn build_myopic_model(config: &TaskConfig) -> Result<TaskModel, TaskError> {
    config.validate()?;
    if config.human_model.is_trust_based() {
        return Err(TaskError::Config("the myopic model needs a trust-free human model".into()));
    }
    build(config, Variant::Myopic)
}

/// Same kernel as [`build_model`], rewarded by the successor trust level.
pub fn build_trust_max_model(config: &TaskConfig) -> Result<TaskModel, TaskError> {
    config.validate()?;
    build(config, Variant::TrustAware { trust_reward: true })
}

struct OutcomeBranch {
    status: ObjectStatus,
    prob: f64,
}

fn outcome_branches(object: &ObjectSpec, stay: f64, mode: ActionMode) -> Vec<OutcomeBranch> {
    let mut out = vec![OutcomeBranch { status: ObjectStatus::RemovedHuman, prob: 1.0 - stay }];
    match mode {
        ActionMode::Genuine => {
            out.push(OutcomeBranch { status: ObjectStatus::RemovedRobotSuccess, prob: stay * (1.0 - object.p_genuine_fail) });
            out.push(OutcomeBranch { status: ObjectStatus::RemovedRobotFail, prob: stay * object.p_genuine_fail });
        }
        ActionMode::IntentionalFail => {
            out.push(OutcomeBranch { status: ObjectStatus::RemovedRobotFail, prob: stay });
        }
    }
    out.retain(|b| b.prob > 0.0);
    out
}

fn build(config: &TaskConfig, variant: Variant) -> Result<TaskModel, TaskError> {
    let n = config.objects.len();
    let actions = config.actions();
    let na = actions.len();
    let nh = match variant {
        Variant::Myopic => 1,
        Variant::TrustAware { .. } => TRUST_LEVELS,
    };
    let matrices: BTreeMap<OutcomeClass, TransitionMatrix> = match variant {
        Variant::Myopic => BTreeMap::new(),
        Variant::TrustAware { .. } => discretize_dynamics(&config.dynamics)?,
    };
    // stay[object][h]
    let mut stay = vec![vec![0.0; nh]; n];
    for (j, object) in config.objects.iter().enumerate() {
        for (h, slot) in stay[j].iter_mut().enumerate() {
            *slot = stay_put_probability(&config.human_model, object.stakes(), TrustLevel::from_index(h))?;
        }
    }

    let mut states = vec![WorldState::initial(n)];
    let mut index = HashMap::from([(states[0].clone(), 0usize)]);
    let mut queue = VecDeque::from([0usize]);
    let mut rows_by_state: Vec<Vec<Vec<Transition>>> = Vec::new();
    // Rows are filled in BFS order, which is also the state index order.
    while let Some(v) = queue.pop_front() {
        let world = states[v].clone();
        let mut rows = vec![Vec::new(); nh * na];
        for (a, action) in actions.iter().enumerate() {
            let j = action.target_object;
            if world.statuses[j] != ObjectStatus::OnTable {
                continue;
            }
            let object = &config.objects[j];
            for h in 0..nh {
                let mut row = Vec::new();
                for branch in outcome_branches(object, stay[j][h], action.mode) {
                    let next_world = world.with_status(j, branch.status);
                    let next_v = match index.get(&next_world) {
                        Some(&i) => i,
                        None => {
                            let i = states.len();
                            states.push(next_world.clone());
                            index.insert(next_world, i);
                            queue.push_back(i);
                            i
                        }
                    };
                    let task_reward = object.reward_for(branch.status);
                    match variant {
                        Variant::Myopic => row.push(Transition {
                            next_visible: next_v,
                            next_hidden: 0,
                            prob: branch.prob,
                            reward: task_reward,
                        }),
                        Variant::TrustAware { trust_reward } => {
                            let class = OutcomeClass::new(object.category, branch.status.event().expect("removed"));
                            let trust_row = matrices[&class].0[h];
                            for (h_next, p) in trust_row.iter().enumerate() {
                                let prob = branch.prob * p;
                                if prob > 0.0 {
                                    let reward = if trust_reward { (h_next + 1) as f64 } else { task_reward };
                                    row.push(Transition { next_visible: next_v, next_hidden: h_next, prob, reward });
                                }
                            }
                        }
                    }
                }
                rows[h * na + a] = row;
            }
        }
        rows_by_state.push(rows);
    }

    let nv = states.len();
    let mut kernel = Vec::with_capacity(nv * nh * na);
    let mut enabled = Vec::with_capacity(nv);
    for (v, rows) in rows_by_state.into_iter().enumerate() {
        let world = &states[v];
        enabled.push(
            (0..na)
                .filter(|&a| world.statuses[actions[a].target_object] == ObjectStatus::OnTable)
                .collect::<Vec<_>>(),
        );
        kernel.extend(rows);
    }

    let initial_belief = match variant {
        Variant::Myopic => Belief::point_mass(1, 0),
        Variant::TrustAware { .. } => config.initial_trust_belief.clone(),
    };
    let hidden_names = match variant {
        Variant::Myopic => vec!["any".to_string()],
        Variant::TrustAware { .. } => TrustLevel::all().map(|t| format!("trust{}", t.value())).collect(),
    };
    let spec = ModelSpec {
        visible_names: states.iter().map(|s| s.to_string()).collect(),
        hidden_names,
        action_names: actions.iter().map(|a| action_name(config, *a)).collect(),
        enabled,
        rows: kernel,
        discount: config.discount,
        horizon: Horizon::Finite(n),
        initial_visible: 0,
        initial_belief,
    };
    let model = MixedObservabilityModel::new(spec)?;
    Ok(TaskModel { model, states, actions, index })
}

fn action_name(config: &TaskConfig, action: RobotActionSpec) -> String {
    let object = &config.objects[action.target_object];
    let verb = match action.mode {
        ActionMode::Genuine => "pick",
        ActionMode::IntentionalFail => "fail",
    };
    format!("{verb}:{}#{}", object.category, object.id)
}

/// Trust dynamics and human behavior parameters as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParameterFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    pub dynamics: BTreeMap<String, LinearGaussian>,
    pub muir_noise: f64,
    pub behavior: HumanBehaviorParams,
    /// Trust-free behavior used for the myopic baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust_free_behavior: Option<HumanBehaviorParams>,
}

impl ParameterFile {
    pub fn new(dynamics: &TrustDynamicsParams, behavior: HumanBehaviorParams) -> Self {
        Self {
            schema_version: PARAMS_SCHEMA_VERSION,
            provenance: None,
            dynamics: dynamics.per_class.iter().map(|(c, p)| (c.key(), *p)).collect(),
            muir_noise: dynamics.muir_noise,
            behavior,
            trust_free_behavior: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, TaskError> {
        let file: ParameterFile = serde_json::from_str(text).map_err(|e| TaskError::Params(e.to_string()))?;
        if file.schema_version != PARAMS_SCHEMA_VERSION {
            return Err(TaskError::Params(format!("unsupported schemaVersion {}", file.schema_version)));
        }
        file.trust_dynamics()?;
        file.behavior.validate()?;
        if let Some(b) = &file.trust_free_behavior {
            b.validate()?;
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialize")
    }

    pub fn trust_dynamics(&self) -> Result<TrustDynamicsParams, TaskError> {
        let per_class = self
            .dynamics
            .iter()
            .map(|(k, v)| OutcomeClass::parse_key(k).map(|c| (c, *v)))
            .collect::<Result<_, _>>()?;
        let params = TrustDynamicsParams { per_class, muir_noise: self.muir_noise };
        params.validate()?;
        Ok(params)
    }
}

/// Parameters shipped with the crate.
pub fn reference_parameters() -> ParameterFile {
    ParameterFile::from_json(REFERENCE_PARAMS).expect("bundled reference parameters are valid")
}

pub const PRESETS: [&str; 2] = ["always-success", "failure-scenario"];

/// Three bottles, a can and a glass, in that id order.
pub fn default_objects() -> Vec<ObjectSpec> {
    [ObjectCategory::Bottle, ObjectCategory::Bottle, ObjectCategory::Bottle, ObjectCategory::Can, ObjectCategory::Glass]
        .into_iter()
        .enumerate()
        .map(|(i, c)| ObjectSpec::with_defaults(i, c))
        .collect()
}

/// Objects of the failure scenario: a glass the robot usually drops and
/// bottles worth less when the robot removes them.
pub fn failure_scenario_objects() -> Vec<ObjectSpec> {
    default_objects()
        .into_iter()
        .map(|mut o| {
            match o.category {
                ObjectCategory::Glass => o.p_genuine_fail = 0.9,
                ObjectCategory::Bottle => o.reward_success = 0.3,
                ObjectCategory::Can => {}
            }
            o
        })
        .collect()
}

pub fn preset(name: &str, params: &ParameterFile) -> Result<TaskConfig, TaskError> {
    let (objects, allow_intentional_fail) = match name {
        "always-success" => (default_objects(), false),
        "failure-scenario" => (failure_scenario_objects(), true),
        other => return Err(TaskError::UnknownPreset(other.to_string())),
    };
    Ok(TaskConfig {
        objects,
        allow_intentional_fail,
        discount: DEFAULT_DISCOUNT,
        initial_trust_belief: Belief::uniform(TRUST_LEVELS),
        dynamics: params.trust_dynamics()?,
        human_model: params.behavior.clone(),
        objective: Objective::Performance,
    })
}

/// Where a config file takes its parameters from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParameterSource {
    /// `"reference"` for the bundled set, or a path relative to the config.
    Named(String),
    Inline(Box<ParameterFile>),
}

/// Task configuration as stored on disk. When `preset` is given, its values
/// fill every field left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct TaskConfigFile {
    #[serde(default)]
    pub schema_version: Option<u32>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub objects: Option<Vec<ObjectSpec>>,
    #[serde(default)]
    pub allow_intentional_fail: Option<bool>,
    #[serde(default)]
    pub discount: Option<f64>,
    #[serde(default)]
    pub initial_trust_belief: Option<Vec<f64>>,
    #[serde(default)]
    pub parameters: Option<ParameterSource>,
    #[serde(default)]
    pub objective: Option<Objective>,
    /// Use the trust-free behavior of the parameter file for the human.
    #[serde(default)]
    pub trust_free_human: Option<bool>,
}

impl TaskConfigFile {
    pub fn from_json(text: &str) -> Result<Self, TaskError> {
        let file: TaskConfigFile = serde_json::from_str(text).map_err(|e| TaskError::Config(e.to_string()))?;
        if let Some(v) = file.schema_version {
            if v != CONFIG_SCHEMA_VERSION {
                return Err(TaskError::Config(format!("unsupported schemaVersion {v}")));
            }
        }
        Ok(file)
    }

    /// Resolves parameter references relative to `base_dir`.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<(TaskConfig, ParameterFile), TaskError> {
        let params = match &self.parameters {
            None => reference_parameters(),
            Some(ParameterSource::Named(name)) if name == "reference" => reference_parameters(),
            Some(ParameterSource::Named(path)) => {
                let p = Path::new(path);
                let full = match base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.to_path_buf(),
                };
                ParameterFile::load(&full)?
            }
            Some(ParameterSource::Inline(file)) => {
                ParameterFile::from_json(&serde_json::to_string(file).expect("serializes"))?
            }
        };
        let mut config = match &self.preset {
            Some(name) => preset(name, &params)?,
            None => {
                let objects = self.objects.clone().ok_or_else(|| TaskError::Config("objects missing".into()))?;
                TaskConfig {
                    objects,
                    allow_intentional_fail: false,
                    discount: DEFAULT_DISCOUNT,
                    initial_trust_belief: Belief::uniform(TRUST_LEVELS),
                    dynamics: params.trust_dynamics()?,
                    human_model: params.behavior.clone(),
                    objective: Objective::Performance,
                }
            }
        };
        if let Some(objects) = &self.objects {
            config.objects = objects.clone();
        }
        if let Some(flag) = self.allow_intentional_fail {
            config.allow_intentional_fail = flag;
        }
        if let Some(d) = self.discount {
            config.discount = d;
        }
        if let Some(b) = &self.initial_trust_belief {
            config.initial_trust_belief = Belief::new(b.clone()).map_err(|e| TaskError::Config(e.to_string()))?;
        }
        if let Some(o) = self.objective {
            config.objective = o;
        }
        if self.trust_free_human == Some(true) {
            config.human_model = params
                .trust_free_behavior
                .clone()
                .ok_or_else(|| TaskError::Config("parameter file has no trustFreeBehavior".into()))?;
        }
        config.validate()?;
        Ok((config, params))
    }
}

/// Independent expected-reward check used by tests: E[reward] of one attempt
/// when the human's stay-put probability is `stay`.
pub fn expected_attempt_reward(object: &ObjectSpec, stay: f64, mode: ActionMode) -> f64 {
    outcome_branches(object, stay, mode).iter().map(|b| b.prob * object.reward_for(b.status)).sum()
}
