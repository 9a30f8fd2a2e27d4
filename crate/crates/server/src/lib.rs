//! HTTP+JSON service hosting live episodes: a human plays the collaborator
//! against a solved robot policy and every session yields an interaction log.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};
use tower_http::cors::CorsLayer;
use trust_pomdp::learning::{Episode, EpisodeMetadata, LogSource, LogStep, MUIR_ITEMS};
use trust_pomdp::pomdp::{belief_update, exact_plan, policy_action, Belief, ExactOptions, Policy, PomdpError};
use trust_pomdp::rng::{rng_from_seed, SimRng};
use trust_pomdp::task::{
    build_model, build_trust_max_model, preset, resolve_outcome, ActionMode, ObjectStatus, Objective,
    ParameterFile, TaskConfig, TaskError, TaskModel, WorldState, PRESETS,
};
use trust_pomdp::trust::{HumanAction, ObjectCategory, OutcomeClass};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{what} {name:?} not found")]
    NotFound { what: &'static str, name: String },
    #[error("{message}")]
    Conflict { code: &'static str, message: String },
    #[error("{message}")]
    Unprocessable { code: &'static str, message: String },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Pomdp(#[from] PomdpError),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound { .. } => StatusCode::NOT_FOUND,
            ApiError::Conflict { .. } => StatusCode::CONFLICT,
            ApiError::Unprocessable { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Task(_) | ApiError::Pomdp(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ApiError::NotFound { what: "config", .. } => "CONFIG_NOT_FOUND",
            ApiError::NotFound { what: "policy", .. } => "POLICY_NOT_FOUND",
            ApiError::NotFound { .. } => "SESSION_NOT_FOUND",
            ApiError::Conflict { code, .. } | ApiError::Unprocessable { code, .. } => code,
            ApiError::Task(_) | ApiError::Pomdp(_) => "INTERNAL",
        }
    }

    fn wrong_phase(phase: Phase) -> Self {
        ApiError::Conflict { code: "WRONG_PHASE", message: format!("session is in phase {phase:?}") }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.code(), message: self.to_string() };
        (self.status(), Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::Unprocessable { code: "INVALID_REQUEST", message: e.body_text() }
    }
}

/// A named task configuration with its model built once.
pub struct ConfigEntry {
    pub config: TaskConfig,
    pub model: TaskModel,
    /// Digests of every model a compatible policy may have been solved on.
    digests: Vec<String>,
}

/// Configs and policies that sessions may reference by name.
#[derive(Default)]
pub struct Registry {
    configs: BTreeMap<String, Arc<ConfigEntry>>,
    policies: BTreeMap<String, Arc<Policy>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Both presets, each with an exact performance policy under the same name.
    pub fn with_presets(params: &ParameterFile) -> Result<Self, ApiError> {
        let mut registry = Self::new();
        for name in PRESETS {
            registry.add_config(name, preset(name, params)?)?;
            let model = &registry.configs[name].model;
            let mut policy = exact_plan(model, ExactOptions::default())?.policy;
            policy.metadata.label = Some(name.to_string());
            registry.add_policy(name, policy);
        }
        Ok(registry)
    }

    pub fn add_config(&mut self, name: &str, config: TaskConfig) -> Result<(), ApiError> {
        let model = build_model(&config)?;
        let performance = build_model(&config.clone().with_objective(Objective::Performance))?;
        let digests = vec![performance.digest(), build_trust_max_model(&config)?.digest()];
        self.configs.insert(name.to_string(), Arc::new(ConfigEntry { config, model, digests }));
        Ok(())
    }

    pub fn add_policy(&mut self, name: &str, policy: Policy) {
        self.policies.insert(name.to_string(), Arc::new(policy));
    }

    pub fn config_names(&self) -> impl Iterator<Item = &str> {
        self.configs.keys().map(String::as_str)
    }

    pub fn policy_names(&self) -> impl Iterator<Item = &str> {
        self.policies.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    AwaitingHumanAction,
    ResolvingOutcome,
    Completed,
}

struct Session {
    id: String,
    config_name: String,
    policy_name: String,
    entry: Arc<ConfigEntry>,
    policy: Arc<Policy>,
    phase: Phase,
    visible: usize,
    belief: Belief,
    pending: Option<usize>,
    episode: Episode,
    steps: Vec<StepView>,
    rng: SimRng,
    seed: u64,
    collect_muir: bool,
    total_reward: f64,
}

impl Session {
    fn world(&self) -> &WorldState {
        self.entry.model.world(self.visible)
    }

    fn intent(&self) -> Option<Intent> {
        self.pending.map(|a| Intent::new(&self.entry, a))
    }

    /// Whether the current step slot already holds a trust report.
    fn report_taken(&self) -> bool {
        match self.episode.steps.last() {
            None => self.episode.initial_muir.is_some(),
            Some(step) => step.post_muir.is_some(),
        }
    }

    fn totals(&self) -> Option<Totals> {
        (self.phase == Phase::Completed).then(|| Totals {
            total_reward: self.total_reward,
            steps: self.steps.len(),
            interventions: self.steps.iter().filter(|s| s.human_action == HumanAction::Intervene).count(),
        })
    }

    fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            config: self.config_name.clone(),
            policy: self.policy_name.clone(),
            seed: self.seed,
            phase: self.phase,
            objects: self.entry.config.objects.iter().map(|o| o.category).collect(),
            world: self.world().clone(),
            belief: self.belief.clone(),
            expected_trust: expected_trust(&self.belief),
            robot_intent: self.intent(),
            running_reward: self.total_reward,
            collect_muir: self.collect_muir,
            accepts_trust_report: self.collect_muir && self.phase != Phase::ResolvingOutcome && !self.report_taken(),
            steps: self.steps.clone(),
            totals: self.totals(),
        }
    }
}

fn expected_trust(b: &Belief) -> f64 {
    b.expect(|h| (h + 1) as f64)
}

/// The robot's intended next attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Intent {
    pub action: usize,
    pub name: String,
    pub object: usize,
    pub category: ObjectCategory,
    pub mode: ActionMode,
}

impl Intent {
    fn new(entry: &ConfigEntry, a: usize) -> Self {
        let spec = entry.model.actions[a];
        Intent {
            action: a,
            name: entry.model.action_name(a).to_string(),
            object: spec.target_object,
            category: entry.config.objects[spec.target_object].category,
            mode: spec.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Totals {
    pub total_reward: f64,
    pub steps: usize,
    pub interventions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepView {
    pub action: usize,
    pub object: usize,
    pub human_action: HumanAction,
    pub status: ObjectStatus,
    pub outcome: OutcomeClass,
    pub reward: f64,
    pub belief: Belief,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionView {
    pub id: String,
    pub config: String,
    pub policy: String,
    pub seed: u64,
    pub phase: Phase,
    pub objects: Vec<ObjectCategory>,
    pub world: WorldState,
    pub belief: Belief,
    pub expected_trust: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robot_intent: Option<Intent>,
    pub running_reward: f64,
    pub collect_muir: bool,
    pub accepts_trust_report: bool,
    pub steps: Vec<StepView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub totals: Option<Totals>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepResult {
    pub phase: Phase,
    pub object: usize,
    pub status: ObjectStatus,
    pub outcome: OutcomeClass,
    pub reward: f64,
    pub belief: Belief,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_intent: Option<Intent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub totals: Option<Totals>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrustReportAck {
    pub rating: f64,
    /// Steps completed when the report was taken; 0 is the initial rating.
    pub step: usize,
    pub belief: Belief,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CreateSession {
    pub config: String,
    pub policy: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub collect_muir: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanActionRequest {
    pub action: HumanAction,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustReport {
    pub items: Vec<f64>,
}

type SessionHandle = Arc<Mutex<Session>>;

struct Inner {
    registry: Registry,
    sessions: RwLock<HashMap<String, SessionHandle>>,
    log_path: Option<PathBuf>,
    log_lock: Mutex<()>,
}

/// Shared server state. Cloning is cheap.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(registry: Registry) -> Self {
        Self::with_log(registry, None)
    }

    /// Completed episodes are appended as JSONL lines to `log_path`. Sessions
    /// collecting ratings are written once the final rating arrives.
    pub fn with_log(registry: Registry, log_path: Option<PathBuf>) -> Self {
        AppState(Arc::new(Inner {
            registry,
            sessions: RwLock::new(HashMap::new()),
            log_path,
            log_lock: Mutex::new(()),
        }))
    }

    async fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.0
            .sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound { what: "session", name: id.to_string() })
    }

    async fn persist(&self, episode: &Episode) -> Result<(), ApiError> {
        let Some(path) = &self.0.log_path else { return Ok(()) };
        let line = serde_json::to_string(episode).expect("episode serializes");
        let _guard = self.0.log_lock.lock().await;
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(TaskError::Io)?;
        writeln!(file, "{line}").map_err(TaskError::Io)?;
        Ok(())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_state))
        .route("/sessions/{id}/human-action", post(submit_human_action))
        .route("/sessions/{id}/trust-report", post(submit_trust_report))
        .route("/sessions/{id}/history", get(get_history))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves the API on `listener` until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let Json(req) = body?;
    let registry = &state.0.registry;
    let entry = registry
        .configs
        .get(&req.config)
        .cloned()
        .ok_or_else(|| ApiError::NotFound { what: "config", name: req.config.clone() })?;
    let policy = registry
        .policies
        .get(&req.policy)
        .cloned()
        .ok_or_else(|| ApiError::NotFound { what: "policy", name: req.policy.clone() })?;
    if policy.hidden_count() != entry.model.hidden_count() || !entry.digests.contains(&policy.metadata.model_digest) {
        return Err(ApiError::Conflict {
            code: "POLICY_MISMATCH",
            message: format!("policy {:?} was not solved for config {:?}", req.policy, req.config),
        });
    }
    let visible = entry.model.initial_visible();
    let belief = entry.config.initial_trust_belief.clone();
    let pending = Some(policy_action(&policy, visible, &belief)?);
    let id = uuid::Uuid::new_v4().to_string();
    let session = Session {
        id: id.clone(),
        config_name: req.config.clone(),
        policy_name: req.policy,
        episode: Episode {
            initial_muir: None,
            initial_muir_items: None,
            steps: Vec::new(),
            metadata: EpisodeMetadata {
                source: LogSource::Session,
                config: Some(req.config),
                object_count: Some(entry.config.objects.len()),
                seed: Some(req.seed),
            },
        },
        entry,
        policy,
        phase: Phase::AwaitingHumanAction,
        visible,
        belief,
        pending,
        steps: Vec::new(),
        rng: rng_from_seed(req.seed),
        seed: req.seed,
        collect_muir: req.collect_muir,
        total_reward: 0.0,
    };
    let view = session.view();
    state.0.sessions.write().await.insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_state(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let handle = state.session(&id).await?;
    let session = handle.lock().await;
    Ok(Json(session.view()))
}

async fn get_history(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Episode>, ApiError> {
    let handle = state.session(&id).await?;
    let session = handle.lock().await;
    Ok(Json(session.episode.clone()))
}

async fn submit_human_action(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<HumanActionRequest>, JsonRejection>,
) -> Result<Json<StepResult>, ApiError> {
    let handle = state.session(&id).await?;
    let Json(req) = body?;
    let mut session = handle.lock().await;
    if session.phase != Phase::AwaitingHumanAction {
        return Err(ApiError::wrong_phase(session.phase));
    }
    session.phase = Phase::ResolvingOutcome;
    let result = resolve(&mut session, req.action);
    if result.is_err() {
        session.phase = Phase::AwaitingHumanAction;
    }
    let result = result?;
    if session.phase == Phase::Completed && !session.collect_muir {
        state.persist(&session.episode).await?;
    }
    Ok(Json(result))
}

fn resolve(session: &mut Session, human: HumanAction) -> Result<StepResult, ApiError> {
    let entry = session.entry.clone();
    let a = session.pending.expect("intent pending while awaiting an action");
    let spec = entry.model.actions[a];
    let world = session.world().clone();
    let (next_world, outcome, reward) = resolve_outcome(&entry.config, &world, spec, human, &mut session.rng)?;
    let next = entry.model.state_index(&next_world).ok_or(TaskError::UnknownWorldState)?;
    let belief = belief_update(&entry.model, &session.belief, session.visible, a, next)?;
    let pending = if entry.model.is_terminal(next) { None } else { Some(policy_action(&session.policy, next, &belief)?) };

    let status = next_world.statuses[spec.target_object];
    session.visible = next;
    session.belief = belief.clone();
    session.pending = pending;
    session.total_reward += reward;
    session.episode.steps.push(LogStep {
        robot_action: spec,
        human_action: human,
        outcome,
        post_muir: None,
        post_muir_items: None,
    });
    session.steps.push(StepView {
        action: a,
        object: spec.target_object,
        human_action: human,
        status,
        outcome,
        reward,
        belief: belief.clone(),
    });
    session.phase = if pending.is_some() { Phase::AwaitingHumanAction } else { Phase::Completed };
    Ok(StepResult {
        phase: session.phase,
        object: spec.target_object,
        status,
        outcome,
        reward,
        belief,
        next_intent: session.intent(),
        totals: session.totals(),
    })
}

async fn submit_trust_report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<TrustReport>, JsonRejection>,
) -> Result<Json<TrustReportAck>, ApiError> {
    let handle = state.session(&id).await?;
    let Json(report) = body?;
    if report.items.len() != MUIR_ITEMS || !report.items.iter().all(|x| (1.0..=7.0).contains(x)) {
        return Err(ApiError::Unprocessable {
            code: "INVALID_REPORT",
            message: format!("a trust report needs {MUIR_ITEMS} item scores in [1, 7]"),
        });
    }
    let mut session = handle.lock().await;
    if !session.collect_muir {
        return Err(ApiError::Conflict {
            code: "MUIR_DISABLED",
            message: "this session does not collect trust reports".into(),
        });
    }
    if session.phase == Phase::ResolvingOutcome {
        return Err(ApiError::wrong_phase(session.phase));
    }
    if session.report_taken() {
        return Err(ApiError::Conflict {
            code: "DUPLICATE_REPORT",
            message: "a trust report was already stored for this step".into(),
        });
    }
    let rating = report.items.iter().sum::<f64>() / MUIR_ITEMS as f64;
    let step = session.episode.steps.len();
    match session.episode.steps.last_mut() {
        None => {
            session.episode.initial_muir = Some(rating);
            session.episode.initial_muir_items = Some(report.items);
        }
        Some(last) => {
            last.post_muir = Some(rating);
            last.post_muir_items = Some(report.items);
        }
    }
    if session.phase == Phase::Completed {
        state.persist(&session.episode).await?;
    }
    Ok(Json(TrustReportAck { rating, step, belief: session.belief.clone() }))
}
