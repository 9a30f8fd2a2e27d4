//! Fitting trust dynamics and human behavior from interaction logs.
//!
//! Muir ratings stand in for the latent trust: each step's pre-decision
//! rating is the trust the human acted on, and consecutive ratings give the
//! transition pairs for the linear-Gaussian dynamics.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, rng_from_seed};
use crate::task::{ObjectSpec, RobotActionSpec};
use crate::trust::{
    sigmoid, stay_probability_from_belief, HumanAction, HumanBehaviorParams, LinearGaussian, ObjectCategory,
    OutcomeClass, TrustDynamicsParams, TrustLevel,
};

pub const SIGMA_FLOOR: f64 = 1e-3;
pub const DEFAULT_MUIR_NOISE: f64 = 0.3;
pub const MIN_TOTAL_PAIRS: usize = 10;
pub const L2_PENALTY: f64 = 1e-3;
pub const MAX_ITERATIONS: usize = 10_000;
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const MUIR_ITEMS: usize = 4;

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid log: {0}")]
    InvalidLog(String),
    #[error("only {found} transition pairs, need at least {needed}")]
    InsufficientData { found: usize, needed: usize },
    #[error("no decisions for {0}")]
    MissingCategory(ObjectCategory),
    #[error("no reward entry for {0}")]
    MissingReward(ObjectCategory),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub enum LogSource {
    #[default]
    Synthetic,
    Session,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct EpisodeMetadata {
    #[serde(default)]
    pub source: LogSource,
    /// Preset or config name the episode was played under.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    /// Number of objects in that config, checked against the step count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LogStep {
    pub robot_action: RobotActionSpec,
    pub human_action: HumanAction,
    pub outcome: OutcomeClass,
    /// Muir rating reported after the outcome.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_muir: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_muir_items: Option<Vec<f64>>,
}

/// One interaction episode: an initial rating followed by one record per
/// robot attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Episode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_muir: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_muir_items: Option<Vec<f64>>,
    pub steps: Vec<LogStep>,
    #[serde(default)]
    pub metadata: EpisodeMetadata,
}

impl Episode {
    pub fn validate(&self) -> Result<(), LearningError> {
        let check = |v: Option<f64>, what: &str| match v {
            Some(x) if !(1.0..=7.0).contains(&x) => {
                Err(LearningError::InvalidLog(format!("{what} rating {x} outside [1, 7]")))
            }
            _ => Ok(()),
        };
        let check_items = |items: &Option<Vec<f64>>, what: &str| match items {
            Some(items) if items.len() != MUIR_ITEMS => {
                Err(LearningError::InvalidLog(format!("{what} has {} Muir items", items.len())))
            }
            Some(items) if items.iter().any(|x| !(1.0..=7.0).contains(x)) => {
                Err(LearningError::InvalidLog(format!("{what} Muir item outside [1, 7]")))
            }
            _ => Ok(()),
        };
        check(self.initial_muir, "initial")?;
        check_items(&self.initial_muir_items, "initial report")?;
        for (t, s) in self.steps.iter().enumerate() {
            check(s.post_muir, &format!("step {t}"))?;
            check_items(&s.post_muir_items, &format!("step {t} report"))?;
            let intervened = s.outcome.event == crate::trust::OutcomeEvent::Intervened;
            if intervened != (s.human_action == HumanAction::Intervene) {
                return Err(LearningError::InvalidLog(format!("step {t}: outcome does not match the human action")));
            }
        }
        if let Some(n) = self.metadata.object_count {
            if n != self.steps.len() {
                return Err(LearningError::InvalidLog(format!(
                    "{} steps for a {n}-object task",
                    self.steps.len()
                )));
            }
        }
        Ok(())
    }

    /// Rating in force before step `t`.
    pub fn pre_muir(&self, t: usize) -> Option<f64> {
        if t == 0 {
            self.initial_muir
        } else {
            self.steps[t - 1].post_muir
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InteractionLog {
    pub episodes: Vec<Episode>,
}

impl InteractionLog {
    pub fn new(episodes: Vec<Episode>) -> Self {
        Self { episodes }
    }

    /// One JSON episode per non-empty line.
    pub fn from_jsonl(text: &str) -> Result<Self, LearningError> {
        let mut episodes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ep: Episode = serde_json::from_str(line)
                .map_err(|e| LearningError::Parse { line: i + 1, message: e.to_string() })?;
            ep.validate().map_err(|e| LearningError::Parse { line: i + 1, message: e.to_string() })?;
            episodes.push(ep);
        }
        Ok(Self { episodes })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ep in &self.episodes {
            out.push_str(&serde_json::to_string(ep).expect("episode serializes"));
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<(), LearningError> {
        self.episodes.iter().try_for_each(Episode::validate)
    }

    /// (pre rating, post rating, class) for every step with both ratings.
    pub fn transition_pairs(&self) -> Vec<(f64, f64, OutcomeClass)> {
        let mut out = Vec::new();
        for ep in &self.episodes {
            for (t, step) in ep.steps.iter().enumerate() {
                if let (Some(x), Some(y)) = (ep.pre_muir(t), step.post_muir) {
                    out.push((x, y, step.outcome));
                }
            }
        }
        out
    }

    pub fn decisions(&self) -> Vec<Decision> {
        let mut out = Vec::new();
        for ep in &self.episodes {
            for (t, step) in ep.steps.iter().enumerate() {
                out.push(Decision {
                    category: step.outcome.category,
                    stayed: step.human_action == HumanAction::StayPut,
                    trust: ep.pre_muir(t).map(TrustLevel::nearest),
                });
            }
        }
        out
    }
}

/// A single stay-put/intervene choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub category: ObjectCategory,
    pub stayed: bool,
    /// Pre-decision rating rounded to the nearest level.
    pub trust: Option<TrustLevel>,
}

/// (r^S, r^F) for the object category a decision was about.
pub type RewardTable = BTreeMap<ObjectCategory, (f64, f64)>;

/// First object of each category determines its rewards.
pub fn reward_table(objects: &[ObjectSpec]) -> RewardTable {
    let mut out = RewardTable::new();
    for o in objects {
        out.entry(o.category).or_insert((o.reward_success, o.reward_fail));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct Convergence {
    pub iterations: usize,
    pub residual: f64,
    /// Categories whose ascent hit the iteration cap; their estimates are the
    /// last iterate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unconverged: Vec<String>,
}

impl Convergence {
    pub fn converged(&self) -> bool {
        self.unconverged.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "camelCase")]
pub enum FittedParams {
    Dynamics(TrustDynamicsParams),
    Behavior(HumanBehaviorParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FitReport {
    pub params: FittedParams,
    pub log_likelihood: f64,
    pub per_class_counts: BTreeMap<String, usize>,
    pub convergence: Convergence,
    /// Classes too sparse to fit, left at identity dynamics.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fallback: Vec<String>,
}

impl FitReport {
    pub fn dynamics(&self) -> Option<&TrustDynamicsParams> {
        match &self.params {
            FittedParams::Dynamics(d) => Some(d),
            FittedParams::Behavior(_) => None,
        }
    }

    pub fn behavior(&self) -> Option<&HumanBehaviorParams> {
        match &self.params {
            FittedParams::Behavior(b) => Some(b),
            FittedParams::Dynamics(_) => None,
        }
    }
}

fn gaussian_log_density(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

struct ClassFit {
    params: LinearGaussian,
    log_likelihood: f64,
    fallback: bool,
}

fn ols(pairs: &[(f64, f64)]) -> ClassFit {
    let n = pairs.len();
    if n < 2 {
        return ClassFit { params: LinearGaussian::IDENTITY, log_likelihood: 0.0, fallback: true };
    }
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let (alpha, beta) = if sxx > 0.0 {
        let a = sxy / sxx;
        (a, my - a * mx)
    } else {
        (1.0, my - mx)
    };
    let ssr: f64 = pairs.iter().map(|p| (p.1 - alpha * p.0 - beta).powi(2)).sum();
    let sigma = if n > 2 { (ssr / (nf - 2.0)).sqrt().max(SIGMA_FLOOR) } else { SIGMA_FLOOR };
    let params = LinearGaussian { alpha, beta, sigma };
    let log_likelihood = pairs.iter().map(|p| gaussian_log_density(p.1, alpha * p.0 + beta, sigma)).sum();
    ClassFit { params, log_likelihood, fallback: false }
}

/// Observation noise of a single averaged rating from the spread of the
/// items within each report.
fn muir_noise(logs: &InteractionLog) -> f64 {
    let mut total = 0.0;
    let mut reports = 0usize;
    let mut add = |items: &Option<Vec<f64>>| {
        if let Some(items) = items {
            let n = items.len() as f64;
            let m = items.iter().sum::<f64>() / n;
            total += items.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
            reports += 1;
        }
    };
    for ep in &logs.episodes {
        add(&ep.initial_muir_items);
        for s in &ep.steps {
            add(&s.post_muir_items);
        }
    }
    if reports == 0 {
        DEFAULT_MUIR_NOISE
    } else {
        (total / reports as f64 / MUIR_ITEMS as f64).sqrt().max(SIGMA_FLOOR)
    }
}

/// Least-squares linear-Gaussian dynamics per outcome class.
pub fn fit_trust_dynamics(logs: &InteractionLog) -> Result<FitReport, LearningError> {
    logs.validate()?;
    let pairs = logs.transition_pairs();
    if pairs.len() < MIN_TOTAL_PAIRS {
        return Err(LearningError::InsufficientData { found: pairs.len(), needed: MIN_TOTAL_PAIRS });
    }
    let mut by_class: BTreeMap<OutcomeClass, Vec<(f64, f64)>> = OutcomeClass::all().map(|c| (c, Vec::new())).collect();
    for (x, y, c) in pairs {
        by_class.get_mut(&c).expect("all classes present").push((x, y));
    }
    let fits: Vec<(OutcomeClass, usize, ClassFit)> =
        by_class.par_iter().map(|(c, p)| (*c, p.len(), ols(p))).collect();
    let mut per_class = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let mut fallback = Vec::new();
    let mut ll = 0.0;
    for (c, n, fit) in fits {
        per_class.insert(c, fit.params);
        counts.insert(c.key(), n);
        if fit.fallback {
            fallback.push(c.key());
        }
        ll += fit.log_likelihood;
    }
    let params = TrustDynamicsParams { per_class, muir_noise: muir_noise(logs) };
    Ok(FitReport {
        params: FittedParams::Dynamics(params),
        log_likelihood: ll,
        per_class_counts: counts,
        convergence: Convergence::default(),
        fallback,
    })
}

fn bernoulli_log(p: f64, stayed: bool) -> f64 {
    if stayed {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

fn group_decisions<'a>(
    decisions: impl Iterator<Item = &'a Decision>,
) -> BTreeMap<ObjectCategory, Vec<Decision>> {
    let mut out: BTreeMap<ObjectCategory, Vec<Decision>> = BTreeMap::new();
    for d in decisions {
        out.entry(d.category).or_default().push(*d);
    }
    out
}

fn rewards_for(rewards: &RewardTable, c: ObjectCategory) -> Result<(f64, f64), LearningError> {
    rewards.get(&c).copied().ok_or(LearningError::MissingReward(c))
}

/// Log-likelihood of `decisions` under `params`, via the same stay-put rule
/// the planner uses.
pub fn decision_log_likelihood(
    params: &HumanBehaviorParams,
    decisions: &[Decision],
    rewards: &RewardTable,
) -> Result<f64, LearningError> {
    let mut ll = 0.0;
    for d in decisions {
        let (rs, rf) = rewards_for(rewards, d.category)?;
        let trust = d.trust.unwrap_or(TrustLevel::MIN);
        let b = crate::trust::success_belief(params, d.category, trust)
            .map_err(|e| LearningError::InvalidArgument(e.to_string()))?;
        ll += bernoulli_log(stay_probability_from_belief(b, rs, rf), d.stayed);
    }
    Ok(ll)
}

fn trust_free_fit(decisions: &[Decision], rewards: &RewardTable) -> Result<FitReport, LearningError> {
    let grouped = group_decisions(decisions.iter());
    let mut beliefs = Vec::new();
    let mut counts = BTreeMap::new();
    for c in ObjectCategory::ALL {
        let ds = grouped.get(&c).ok_or(LearningError::MissingCategory(c))?;
        let (rs, rf) = rewards_for(rewards, c)?;
        if rs <= rf {
            return Err(LearningError::InvalidArgument(format!("{c}: success reward must exceed failure reward")));
        }
        let stays = ds.iter().filter(|d| d.stayed).count() as f64;
        let p = (stays + 1.0) / (ds.len() as f64 + 2.0);
        let logit = (p / (1.0 - p)).ln();
        beliefs.push((c, ((logit - rf) / (rs - rf)).clamp(0.0, 1.0)));
        counts.insert(c.to_string(), ds.len());
    }
    let params = HumanBehaviorParams::trust_free(beliefs);
    let ll = decision_log_likelihood(&params, decisions, rewards)?;
    Ok(FitReport {
        params: FittedParams::Behavior(params),
        log_likelihood: ll,
        per_class_counts: counts,
        convergence: Convergence::default(),
        fallback: Vec::new(),
    })
}

/// Closed-form constant success belief per category from smoothed stay rates.
pub fn fit_trust_free(logs: &InteractionLog, rewards: &RewardTable) -> Result<FitReport, LearningError> {
    logs.validate()?;
    trust_free_fit(&logs.decisions(), rewards)
}

struct Objective<'a> {
    decisions: &'a [(f64, bool)],
    rs: f64,
    rf: f64,
}

impl Objective<'_> {
    /// Mean penalized log-likelihood and its gradient in (γ, η).
    fn eval(&self, gamma: f64, eta: f64) -> (f64, [f64; 2]) {
        let n = self.decisions.len() as f64;
        let span = self.rs - self.rf;
        let mut ll = 0.0;
        let mut g = [0.0; 2];
        for &(theta, stayed) in self.decisions {
            let b = sigmoid(gamma * theta + eta);
            let p = stay_probability_from_belief(b, self.rs, self.rf);
            ll += bernoulli_log(p, stayed);
            let y = if stayed { 1.0 } else { 0.0 };
            let d = (y - p) * span * b * (1.0 - b);
            g[0] += d * theta;
            g[1] += d;
        }
        let value = (ll - L2_PENALTY * (gamma * gamma + eta * eta)) / n;
        g[0] = (g[0] - 2.0 * L2_PENALTY * gamma) / n;
        g[1] = (g[1] - 2.0 * L2_PENALTY * eta) / n;
        (value, g)
    }
}

struct AscentResult {
    gamma: f64,
    eta: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
}

/// Ascent runs in standardized coordinates `(u, v)` with
/// `γ θ + η = u (θ − m) / s + v`, which decorrelates the two coefficients.
/// Convergence is judged on the gradient in `(γ, η)`.
fn gradient_ascent(obj: &Objective<'_>) -> AscentResult {
    let n = obj.decisions.len() as f64;
    let m = obj.decisions.iter().map(|d| d.0).sum::<f64>() / n;
    let s = match (obj.decisions.iter().map(|d| (d.0 - m).powi(2)).sum::<f64>() / n).sqrt() {
        s if s > 1e-3 => s,
        _ => 1.0,
    };
    let to_original = |u: f64, v: f64| (u / s, v - u * m / s);
    let eval = |u: f64, v: f64| {
        let (gamma, eta) = to_original(u, v);
        let (value, g) = obj.eval(gamma, eta);
        (value, [g[0] / s - g[1] * m / s, g[1]], g[0].hypot(g[1]))
    };
    let (mut u, mut v) = (0.0, 0.0);
    let (mut value, mut grad, mut norm) = eval(u, v);
    let mut step = 1.0;
    let mut iterations = 0;
    let finish = |u, v, iterations, residual, converged| {
        let (gamma, eta) = to_original(u, v);
        AscentResult { gamma, eta, iterations, residual, converged }
    };
    loop {
        if norm < GRADIENT_TOLERANCE {
            return finish(u, v, iterations, norm, true);
        }
        if iterations >= MAX_ITERATIONS {
            return finish(u, v, iterations, norm, false);
        }
        iterations += 1;
        loop {
            let (u2, v2) = (u + step * grad[0], v + step * grad[1]);
            let (val2, gr2, n2) = eval(u2, v2);
            if val2 > value {
                (u, v, value, grad, norm) = (u2, v2, val2, gr2, n2);
                step *= 1.5;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                // No ascent direction left at machine precision.
                return finish(u, v, iterations, norm, norm < 1e-4);
            }
        }
    }
}

fn trust_based_fit(decisions: &[Decision], rewards: &RewardTable) -> Result<FitReport, LearningError> {
    let grouped = group_decisions(decisions.iter().filter(|d| d.trust.is_some()));
    let mut jobs = Vec::new();
    for c in ObjectCategory::ALL {
        let ds = grouped.get(&c).ok_or(LearningError::MissingCategory(c))?;
        let (rs, rf) = rewards_for(rewards, c)?;
        let pts: Vec<(f64, bool)> = ds.iter().map(|d| (d.trust.expect("filtered").as_f64(), d.stayed)).collect();
        jobs.push((c, rs, rf, pts));
    }
    let results: Vec<(ObjectCategory, usize, AscentResult)> = jobs
        .par_iter()
        .map(|(c, rs, rf, pts)| (*c, pts.len(), gradient_ascent(&Objective { decisions: pts, rs: *rs, rf: *rf })))
        .collect();
    let mut coeffs = Vec::new();
    let mut counts = BTreeMap::new();
    let mut convergence = Convergence::default();
    for (c, n, r) in results {
        if !r.converged {
            convergence.unconverged.push(c.to_string());
        }
        coeffs.push((c, r.gamma, r.eta));
        counts.insert(c.to_string(), n);
        convergence.iterations = convergence.iterations.max(r.iterations);
        convergence.residual = convergence.residual.max(r.residual);
    }
    let params = HumanBehaviorParams::trust_based(coeffs);
    let used: Vec<Decision> = decisions.iter().filter(|d| d.trust.is_some()).copied().collect();
    let ll = decision_log_likelihood(&params, &used, rewards)?;
    Ok(FitReport { params: FittedParams::Behavior(params), log_likelihood: ll, per_class_counts: counts, convergence, fallback: Vec::new() })
}

/// Penalized maximum likelihood for `b_j(θ) = S(γ_j θ + η_j)`.
pub fn fit_trust_based(logs: &InteractionLog, rewards: &RewardTable) -> Result<FitReport, LearningError> {
    logs.validate()?;
    trust_based_fit(&logs.decisions(), rewards)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelComparison {
    pub ll_trust_based: f64,
    pub ll_trust_free: f64,
    pub decisions: usize,
    /// Whether the likelihoods were computed on episodes held out of fitting.
    pub held_out: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompareMode {
    InSample,
    /// Fit on a random share of episodes, score on the rest.
    HeldOut { test_fraction: f64, seed: u64 },
}

/// Total log-likelihood of both behavior models on the decisions that carry
/// a pre-decision rating.
pub fn compare_models(logs: &InteractionLog, rewards: &RewardTable) -> Result<ModelComparison, LearningError> {
    compare_models_with(logs, rewards, CompareMode::InSample)
}

pub fn compare_models_with(
    logs: &InteractionLog,
    rewards: &RewardTable,
    mode: CompareMode,
) -> Result<ModelComparison, LearningError> {
    logs.validate()?;
    let rated = |log: &InteractionLog| -> Vec<Decision> { log.decisions().into_iter().filter(|d| d.trust.is_some()).collect() };
    match mode {
        CompareMode::InSample => {
            let ds = rated(logs);
            let based = trust_based_fit(&ds, rewards)?;
            let free = trust_free_fit(&ds, rewards)?;
            Ok(ModelComparison {
                ll_trust_based: based.log_likelihood,
                ll_trust_free: free.log_likelihood,
                decisions: ds.len(),
                held_out: false,
            })
        }
        CompareMode::HeldOut { test_fraction, seed } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(LearningError::InvalidArgument(format!("test fraction {test_fraction} outside (0, 1)")));
            }
            let mut train = InteractionLog::default();
            let mut test = InteractionLog::default();
            for (i, ep) in logs.episodes.iter().enumerate() {
                let mut rng = rng_from_seed(derive_seed(seed, i as u64));
                if rng.random::<f64>() < test_fraction {
                    test.episodes.push(ep.clone());
                } else {
                    train.episodes.push(ep.clone());
                }
            }
            let (train_ds, test_ds) = (rated(&train), rated(&test));
            let based = trust_based_fit(&train_ds, rewards)?;
            let free = trust_free_fit(&train_ds, rewards)?;
            let b = based.behavior().expect("behavior fit");
            let f = free.behavior().expect("behavior fit");
            Ok(ModelComparison {
                ll_trust_based: decision_log_likelihood(b, &test_ds, rewards)?,
                ll_trust_free: decision_log_likelihood(f, &test_ds, rewards)?,
                decisions: test_ds.len(),
                held_out: true,
            })
        }
    }
}

/// What the sampler draws.
#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorTarget {
    /// (α, β, log σ) for every outcome class.
    Dynamics,
    /// (γ, η) for every object category.
    Behavior(RewardTable),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetropolisOptions {
    pub burn_in: usize,
    pub prior_sd: f64,
    pub initial_step: f64,
}

impl Default for MetropolisOptions {
    fn default() -> Self {
        Self { burn_in: 2_000, prior_sd: 10.0, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    /// One row per retained iteration.
    pub samples: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Share of accepted proposals after burn-in, per parameter.
    pub acceptance: Vec<f64>,
    pub acceptance_rate: f64,
    pub poor_mixing: bool,
}

/// A factor of the log posterior that depends on a few coordinates.
struct Block {
    coords: Vec<usize>,
    loglik: Box<dyn Fn(&[f64]) -> f64 + Sync>,
}

/// Component-wise random-walk Metropolis with Gaussian(0, prior_sd) priors
/// on unconstrained parameters. Proposal scales adapt during burn-in only.
pub fn metropolis_posterior(
    logs: &InteractionLog,
    target: &PosteriorTarget,
    samples: usize,
    seed: u64,
    options: MetropolisOptions,
) -> Result<PosteriorSamples, LearningError> {
    logs.validate()?;
    if samples == 0 {
        return Err(LearningError::InvalidArgument("samples must be positive".into()));
    }
    let (names, init, blocks) = match target {
        PosteriorTarget::Dynamics => dynamics_blocks(logs),
        PosteriorTarget::Behavior(rewards) => behavior_blocks(logs, rewards)?,
    };
    let dim = names.len();
    let mut owner = vec![0usize; dim];
    for (k, b) in blocks.iter().enumerate() {
        for &c in &b.coords {
            owner[c] = k;
        }
    }
    let prior = |x: f64| -0.5 * (x / options.prior_sd).powi(2);
    let mut x = init;
    let mut block_ll: Vec<f64> = blocks.iter().map(|b| (b.loglik)(&x)).collect();
    let mut scale = vec![options.initial_step; dim];
    let mut rng = rng_from_seed(seed);
    let mut accepted = vec![0usize; dim];
    let mut window = vec![0usize; dim];
    let mut out = Vec::with_capacity(samples);
    let total = options.burn_in + samples;
    for it in 0..total {
        for i in 0..dim {
            let old = x[i];
            let z: f64 = standard_normal(&mut rng);
            x[i] = old + scale[i] * z;
            let k = owner[i];
            let new_ll = (blocks[k].loglik)(&x);
            let log_ratio = new_ll - block_ll[k] + prior(x[i]) - prior(old);
            if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                block_ll[k] = new_ll;
                window[i] += 1;
                if it >= options.burn_in {
                    accepted[i] += 1;
                }
            } else {
                x[i] = old;
            }
        }
        if it < options.burn_in && (it + 1) % 50 == 0 {
            for i in 0..dim {
                let rate = window[i] as f64 / 50.0;
                if rate < 0.25 {
                    scale[i] *= 0.7;
                } else if rate > 0.45 {
                    scale[i] *= 1.4;
                }
                window[i] = 0;
            }
        }
        if it >= options.burn_in {
            out.push(x.clone());
        }
    }
    let n = out.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|i| out.iter().map(|r| r[i]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..dim)
        .map(|i| (out.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt())
        .collect();
    let acceptance: Vec<f64> = accepted.iter().map(|a| *a as f64 / n).collect();
    let acceptance_rate = acceptance.iter().sum::<f64>() / dim as f64;
    let poor_mixing = acceptance.iter().any(|a| !(0.1..=0.6).contains(a));
    Ok(PosteriorSamples { names, samples: out, mean, sd, acceptance, acceptance_rate, poor_mixing })
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

type Blocks = (Vec<String>, Vec<f64>, Vec<Block>);

fn dynamics_blocks(logs: &InteractionLog) -> Blocks {
    let mut by_class: BTreeMap<OutcomeClass, Vec<(f64, f64)>> = OutcomeClass::all().map(|c| (c, Vec::new())).collect();
    for (x, y, c) in logs.transition_pairs() {
        by_class.get_mut(&c).expect("all classes").push((x, y));
    }
    let mut names = Vec::new();
    let mut init = Vec::new();
    let mut blocks = Vec::new();
    for (i, (c, pairs)) in by_class.into_iter().enumerate() {
        for p in ["alpha", "beta", "logSigma"] {
            names.push(format!("{}.{p}", c.key()));
        }
        let start = if pairs.len() >= 3 { ols(&pairs).params } else { LinearGaussian { alpha: 1.0, beta: 0.0, sigma: 1.0 } };
        init.extend([start.alpha, start.beta, start.sigma.ln()]);
        let base = 3 * i;
        blocks.push(Block {
            coords: vec![base, base + 1, base + 2],
            loglik: Box::new(move |x: &[f64]| {
                let (a, b, s) = (x[base], x[base + 1], x[base + 2].exp());
                pairs.iter().map(|p| gaussian_log_density(p.1, a * p.0 + b, s)).sum()
            }),
        });
    }
    (names, init, blocks)
}

fn behavior_blocks(logs: &InteractionLog, rewards: &RewardTable) -> Result<Blocks, LearningError> {
    let grouped = group_decisions(logs.decisions().iter().filter(|d| d.trust.is_some()));
    let mut names = Vec::new();
    let mut init = Vec::new();
    let mut blocks = Vec::new();
    for (i, c) in ObjectCategory::ALL.into_iter().enumerate() {
        names.push(format!("{c}.gamma"));
        names.push(format!("{c}.eta"));
        init.extend([0.0, 0.0]);
        let pts: Vec<(f64, bool)> = grouped
            .get(&c)
            .map(|ds| ds.iter().map(|d| (d.trust.expect("filtered").as_f64(), d.stayed)).collect())
            .unwrap_or_default();
        let (rs, rf) = if pts.is_empty() { (1.0, 0.0) } else { rewards_for(rewards, c)? };
        let base = 2 * i;
        blocks.push(Block {
            coords: vec![base, base + 1],
            loglik: Box::new(move |x: &[f64]| {
                pts.iter()
                    .map(|&(theta, stayed)| {
                        let b = sigmoid(x[base] * theta + x[base + 1]);
                        bernoulli_log(stay_probability_from_belief(b, rs, rf), stayed)
                    })
                    .sum()
            }),
        });
    }
    Ok((names, init, blocks))
}
