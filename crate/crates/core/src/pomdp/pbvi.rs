//! Point-based value iteration with α-vector backups.
//!
//! Each visible state owns a set of α-vectors over the hidden states. Belief
//! points are collected either exhaustively (breadth-first over the reachable
//! belief tree, truncated at the budget) or by bound-guided forward trials
//! between a QMDP upper bound and the α-vector lower bound. Backups are
//! Jacobi sweeps, so the result does not depend on how many worker threads
//! rayon uses.

use std::collections::{HashSet, VecDeque};

use rayon::prelude::*;

use super::belief::{belief_update, Belief, BeliefKey};
use super::model::{Horizon, MixedObservabilityModel};
use super::policy::{AlphaVector, Policy, PolicyMetadata};
use super::{PomdpError, TIE_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeliefSampling {
    Exhaustive,
    BoundGuided,
}

#[derive(Debug, Clone, Copy)]
pub struct PbviOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub belief_budget: usize,
    pub sampling: BeliefSampling,
}

impl Default for PbviOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            max_iterations: 1000,
            belief_budget: 10_000,
            sampling: BeliefSampling::Exhaustive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveStatus {
    Converged,
    /// Iteration cap reached; the policy is still usable.
    NonConvergence { residual: f64 },
}

#[derive(Debug, Clone)]
pub struct PbviReport {
    pub policy: Policy,
    /// Lower-bound value at the initial belief.
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub belief_points: usize,
    pub status: SolveStatus,
}

struct SuccessorBlock {
    next: usize,
    /// Row-major `[h][h']` transition mass into `next`.
    matrix: Vec<f64>,
}

struct ActionBlock {
    action: usize,
    reward: Vec<f64>,
    successors: Vec<SuccessorBlock>,
}

struct Prepared<'m> {
    model: &'m MixedObservabilityModel,
    blocks: Vec<Vec<ActionBlock>>,
    order: Option<Vec<usize>>,
}

impl<'m> Prepared<'m> {
    fn new(model: &'m MixedObservabilityModel) -> Self {
        let nh = model.hidden_count();
        let blocks = (0..model.visible_count())
            .map(|v| {
                let mut actions = model.enabled_actions(v).to_vec();
                actions.sort_unstable();
                actions
                    .into_iter()
                    .map(|a| {
                        let mut reward = vec![0.0; nh];
                        let mut successors: Vec<SuccessorBlock> = Vec::new();
                        for next in model.visible_successors(v, a) {
                            successors.push(SuccessorBlock { next, matrix: vec![0.0; nh * nh] });
                        }
                        for h in 0..nh {
                            for t in model.kernel(v, h, a) {
                                reward[h] += t.prob * t.reward;
                                let s = successors
                                    .iter_mut()
                                    .find(|s| s.next == t.next_visible)
                                    .expect("successor listed");
                                s.matrix[h * nh + t.next_hidden] += t.prob;
                            }
                        }
                        ActionBlock { action: a, reward, successors }
                    })
                    .collect()
            })
            .collect();
        Self { model, blocks, order: model.reverse_topological_order() }
    }

    fn nh(&self) -> usize {
        self.model.hidden_count()
    }

    /// Point-based backup of (v, b) against the current α-sets.
    fn backup(&self, v: usize, b: &[f64], sets: &[Vec<AlphaVector>]) -> (AlphaVector, f64) {
        let nh = self.nh();
        let gamma = self.model.discount();
        let mut best: Option<(AlphaVector, f64)> = None;
        let mut projected = vec![0.0; nh];
        for block in &self.blocks[v] {
            let mut alpha = block.reward.clone();
            for s in &block.successors {
                let set = &sets[s.next];
                if set.is_empty() {
                    continue;
                }
                for hp in 0..nh {
                    projected[hp] = (0..nh).map(|h| b[h] * s.matrix[h * nh + hp]).sum();
                }
                let mut chosen = &set[0];
                let mut chosen_value = f64::NEG_INFINITY;
                for candidate in set {
                    let value: f64 = projected.iter().zip(&candidate.values).map(|(p, a)| p * a).sum();
                    if value > chosen_value {
                        chosen = candidate;
                        chosen_value = value;
                    }
                }
                for h in 0..nh {
                    let row = &s.matrix[h * nh..(h + 1) * nh];
                    let future: f64 = row.iter().zip(&chosen.values).map(|(m, a)| m * a).sum();
                    alpha[h] += gamma * future;
                }
            }
            let value: f64 = b.iter().zip(&alpha).map(|(w, a)| w * a).sum();
            let better = match &best {
                None => true,
                Some((_, bv)) => value > bv + TIE_EPSILON,
            };
            if better {
                best = Some((AlphaVector { action: block.action, values: alpha }, value));
            }
        }
        best.expect("backup on a nonterminal state")
    }

    /// Valid lower bound: for each action, act once and then follow a blind
    /// policy. Acyclic models are evaluated exactly backwards; cyclic models
    /// fall back to the constant bound `R_min / (1 - γ)`.
    fn initial_sets(&self) -> Vec<Vec<AlphaVector>> {
        let model = self.model;
        let nh = self.nh();
        let nv = model.visible_count();
        let mut sets: Vec<Vec<AlphaVector>> = vec![Vec::new(); nv];
        match &self.order {
            Some(order) => {
                let mut blind: Vec<Vec<f64>> = vec![vec![0.0; nh]; nv];
                for &v in order {
                    if model.is_terminal(v) {
                        continue;
                    }
                    let mut best_mean = f64::NEG_INFINITY;
                    for block in &self.blocks[v] {
                        let mut alpha = block.reward.clone();
                        for s in &block.successors {
                            for h in 0..nh {
                                let future: f64 = (0..nh)
                                    .map(|hp| s.matrix[h * nh + hp] * blind[s.next][hp])
                                    .sum();
                                alpha[h] += model.discount() * future;
                            }
                        }
                        let mean = alpha.iter().sum::<f64>() / nh as f64;
                        if mean > best_mean + TIE_EPSILON {
                            best_mean = mean;
                            blind[v] = alpha.clone();
                        }
                        sets[v].push(AlphaVector { action: block.action, values: alpha });
                    }
                }
            }
            None => {
                let (lo, _) = model.reward_range();
                let bound = lo.min(0.0) / (1.0 - model.discount());
                for v in 0..nv {
                    if let Some(block) = self.blocks[v].first() {
                        sets[v].push(AlphaVector { action: block.action, values: vec![bound; nh] });
                    }
                }
            }
        }
        sets
    }

    /// Fully observable upper bound U(v, h).
    fn upper_bound(&self) -> Vec<Vec<f64>> {
        let model = self.model;
        let nh = self.nh();
        let nv = model.visible_count();
        let mut upper = vec![vec![0.0; nh]; nv];
        let sweep = |upper: &mut Vec<Vec<f64>>, v: usize| -> f64 {
            let mut change: f64 = 0.0;
            if model.is_terminal(v) {
                return 0.0;
            }
            for h in 0..nh {
                let mut best = f64::NEG_INFINITY;
                for &a in model.enabled_actions(v) {
                    let q: f64 = model
                        .kernel(v, h, a)
                        .iter()
                        .map(|t| t.prob * (t.reward + model.discount() * upper[t.next_visible][t.next_hidden]))
                        .sum();
                    best = best.max(q);
                }
                change = change.max((best - upper[v][h]).abs());
                upper[v][h] = best;
            }
            change
        };
        match &self.order {
            Some(order) => {
                for &v in order {
                    sweep(&mut upper, v);
                }
            }
            None => {
                let (_, hi) = model.reward_range();
                let start = hi.max(0.0) / (1.0 - model.discount());
                for (v, row) in upper.iter_mut().enumerate() {
                    if !model.is_terminal(v) {
                        row.iter_mut().for_each(|x| *x = start);
                    }
                }
                for _ in 0..100_000 {
                    let mut change: f64 = 0.0;
                    for v in 0..nv {
                        change = change.max(sweep(&mut upper, v));
                    }
                    if change < 1e-10 {
                        break;
                    }
                }
            }
        }
        upper
    }
}

fn lower_value(sets: &[Vec<AlphaVector>], v: usize, b: &Belief) -> f64 {
    if sets[v].is_empty() {
        return 0.0;
    }
    sets[v].iter().map(|a| b.dot(&a.values)).fold(f64::NEG_INFINITY, f64::max)
}

struct PointSet {
    points: Vec<(usize, Belief)>,
    seen: HashSet<(usize, BeliefKey)>,
}

impl PointSet {
    fn new() -> Self {
        Self { points: Vec::new(), seen: HashSet::new() }
    }

    fn insert(&mut self, v: usize, b: Belief) -> bool {
        if self.seen.insert((v, b.key())) {
            self.points.push((v, b));
            true
        } else {
            false
        }
    }
}

fn collect_exhaustive(model: &MixedObservabilityModel, budget: usize) -> Result<PointSet, PomdpError> {
    let mut set = PointSet::new();
    let root = (model.initial_visible(), model.initial_belief().clone());
    if model.is_terminal(root.0) {
        return Ok(set);
    }
    set.insert(root.0, root.1.clone());
    let mut queue = VecDeque::from([root]);
    while let Some((v, b)) = queue.pop_front() {
        let mut actions = model.enabled_actions(v).to_vec();
        actions.sort_unstable();
        for a in actions {
            for next in model.visible_successors(v, a) {
                if model.is_terminal(next) {
                    continue;
                }
                let posterior = match belief_update(model, &b, v, a, next) {
                    Ok(p) => p,
                    Err(PomdpError::ZeroLikelihood) => continue,
                    Err(e) => return Err(e),
                };
                if set.points.len() >= budget {
                    return Ok(set);
                }
                if set.insert(next, posterior.clone()) {
                    queue.push_back((next, posterior));
                }
            }
        }
    }
    Ok(set)
}

/// Point-based solve of `model`. Returns an α-vector policy defined in every
/// nonterminal visible state.
pub fn pbvi_solve(model: &MixedObservabilityModel, options: PbviOptions) -> Result<PbviReport, PomdpError> {
    if !(options.tolerance > 0.0) {
        return Err(PomdpError::InvalidArgument(format!("tolerance {} must be positive", options.tolerance)));
    }
    if options.belief_budget == 0 {
        return Err(PomdpError::InvalidArgument("belief budget must be positive".into()));
    }
    let prepared = Prepared::new(model);
    match model.horizon() {
        Horizon::Unbounded if model.discount() >= 1.0 => {
            return Err(PomdpError::UndiscountedInfiniteHorizon)
        }
        Horizon::Finite(h) => {
            // A stationary α-vector policy is only exact when time is
            // recoverable from the visible state and every run terminates
            // within the horizon.
            match model.longest_path_from_initial() {
                Some(depth) if depth <= h => {}
                Some(depth) => {
                    return Err(PomdpError::NonStationaryHorizon(format!(
                        "longest visible path {depth} exceeds horizon {h}"
                    )))
                }
                None => {
                    return Err(PomdpError::NonStationaryHorizon(
                        "visible transition graph has cycles".into(),
                    ))
                }
            }
        }
        Horizon::Unbounded => {}
    }

    let mut sets = prepared.initial_sets();
    let base_len: Vec<usize> = sets.iter().map(Vec::len).collect();
    let mut points = match options.sampling {
        BeliefSampling::Exhaustive => collect_exhaustive(model, options.belief_budget)?,
        BeliefSampling::BoundGuided => guided_trials(&prepared, &mut sets, &options)?,
    };

    // Points at states whose successors are processed first converge in
    // fewer sweeps; the order does not affect the fixed point.
    if let Some(order) = &prepared.order {
        let mut rank = vec![0usize; model.visible_count()];
        for (i, &v) in order.iter().enumerate() {
            rank[v] = i;
        }
        points.points.sort_by_key(|(v, _)| rank[*v]);
    }

    let mut owned: Vec<Vec<AlphaVector>> = vec![Vec::new(); model.visible_count()];
    let mut values: Vec<f64> = points
        .points
        .iter()
        .map(|(v, b)| lower_value(&sets, *v, b))
        .collect();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let results: Vec<(AlphaVector, f64)> = points
            .points
            .par_iter()
            .map(|(v, b)| prepared.backup(*v, b.weights(), &sets))
            .collect();
        for slot in owned.iter_mut() {
            slot.clear();
        }
        residual = 0.0;
        for (i, ((v, _), (alpha, value))) in points.points.iter().zip(results).enumerate() {
            residual = residual.max((value - values[i]).abs());
            values[i] = value;
            owned[*v].push(alpha);
        }
        for (v, set) in sets.iter_mut().enumerate() {
            set.truncate(base_len[v]);
            set.extend(owned[v].iter().cloned());
        }
        if residual < options.tolerance && iterations > 1 {
            break;
        }
    }

    for set in sets.iter_mut() {
        dedup_alphas(set);
    }
    let status = if residual < options.tolerance {
        SolveStatus::Converged
    } else {
        SolveStatus::NonConvergence { residual }
    };
    let value = if model.is_terminal(model.initial_visible()) {
        0.0
    } else {
        lower_value(&sets, model.initial_visible(), model.initial_belief())
    };
    let policy = Policy::from_alpha_vectors(
        model.hidden_count(),
        sets,
        PolicyMetadata {
            solver: match options.sampling {
                BeliefSampling::Exhaustive => "pbvi-exhaustive".into(),
                BeliefSampling::BoundGuided => "pbvi-bound-guided".into(),
            },
            tolerance: Some(options.tolerance),
            model_digest: model.digest(),
            label: None,
            initial_value: Some(value),
            timestamp: None,
        },
    );
    Ok(PbviReport {
        policy,
        value,
        residual,
        iterations,
        belief_points: points.points.len(),
        status,
    })
}

fn dedup_alphas(set: &mut Vec<AlphaVector>) {
    set.sort_by(|a, b| {
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.action.cmp(&b.action))
    });
    set.dedup_by(|later, earlier| later.values == earlier.values);
}

/// Forward trials in the style of SARSOP: descend along the action with the
/// best upper-bound Q-value and the observation with the largest weighted
/// bound gap, then back up the visited points in reverse.
fn guided_trials(
    prepared: &Prepared<'_>,
    sets: &mut [Vec<AlphaVector>],
    options: &PbviOptions,
) -> Result<PointSet, PomdpError> {
    let model = prepared.model;
    let upper = prepared.upper_bound();
    let gamma = model.discount();
    let upper_value = |v: usize, b: &Belief| b.dot(&upper[v]);
    let mut points = PointSet::new();
    let root_v = model.initial_visible();
    let root_b = model.initial_belief().clone();
    if model.is_terminal(root_v) {
        return Ok(points);
    }
    points.insert(root_v, root_b.clone());

    for _ in 0..options.max_iterations {
        let root_gap = upper_value(root_v, &root_b) - lower_value(sets, root_v, &root_b);
        if root_gap < options.tolerance || points.points.len() >= options.belief_budget {
            break;
        }
        let mut path: Vec<(usize, Belief)> = vec![(root_v, root_b.clone())];
        let mut depth = 0i32;
        loop {
            let (v, b) = path.last().unwrap().clone();
            let gap = upper_value(v, &b) - lower_value(sets, v, &b);
            if gap <= options.tolerance * gamma.powi(-depth) {
                break;
            }
            let mut actions = model.enabled_actions(v).to_vec();
            actions.sort_unstable();
            let mut best: Option<(usize, f64)> = None;
            for &a in &actions {
                let mut q = 0.0;
                for next in model.visible_successors(v, a) {
                    let (w, p) = super::belief::predict(model, &b, v, a, next)?;
                    if p <= 0.0 {
                        continue;
                    }
                    for h in 0..model.hidden_count() {
                        for t in model.kernel(v, h, a) {
                            if t.next_visible == next {
                                q += b.get(h) * t.prob * t.reward;
                            }
                        }
                    }
                    let posterior = Belief::normalized_unchecked(w, p);
                    q += gamma * p * upper_value(next, &posterior);
                }
                if best.is_none_or(|(_, bq)| q > bq + TIE_EPSILON) {
                    best = Some((a, q));
                }
            }
            let (a, _) = best.expect("nonterminal state has an action");
            let mut chosen: Option<(usize, Belief, f64)> = None;
            for next in model.visible_successors(v, a) {
                if model.is_terminal(next) {
                    continue;
                }
                let posterior = match belief_update(model, &b, v, a, next) {
                    Ok(p) => p,
                    Err(PomdpError::ZeroLikelihood) => continue,
                    Err(e) => return Err(e),
                };
                let (_, p) = super::belief::predict(model, &b, v, a, next)?;
                let score = p * (upper_value(next, &posterior) - lower_value(sets, next, &posterior));
                if chosen.as_ref().is_none_or(|(_, _, s)| score > *s) {
                    chosen = Some((next, posterior, score));
                }
            }
            match chosen {
                Some((next, posterior, _)) if points.points.len() < options.belief_budget => {
                    points.insert(next, posterior.clone());
                    path.push((next, posterior));
                    depth += 1;
                }
                _ => break,
            }
        }
        for (v, b) in path.iter().rev() {
            let (alpha, _) = prepared.backup(*v, b.weights(), sets);
            sets[*v].push(alpha);
        }
    }
    Ok(points)
}
