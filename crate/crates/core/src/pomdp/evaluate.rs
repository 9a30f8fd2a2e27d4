use rayon::prelude::*;

use super::belief::{belief_update, Belief};
use super::model::MixedObservabilityModel;
use super::policy::{policy_action, Policy};
use super::PomdpError;
use crate::rng::{derive_seed, rng_from_seed, sample_index, SimRng};
use crate::stats::mean_and_stderr;

/// Monte Carlo estimate of a policy's return from the model's initial
/// condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyValue {
    pub mean: f64,
    pub stderr: f64,
    pub undiscounted_mean: f64,
    pub undiscounted_stderr: f64,
}

pub fn policy_value(
    model: &MixedObservabilityModel,
    policy: &Policy,
    samples: usize,
    seed: u64,
) -> Result<PolicyValue, PomdpError> {
    if samples == 0 {
        return Err(PomdpError::InvalidArgument("samples must be at least 1".into()));
    }
    let returns: Vec<(f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, i));
            run_episode(model, policy, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let discounted: Vec<f64> = returns.iter().map(|r| r.0).collect();
    let raw: Vec<f64> = returns.iter().map(|r| r.1).collect();
    let (mean, stderr) = mean_and_stderr(&discounted);
    let (undiscounted_mean, undiscounted_stderr) = mean_and_stderr(&raw);
    Ok(PolicyValue { mean, stderr, undiscounted_mean, undiscounted_stderr })
}

/// One episode; returns (discounted, undiscounted) reward.
fn run_episode(
    model: &MixedObservabilityModel,
    policy: &Policy,
    rng: &mut SimRng,
) -> Result<(f64, f64), PomdpError> {
    let mut v = model.initial_visible();
    let mut b: Belief = model.initial_belief().clone();
    let mut h = sample_index(b.weights().iter().copied(), rng);
    let limit = model.horizon().steps().unwrap_or(usize::MAX);
    let mut discount = 1.0;
    let (mut discounted, mut raw) = (0.0, 0.0);
    let mut step = 0;
    while step < limit && !model.is_terminal(v) {
        let a = policy_action(policy, v, &b)?;
        let row = model.kernel(v, h, a);
        let t = row[sample_index(row.iter().map(|t| t.prob), rng)];
        discounted += discount * t.reward;
        raw += t.reward;
        discount *= model.discount();
        b = belief_update(model, &b, v, a, t.next_visible)?;
        v = t.next_visible;
        h = t.next_hidden;
        step += 1;
    }
    Ok((discounted, raw))
}
