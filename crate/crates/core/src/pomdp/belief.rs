use serde::{Deserialize, Serialize};

use super::model::MixedObservabilityModel;
use super::PomdpError;

pub const BELIEF_TOLERANCE: f64 = 1e-9;

/// Number of decimal digits kept in a [`BeliefKey`].
pub const KEY_DIGITS: i32 = 12;

/// Probability distribution over the hidden states of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Belief {
    weights: Vec<f64>,
}

impl Belief {
    pub fn new(weights: Vec<f64>) -> Result<Self, PomdpError> {
        if weights.is_empty() {
            return Err(PomdpError::InvalidBelief("empty belief".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(PomdpError::InvalidBelief(format!("negative or non-finite weight in {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > BELIEF_TOLERANCE {
            return Err(PomdpError::InvalidBelief(format!("weights sum to {total}")));
        }
        Ok(Self { weights })
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self, PomdpError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(PomdpError::InvalidBelief(format!("negative or non-finite weight in {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(PomdpError::ZeroLikelihood);
        }
        Ok(Self { weights: weights.into_iter().map(|w| w / total).collect() })
    }

    /// Divides by a known positive total. Shared by every filter path so that
    /// identical inputs give bit-identical beliefs.
    pub(crate) fn normalized_unchecked(weights: Vec<f64>, total: f64) -> Self {
        Self { weights: weights.into_iter().map(|w| w / total).collect() }
    }

    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0 / n as f64; n] }
    }

    pub fn point_mass(n: usize, index: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[index] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, h: usize) -> f64 {
        self.weights[h]
    }

    /// Expectation of `f(h)` under the belief.
    pub fn expect(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(h, w)| w * f(h)).sum()
    }

    pub fn dot(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn key(&self) -> BeliefKey {
        let scale = 10f64.powi(KEY_DIGITS);
        BeliefKey(self.weights.iter().map(|w| (w * scale).round() as i64).collect())
    }
}

impl TryFrom<Vec<f64>> for Belief {
    type Error = PomdpError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Belief::new(value)
    }
}

impl From<Belief> for Vec<f64> {
    fn from(b: Belief) -> Self {
        b.weights
    }
}

/// Belief weights rounded to [`KEY_DIGITS`] decimal digits, used for
/// memoization and lookup-tree policies.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BeliefKey(pub Vec<i64>);

/// Bayes filter over the hidden component after taking `a` in `v` and
/// observing the visible successor `next_visible`:
/// `b'(h') ∝ Σ_h b(h) · kernel(v, h, a)(next_visible, h')`.
pub fn belief_update(
    model: &MixedObservabilityModel,
    b: &Belief,
    v: usize,
    a: usize,
    next_visible: usize,
) -> Result<Belief, PomdpError> {
    let (unnorm, total) = predict(model, b, v, a, next_visible)?;
    if total <= 0.0 {
        return Err(PomdpError::ZeroLikelihood);
    }
    Ok(Belief::normalized_unchecked(unnorm, total))
}

/// Unnormalized successor weights and their total, which is the probability
/// of observing `next_visible`.
pub(crate) fn predict(
    model: &MixedObservabilityModel,
    b: &Belief,
    v: usize,
    a: usize,
    next_visible: usize,
) -> Result<(Vec<f64>, f64), PomdpError> {
    let nh = model.hidden_count();
    if b.len() != nh {
        return Err(PomdpError::DimensionMismatch { expected: nh, found: b.len() });
    }
    if v >= model.visible_count() || next_visible >= model.visible_count() {
        return Err(PomdpError::UnknownVisibleState(v.max(next_visible)));
    }
    if !model.is_enabled(v, a) {
        return Err(PomdpError::ActionNotEnabled { visible: v, action: a });
    }
    let mut out = vec![0.0; nh];
    for (h, &w) in b.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for t in model.kernel(v, h, a) {
            if t.next_visible == next_visible {
                out[t.next_hidden] += w * t.prob;
            }
        }
    }
    let total = out.iter().sum();
    Ok((out, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::model::fixtures::two_level_probe;
    use proptest::prelude::*;

    #[test]
    fn hand_bayes_posterior() {
        // prior (0.5, 0.5), stay-put likelihoods (0.2, 0.8): posterior ∝ (0.1, 0.4)
        let m = two_level_probe([0.2, 0.8]);
        let b = belief_update(&m, &Belief::uniform(2), 0, 0, 1).unwrap();
        assert!((b.get(0) - 0.2).abs() < 1e-15);
        assert!((b.get(1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn uninformative_observation_keeps_belief() {
        let m = two_level_probe([0.3, 0.3]);
        let b = belief_update(&m, &Belief::uniform(2), 0, 0, 2).unwrap();
        assert!((b.get(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn impossible_observation_is_zero_likelihood() {
        let m = two_level_probe([1.0, 1.0]);
        let err = belief_update(&m, &Belief::uniform(2), 0, 0, 2).unwrap_err();
        assert!(matches!(err, PomdpError::ZeroLikelihood));
    }

    #[test]
    fn disabled_action_is_rejected() {
        let m = two_level_probe([0.5, 0.5]);
        let err = belief_update(&m, &Belief::uniform(2), 1, 0, 1).unwrap_err();
        assert!(matches!(err, PomdpError::ActionNotEnabled { .. }));
    }

    #[test]
    fn constructor_validates() {
        assert!(Belief::new(vec![0.5, 0.6]).is_err());
        assert!(Belief::new(vec![-0.1, 1.1]).is_err());
        assert!(Belief::new(vec![0.25; 4]).is_ok());
        let parsed: Result<Belief, _> = serde_json::from_str("[0.3, 0.3]");
        assert!(parsed.is_err());
    }

    proptest! {
        #[test]
        fn update_output_is_normalized(p0 in 0.01f64..0.99, p1 in 0.01f64..0.99, w in 0.0f64..1.0, stay in any::<bool>()) {
            let m = two_level_probe([p0, p1]);
            let b = Belief::new(vec![w, 1.0 - w]).unwrap();
            let obs = if stay { 1 } else { 2 };
            let post = belief_update(&m, &b, 0, 0, obs).unwrap();
            let total: f64 = post.weights().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            prop_assert!(post.weights().iter().all(|x| *x >= 0.0));
        }
    }
}
