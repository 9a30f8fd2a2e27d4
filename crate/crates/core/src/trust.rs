//! Trust on the seven-point scale, its performance-driven dynamics and the
//! trust-free / trust-based human decision models.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::rng::sample_index;

pub const TRUST_LEVELS: usize = 7;

#[derive(Debug, Error, PartialEq)]
pub enum TrustError {
    #[error("trust level {0} outside 1..=7")]
    LevelOutOfRange(i64),
    #[error("sigma must be positive for {class}, got {sigma}")]
    InvalidSigma { class: String, sigma: f64 },
    #[error("Muir observation noise must be positive, got {0}")]
    InvalidMuirNoise(f64),
    #[error("success belief for {category} must lie in [0, 1], got {value}")]
    BeliefOutOfRange { category: ObjectCategory, value: f64 },
    #[error("missing parameters for {0}")]
    MissingParameters(String),
    #[error("unknown outcome class {0:?}")]
    UnknownClass(String),
    #[error("non-finite parameter for {0}")]
    NonFinite(String),
}

/// A discrete trust level in `1..=7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct TrustLevel(u8);

impl TrustLevel {
    pub const MIN: TrustLevel = TrustLevel(1);
    pub const MAX: TrustLevel = TrustLevel(7);

    pub fn new(level: i64) -> Result<Self, TrustError> {
        if (1..=TRUST_LEVELS as i64).contains(&level) {
            Ok(Self(level as u8))
        } else {
            Err(TrustError::LevelOutOfRange(level))
        }
    }

    /// Level from a zero-based hidden-state index.
    pub fn from_index(index: usize) -> Self {
        assert!(index < TRUST_LEVELS, "trust index {index} out of range");
        Self(index as u8 + 1)
    }

    /// Nearest level to a continuous rating, clamped to the scale.
    pub fn nearest(rating: f64) -> Self {
        let r = rating.round().clamp(1.0, TRUST_LEVELS as f64);
        Self(r as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn all() -> impl Iterator<Item = TrustLevel> {
        (1..=TRUST_LEVELS as u8).map(TrustLevel)
    }
}

impl TryFrom<i64> for TrustLevel {
    type Error = TrustError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        TrustLevel::new(v)
    }
}

impl From<TrustLevel> for i64 {
    fn from(t: TrustLevel) -> Self {
        t.0 as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ObjectCategory {
    Bottle,
    Can,
    Glass,
}

impl ObjectCategory {
    pub const ALL: [ObjectCategory; 3] = [ObjectCategory::Bottle, ObjectCategory::Can, ObjectCategory::Glass];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectCategory::Bottle => "bottle",
            ObjectCategory::Can => "can",
            ObjectCategory::Glass => "glass",
        }
    }
}

impl fmt::Display for ObjectCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectCategory {
    type Err = TrustError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bottle" => Ok(ObjectCategory::Bottle),
            "can" => Ok(ObjectCategory::Can),
            "glass" => Ok(ObjectCategory::Glass),
            other => Err(TrustError::UnknownClass(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum OutcomeEvent {
    Intervened,
    StayPutSuccess,
    StayPutFail,
}

impl OutcomeEvent {
    pub const ALL: [OutcomeEvent; 3] =
        [OutcomeEvent::Intervened, OutcomeEvent::StayPutSuccess, OutcomeEvent::StayPutFail];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeEvent::Intervened => "intervened",
            OutcomeEvent::StayPutSuccess => "stayPutSuccess",
            OutcomeEvent::StayPutFail => "stayPutFail",
        }
    }
}

/// Robot performance as seen by the human: which object, and what happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutcomeClass {
    pub category: ObjectCategory,
    pub event: OutcomeEvent,
}

impl OutcomeClass {
    pub fn new(category: ObjectCategory, event: OutcomeEvent) -> Self {
        Self { category, event }
    }

    pub fn all() -> impl Iterator<Item = OutcomeClass> {
        ObjectCategory::ALL
            .into_iter()
            .flat_map(|c| OutcomeEvent::ALL.into_iter().map(move |e| OutcomeClass::new(c, e)))
    }

    /// Key used in parameter files, e.g. `glass.stayPutFail`.
    pub fn key(self) -> String {
        format!("{}.{}", self.category.as_str(), self.event.as_str())
    }

    pub fn parse_key(key: &str) -> Result<Self, TrustError> {
        let (cat, ev) = key.split_once('.').ok_or_else(|| TrustError::UnknownClass(key.into()))?;
        let category = cat.parse()?;
        let event = OutcomeEvent::ALL
            .into_iter()
            .find(|e| e.as_str() == ev)
            .ok_or_else(|| TrustError::UnknownClass(key.into()))?;
        Ok(Self { category, event })
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// θ' ~ N(αθ + β, σ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussian {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl LinearGaussian {
    pub const IDENTITY: LinearGaussian = LinearGaussian { alpha: 1.0, beta: 0.0, sigma: 1e-3 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrustDynamicsParams {
    #[serde(with = "class_map")]
    pub per_class: BTreeMap<OutcomeClass, LinearGaussian>,
    pub muir_noise: f64,
}

impl TrustDynamicsParams {
    pub fn validate(&self) -> Result<(), TrustError> {
        for class in OutcomeClass::all() {
            let p = self
                .per_class
                .get(&class)
                .ok_or_else(|| TrustError::MissingParameters(class.key()))?;
            if !(p.alpha.is_finite() && p.beta.is_finite()) {
                return Err(TrustError::NonFinite(class.key()));
            }
            if !(p.sigma > 0.0) || !p.sigma.is_finite() {
                return Err(TrustError::InvalidSigma { class: class.key(), sigma: p.sigma });
            }
        }
        if !(self.muir_noise > 0.0) {
            return Err(TrustError::InvalidMuirNoise(self.muir_noise));
        }
        Ok(())
    }

    pub fn get(&self, class: OutcomeClass) -> Result<LinearGaussian, TrustError> {
        self.per_class.get(&class).copied().ok_or_else(|| TrustError::MissingParameters(class.key()))
    }

    /// Every class follows `params`.
    pub fn uniform(params: LinearGaussian, muir_noise: f64) -> Self {
        Self { per_class: OutcomeClass::all().map(|c| (c, params)).collect(), muir_noise }
    }
}

mod class_map {
    use super::*;
    use serde::de::Error as _;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<OutcomeClass, LinearGaussian>, s: S) -> Result<S::Ok, S::Error> {
        let keyed: BTreeMap<String, LinearGaussian> = map.iter().map(|(k, v)| (k.key(), *v)).collect();
        keyed.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<OutcomeClass, LinearGaussian>, D::Error> {
        let keyed = BTreeMap::<String, LinearGaussian>::deserialize(d)?;
        keyed
            .into_iter()
            .map(|(k, v)| OutcomeClass::parse_key(&k).map(|c| (c, v)).map_err(D::Error::custom))
            .collect()
    }
}

/// Row-stochastic 7×7 matrix indexed `[θ-1][θ'-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix(pub [[f64; TRUST_LEVELS]; TRUST_LEVELS]);

impl TransitionMatrix {
    pub fn row(&self, from: TrustLevel) -> &[f64; TRUST_LEVELS] {
        &self.0[from.index()]
    }

    pub fn prob(&self, from: TrustLevel, to: TrustLevel) -> f64 {
        self.0[from.index()][to.index()]
    }

    /// Expected successor level from `from`.
    pub fn expected_next(&self, from: TrustLevel) -> f64 {
        self.row(from).iter().enumerate().map(|(i, p)| p * (i + 1) as f64).sum()
    }
}

fn normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }
}

/// Mass of N(αθ+β, σ) on the half-integer bins around each level, with the
/// outer bins extended to ±∞.
pub fn discretize_row(params: LinearGaussian, from: TrustLevel) -> Result<[f64; TRUST_LEVELS], TrustError> {
    if !(params.sigma > 0.0) || !params.sigma.is_finite() {
        return Err(TrustError::InvalidSigma { class: "row".into(), sigma: params.sigma });
    }
    let mean = params.alpha * from.as_f64() + params.beta;
    let mut row = [0.0; TRUST_LEVELS];
    let mut lower_cdf = 0.0;
    for (i, slot) in row.iter_mut().enumerate() {
        let upper = if i + 1 == TRUST_LEVELS { f64::INFINITY } else { (i + 1) as f64 + 0.5 };
        let upper_cdf = normal_cdf((upper - mean) / params.sigma);
        *slot = (upper_cdf - lower_cdf).max(0.0);
        lower_cdf = upper_cdf;
    }
    Ok(row)
}

pub fn discretize_gaussian(params: LinearGaussian) -> Result<TransitionMatrix, TrustError> {
    let mut m = [[0.0; TRUST_LEVELS]; TRUST_LEVELS];
    for from in TrustLevel::all() {
        m[from.index()] = discretize_row(params, from)?;
    }
    Ok(TransitionMatrix(m))
}

/// One 7×7 transition matrix per outcome class.
pub fn discretize_dynamics(params: &TrustDynamicsParams) -> Result<BTreeMap<OutcomeClass, TransitionMatrix>, TrustError> {
    params.validate()?;
    OutcomeClass::all()
        .map(|c| {
            let p = params.get(c)?;
            discretize_gaussian(p)
                .map(|m| (c, m))
                .map_err(|_| TrustError::InvalidSigma { class: c.key(), sigma: p.sigma })
        })
        .collect()
}

/// Draws θ' from the discretized row of `class`.
pub fn sample_trust_transition<R: Rng + ?Sized>(
    params: &TrustDynamicsParams,
    from: TrustLevel,
    class: OutcomeClass,
    rng: &mut R,
) -> Result<TrustLevel, TrustError> {
    let row = discretize_row(params.get(class)?, from)
        .map_err(|_| TrustError::InvalidSigma { class: class.key(), sigma: params.get(class).map(|p| p.sigma).unwrap_or(0.0) })?;
    Ok(TrustLevel::from_index(sample_index(row, rng)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustBasedCoefficients {
    pub gamma: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustFreeBelief {
    pub b: f64,
}

/// How the human's belief in robot success is formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "perObject", rename_all = "camelCase")]
pub enum HumanBehaviorParams {
    /// Constant belief `b_j` per category.
    TrustFree(BTreeMap<ObjectCategory, TrustFreeBelief>),
    /// `b_j(θ) = S(γ_j θ + η_j)`.
    TrustBased(BTreeMap<ObjectCategory, TrustBasedCoefficients>),
}

impl HumanBehaviorParams {
    pub fn trust_free(beliefs: impl IntoIterator<Item = (ObjectCategory, f64)>) -> Self {
        HumanBehaviorParams::TrustFree(beliefs.into_iter().map(|(c, b)| (c, TrustFreeBelief { b })).collect())
    }

    pub fn trust_based(coeffs: impl IntoIterator<Item = (ObjectCategory, f64, f64)>) -> Self {
        HumanBehaviorParams::TrustBased(
            coeffs.into_iter().map(|(c, gamma, eta)| (c, TrustBasedCoefficients { gamma, eta })).collect(),
        )
    }

    pub fn is_trust_based(&self) -> bool {
        matches!(self, HumanBehaviorParams::TrustBased(_))
    }

    pub fn validate(&self) -> Result<(), TrustError> {
        match self {
            HumanBehaviorParams::TrustFree(map) => {
                for c in ObjectCategory::ALL {
                    let b = map.get(&c).ok_or_else(|| TrustError::MissingParameters(c.to_string()))?.b;
                    if !(0.0..=1.0).contains(&b) {
                        return Err(TrustError::BeliefOutOfRange { category: c, value: b });
                    }
                }
            }
            HumanBehaviorParams::TrustBased(map) => {
                for c in ObjectCategory::ALL {
                    let p = map.get(&c).ok_or_else(|| TrustError::MissingParameters(c.to_string()))?;
                    if !(p.gamma.is_finite() && p.eta.is_finite()) {
                        return Err(TrustError::NonFinite(c.to_string()));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The human's belief that the robot will succeed on `category` at trust `θ`.
pub fn success_belief(params: &HumanBehaviorParams, category: ObjectCategory, trust: TrustLevel) -> Result<f64, TrustError> {
    match params {
        HumanBehaviorParams::TrustFree(map) => map
            .get(&category)
            .map(|p| p.b)
            .ok_or_else(|| TrustError::MissingParameters(category.to_string())),
        HumanBehaviorParams::TrustBased(map) => map
            .get(&category)
            .map(|p| sigmoid(p.gamma * trust.as_f64() + p.eta))
            .ok_or_else(|| TrustError::MissingParameters(category.to_string())),
    }
}

/// What is at stake when the human lets the robot act on an object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectStakes {
    pub category: ObjectCategory,
    /// Reward if the human stays put and the robot succeeds.
    pub reward_success: f64,
    /// Reward if the human stays put and the robot fails.
    pub reward_fail: f64,
}

/// Softmax rule over the two human actions: `S(b·r^S + (1−b)·r^F)`.
pub fn stay_probability_from_belief(b: f64, reward_success: f64, reward_fail: f64) -> f64 {
    sigmoid(b * reward_success + (1.0 - b) * reward_fail)
}

pub fn stay_put_probability(params: &HumanBehaviorParams, stakes: ObjectStakes, trust: TrustLevel) -> Result<f64, TrustError> {
    let b = success_belief(params, stakes.category, trust)?;
    Ok(stay_probability_from_belief(b, stakes.reward_success, stakes.reward_fail))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum HumanAction {
    StayPut,
    Intervene,
}

pub fn sample_human_action<R: Rng + ?Sized>(
    params: &HumanBehaviorParams,
    stakes: ObjectStakes,
    trust: TrustLevel,
    rng: &mut R,
) -> Result<HumanAction, TrustError> {
    let p = stay_put_probability(params, stakes, trust)?;
    Ok(if rng.random::<f64>() < p { HumanAction::StayPut } else { HumanAction::Intervene })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn lg(alpha: f64, beta: f64, sigma: f64) -> LinearGaussian {
        LinearGaussian { alpha, beta, sigma }
    }

    #[test]
    fn level_bounds() {
        assert!(TrustLevel::new(0).is_err());
        assert!(TrustLevel::new(8).is_err());
        assert_eq!(TrustLevel::new(7).unwrap().index(), 6);
        assert_eq!(TrustLevel::nearest(4.5).value(), 5);
        assert_eq!(TrustLevel::nearest(0.2).value(), 1);
        assert!(serde_json::from_str::<TrustLevel>("9").is_err());
    }

    #[test]
    fn near_zero_sigma_is_identity() {
        let m = discretize_gaussian(lg(1.0, 0.0, 1e-6)).unwrap();
        for i in 0..TRUST_LEVELS {
            for j in 0..TRUST_LEVELS {
                if i == j {
                    assert!((m.0[i][j] - 1.0).abs() < 1e-12);
                } else {
                    assert!(m.0[i][j] < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bin_mass_matches_gaussian_cdf() {
        // Φ(2) − Φ(0), Φ(2) = 0.9772498680518208
        let m = discretize_gaussian(lg(1.0, 0.5, 0.5)).unwrap();
        let expected = 0.977_249_868_051_820_8 - 0.5;
        let got = m.prob(TrustLevel::new(4).unwrap(), TrustLevel::new(5).unwrap());
        assert!((got - expected).abs() < 1e-10, "{got}");
    }

    #[test]
    fn large_positive_drift_clamps_to_top() {
        let params = TrustDynamicsParams::uniform(lg(1.0, 50.0, 0.1), 0.3);
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let next = sample_trust_transition(
                &params,
                TrustLevel::MAX,
                OutcomeClass::new(ObjectCategory::Bottle, OutcomeEvent::StayPutSuccess),
                &mut rng,
            )
            .unwrap();
            assert_eq!(next, TrustLevel::MAX);
        }
    }

    #[test]
    fn invalid_sigma_rejected() {
        let params = TrustDynamicsParams::uniform(lg(1.0, 0.0, 0.0), 0.3);
        assert!(matches!(discretize_dynamics(&params), Err(TrustError::InvalidSigma { .. })));
        let params = TrustDynamicsParams::uniform(lg(1.0, 0.0, 0.5), 0.0);
        assert!(matches!(discretize_dynamics(&params), Err(TrustError::InvalidMuirNoise(_))));
    }

    #[test]
    fn success_belief_examples() {
        let zero = HumanBehaviorParams::trust_based(ObjectCategory::ALL.map(|c| (c, 0.0, 0.0)));
        for t in TrustLevel::all() {
            assert_eq!(success_belief(&zero, ObjectCategory::Can, t).unwrap(), 0.5);
        }
        let free = HumanBehaviorParams::trust_free([(ObjectCategory::Bottle, 1.0), (ObjectCategory::Can, 1.0), (ObjectCategory::Glass, 0.75)]);
        for t in TrustLevel::all() {
            assert_eq!(success_belief(&free, ObjectCategory::Glass, t).unwrap(), 0.75);
        }
        let based = HumanBehaviorParams::trust_based([(ObjectCategory::Glass, 1.0, -4.0)]);
        let b = success_belief(&based, ObjectCategory::Glass, TrustLevel::MAX).unwrap();
        // 1 / (1 + e^-3)
        assert!((b - 0.952_574_126_822_433_4).abs() < 1e-15);
    }

    #[test]
    fn stay_put_examples() {
        assert!((stay_probability_from_belief(1.0, 3.0, -9.0) - 0.952_574_126_822_433_4).abs() < 1e-15);
        // S(-9) = 1.2339457598623172e-4
        assert!((stay_probability_from_belief(0.0, 3.0, -9.0) - 1.233_945_759_862_317_2e-4).abs() < 1e-18);
        assert_eq!(stay_probability_from_belief(0.0, 1.0, 0.0), 0.5);
    }

    #[test]
    fn forced_stay_always_stays() {
        let params = HumanBehaviorParams::trust_free(ObjectCategory::ALL.map(|c| (c, 1.0)));
        let stakes = ObjectStakes { category: ObjectCategory::Bottle, reward_success: 1000.0, reward_fail: 0.0 };
        let mut rng = rng_from_seed(0);
        for _ in 0..1000 {
            assert_eq!(sample_human_action(&params, stakes, TrustLevel::MIN, &mut rng).unwrap(), HumanAction::StayPut);
        }
    }

    #[test]
    fn stay_rate_concentrates() {
        // b chosen so that P = S(ln 3) = 0.75
        let params = HumanBehaviorParams::trust_free(ObjectCategory::ALL.map(|c| (c, 1.0)));
        let stakes = ObjectStakes { category: ObjectCategory::Can, reward_success: 3f64.ln(), reward_fail: 0.0 };
        let mut rng = rng_from_seed(11);
        let n = 100_000;
        let stays = (0..n)
            .filter(|_| sample_human_action(&params, stakes, TrustLevel::MIN, &mut rng).unwrap() == HumanAction::StayPut)
            .count();
        assert!((stays as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn sampled_transitions_match_matrix_row() {
        let p = lg(0.8, 1.2, 0.9);
        let params = TrustDynamicsParams::uniform(p, 0.3);
        let from = TrustLevel::new(3).unwrap();
        let row = discretize_row(p, from).unwrap();
        let class = OutcomeClass::new(ObjectCategory::Glass, OutcomeEvent::StayPutSuccess);
        let mut counts = [0usize; TRUST_LEVELS];
        let mut rng = rng_from_seed(21);
        let n = 100_000;
        for _ in 0..n {
            counts[sample_trust_transition(&params, from, class, &mut rng).unwrap().index()] += 1;
        }
        let tv: f64 = counts.iter().zip(row).map(|(c, p)| (*c as f64 / n as f64 - p).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.01, "total variation {tv}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let params = TrustDynamicsParams::uniform(lg(0.9, 0.4, 1.0), 0.3);
        let class = OutcomeClass::new(ObjectCategory::Can, OutcomeEvent::Intervened);
        let draw = |seed| {
            let mut rng = rng_from_seed(seed);
            (0..50)
                .map(|_| sample_trust_transition(&params, TrustLevel::new(4).unwrap(), class, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn params_json_shape() {
        let behavior = HumanBehaviorParams::trust_free([(ObjectCategory::Bottle, 0.5)]);
        let json = serde_json::to_value(&behavior).unwrap();
        assert_eq!(json["variant"], "trustFree");
        assert_eq!(json["perObject"]["bottle"]["b"], 0.5);
        let dynamics = TrustDynamicsParams::uniform(lg(1.0, 0.0, 0.5), 0.3);
        let json = serde_json::to_value(&dynamics).unwrap();
        assert_eq!(json["perClass"]["glass.stayPutFail"]["sigma"], 0.5);
        let back: TrustDynamicsParams = serde_json::from_value(json).unwrap();
        assert_eq!(back, dynamics);
    }

    proptest! {
        #[test]
        fn rows_are_stochastic(alpha in -2.0f64..2.0, beta in -10.0f64..10.0, sigma in 1e-4f64..20.0) {
            let m = discretize_gaussian(lg(alpha, beta, sigma)).unwrap();
            for row in m.0 {
                let total: f64 = row.iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-9);
                prop_assert!(row.iter().all(|p| *p >= 0.0));
            }
        }

        #[test]
        fn trust_based_stay_is_monotone(gamma in 0.0f64..3.0, eta in -10.0f64..5.0, rs in 0.1f64..5.0, rf in -10.0f64..0.0) {
            let params = HumanBehaviorParams::trust_based(ObjectCategory::ALL.map(|c| (c, gamma, eta)));
            let stakes = ObjectStakes { category: ObjectCategory::Glass, reward_success: rs, reward_fail: rf };
            let probs: Vec<f64> = TrustLevel::all().map(|t| stay_put_probability(&params, stakes, t).unwrap()).collect();
            for w in probs.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
        }

        #[test]
        fn trust_free_stay_is_constant(b in 0.0f64..=1.0) {
            let params = HumanBehaviorParams::trust_free(ObjectCategory::ALL.map(|c| (c, b)));
            let stakes = ObjectStakes { category: ObjectCategory::Can, reward_success: 2.0, reward_fail: -4.0 };
            let p1 = stay_put_probability(&params, stakes, TrustLevel::MIN).unwrap();
            for t in TrustLevel::all() {
                prop_assert_eq!(stay_put_probability(&params, stakes, t).unwrap(), p1);
            }
        }
    }
}
