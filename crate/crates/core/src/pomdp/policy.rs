use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::belief::{Belief, BeliefKey};
use super::{PomdpError, TIE_EPSILON};

pub const POLICY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PolicyKind {
    AlphaVector,
    LookupTree,
}

/// A linear value function over hidden states, tagged with the action whose
/// backup produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector {
    pub action: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct PolicyMetadata {
    pub solver: String,
    pub tolerance: Option<f64>,
    /// Digest of the model the policy was solved for.
    pub model_digest: String,
    /// Free-form label, e.g. the config preset name.
    #[serde(default)]
    pub label: Option<String>,
    /// Value at the model's initial belief as computed by the solver.
    #[serde(default)]
    pub initial_value: Option<f64>,
    /// Seconds since the Unix epoch. Kept here so payloads stay reproducible.
    #[serde(default)]
    pub timestamp: Option<u64>,
}

/// A robot policy mapping (visible state, belief) to an action.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    kind: PolicyKind,
    hidden_count: usize,
    alpha: Vec<Vec<AlphaVector>>,
    tree: BTreeMap<(usize, BeliefKey), usize>,
    pub metadata: PolicyMetadata,
}

impl Policy {
    pub fn from_alpha_vectors(
        hidden_count: usize,
        alpha: Vec<Vec<AlphaVector>>,
        metadata: PolicyMetadata,
    ) -> Self {
        Self { kind: PolicyKind::AlphaVector, hidden_count, alpha, tree: BTreeMap::new(), metadata }
    }

    pub fn from_lookup_tree(
        hidden_count: usize,
        tree: BTreeMap<(usize, BeliefKey), usize>,
        metadata: PolicyMetadata,
    ) -> Self {
        Self { kind: PolicyKind::LookupTree, hidden_count, alpha: Vec::new(), tree, metadata }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn hidden_count(&self) -> usize {
        self.hidden_count
    }

    pub fn alpha_vectors(&self, v: usize) -> &[AlphaVector] {
        self.alpha.get(v).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn tree(&self) -> &BTreeMap<(usize, BeliefKey), usize> {
        &self.tree
    }

    /// Value of the α-vector policy at (v, b): max over the α-vectors of v.
    pub fn alpha_value(&self, v: usize, b: &Belief) -> Option<f64> {
        self.best_alpha(v, b).map(|(_, value)| value)
    }

    fn best_alpha(&self, v: usize, b: &Belief) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for alpha in self.alpha_vectors(v) {
            let value = b.dot(&alpha.values);
            best = match best {
                None => Some((alpha.action, value)),
                Some((a, bv)) => {
                    if value > bv + TIE_EPSILON
                        || ((value - bv).abs() <= TIE_EPSILON && alpha.action < a)
                    {
                        Some((alpha.action, value.max(bv)))
                    } else {
                        Some((a, bv))
                    }
                }
            };
        }
        best
    }

    pub fn to_document(&self) -> PolicyDocument {
        let alpha_vectors = if self.kind == PolicyKind::AlphaVector {
            Some(
                self.alpha
                    .iter()
                    .enumerate()
                    .filter(|(_, set)| !set.is_empty())
                    .map(|(v, set)| (v.to_string(), set.clone()))
                    .collect(),
            )
        } else {
            None
        };
        let tree = if self.kind == PolicyKind::LookupTree {
            Some(
                self.tree
                    .iter()
                    .map(|((v, key), a)| TreeEntry { visible: *v, belief: key.0.clone(), action: *a })
                    .collect(),
            )
        } else {
            None
        };
        PolicyDocument {
            schema_version: POLICY_SCHEMA_VERSION,
            kind: self.kind,
            hidden_count: self.hidden_count,
            metadata: self.metadata.clone(),
            alpha_vectors,
            tree,
        }
    }

    pub fn from_document(doc: PolicyDocument) -> Result<Self, PomdpError> {
        if doc.schema_version != POLICY_SCHEMA_VERSION {
            return Err(PomdpError::PolicyFormat(format!(
                "unsupported schemaVersion {}",
                doc.schema_version
            )));
        }
        match doc.kind {
            PolicyKind::AlphaVector => {
                let vectors = doc
                    .alpha_vectors
                    .ok_or_else(|| PomdpError::PolicyFormat("missing alphaVectors".into()))?;
                let mut alpha: Vec<Vec<AlphaVector>> = Vec::new();
                for (key, set) in vectors {
                    let v: usize = key
                        .parse()
                        .map_err(|_| PomdpError::PolicyFormat(format!("bad visible-state id {key:?}")))?;
                    for a in &set {
                        if a.values.len() != doc.hidden_count {
                            return Err(PomdpError::PolicyFormat(format!(
                                "α-vector at visible state {v} has {} values",
                                a.values.len()
                            )));
                        }
                    }
                    if alpha.len() <= v {
                        alpha.resize(v + 1, Vec::new());
                    }
                    alpha[v] = set;
                }
                Ok(Self::from_alpha_vectors(doc.hidden_count, alpha, doc.metadata))
            }
            PolicyKind::LookupTree => {
                let entries =
                    doc.tree.ok_or_else(|| PomdpError::PolicyFormat("missing tree".into()))?;
                let tree = entries
                    .into_iter()
                    .map(|e| ((e.visible, BeliefKey(e.belief)), e.action))
                    .collect();
                Ok(Self::from_lookup_tree(doc.hidden_count, tree, doc.metadata))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PomdpError> {
        let doc: PolicyDocument =
            serde_json::from_str(text).map_err(|e| PomdpError::PolicyFormat(e.to_string()))?;
        Self::from_document(doc)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TreeEntry {
    pub visible: usize,
    pub belief: Vec<i64>,
    pub action: usize,
}

/// Versioned JSON form of a [`Policy`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase")]
pub struct PolicyDocument {
    pub schema_version: u32,
    pub kind: PolicyKind,
    pub hidden_count: usize,
    pub metadata: PolicyMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_vectors: Option<BTreeMap<String, Vec<AlphaVector>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<Vec<TreeEntry>>,
}

/// Action chosen by `policy` in visible state `v` at belief `b`.
///
/// α-vector policies return the action of the maximizing vector, ties going
/// to the lowest action index. Lookup trees require an exact key match.
pub fn policy_action(policy: &Policy, v: usize, b: &Belief) -> Result<usize, PomdpError> {
    if b.len() != policy.hidden_count {
        return Err(PomdpError::DimensionMismatch { expected: policy.hidden_count, found: b.len() });
    }
    match policy.kind {
        PolicyKind::AlphaVector => policy
            .best_alpha(v, b)
            .map(|(a, _)| a)
            .ok_or(PomdpError::UnreachableBelief(v)),
        PolicyKind::LookupTree => policy
            .tree
            .get(&(v, b.key()))
            .copied()
            .ok_or(PomdpError::UnreachableBelief(v)),
    }
}
