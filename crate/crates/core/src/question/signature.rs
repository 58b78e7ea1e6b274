//! Semantic signatures and within-context deduplication.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{ParamValue, StructuredQuestion};
use crate::tasks::{RoleKind, TaskType};

/// Task plus a canonical encoding of its params. Raw text and observation
/// are not part of the signature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SemanticSignature {
    pub task: TaskType,
    pub normalized_params: String,
}

impl SemanticSignature {
    /// Short stable hex digest, convenient for logs.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.task.id().as_bytes());
        h.update([0u8]);
        h.update(self.normalized_params.as_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

fn encode(value: &Option<ParamValue>) -> Value {
    match value {
        None => Value::Null,
        Some(ParamValue::Image(i)) => Value::from(*i),
        Some(ParamValue::Text(s)) => Value::from(s.trim().to_lowercase()),
        Some(ParamValue::List(items)) => {
            let mut v: Vec<String> = items.iter().map(|s| s.trim().to_lowercase()).collect();
            v.sort();
            Value::from(v)
        }
    }
}

pub fn semantic_signature(q: &StructuredQuestion) -> SemanticSignature {
    let schema = q.task.schema();
    let mut fields: Vec<(&'static str, Value)> = schema
        .roles
        .iter()
        .map(|spec| {
            let v = q.params.get(&spec.role).cloned().flatten();
            let encoded = match (spec.kind, &v) {
                // image indices outside 1/2 collapse to null
                (RoleKind::Image, Some(ParamValue::Image(i))) if !matches!(i, 1 | 2) => Value::Null,
                _ => encode(&v),
            };
            (spec.role.name(), encoded)
        })
        .collect();
    if let Some((a, b)) = q.task.unordered_pair() {
        let ia = fields.iter().position(|(n, _)| *n == a.name());
        let ib = fields.iter().position(|(n, _)| *n == b.name());
        if let (Some(ia), Some(ib)) = (ia, ib) {
            let key = |v: &Value| serde_json::to_string(v).unwrap();
            if key(&fields[ia].1) > key(&fields[ib].1) {
                let tmp = fields[ia].1.take();
                fields[ia].1 = fields[ib].1.take();
                fields[ib].1 = tmp;
            }
        }
    }
    let arr: Vec<Value> = fields
        .into_iter()
        .map(|(n, v)| Value::Array(vec![Value::from(n), v]))
        .collect();
    SemanticSignature {
        task: q.task,
        normalized_params: serde_json::to_string(&arr).unwrap(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupEntry {
    /// Index of the representative in the input.
    pub index: usize,
    pub signature: SemanticSignature,
    pub weight: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DedupError {
    #[error("candidates span contexts '{0}' and '{1}'")]
    CrossContextInput(String, String),
}

/// One representative per signature, in first-occurrence order, weighted by
/// how often its signature appeared.
pub fn dedup(candidates: &[StructuredQuestion]) -> Result<Vec<DedupEntry>, DedupError> {
    if let Some(first) = candidates.first() {
        if let Some(other) = candidates.iter().find(|q| q.context != first.context) {
            return Err(DedupError::CrossContextInput(first.context.id(), other.context.id()));
        }
    }
    let mut out: Vec<DedupEntry> = Vec::new();
    let mut seen: HashMap<SemanticSignature, usize> = HashMap::new();
    for (i, q) in candidates.iter().enumerate() {
        let sig = semantic_signature(q);
        match seen.get(&sig) {
            Some(&slot) => out[slot].weight += 1,
            None => {
                seen.insert(sig.clone(), out.len());
                out.push(DedupEntry {
                    index: i,
                    signature: sig,
                    weight: 1,
                });
            }
        }
    }
    Ok(out)
}
