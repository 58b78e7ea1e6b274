//! Structured questions: rendering, extraction, sanitization, region
//! resolution and semantic signatures.

mod extract;
mod sanitize;
mod sample;
mod signature;
mod template;

pub use extract::{extract_entities, resolve_camera_reference, Extractor, TemplateExtractor};
pub use sanitize::{sanitize, sanitize_with_report, AliasTable, PoolIssue, PoolView, SanitizeReport};
pub use sample::sample_params;
pub use signature::{dedup, semantic_signature, DedupEntry, DedupError, SemanticSignature};
pub use template::{render_question, RenderError};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::tasks::{ContextRef, Role, TaskType};

/// A role's value. Which variant is legal depends on the role kind.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Image(u8),
    Text(String),
    List(Vec<String>),
}

impl ParamValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[String]> {
        match self {
            ParamValue::List(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_image(&self) -> Option<u8> {
        match self {
            ParamValue::Image(i) => Some(*i),
            _ => None,
        }
    }
}

/// Role → value map; a missing value is an explicit `None`.
pub type Params = BTreeMap<Role, Option<ParamValue>>;

pub fn text(s: &str) -> Option<ParamValue> {
    Some(ParamValue::Text(s.to_string()))
}

pub fn image(i: u8) -> Option<ParamValue> {
    Some(ParamValue::Image(i))
}

pub fn list<S: AsRef<str>>(items: &[S]) -> Option<ParamValue> {
    Some(ParamValue::List(items.iter().map(|s| s.as_ref().to_string()).collect()))
}

/// Params holding exactly the schema's roles, all null.
pub fn empty_params(task: TaskType) -> Params {
    task.schema().role_names().map(|r| (r, None)).collect()
}

pub fn param_text(params: &Params, role: Role) -> Option<&str> {
    params.get(&role)?.as_ref()?.as_text()
}

pub fn param_image(params: &Params, role: Role) -> Option<u8> {
    params.get(&role)?.as_ref()?.as_image()
}

pub fn param_list(params: &Params, role: Role) -> Option<&[String]> {
    params.get(&role)?.as_ref()?.as_list()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredQuestion {
    pub task: TaskType,
    pub params: Params,
    pub context: ContextRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
}

impl StructuredQuestion {
    pub fn new(task: TaskType, params: Params, context: ContextRef) -> Self {
        StructuredQuestion {
            task,
            params,
            context,
            raw_text: None,
            observation: None,
        }
    }
}

/// Region phrase → anchor labels in priority order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionOntology {
    regions: BTreeMap<String, Vec<String>>,
}

impl Default for RegionOntology {
    fn default() -> Self {
        let table: &[(&str, &[&str])] = &[
            ("sleeping area", &["bed", "night stand", "dresser"]),
            ("kitchen area", &["stove", "sink", "refrigerator", "oven", "microwave"]),
            ("bathroom area", &["toilet", "bathtub", "sink", "mirror"]),
            ("living area", &["sofa", "television", "armchair", "fireplace", "ottoman"]),
            ("dining area", &["table", "chair"]),
            ("work area", &["desk", "monitor", "printer", "laptop"]),
        ];
        RegionOntology {
            regions: table
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
                .collect(),
        }
    }
}

impl RegionOntology {
    pub fn new(regions: BTreeMap<String, Vec<String>>) -> Self {
        RegionOntology {
            regions: regions
                .into_iter()
                .map(|(k, v)| (normalize_phrase(&k), v.into_iter().map(|l| l.trim().to_lowercase()).collect()))
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        Ok(RegionOntology::new(raw))
    }

    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        self.regions.keys().map(String::as_str)
    }

    pub fn anchors_for(&self, phrase: &str) -> Option<&[String]> {
        self.regions.get(&normalize_phrase(phrase)).map(Vec::as_slice)
    }

    /// First anchor for the phrase (ontology order) present in `anchors`.
    pub fn resolve(&self, phrase: &str, anchors: &BTreeSet<String>) -> Option<String> {
        self.anchors_for(phrase)?
            .iter()
            .find(|a| anchors.contains(*a))
            .cloned()
    }

    pub fn has_resolvable_region(&self, anchors: &BTreeSet<String>) -> bool {
        self.regions
            .values()
            .any(|list| list.iter().any(|a| anchors.contains(a)))
    }

    /// Region phrases that resolve against `anchors`.
    pub fn resolvable_phrases(&self, anchors: &BTreeSet<String>) -> Vec<&str> {
        self.regions
            .iter()
            .filter(|(_, list)| list.iter().any(|a| anchors.contains(a)))
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

pub fn resolve_region(phrase: &str, ontology: &RegionOntology, anchors: &BTreeSet<String>) -> Option<String> {
    ontology.resolve(phrase, anchors)
}

const ARTICLES: &[&str] = &["the ", "a ", "an "];

/// Lowercases, trims and drops a leading article.
pub fn normalize_phrase(s: &str) -> String {
    let mut s = s.trim().to_lowercase();
    for a in ARTICLES {
        if let Some(rest) = s.strip_prefix(a) {
            s = rest.trim_start().to_string();
            break;
        }
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
