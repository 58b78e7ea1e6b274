//! Two-layer label normalization: lexical cleanup followed by pool-aware
//! remapping.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{normalize_phrase, ParamValue, Params};
use crate::scene::{GroundedPools, LabelSet, Scene};
use crate::tasks::{ContextRef, PoolKind, Role, RoleKind, TaskType};
use crate::text::{normalized_edit_distance, singularize};

/// Maximum normalized edit distance for a pool remap.
pub const REMAP_THRESHOLD: f64 = 0.25;

const STOPWORDS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "of", "in", "on", "near", "small", "large", "big", "little",
    "tall", "short", "wooden", "metal", "white", "black", "brown", "gray", "grey", "red", "blue", "green", "yellow",
    "old", "new", "round", "square", "left", "right", "other",
];

/// Surface form → canonical label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AliasTable {
    map: BTreeMap<String, String>,
}

impl Default for AliasTable {
    fn default() -> Self {
        let pairs = [
            ("nightstand", "night stand"),
            ("bedside table", "night stand"),
            ("tv", "television"),
            ("fridge", "refrigerator"),
            ("couch", "sofa"),
            ("trashcan", "trash can"),
            ("garbage can", "trash can"),
            ("bookcase", "bookshelf"),
            ("washer", "washing machine"),
        ];
        AliasTable::new(pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect())
    }
}

impl AliasTable {
    pub fn new(map: BTreeMap<String, String>) -> Self {
        AliasTable {
            map: map
                .into_iter()
                .map(|(k, v)| (normalize_phrase(&k), normalize_phrase(&v)))
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(AliasTable::new(serde_json::from_str(text)?))
    }

    pub fn get(&self, surface: &str) -> Option<&str> {
        self.map.get(surface).map(String::as_str)
    }

    fn default_ref() -> &'static AliasTable {
        static DEFAULT: OnceLock<AliasTable> = OnceLock::new();
        DEFAULT.get_or_init(AliasTable::default)
    }
}

/// The pools a question is checked against: one scene, its pools, and the
/// question's context frames.
#[derive(Debug, Clone, Copy)]
pub struct PoolView<'a> {
    pub scene: &'a Scene,
    pub pools: &'a GroundedPools,
    pub context: &'a ContextRef,
    pub aliases: &'a AliasTable,
}

impl<'a> PoolView<'a> {
    pub fn new(scene: &'a Scene, pools: &'a GroundedPools, context: &'a ContextRef) -> Self {
        PoolView {
            scene,
            pools,
            context,
            aliases: AliasTable::default_ref(),
        }
    }

    pub fn with_aliases(mut self, aliases: &'a AliasTable) -> Self {
        self.aliases = aliases;
        self
    }

    /// Resolves a pool kind to a concrete label set. Pools that depend on a
    /// frame the context or params do not pin down return `None`.
    pub fn label_set(&self, kind: PoolKind, params: &Params) -> Option<LabelSet> {
        let frames = &self.context.frames;
        let pair = || (frames.len() == 2).then(|| (frames[0], frames[1]));
        let reference_frame = || {
            let idx = super::param_image(params, Role::ReferenceImage)?;
            self.context.image_frame(idx)
        };
        match kind {
            PoolKind::Countable => Some(self.scene.countable_labels()),
            PoolKind::UniqueScene => Some(self.pools.unique_scene.clone()),
            PoolKind::FrameUnique => {
                (frames.len() == 1).then(|| self.pools.frame_unique(frames[0]).cloned())?
            }
            PoolKind::ReferenceFrameUnique => self.pools.frame_unique(reference_frame()?).cloned(),
            PoolKind::PairVisible => {
                let (a, b) = pair()?;
                self.pools.pair_visible(a, b).cloned()
            }
            PoolKind::PairNonAmbiguous => {
                let (a, b) = pair()?;
                self.pools.pair_non_ambiguous(a, b).cloned()
            }
            PoolKind::RegionAnchor => self.pools.anchors(reference_frame()?).cloned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolIssue {
    pub role: Role,
    /// The label as it reached the sanitizer.
    pub label: String,
    pub pool: PoolKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SanitizeReport {
    pub params: Params,
    /// Roles that were non-null before sanitization and null after.
    pub issues: Vec<PoolIssue>,
}

fn compact(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace() && *c != '-').collect()
}

fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    let words: Vec<&str> = haystack.split_whitespace().collect();
    let target: Vec<&str> = phrase.split_whitespace().collect();
    !target.is_empty() && words.windows(target.len()).any(|w| w == target.as_slice())
}

/// Maps a raw label into `pool`, or `None` when no layer finds a match.
fn sanitize_label(raw: &str, pool: &LabelSet, aliases: &AliasTable) -> Option<String> {
    let s = normalize_phrase(raw);
    if s.is_empty() {
        return None;
    }
    let lexical = |s: &str| -> Option<String> {
        if pool.contains(s) {
            return Some(s.to_string());
        }
        if let Some(a) = aliases.get(s).filter(|a| pool.contains(*a)) {
            return Some(a.to_string());
        }
        let single = singularize(s);
        if pool.contains(&single) {
            return Some(single);
        }
        if let Some(a) = aliases.get(&single).filter(|a| pool.contains(*a)) {
            return Some(a.to_string());
        }
        let c = compact(s);
        if let Some(a) = aliases.get(&c).filter(|a| pool.contains(*a)) {
            return Some(a.to_string());
        }
        pool.iter().find(|p| compact(p) == c).cloned()
    };
    if let Some(hit) = lexical(&s) {
        return Some(hit);
    }
    // longest pool label appearing as a whole phrase; BTreeSet order breaks ties
    let mut best: Option<&String> = None;
    for p in pool {
        if contains_phrase(&s, p) && best.is_none_or(|b| p.len() > b.len()) {
            best = Some(p);
        }
    }
    if let Some(hit) = best {
        return Some(hit.clone());
    }
    let stripped: Vec<&str> = s.split_whitespace().filter(|w| !STOPWORDS.contains(w)).collect();
    if !stripped.is_empty() {
        let joined = stripped.join(" ");
        if let Some(hit) = lexical(&joined) {
            return Some(hit);
        }
        let aliased: Vec<String> = stripped
            .iter()
            .filter_map(|w| aliases.get(w).or_else(|| aliases.get(&singularize(w))))
            .filter(|a| pool.contains(*a))
            .map(str::to_string)
            .collect();
        if aliased.len() == 1 {
            return aliased.into_iter().next();
        }
    }
    let mut nearest: Option<(f64, &String)> = None;
    for p in pool {
        let d = normalized_edit_distance(&s, p);
        if d <= REMAP_THRESHOLD && nearest.is_none_or(|(bd, _)| d < bd) {
            nearest = Some((d, p));
        }
    }
    nearest.map(|(_, p)| p.clone())
}

/// Applies both normalization layers to every label role, recording each
/// role the pool-aware layer had to drop.
pub fn sanitize_with_report(task: TaskType, params: &Params, view: &PoolView<'_>) -> SanitizeReport {
    let schema = task.schema();
    let mut out = params.clone();
    let mut issues = Vec::new();
    for spec in schema.roles {
        let Some(Some(value)) = params.get(&spec.role) else {
            continue;
        };
        let cleaned = match (spec.kind, value) {
            (RoleKind::Region, ParamValue::Text(s)) => {
                let n = normalize_phrase(s);
                (!n.is_empty()).then_some(ParamValue::Text(n)).ok_or((s.clone(), PoolKind::RegionAnchor))
            }
            (RoleKind::Image, v) => Ok(v.clone()),
            (RoleKind::Label(pool), ParamValue::Text(s)) => view
                .label_set(pool, params)
                .and_then(|set| sanitize_label(s, &set, view.aliases))
                .map(ParamValue::Text)
                .ok_or((s.clone(), pool)),
            (RoleKind::LabelList { pool, .. }, ParamValue::List(items)) => {
                let set = view.label_set(pool, params).unwrap_or_default();
                let mut mapped = Vec::with_capacity(items.len());
                let mut failed = None;
                for item in items {
                    match sanitize_label(item, &set, view.aliases) {
                        Some(m) => mapped.push(m),
                        None => {
                            failed = Some(item.clone());
                            break;
                        }
                    }
                }
                match failed {
                    None => Ok(ParamValue::List(mapped)),
                    Some(bad) => Err((bad, pool)),
                }
            }
            // wrong value shape for the role; treated as an unusable label
            (RoleKind::Label(pool) | RoleKind::LabelList { pool, .. }, other) => {
                Err((format!("{other:?}"), pool))
            }
            (RoleKind::Region, other) => Err((format!("{other:?}"), PoolKind::RegionAnchor)),
        };
        match cleaned {
            Ok(v) => {
                out.insert(spec.role, Some(v));
            }
            Err((label, pool)) => {
                out.insert(spec.role, None);
                issues.push(PoolIssue {
                    role: spec.role,
                    label,
                    pool,
                });
            }
        }
    }
    SanitizeReport { params: out, issues }
}

pub fn sanitize(task: TaskType, params: &Params, view: &PoolView<'_>) -> Params {
    sanitize_with_report(task, params, view).params
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(items: &[&str]) -> LabelSet {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn s(raw: &str, p: &[&str]) -> Option<String> {
        sanitize_label(raw, &pool(p), &AliasTable::default())
    }

    #[test]
    fn alias_layer() {
        assert_eq!(s("Nightstand", &["night stand", "bed"]), Some("night stand".into()));
        assert_eq!(s("TV", &["television"]), Some("television".into()));
    }

    #[test]
    fn remap_failure_is_null() {
        assert_eq!(s("sofa", &["couch", "bed"]), None);
    }

    #[test]
    fn adjectives_are_stripped() {
        assert_eq!(s("the wooden chair", &["chair"]), Some("chair".into()));
        assert_eq!(s("small wooden night-stand", &["night stand"]), Some("night stand".into()));
    }

    #[test]
    fn whole_word_match_prefers_longest() {
        assert_eq!(s("coat rack by the door", &["coat rack", "door"]), Some("coat rack".into()));
        assert_eq!(s("armchair", &["chair"]), None);
    }

    #[test]
    fn edit_distance_layer() {
        assert_eq!(s("refrigerater", &["refrigerator", "bed"]), Some("refrigerator".into()));
        assert_eq!(s("chiar", &["chair"]), None);
    }

    #[test]
    fn plural_surface_forms() {
        assert_eq!(s("chairs", &["chair"]), Some("chair".into()));
    }
}
