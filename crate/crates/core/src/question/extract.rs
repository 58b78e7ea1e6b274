//! Entity extraction from question text.

use std::sync::OnceLock;

use regex::Regex;

use super::template::{clean_capture, compiled, Slot};
use super::{empty_params, ParamValue, Params};
use crate::tasks::{Role, RoleKind, TaskType};

/// Turns question text into a role map for a known task. Unresolvable roles
/// are `None`; extraction never fails outright.
pub trait Extractor: Send + Sync {
    fn extract(&self, text: &str, task: TaskType) -> Params;
}

/// Deterministic extractor that parses the template grammar.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateExtractor;

impl Extractor for TemplateExtractor {
    fn extract(&self, text: &str, task: TaskType) -> Params {
        let schema = task.schema();
        let mut params = empty_params(task);
        let Some((caps, slots)) = compiled(task)
            .iter()
            .find_map(|t| t.regex.captures(text).map(|c| (c, &t.slots)))
        else {
            if let Some(kind_role) = schema.roles.iter().find(|r| r.role == Role::ReferenceImage) {
                params.insert(kind_role.role, resolve_camera_reference(text).map(ParamValue::Image));
            }
            return params;
        };

        let mut items: Vec<(usize, Option<String>)> = Vec::new();
        for (i, slot) in slots.iter().enumerate() {
            let raw = caps.get(i + 1).map_or("", |m| m.as_str());
            let role = slot.role();
            match (schema.kind_of(role), slot) {
                (Some(RoleKind::Image), _) => {
                    let value = raw.trim().parse::<u8>().ok().map(ParamValue::Image);
                    params.insert(role, value);
                }
                (Some(RoleKind::LabelList { .. }), Slot::Item(_, k)) => {
                    items.push((*k, clean_capture(*slot, raw)));
                }
                (Some(_), _) => {
                    params.insert(role, clean_capture(*slot, raw).map(ParamValue::Text));
                }
                (None, _) => {}
            }
        }
        if let Some(list_role) = slots.iter().find_map(|s| match s {
            Slot::Item(r, _) => Some(*r),
            _ => None,
        }) {
            items.sort_by_key(|(k, _)| *k);
            let kept: Vec<String> = items.into_iter().filter_map(|(_, v)| v).collect();
            params.insert(list_role, (!kept.is_empty()).then_some(ParamValue::List(kept)));
        }
        params
    }
}

/// Extracts with `extractor` and coerces the result to exactly the task's
/// schema roles.
pub fn extract_entities(text: &str, task: TaskType, extractor: &dyn Extractor) -> Params {
    let raw = extractor.extract(text, task);
    let mut params = empty_params(task);
    for (role, slot) in params.iter_mut() {
        if let Some(v) = raw.get(role) {
            slot.clone_from(v);
        }
    }
    params
}

/// Finds the reference image index in phrases such as "when you took
/// image 2" or "compared to image 1's camera".
pub fn resolve_camera_reference(text: &str) -> Option<u8> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?i)\b(?:when\s+(?:i|you)\s+took|compared\s+to)\s+image\s+(\d+)\b").unwrap()
    });
    re.captures(text)?.get(1)?.as_str().parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::question::{image, list, render_question, text};

    fn ex(t: &str, task: TaskType) -> Params {
        extract_entities(t, task, &TemplateExtractor)
    }

    #[test]
    fn absolute_distance_round_trip() {
        let p = ex(
            "What is the straight-line distance between the fireplace and the tv at their nearest points, in meters?",
            TaskType::AbsoluteDistance,
        );
        assert_eq!(p[&Role::ObjectA], text("fireplace"));
        assert_eq!(p[&Role::ObjectB], text("tv"));
    }

    #[test]
    fn missing_phrase_is_null() {
        let p = ex(
            "What is the straight-line distance between the and the tv at their nearest points, in meters?",
            TaskType::AbsoluteDistance,
        );
        assert_eq!(p[&Role::ObjectA], None);
        assert_eq!(p[&Role::ObjectB], text("tv"));
    }

    #[test]
    fn camera_reference_is_separate_from_objects() {
        let p = ex(
            "When I took Image 1, in which direction is the table relative to me?",
            TaskType::CamObjPosition,
        );
        assert_eq!(p[&Role::ReferenceImage], image(1));
        assert_eq!(p[&Role::Target], text("table"));
        assert_eq!(resolve_camera_reference("compared to Image 2's camera"), Some(2));
        assert_eq!(resolve_camera_reference("the second picture"), None);
    }

    #[test]
    fn off_template_text_keeps_camera_reference() {
        let p = ex("When you took image 2, where's the kitchen?", TaskType::CamRegionPosition);
        assert_eq!(p[&Role::ReferenceImage], image(2));
        assert_eq!(p[&Role::Region], None);
    }

    #[test]
    fn counting_captures_are_singular() {
        let p = ex("how many chairs are there in this room", TaskType::ObjectCounting);
        assert_eq!(p[&Role::Target], text("chair"));
    }

    #[test]
    fn list_with_gap_keeps_present_items() {
        let p = ex(
            "Among the chair, , and table, which is closest to the bed at nearest points?",
            TaskType::RelativeDistance,
        );
        assert_eq!(p[&Role::Candidates], list(&["chair", "table"]));
        let p = ex(
            "Among the chair, lamp, and table, which is closest to the bed at nearest points?",
            TaskType::RelativeDistance,
        );
        let rendered = render_question(TaskType::RelativeDistance, &p).unwrap();
        assert_eq!(ex(&rendered, TaskType::RelativeDistance), p);
    }
}
