//! Per-task question templates. The first template of each task is used for
//! rendering; all of them are accepted by the reference extractor.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use super::{ParamValue, Params};
use crate::tasks::{Role, RoleKind, TaskType};
use crate::text::{pluralize, singularize};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("role '{0}' is missing or null")]
    IncompleteParams(Role),
    #[error("role '{role}' has the wrong value shape")]
    WrongShape { role: Role },
}

pub(crate) fn templates(task: TaskType) -> &'static [&'static str] {
    use TaskType::*;
    match task {
        ObjectCounting => &["How many {target:plural} are there in this room?"],
        ObjectSize => &["What is the longest edge of the {target} in centimeters?"],
        AbsoluteDistance => &[
            "What is the straight-line distance between the {object_a} and the {object_b} at their nearest points, in meters?",
        ],
        RelativeDistance => &[
            "Among the {candidates.0}, {candidates.1}, and {candidates.2}, which is closest to the {anchor} at nearest points?",
        ],
        RelativeDirection => &[
            "If I stand near the {standing} and face the {facing}, in which direction is the {target} relative to me?",
        ],
        RoomSize => &["Approximately how many square meters is this room?"],
        SvRelativeDirection => &["In this image, in which direction is the {target} relative to the {reference}?"],
        CameraObjectDistance => &["In this image, what is the distance from the camera to the {target} in meters?"],
        DepthOrder => &["Which is closer to the camera, the {object_a} or the {object_b}?"],
        CamCamPosition => &[
            "When you took Image {reference_image}, where is Image {target_image}'s camera relative to you?",
            "When I took Image {reference_image}, where is Image {target_image}'s camera relative to me?",
        ],
        CamCamElevation => &[
            "Compared to Image {reference_image}'s camera, is Image {target_image}'s camera higher or lower?",
        ],
        VisibilityComparison => &["For the {target}, which image shows it more clearly, Image 1 or Image 2?"],
        CamObjPosition => &[
            "When I took Image {reference_image}, in which direction is the {target} relative to me?",
            "When you took Image {reference_image}, in which direction is the {target} relative to you?",
        ],
        CamRegionPosition => &[
            "When you took Image {reference_image}, in which direction is the {region} relative to you?",
            "When I took Image {reference_image}, in which direction is the {region} relative to me?",
        ],
        CameraMotion => &[
            "Based on this image sequence, in which direction is the camera moving?",
            "Based on this image sequence, in which direction is the camera turning?",
        ],
        AttributeMeasurement => &["Which has the larger longest edge, the {object_a} or the {object_b}?"],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    Plain(Role),
    Plural(Role),
    Item(Role, usize),
}

impl Slot {
    pub(crate) fn role(self) -> Role {
        match self {
            Slot::Plain(r) | Slot::Plural(r) | Slot::Item(r, _) => r,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Piece {
    Literal(&'static str),
    Slot(Slot),
}

fn role_by_name(name: &str) -> Role {
    TaskType::ALL
        .iter()
        .flat_map(|t| t.schema().roles.iter().map(|r| r.role))
        .find(|r| r.name() == name)
        .unwrap_or_else(|| panic!("template names unknown role '{name}'"))
}

pub(crate) fn parse_template(template: &'static str) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            pieces.push(Piece::Literal(&rest[..open]));
        }
        let close = open + rest[open..].find('}').expect("unterminated placeholder");
        let body = &rest[open + 1..close];
        let slot = if let Some(name) = body.strip_suffix(":plural") {
            Slot::Plural(role_by_name(name))
        } else if let Some((name, idx)) = body.split_once('.') {
            Slot::Item(role_by_name(name), idx.parse().expect("numeric item index"))
        } else {
            Slot::Plain(role_by_name(body))
        };
        pieces.push(Piece::Slot(slot));
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Literal(rest));
    }
    pieces
}

pub(crate) struct CompiledTemplate {
    pub regex: Regex,
    pub slots: Vec<Slot>,
}

fn compile(template: &'static str) -> CompiledTemplate {
    let mut pattern = String::from(r"(?i)^\s*");
    let mut slots = Vec::new();
    for piece in parse_template(template) {
        match piece {
            Piece::Literal(lit) => {
                let words: Vec<String> = lit.split_whitespace().map(regex::escape).collect();
                pattern.push_str(&words.join(r"\s+"));
            }
            Piece::Slot(slot) => {
                pattern.push_str(r"\s*(.*?)\s*");
                slots.push(slot);
            }
        }
    }
    // trailing question mark is optional
    if pattern.ends_with(r"\?") {
        pattern.truncate(pattern.len() - 2);
        pattern.push_str(r"\??");
    }
    pattern.push_str(r"\s*$");
    CompiledTemplate {
        regex: Regex::new(&pattern).expect("template regex compiles"),
        slots,
    }
}

pub(crate) fn compiled(task: TaskType) -> &'static [CompiledTemplate] {
    static CACHE: OnceLock<Vec<Vec<CompiledTemplate>>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        TaskType::ALL
            .iter()
            .map(|t| templates(*t).iter().map(|s| compile(s)).collect())
            .collect()
    });
    let idx = TaskType::ALL.iter().position(|t| *t == task).unwrap();
    &all[idx]
}

/// Renders a schema-complete question into its canonical English text.
pub fn render_question(task: TaskType, params: &Params) -> Result<String, RenderError> {
    let schema = task.schema();
    for spec in schema.roles {
        let value = params
            .get(&spec.role)
            .and_then(|v| v.as_ref())
            .ok_or(RenderError::IncompleteParams(spec.role))?;
        let shape_ok = match (spec.kind, value) {
            (RoleKind::Label(_) | RoleKind::Region, ParamValue::Text(s)) => !s.trim().is_empty(),
            (RoleKind::LabelList { .. }, ParamValue::List(items)) => !items.is_empty(),
            (RoleKind::Image, ParamValue::Image(i)) => matches!(i, 1 | 2),
            _ => false,
        };
        if !shape_ok {
            return Err(RenderError::WrongShape { role: spec.role });
        }
    }
    let mut out = String::new();
    for piece in parse_template(templates(task)[0]) {
        match piece {
            Piece::Literal(s) => out.push_str(s),
            Piece::Slot(slot) => {
                let value = params[&slot.role()].as_ref().unwrap();
                match (slot, value) {
                    (Slot::Plain(_), ParamValue::Text(s)) => out.push_str(s),
                    (Slot::Plural(_), ParamValue::Text(s)) => out.push_str(&pluralize(s)),
                    (Slot::Plain(_), ParamValue::Image(i)) => out.push_str(&i.to_string()),
                    (Slot::Item(role, k), ParamValue::List(items)) => {
                        let item = items.get(k).ok_or(RenderError::IncompleteParams(role))?;
                        out.push_str(item);
                    }
                    (slot, _) => return Err(RenderError::WrongShape { role: slot.role() }),
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn clean_capture(slot: Slot, raw: &str) -> Option<String> {
    let s = super::normalize_phrase(raw);
    if s.is_empty() {
        return None;
    }
    Some(match slot {
        Slot::Plural(_) => singularize(&s),
        _ => s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::question::{empty_params, image, list, text};

    #[test]
    fn reference_question_texts() {
        let mut p = empty_params(TaskType::AbsoluteDistance);
        p.insert(Role::ObjectA, text("fireplace"));
        p.insert(Role::ObjectB, text("tv"));
        assert_eq!(
            render_question(TaskType::AbsoluteDistance, &p).unwrap(),
            "What is the straight-line distance between the fireplace and the tv at their nearest points, in meters?"
        );
        assert_eq!(
            render_question(TaskType::RoomSize, &empty_params(TaskType::RoomSize)).unwrap(),
            "Approximately how many square meters is this room?"
        );
        let mut p = empty_params(TaskType::RelativeDistance);
        p.insert(Role::Anchor, text("bed"));
        p.insert(Role::Candidates, list(&["chair", "coat rack", "table"]));
        assert_eq!(
            render_question(TaskType::RelativeDistance, &p).unwrap(),
            "Among the chair, coat rack, and table, which is closest to the bed at nearest points?"
        );
        let mut p = empty_params(TaskType::CamObjPosition);
        p.insert(Role::ReferenceImage, image(1));
        p.insert(Role::Target, text("table"));
        assert_eq!(
            render_question(TaskType::CamObjPosition, &p).unwrap(),
            "When I took Image 1, in which direction is the table relative to me?"
        );
        let mut p = empty_params(TaskType::ObjectCounting);
        p.insert(Role::Target, text("window"));
        assert_eq!(
            render_question(TaskType::ObjectCounting, &p).unwrap(),
            "How many windows are there in this room?"
        );
    }

    #[test]
    fn missing_role_is_incomplete() {
        let mut p = empty_params(TaskType::AbsoluteDistance);
        p.insert(Role::ObjectA, text("bed"));
        assert_eq!(
            render_question(TaskType::AbsoluteDistance, &p),
            Err(RenderError::IncompleteParams(Role::ObjectB))
        );
        let mut p = empty_params(TaskType::CamCamPosition);
        p.insert(Role::ReferenceImage, image(3));
        p.insert(Role::TargetImage, image(1));
        assert_eq!(
            render_question(TaskType::CamCamPosition, &p),
            Err(RenderError::WrongShape {
                role: Role::ReferenceImage
            })
        );
    }

    #[test]
    fn all_templates_compile() {
        for t in TaskType::ALL {
            let c = compiled(t);
            assert!(!c.is_empty());
            for ct in c {
                let roles: std::collections::BTreeSet<_> = ct.slots.iter().map(|s| s.role()).collect();
                let schema: std::collections::BTreeSet<_> = t.schema().role_names().collect();
                assert_eq!(roles, schema, "{t}");
            }
        }
    }
}
