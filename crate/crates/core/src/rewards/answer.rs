//! Answer parsing and per-task accuracy rules.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::format::answer_content;
use crate::geometry::{Direction, DirectionSet};
use crate::question::{normalize_phrase, param_text, AliasTable, Params};
use crate::tasks::{Elevation, GroundTruth, OutputKind, Role, TaskType, Ternary, Unit, Visibility};
use crate::text::singularize;

/// Denominator guard for relative error.
pub const REL_EPS: f64 = 1e-9;
/// Number of tolerance bands in the relative-accuracy grid.
pub const REL_BANDS: usize = 11;
/// Score for a proper-subset direction match when partial credit applies.
pub const PARTIAL_CREDIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("non-finite input to relative accuracy")]
pub struct NonFiniteInput;

/// Relative-error thresholds 0.50, 0.455, …, 0.05, as exact decimals.
pub fn relative_thresholds() -> [f64; REL_BANDS] {
    std::array::from_fn(|k| (500 - 45 * k as i64) as f64 / 1000.0)
}

/// Fraction of tolerance bands the prediction falls within.
pub fn relative_accuracy(pred: f64, gt: f64) -> Result<f64, NonFiniteInput> {
    if !pred.is_finite() || !gt.is_finite() {
        return Err(NonFiniteInput);
    }
    let d_rel = (pred - gt).abs() / gt.max(REL_EPS);
    Ok(relative_accuracy_from_error(d_rel))
}

pub fn relative_accuracy_from_error(d_rel: f64) -> f64 {
    let hits = relative_thresholds().iter().filter(|t| d_rel <= **t).count();
    hits as f64 / REL_BANDS as f64
}

pub fn counting_accuracy(pred: i64, gt: i64) -> f64 {
    match (pred - gt).unsigned_abs() {
        0 => 1.0,
        1 => 0.3,
        2 => 0.1,
        _ => 0.0,
    }
}

pub fn direction_set_accuracy(pred: DirectionSet, gt: DirectionSet, partial_credit: bool) -> f64 {
    if pred == gt {
        1.0
    } else if partial_credit && (pred.is_proper_subset_of(&gt) || gt.is_proper_subset_of(&pred)) {
        PARTIAL_CREDIT
    } else {
        0.0
    }
}

/// Whether a direction task awards partial credit for subset matches.
pub fn partial_credit(task: TaskType) -> bool {
    task != TaskType::RelativeDirection
}

/// A typed Solver answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prediction {
    Count { value: i64 },
    /// Already converted into the task's unit.
    Metric { value: f64 },
    Label { value: String },
    Direction { value: DirectionSet },
    Ternary { value: Ternary },
    Elevation { value: Elevation },
    Visibility { value: Visibility },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unparseable answer: {0}")]
pub struct Unparseable(pub String);

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?").unwrap())
}

const NUMBER_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
];

/// Length of one unit in meters; area units are squared.
fn unit_scale(word: &str) -> Option<(f64, bool)> {
    Some(match word {
        "mm" | "millimeter" | "millimeters" | "millimetre" | "millimetres" => (0.001, false),
        "cm" | "centimeter" | "centimeters" | "centimetre" | "centimetres" => (0.01, false),
        "m" | "meter" | "meters" | "metre" | "metres" => (1.0, false),
        "km" | "kilometer" | "kilometers" => (1000.0, false),
        "in" | "inch" | "inches" => (0.0254, false),
        "ft" | "foot" | "feet" => (0.3048, false),
        "m2" | "m²" | "sqm" => (1.0, true),
        "ft2" | "ft²" | "sqft" => (0.3048, true),
        _ => return None,
    })
}

fn detect_unit(rest: &str) -> Option<(f64, bool)> {
    let words: Vec<String> = rest
        .split(|c: char| c.is_whitespace() || c == ',' || c == ';')
        .filter(|w| !w.is_empty())
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '²').to_lowercase())
        .collect();
    let first = words.first()?;
    if first == "square" || first == "sq" {
        let (s, _) = unit_scale(words.get(1)?)?;
        return Some((s, true));
    }
    let (s, area) = unit_scale(first)?;
    if !area && words.get(1).is_some_and(|w| w == "squared") {
        return Some((s, true));
    }
    Some((s, area))
}

fn parse_metric(text: &str, unit: Unit) -> Result<f64, Unparseable> {
    let m = number_re()
        .find(text)
        .ok_or_else(|| Unparseable(text.to_string()))?;
    let value: f64 = m.as_str().parse().map_err(|_| Unparseable(text.to_string()))?;
    if !value.is_finite() {
        return Err(Unparseable(text.to_string()));
    }
    let (target_scale, target_area) = match unit {
        Unit::Centimeters => (0.01, false),
        Unit::Meters => (1.0, false),
        Unit::SquareMeters => (1.0, true),
    };
    let Some((scale, area)) = detect_unit(&text[m.end()..]) else {
        return Ok(value);
    };
    if area != target_area {
        // a length unit on an area task (or the reverse) is taken as the task unit
        return Ok(value);
    }
    let factor = if area {
        (scale / target_scale) * (scale / target_scale)
    } else {
        scale / target_scale
    };
    Ok(value * factor)
}

fn parse_count(text: &str) -> Result<i64, Unparseable> {
    if let Some(m) = number_re().find(text) {
        let v: f64 = m.as_str().parse().map_err(|_| Unparseable(text.to_string()))?;
        if v.fract() == 0.0 && v.is_finite() {
            return Ok(v as i64);
        }
        return Err(Unparseable(text.to_string()));
    }
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !c.is_alphabetic())
        .find_map(|w| NUMBER_WORDS.iter().position(|n| *n == w))
        .map(|i| i as i64)
        .ok_or_else(|| Unparseable(text.to_string()))
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_directions(text: &str) -> Result<DirectionSet, Unparseable> {
    let dirs: Vec<Direction> = words(text).iter().filter_map(|w| Direction::parse(w)).collect();
    DirectionSet::new(&dirs).ok_or_else(|| Unparseable(text.to_string()))
}

fn canonical_label(text: &str, aliases: &AliasTable) -> String {
    let n = normalize_phrase(text.trim_end_matches(['.', '!']));
    let single = singularize(&n);
    aliases
        .get(&n)
        .or_else(|| aliases.get(&single))
        .map(str::to_string)
        .unwrap_or(single)
}

fn parse_ternary(text: &str, params: Option<&Params>, aliases: &AliasTable) -> Result<Ternary, Unparseable> {
    let w = words(text);
    let has = |s: &str| w.iter().any(|x| x == s);
    let joined = w.join(" ");
    if has("same") || has("equal") || has("similar") || joined.contains("about the same") {
        return Ok(Ternary::Same);
    }
    if has("obj1") || joined.contains("object 1") || has("first") || joined == "1" || joined == "a" {
        return Ok(Ternary::Obj1);
    }
    if has("obj2") || joined.contains("object 2") || has("second") || joined == "2" || joined == "b" {
        return Ok(Ternary::Obj2);
    }
    if let Some(p) = params {
        let label = canonical_label(text, aliases);
        if param_text(p, Role::ObjectA) == Some(label.as_str()) {
            return Ok(Ternary::Obj1);
        }
        if param_text(p, Role::ObjectB) == Some(label.as_str()) {
            return Ok(Ternary::Obj2);
        }
    }
    Err(Unparseable(text.to_string()))
}

fn parse_elevation(text: &str) -> Result<Elevation, Unparseable> {
    let w = words(text);
    let has = |s: &str| w.iter().any(|x| x == s);
    if has("same") || has("level") || has("equal") {
        Ok(Elevation::SameLevel)
    } else if has("higher") || has("above") || has("up") || has("high") {
        Ok(Elevation::Higher)
    } else if has("lower") || has("below") || has("down") || has("low") {
        Ok(Elevation::Lower)
    } else {
        Err(Unparseable(text.to_string()))
    }
}

fn parse_visibility(text: &str) -> Result<Visibility, Unparseable> {
    let w = words(text);
    let has = |s: &str| w.iter().any(|x| x == s);
    if has("neither") || has("none") {
        Ok(Visibility::Neither)
    } else if has("same") || has("both") || has("equal") || has("equally") {
        Ok(Visibility::Same)
    } else if has("image1") || has("1") || has("first") {
        Ok(Visibility::Image1)
    } else if has("image2") || has("2") || has("second") {
        Ok(Visibility::Image2)
    } else {
        Err(Unparseable(text.to_string()))
    }
}

/// Parses a Solver response (tagged or bare) into a typed prediction.
/// `params` lets choice tasks accept the object label as an answer.
pub fn parse_answer_with(text: &str, task: TaskType, params: Option<&Params>) -> Result<Prediction, Unparseable> {
    let body = answer_content(text).unwrap_or_else(|| text.trim().to_string());
    let aliases = AliasTable::default();
    Ok(match task.output_kind() {
        OutputKind::Count => Prediction::Count {
            value: parse_count(&body)?,
        },
        OutputKind::Metric(unit) => Prediction::Metric {
            value: parse_metric(&body, unit)?,
        },
        OutputKind::Label => {
            let label = canonical_label(&body, &aliases);
            if label.is_empty() {
                return Err(Unparseable(body));
            }
            Prediction::Label { value: label }
        }
        OutputKind::Direction | OutputKind::Motion => Prediction::Direction {
            value: parse_directions(&body)?,
        },
        OutputKind::Ternary => Prediction::Ternary {
            value: parse_ternary(&body, params, &aliases)?,
        },
        OutputKind::Elevation => Prediction::Elevation {
            value: parse_elevation(&body)?,
        },
        OutputKind::Visibility => Prediction::Visibility {
            value: parse_visibility(&body)?,
        },
    })
}

pub fn parse_answer(text: &str, task: TaskType) -> Result<Prediction, Unparseable> {
    parse_answer_with(text, task, None)
}

/// Per-task accuracy in [0, 1]; a prediction of the wrong kind scores 0.
pub fn solver_accuracy(pred: &Prediction, gt: &GroundTruth, task: TaskType) -> f64 {
    match (pred, gt) {
        (Prediction::Count { value: p }, GroundTruth::Count { value: g }) => counting_accuracy(*p, *g as i64),
        (Prediction::Metric { value: p }, GroundTruth::Metric { value: g, .. }) => {
            relative_accuracy(*p, *g).unwrap_or(0.0)
        }
        (Prediction::Label { value: p }, GroundTruth::Label { value: g }) => f64::from(u8::from(p == g)),
        (Prediction::Direction { value: p }, GroundTruth::Direction { value: g }) => {
            direction_set_accuracy(*p, *g, partial_credit(task))
        }
        (Prediction::Direction { value: p }, GroundTruth::Motion { value: g }) => {
            direction_set_accuracy(*p, g.0, partial_credit(task))
        }
        (Prediction::Ternary { value: p }, GroundTruth::Ternary { value: g }) => f64::from(u8::from(p == g)),
        (Prediction::Elevation { value: p }, GroundTruth::Elevation { value: g }) => f64::from(u8::from(p == g)),
        (Prediction::Visibility { value: p }, GroundTruth::Visibility { value: g }) => f64::from(u8::from(p == g)),
        _ => 0.0,
    }
}

/// Canonical answer text for a ground truth; parses back to full accuracy.
pub fn render_answer(gt: &GroundTruth) -> String {
    match gt {
        GroundTruth::Count { value } => value.to_string(),
        GroundTruth::Metric { value, unit } => format!("{value} {}", unit.symbol()),
        GroundTruth::Label { value } => value.clone(),
        GroundTruth::Direction { value } => value.names().join("-"),
        GroundTruth::Motion { value } => value.0.iter().map(Direction::motion_name).collect::<Vec<_>>().join("-"),
        GroundTruth::Ternary { value } => match value {
            Ternary::Obj1 => "obj1".into(),
            Ternary::Obj2 => "obj2".into(),
            Ternary::Same => "same".into(),
        },
        GroundTruth::Elevation { value } => match value {
            Elevation::Higher => "higher".into(),
            Elevation::Lower => "lower".into(),
            Elevation::SameLevel => "same level".into(),
        },
        GroundTruth::Visibility { value } => match value {
            Visibility::Image1 => "image 1".into(),
            Visibility::Image2 => "image 2".into(),
            Visibility::Same => "same".into(),
            Visibility::Neither => "neither".into(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::MotionSet;

    #[test]
    fn thresholds_are_the_linspace_complement() {
        let t = relative_thresholds();
        for (k, v) in t.iter().enumerate() {
            let c = 0.50 + 0.045 * k as f64;
            assert!((v - (1.0 - c)).abs() < 1e-12);
        }
        assert_eq!(t[0], 0.5);
        assert_eq!(t[10], 0.05);
    }

    #[test]
    fn relative_grid_examples() {
        assert_eq!(relative_accuracy(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(relative_accuracy_from_error(0.30), 5.0 / 11.0);
        assert_eq!(relative_accuracy_from_error(0.60), 0.0);
        assert_eq!(relative_accuracy(22.0, 20.0).unwrap(), 9.0 / 11.0);
        assert!(relative_accuracy(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn counting_grid() {
        assert_eq!(counting_accuracy(5, 5), 1.0);
        assert_eq!(counting_accuracy(4, 5), 0.3);
        assert_eq!(counting_accuracy(7, 5), 0.1);
        assert_eq!(counting_accuracy(8, 5), 0.0);
    }

    #[test]
    fn direction_sets() {
        use Direction::*;
        let fl = DirectionSet::new(&[Front, Left]).unwrap();
        let f = DirectionSet::single(Front);
        assert_eq!(direction_set_accuracy(fl, fl, true), 1.0);
        assert_eq!(direction_set_accuracy(f, fl, true), 0.5);
        assert_eq!(direction_set_accuracy(fl, f, true), 0.5);
        assert_eq!(direction_set_accuracy(f, fl, false), 0.0);
        assert_eq!(direction_set_accuracy(DirectionSet::single(Back), f, true), 0.0);
    }

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse_answer("<answer>2.5 meters</answer>", TaskType::AbsoluteDistance).unwrap(),
            Prediction::Metric { value: 2.5 }
        );
        assert_eq!(
            parse_answer("<answer>250 cm</answer>", TaskType::AbsoluteDistance).unwrap(),
            Prediction::Metric { value: 2.5 }
        );
        assert_eq!(
            parse_answer("<answer>front-left</answer>", TaskType::CamObjPosition).unwrap(),
            Prediction::Direction {
                value: DirectionSet::new(&[Direction::Front, Direction::Left]).unwrap()
            }
        );
        assert!(parse_answer("<answer>maybe</answer>", TaskType::ObjectCounting).is_err());
        assert_eq!(
            parse_answer("<answer>three</answer>", TaskType::ObjectCounting).unwrap(),
            Prediction::Count { value: 3 }
        );
        assert_eq!(
            parse_answer("<answer>about 20 square meters</answer>", TaskType::RoomSize).unwrap(),
            Prediction::Metric { value: 20.0 }
        );
    }

    #[test]
    fn accuracy_examples() {
        let same = GroundTruth::Ternary { value: Ternary::Same };
        let p = parse_answer("<answer>same</answer>", TaskType::DepthOrder).unwrap();
        assert_eq!(solver_accuracy(&p, &same, TaskType::DepthOrder), 1.0);
        let left = GroundTruth::Motion {
            value: MotionSet(DirectionSet::single(Direction::Left)),
        };
        let p = parse_answer("<answer>counterclockwise</answer>", TaskType::CameraMotion).unwrap();
        assert_eq!(solver_accuracy(&p, &left, TaskType::CameraMotion), 1.0);
        let area = GroundTruth::Metric {
            value: 20.0,
            unit: Unit::SquareMeters,
        };
        let p = parse_answer("<answer>22</answer>", TaskType::RoomSize).unwrap();
        assert_eq!(solver_accuracy(&p, &area, TaskType::RoomSize), 9.0 / 11.0);
    }
}
