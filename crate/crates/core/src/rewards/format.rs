//! Tag grammar for Questioner and Solver outputs.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
struct Tag {
    name: String,
    closing: bool,
    start: usize,
    end: usize,
}

fn tags(text: &str) -> Vec<Tag> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"<\s*(/?)\s*([A-Za-z][A-Za-z0-9_\-]*)\s*/?\s*>").unwrap());
    re.captures_iter(text)
        .map(|c| {
            let m = c.get(0).unwrap();
            Tag {
                name: c[2].to_ascii_lowercase(),
                closing: !c[1].is_empty(),
                start: m.start(),
                end: m.end(),
            }
        })
        .collect()
}

/// A balanced, flat (non-nested) element.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Element {
    name: String,
    inner: String,
}

/// Splits text into flat elements; `None` on nesting, interleaving, a stray
/// closing tag, or an unclosed tag.
fn flat_elements(text: &str) -> Option<Vec<Element>> {
    let mut out = Vec::new();
    let mut open: Option<&Tag> = None;
    let all = tags(text);
    for tag in &all {
        match (open, tag.closing) {
            (None, false) => open = Some(tag),
            (None, true) => return None,
            (Some(_), false) => return None,
            (Some(o), true) => {
                if o.name != tag.name {
                    return None;
                }
                out.push(Element {
                    name: o.name.clone(),
                    inner: text[o.end..tag.start].to_string(),
                });
                open = None;
            }
        }
    }
    open.is_none().then_some(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionerParse {
    pub f_fmt: u8,
    pub severe: bool,
    pub observation: Option<String>,
    pub question: Option<String>,
}

impl QuestionerParse {
    /// Observation usable for scoring: present, non-empty and free of
    /// leftover angle brackets.
    pub fn clean_observation(&self) -> Option<&str> {
        self.observation
            .as_deref()
            .filter(|o| !o.trim().is_empty() && !o.contains('<') && !o.contains('>'))
    }
}

/// Parses `<observation>…</observation><question>…</question>`.
pub fn parse_questioner_output(text: &str) -> QuestionerParse {
    let severe = QuestionerParse {
        f_fmt: 0,
        severe: true,
        observation: None,
        question: None,
    };
    if text.trim().is_empty() {
        return severe;
    }
    let Some(elements) = flat_elements(text) else {
        return severe;
    };
    let find = |name: &str| {
        elements
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.inner.trim().to_string())
    };
    let observation = find("observation");
    let question = find("question");
    let names: Vec<&str> = elements.iter().map(|e| e.name.as_str()).collect();
    let well_formed = names == ["observation", "question"]
        && observation.as_deref().is_some_and(|s| !s.is_empty())
        && question.as_deref().is_some_and(|s| !s.is_empty());
    QuestionerParse {
        f_fmt: u8::from(well_formed),
        severe: false,
        observation,
        question,
    }
}

/// Binary format score and severe-failure flag for Questioner output.
pub fn questioner_format(text: &str) -> (u8, bool) {
    let p = parse_questioner_output(text);
    (p.f_fmt, p.severe)
}

/// 1 for exactly one `<answer>` element and no other tags, 0 when no tag is
/// present, −1 otherwise.
pub fn solver_format(text: &str) -> i8 {
    let all = tags(text);
    if all.is_empty() {
        return 0;
    }
    match flat_elements(text) {
        Some(els) if els.len() == 1 && els[0].name == "answer" => 1,
        _ => -1,
    }
}

/// Content of the single `<answer>` element, if the output has one.
pub fn answer_content(text: &str) -> Option<String> {
    let els = flat_elements(text)?;
    let mut answers = els.into_iter().filter(|e| e.name == "answer");
    let first = answers.next()?;
    answers.next().is_none().then(|| first.inner.trim().to_string())
}

/// Text with every tag removed, for explanation scoring.
pub fn strip_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for t in tags(text) {
        out.push_str(&text[last..t.start]);
        out.push(' ');
        last = t.end;
    }
    out.push_str(&text[last..]);
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn questioner_grammar() {
        assert_eq!(
            questioner_format("<observation>A bed by the wall.</observation><question>How many chairs?</question>"),
            (1, false)
        );
        assert_eq!(
            questioner_format("<question>How many chairs?</question><observation>room</observation>"),
            (0, false)
        );
        assert_eq!(questioner_format("<observation>x</observation><question>How many?"), (0, true));
        assert_eq!(questioner_format(""), (0, true));
        assert_eq!(
            questioner_format("<observation><question>q</question></observation>"),
            (0, true)
        );
        assert_eq!(
            questioner_format("<observation>a<question>b</observation></question>"),
            (0, true)
        );
        assert_eq!(
            questioner_format("<observation></observation><question>q</question>"),
            (0, false)
        );
        assert_eq!(
            questioner_format("<observation>o</observation><question>q</question><note>n</note>"),
            (0, false)
        );
    }

    #[test]
    fn solver_grammar() {
        assert_eq!(solver_format("thinking... <answer>3</answer>"), 1);
        assert_eq!(solver_format("3"), 0);
        assert_eq!(solver_format("<answer>3</answer><answer>4</answer>"), -1);
        assert_eq!(solver_format("<think>x</think><answer>3</answer>"), -1);
        assert_eq!(solver_format("<answer>3"), -1);
        assert_eq!(answer_content("so <answer> 2.5 m </answer>"), Some("2.5 m".into()));
        assert_eq!(strip_tags("<answer>invalid:  pool</answer>"), "invalid: pool");
    }
}
