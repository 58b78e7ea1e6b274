//! Small English helpers shared by templates, sanitization and asset checks.

const IRREGULAR: &[(&str, &str)] = &[
    ("shelf", "shelves"),
    ("bookshelf", "bookshelves"),
    ("knife", "knives"),
    ("person", "people"),
    ("mouse", "mice"),
    ("foot", "feet"),
];

fn ends_with_any(word: &str, suffixes: &[&str]) -> bool {
    suffixes.iter().any(|s| word.ends_with(s))
}

fn split_last_word(label: &str) -> (&str, &str) {
    match label.rfind(' ') {
        Some(i) => (&label[..=i], &label[i + 1..]),
        None => ("", label),
    }
}

fn pluralize_word(word: &str) -> String {
    if let Some((_, p)) = IRREGULAR.iter().find(|(s, _)| *s == word) {
        return (*p).to_string();
    }
    if ends_with_any(word, &["s", "x", "z", "ch", "sh"]) {
        return format!("{word}es");
    }
    if let Some(stem) = word.strip_suffix('y') {
        if !stem.is_empty() && !ends_with_any(stem, &["a", "e", "i", "o", "u"]) {
            return format!("{stem}ies");
        }
    }
    format!("{word}s")
}

fn singularize_word(word: &str) -> String {
    if let Some((s, _)) = IRREGULAR.iter().find(|(_, p)| *p == word) {
        return (*s).to_string();
    }
    if ends_with_any(word, &["ss", "us", "is"]) {
        return word.to_string();
    }
    if let Some(stem) = word.strip_suffix("ies") {
        if !stem.is_empty() {
            return format!("{stem}y");
        }
    }
    if ends_with_any(word, &["sses", "ches", "shes", "xes", "zes"]) {
        return word[..word.len() - 2].to_string();
    }
    match word.strip_suffix('s') {
        Some(stem) if !stem.is_empty() => stem.to_string(),
        _ => word.to_string(),
    }
}

/// Plural of a (possibly multi-word) label; only the head noun changes.
pub fn pluralize(label: &str) -> String {
    let (head, last) = split_last_word(label);
    format!("{head}{}", pluralize_word(last))
}

pub fn singularize(label: &str) -> String {
    let (head, last) = split_last_word(label);
    format!("{head}{}", singularize_word(last))
}

pub fn is_plural(label: &str) -> bool {
    let s = singularize(label);
    s != label && pluralize(&s) == label
}

/// Levenshtein distance over chars.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance divided by the longer string's length.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    edit_distance(a, b) as f64 / longest as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plural_round_trip() {
        for w in [
            "bed", "couch", "glass", "bookshelf", "night stand", "trash can", "battery", "box",
        ] {
            let p = pluralize(w);
            assert_eq!(singularize(&p), w, "{w} -> {p}");
            assert!(is_plural(&p), "{p}");
            assert!(!is_plural(w), "{w}");
        }
        assert_eq!(pluralize("night stand"), "night stands");
    }

    #[test]
    fn distances() {
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("", "abc"), 3);
        assert!((normalized_edit_distance("sofa", "couch") - 0.8).abs() < 1e-12);
        assert_eq!(normalized_edit_distance("", ""), 0.0);
    }
}
