//! Turning free-form model answers into names and boxes.

use std::sync::OnceLock;

use regex::Regex;

use crate::types::NamePair;

const FILLER: [&str; 4] = ["a", "an", "the", "some"];
const NON_ANSWERS: [&str; 5] = ["unknown", "none", "n/a", "nothing", "no"];

/// Lowercases, strips punctuation and articles, and keeps the last word
/// (the head noun of a short phrase). `"a leopard."` becomes `"leopard"`.
pub fn normalize_name(raw: &str) -> Option<String> {
    let cleaned: String = raw
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .rev()
        .find(|w| !FILLER.contains(w))
        .map(str::to_string)
}

/// Parses an answer of the form `"object, environment"`. Answers without a
/// comma are split on `" in "`/`" on "`; a missing environment becomes
/// `"background"`.
pub fn parse_names(response: &str) -> Option<NamePair> {
    let text = response.trim().trim_end_matches('.').trim().to_lowercase();
    if text.is_empty() || NON_ANSWERS.contains(&text.as_str()) {
        return None;
    }
    let (fore, back) = if let Some((f, b)) = text.split_once(',') {
        (f.to_string(), Some(b.to_string()))
    } else if let Some((f, b)) = text.split_once(" in ").or_else(|| text.split_once(" on ")) {
        (f.to_string(), Some(b.to_string()))
    } else {
        (text.clone(), None)
    };
    let fore = normalize_name(&fore)?;
    let back = back
        .and_then(|b| normalize_name(&b))
        .unwrap_or_else(|| "background".to_string());
    NamePair::new(&fore, &back).ok()
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").expect("valid regex"))
}

/// Extracts the first four numbers as `[x0, y0, x1, y1]` in patch pixels.
/// Values that are all within `[0, 1]` and written with a decimal point are
/// read as fractions of the patch size.
pub fn parse_box(response: &str, patch_width: usize, patch_height: usize) -> Option<[i64; 4]> {
    let found: Vec<&str> = number_regex().find_iter(response).map(|m| m.as_str()).take(4).collect();
    if found.len() < 4 {
        return None;
    }
    let values: Vec<f64> = found.iter().map(|s| s.parse().ok()).collect::<Option<_>>()?;
    let relative = found.iter().any(|s| s.contains('.')) && values.iter().all(|v| (0.0..=1.0).contains(v));
    let scale = |v: f64, dim: usize| {
        if relative {
            (v * dim as f64).round() as i64
        } else {
            v.round() as i64
        }
    };
    Some([
        scale(values[0], patch_width),
        scale(values[1], patch_height),
        scale(values[2], patch_width),
        scale(values[3], patch_height),
    ])
}
