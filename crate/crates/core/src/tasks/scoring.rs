//! Answer scorers. All return values in [0, 1].

use regex::Regex;
use std::collections::HashMap;
use std::sync::OnceLock;

pub const NUMERIC_TOLERANCE: f64 = 1e-6;

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?").expect("valid regex"))
}

fn choice_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b([A-D])\b").expect("valid regex"))
}

fn article_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("valid regex"))
}

/// Lenient numeric parse: thousands separators are dropped and the last
/// number in the text wins, so "1,234 apples" and "so x = 1234" both read
/// as 1234. Spelled-out numbers are not recognized.
pub fn parse_number(answer: &str) -> Option<f64> {
    let cleaned = answer.replace(',', "");
    number_re()
        .find_iter(&cleaned)
        .last()
        .and_then(|m| m.as_str().parse::<f64>().ok())
}

pub fn score_exact_numeric(answer: &str, gold: f64) -> f64 {
    match parse_number(answer) {
        Some(v) if (v - gold).abs() < NUMERIC_TOLERANCE => 1.0,
        _ => 0.0,
    }
}

/// First standalone capital letter A–D in the answer.
pub fn extract_choice(answer: &str) -> Option<char> {
    choice_re()
        .captures(answer)
        .and_then(|c| c.get(1))
        .and_then(|m| m.as_str().chars().next())
}

pub fn score_multiple_choice(answer: &str, gold: char) -> f64 {
    if extract_choice(answer) == Some(gold) {
        1.0
    } else {
        0.0
    }
}

/// Lowercase, drop punctuation and articles, collapse whitespace.
pub fn normalize_answer(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let no_punct: String = lower
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    let no_articles = article_re().replace_all(&no_punct, " ");
    no_articles.split_whitespace().map(str::to_string).collect()
}

/// Token-level F1 over normalized multisets.
pub fn score_f1(answer: &str, gold: &str) -> f64 {
    let pred = normalize_answer(answer);
    let truth = normalize_answer(gold);
    if pred.is_empty() || truth.is_empty() {
        return if pred == truth { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &truth {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / truth.len() as f64;
    2.0 * precision * recall / (precision + recall)
}
