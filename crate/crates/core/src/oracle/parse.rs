use crate::data::Alternative;
use crate::error::{Error, Result};

fn keyword(word: &str) -> Option<Alternative> {
    match word {
        "train" => Some(Alternative::Train),
        "swissmetro" | "metro" | "sm" => Some(Alternative::Swissmetro),
        "car" | "drive" => Some(Alternative::Car),
        _ => None,
    }
}

fn modes_in(text: &str) -> Vec<Alternative> {
    let lower = text.to_lowercase();
    let mut found: Vec<Alternative> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter_map(keyword)
        .collect();
    found.sort();
    found.dedup();
    found
}

/// Extracts the chosen mode from a free-text answer.
///
/// If a `Final answer:` line is present (case-insensitive; the last one wins)
/// only its remainder is inspected. Exactly one distinct mode must be named.
pub fn parse_choice_response(text: &str) -> Result<Alternative> {
    let err = |reason: &str| Error::ResponseFormat {
        reason: reason.to_string(),
        raw: text.to_string(),
    };
    if text.trim().is_empty() {
        return Err(err("empty response"));
    }
    let final_line = text.lines().rev().find_map(|line| {
        let lower = line.to_lowercase();
        lower.find("final answer").map(|pos| {
            lower[pos + "final answer".len()..]
                .trim_start_matches([':', ' ', '*', '-'])
                .to_string()
        })
    });
    let scope = final_line.as_deref().unwrap_or(text);
    match modes_in(scope).as_slice() {
        [one] => Ok(*one),
        [] => Err(err("no travel mode named")),
        _ => Err(err("more than one travel mode named")),
    }
}
