use std::sync::OnceLock;

use regex::Regex;

use super::{Factor, Persona, Ratings};
use crate::data::RespondentId;
use crate::error::{Error, Result};

pub(super) fn rating_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(travel[ _]time|travel[ _]cost|flexibility|travel[ _]habit|comfort|trip[ _]purpose)\b\W{0,4}(-?\d+)")
            .expect("static regex")
    })
}

fn factor_of(name: &str) -> Factor {
    let n = name.to_lowercase().replace('_', " ");
    *Factor::ALL
        .iter()
        .find(|f| f.label() == n)
        .expect("regex alternatives are factor labels")
}

/// Extracts the six labelled ratings. Repeated factors must agree; nothing is clamped.
pub fn parse_persona(text: &str, respondent: RespondentId) -> Result<Persona> {
    let mut found: [Option<i64>; 6] = [None; 6];
    let mut problems = Vec::new();
    for cap in rating_line().captures_iter(text) {
        let f = factor_of(&cap[1]);
        let Ok(v) = cap[2].parse::<i64>() else {
            problems.push(format!("{f}: unreadable rating {}", &cap[2]));
            continue;
        };
        match found[f.index()] {
            Some(prev) if prev != v => problems.push(format!("{f}: conflicting ratings {prev} and {v}")),
            _ => found[f.index()] = Some(v),
        }
    }
    let mut values = [0u8; 6];
    for f in Factor::ALL {
        match found[f.index()] {
            None => problems.push(format!("{f}: missing")),
            Some(v) if !(1..=10).contains(&v) => problems.push(format!("{f}: rating {v} outside 1..=10")),
            Some(v) => values[f.index()] = v as u8,
        }
    }
    problems.dedup();
    if !problems.is_empty() {
        return Err(Error::PersonaFormat {
            respondent: respondent.to_string(),
            problems,
        });
    }
    Ok(Persona {
        source: respondent,
        ratings: Ratings::new(values)?,
        summary: None,
    })
}
