//! Six-factor personas inferred from detailed panels.

mod infer;
mod parse;
mod prompt;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use infer::{infer_personas, InferenceOutcome};
pub use parse::parse_persona;
pub use prompt::{build_inference_prompt, CORRECTIVE_SUFFIX, INFERENCE_TEMPLATE_VERSION};

use crate::data::{RespondentId, SocioDemographics};
use crate::error::{Error, Result};
use crate::jsonl;

/// Persona factors in their fixed rendering order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    TravelTime,
    TravelCost,
    Flexibility,
    TravelHabit,
    Comfort,
    TripPurpose,
}

impl Factor {
    pub const ALL: [Factor; 6] = [
        Factor::TravelTime,
        Factor::TravelCost,
        Factor::Flexibility,
        Factor::TravelHabit,
        Factor::Comfort,
        Factor::TripPurpose,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Factor::TravelTime => "travel time",
            Factor::TravelCost => "travel cost",
            Factor::Flexibility => "flexibility",
            Factor::TravelHabit => "travel habit",
            Factor::Comfort => "comfort",
            Factor::TripPurpose => "trip purpose",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Six ratings in `1..=10`, indexed by [`Factor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<Factor, u8>", into = "BTreeMap<Factor, u8>")]
pub struct Ratings([u8; 6]);

impl Ratings {
    pub fn new(values: [u8; 6]) -> Result<Self> {
        let bad: Vec<String> = Factor::ALL
            .iter()
            .zip(values)
            .filter(|(_, v)| !(1..=10).contains(v))
            .map(|(f, v)| format!("{f} = {v} outside 1..=10"))
            .collect();
        if bad.is_empty() {
            Ok(Ratings(values))
        } else {
            Err(Error::Input(bad.join("; ")))
        }
    }

    /// All factors at 5; used where no persona is supplied.
    pub fn neutral() -> Self {
        Ratings([5; 6])
    }

    pub fn get(&self, f: Factor) -> u8 {
        self.0[f.index()]
    }

    pub fn values(&self) -> [u8; 6] {
        self.0
    }

    /// The highest-rated factor; ties resolve to the earliest in rendering order.
    pub fn dominant(&self) -> Factor {
        let mut best = Factor::ALL[0];
        for f in Factor::ALL {
            if self.get(f) > self.get(best) {
                best = f;
            }
        }
        best
    }
}

impl TryFrom<BTreeMap<Factor, u8>> for Ratings {
    type Error = String;
    fn try_from(map: BTreeMap<Factor, u8>) -> std::result::Result<Self, String> {
        let mut values = [0u8; 6];
        for f in Factor::ALL {
            values[f.index()] = *map.get(&f).ok_or_else(|| format!("missing factor {f}"))?;
        }
        Ratings::new(values).map_err(|e| e.to_string())
    }
}

impl From<Ratings> for BTreeMap<Factor, u8> {
    fn from(r: Ratings) -> Self {
        Factor::ALL.iter().map(|f| (*f, r.get(*f))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub source: RespondentId,
    pub ratings: Ratings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub expert_model: String,
    pub prompt_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
}

/// The persona set the loading function draws from, with the source
/// respondents' demographics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaBasis {
    pub personas: Vec<Persona>,
    pub demographics: BTreeMap<RespondentId, SocioDemographics>,
    pub provenance: Provenance,
}

pub const BASIS_FILE: &str = "personas.jsonl";
pub const BASIS_META_FILE: &str = "basis.json";

#[derive(Serialize, Deserialize)]
struct BasisMeta {
    provenance: Provenance,
    demographics: Vec<(RespondentId, SocioDemographics)>,
}

impl PersonaBasis {
    pub fn len(&self) -> usize {
        self.personas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.personas.is_empty()
    }

    pub fn demographics_of(&self, k: usize) -> SocioDemographics {
        self.demographics[&self.personas[k].source]
    }

    /// Source demographics of every persona, in basis order.
    pub fn persona_demographics(&self) -> Vec<SocioDemographics> {
        (0..self.len()).map(|k| self.demographics_of(k)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.personas {
            if !self.demographics.contains_key(&p.source) {
                return Err(Error::Input(format!(
                    "persona source {} missing from the demographics index",
                    p.source
                )));
            }
        }
        Ok(())
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        jsonl::write(&dir.join(BASIS_FILE), &self.personas)?;
        let meta = BasisMeta {
            provenance: self.provenance.clone(),
            demographics: self.demographics.iter().map(|(k, v)| (*k, *v)).collect(),
        };
        jsonl::write_json(&dir.join(BASIS_META_FILE), &meta)
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let meta: BasisMeta = jsonl::read_json(&dir.join(BASIS_META_FILE))?;
        let basis = PersonaBasis {
            personas: jsonl::read(&dir.join(BASIS_FILE))?,
            demographics: meta.demographics.into_iter().collect(),
            provenance: meta.provenance,
        };
        basis.validate()?;
        Ok(basis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ratings_bounds() {
        assert!(Ratings::new([1, 10, 5, 5, 5, 5]).is_ok());
        assert!(Ratings::new([0, 10, 5, 5, 5, 5]).is_err());
        assert!(Ratings::new([1, 11, 5, 5, 5, 5]).is_err());
    }

    #[test]
    fn dominant_prefers_first_on_ties() {
        assert_eq!(Ratings::new([3, 9, 9, 1, 1, 1]).unwrap().dominant(), Factor::TravelCost);
    }

    proptest! {
        #[test]
        fn persona_round_trip_keeps_invariants(values in proptest::array::uniform6(1u8..=10), id in 0u32..5000) {
            let p = Persona { source: RespondentId(id), ratings: Ratings::new(values).unwrap(), summary: None };
            let text = serde_json::to_string(&p).unwrap();
            let back: Persona = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn out_of_range_rating_fails_to_deserialize() {
        let text = r#"{"source":1,"ratings":{"travel_time":11,"travel_cost":1,"flexibility":1,"travel_habit":1,"comfort":1,"trip_purpose":1}}"#;
        assert!(serde_json::from_str::<Persona>(text).is_err());
    }
}
