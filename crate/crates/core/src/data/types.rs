use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A categorical socio-demographic variable with a fixed, ordered set of levels.
pub trait Category: Copy + Eq + Sized + 'static {
    const ALL: &'static [Self];
    const VARIABLE: &'static str;

    fn label(self) -> &'static str;

    fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).expect("listed")
    }

    fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

macro_rules! category {
    ($(#[$meta:meta])* $name:ident, $var:literal, { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl Category for $name {
            const ALL: &'static [Self] = &[$($name::$variant),+];
            const VARIABLE: &'static str = $var;
            fn label(self) -> &'static str {
                match self { $($name::$variant => $label),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

category!(Gender, "gender", { Female => "female", Male => "male" });
category!(AgeBand, "age", {
    Under25 => "<25",
    From25To39 => "25-39",
    From40To54 => "40-54",
    From55To65 => "55-65",
    Over65 => ">65",
});
category!(
    /// Annual income in CHF.
    IncomeBand, "income", {
    Under50k => "<50k",
    From50kTo100k => "50-100k",
    Over100k => ">100k",
});
category!(UserGroup, "group", { TrainUser => "train_user", CarUser => "car_user" });
category!(
    /// Who pays for the trip. `Unknown` is retained because the calibrated
    /// Swissmetro filter keeps respondents with an unknown payer.
    WhoPays, "who", {
    SelfPaid => "self",
    Employer => "employer",
    Half => "half",
    Unknown => "unknown",
});
category!(Luggage, "luggage", { NoLuggage => "none", One => "one", Several => "several" });

/// The three travel modes. Integer codes follow the Swissmetro `CHOICE` coding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Alternative {
    Train,
    Swissmetro,
    Car,
}

impl Alternative {
    /// Also the fixed tie-break order.
    pub const ALL: [Alternative; 3] = [Alternative::Train, Alternative::Swissmetro, Alternative::Car];

    pub fn index(self) -> usize {
        match self {
            Alternative::Train => 0,
            Alternative::Swissmetro => 1,
            Alternative::Car => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        code.checked_sub(1).and_then(|i| Self::from_index(i as usize))
    }

    pub fn name(self) -> &'static str {
        match self {
            Alternative::Train => "Train",
            Alternative::Swissmetro => "Swissmetro",
            Alternative::Car => "Car",
        }
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Alternative> for u8 {
    fn from(a: Alternative) -> u8 {
        a.code()
    }
}

impl TryFrom<u8> for Alternative {
    type Error = String;
    fn try_from(code: u8) -> std::result::Result<Self, String> {
        Alternative::from_code(code).ok_or_else(|| format!("invalid alternative code {code}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SocioDemographics {
    pub gender: Gender,
    pub age: AgeBand,
    pub income: IncomeBand,
    pub group: UserGroup,
}

/// Width of the concatenated one-hot encoding (2 + 5 + 3 + 2).
pub const ONE_HOT_WIDTH: usize = 12;

impl SocioDemographics {
    /// Category index per embedding dimension, in (gender, age, income, group) order.
    pub fn indices(&self) -> [usize; 4] {
        [
            self.gender.index(),
            self.age.index(),
            self.income.index(),
            self.group.index(),
        ]
    }

    pub fn one_hot(&self) -> [u8; ONE_HOT_WIDTH] {
        let mut out = [0u8; ONE_HOT_WIDTH];
        let mut offset = 0;
        for (dim, idx) in self.indices().into_iter().enumerate() {
            out[offset + idx] = 1;
            offset += DIMENSION_SIZES[dim];
        }
        out
    }

    pub fn from_one_hot(bits: &[u8; ONE_HOT_WIDTH]) -> Result<Self> {
        let mut idx = [0usize; 4];
        let mut offset = 0;
        for (dim, size) in DIMENSION_SIZES.iter().enumerate() {
            let block = &bits[offset..offset + size];
            let hot: Vec<usize> = block
                .iter()
                .enumerate()
                .filter(|(_, b)| **b != 0)
                .map(|(i, _)| i)
                .collect();
            if hot.len() != 1 || block.iter().any(|b| *b > 1) {
                return Err(Error::Input(format!(
                    "one-hot block {dim} is not a single 1: {block:?}"
                )));
            }
            idx[dim] = hot[0];
            offset += size;
        }
        Ok(SocioDemographics {
            gender: Gender::from_index(idx[0]).expect("sized"),
            age: AgeBand::from_index(idx[1]).expect("sized"),
            income: IncomeBand::from_index(idx[2]).expect("sized"),
            group: UserGroup::from_index(idx[3]).expect("sized"),
        })
    }

    /// Every profile in the 2 x 5 x 3 x 2 grid.
    pub fn all_profiles() -> Vec<SocioDemographics> {
        let mut out = Vec::with_capacity(60);
        for &gender in Gender::ALL {
            for &age in AgeBand::ALL {
                for &income in IncomeBand::ALL {
                    for &group in UserGroup::ALL {
                        out.push(SocioDemographics {
                            gender,
                            age,
                            income,
                            group,
                        });
                    }
                }
            }
        }
        out
    }

    /// The mode a respondent of this group habitually uses.
    pub fn habitual_mode(&self) -> Alternative {
        match self.group {
            UserGroup::TrainUser => Alternative::Train,
            UserGroup::CarUser => Alternative::Car,
        }
    }
}

/// Number of categories per embedding dimension (gender, age, income, group).
pub const DIMENSION_SIZES: [usize; 4] = [2, 5, 3, 2];
pub const DIMENSION_NAMES: [&str; 4] = ["gender", "age", "income", "group"];

/// Trip purpose, Swissmetro codes 1..=9 (9 = other).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct TripPurpose(u8);

impl TripPurpose {
    pub fn new(code: u8) -> Result<Self> {
        if (1..=9).contains(&code) {
            Ok(TripPurpose(code))
        } else {
            Err(Error::Input(format!("trip purpose code {code} outside 1..=9")))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn label(self) -> &'static str {
        match self.0 {
            1 => "commuting",
            2 => "shopping",
            3 => "business",
            4 => "leisure",
            5 => "return from work",
            6 => "return from shopping",
            7 => "return from business",
            8 => "return from leisure",
            _ => "other",
        }
    }

    /// Commuting and business trips, outbound or return.
    pub fn is_work_related(self) -> bool {
        matches!(self.0, 1 | 3 | 5 | 7)
    }
}

impl From<TripPurpose> for u8 {
    fn from(p: TripPurpose) -> u8 {
        p.0
    }
}

impl TryFrom<u8> for TripPurpose {
    type Error = String;
    fn try_from(code: u8) -> std::result::Result<Self, String> {
        TripPurpose::new(code).map_err(|e| e.to_string())
    }
}

/// Cost (CHF), travel time (minutes) and headway (minutes) of one alternative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltAttributes {
    pub cost: f64,
    pub travel_time: f64,
    pub headway: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoiceContext {
    pub purpose: TripPurpose,
    pub first_class: bool,
    pub who_pays: WhoPays,
    pub luggage: Luggage,
    pub annual_pass: bool,
    pub train: AltAttributes,
    pub swissmetro: AltAttributes,
    pub car: AltAttributes,
}

impl ChoiceContext {
    pub fn attributes(&self, alt: Alternative) -> &AltAttributes {
        match alt {
            Alternative::Train => &self.train,
            Alternative::Swissmetro => &self.swissmetro,
            Alternative::Car => &self.car,
        }
    }

    /// Checks the numeric invariants: finite, non-negative, car headway zero.
    pub fn validate(&self) -> Result<()> {
        for alt in Alternative::ALL {
            let a = self.attributes(alt);
            for (name, v) in [("cost", a.cost), ("travel_time", a.travel_time), ("headway", a.headway)] {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Input(format!("{alt} {name} = {v} is not finite and >= 0")));
                }
            }
        }
        if self.car.headway != 0.0 {
            return Err(Error::Input(format!("car headway must be 0, got {}", self.car.headway)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RespondentId(pub u32);

impl fmt::Display for RespondentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifies one observation: respondent plus position within their panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub respondent: RespondentId,
    pub seq: u16,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.respondent, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRecord {
    pub key: RecordKey,
    pub demographics: SocioDemographics,
    pub context: ChoiceContext,
    pub chosen: Alternative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub context: ChoiceContext,
    pub chosen: Alternative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondentPanel {
    pub respondent: RespondentId,
    pub demographics: SocioDemographics,
    pub observations: Vec<Observation>,
}

impl RespondentPanel {
    pub fn records(&self) -> impl Iterator<Item = ChoiceRecord> + '_ {
        self.observations
            .iter()
            .enumerate()
            .map(move |(seq, obs)| ChoiceRecord {
                key: RecordKey {
                    respondent: self.respondent,
                    seq: seq as u16,
                },
                demographics: self.demographics,
                context: obs.context,
                chosen: obs.chosen,
            })
    }
}
