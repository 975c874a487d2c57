//! Reader and filter for the Swissmetro stated-preference file.
//!
//! Raw codes (from the public codebook):
//!
//! | column  | codes |
//! |---------|-------|
//! | GROUP   | 2 rail survey, 3 road survey |
//! | MALE    | 0 female, 1 male |
//! | AGE     | 1 `<25`, 2 `25-39`, 3 `40-54`, 4 `55-65`, 5 `>65`, 6 unknown |
//! | INCOME  | 0/1 `<50k`, 2 `50-100k`, 3 `>100k`, 4 unknown |
//! | WHO     | 0 unknown, 1 self, 2 employer, 3 half-half |
//! | LUGGAGE | 0 none, 1 one piece, 3 several |
//! | CHOICE  | 0 unknown, 1 train, 2 Swissmetro, 3 car |
//!
//! The banding maps an unknown age or income into the top band, which is
//! the "otherwise" category of the experiment's variable table.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::*;
use crate::error::{Error, Result};

/// Columns the pipeline reads. Other Swissmetro columns are ignored if present.
pub const REQUIRED_COLUMNS: [&str; 24] = [
    "GROUP", "ID", "PURPOSE", "FIRST", "WHO", "LUGGAGE", "AGE", "MALE", "INCOME", "GA", "TRAIN_AV", "CAR_AV", "SM_AV",
    "TRAIN_TT", "TRAIN_CO", "TRAIN_HE", "SM_TT", "SM_CO", "SM_HE", "CAR_TT", "CAR_CO", "CHOICE", "SURVEY", "SP",
];

/// One data line of the survey file, numeric fields parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub line: usize,
    pub group: i64,
    pub survey: i64,
    pub sp: i64,
    pub id: i64,
    pub purpose: i64,
    pub first: i64,
    pub who: i64,
    pub luggage: i64,
    pub age: i64,
    pub male: i64,
    pub income: i64,
    pub ga: i64,
    pub train_av: i64,
    pub car_av: i64,
    pub sm_av: i64,
    pub train_tt: f64,
    pub train_co: f64,
    pub train_he: f64,
    pub sm_tt: f64,
    pub sm_co: f64,
    pub sm_he: f64,
    pub car_tt: f64,
    pub car_co: f64,
    pub choice: i64,
}

pub fn parse_file(path: &Path) -> Result<Vec<RawRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_str(&text)
}

/// Parses a tab- or comma-separated Swissmetro table with a header row.
pub fn parse_str(text: &str) -> Result<Vec<RawRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(Error::MissingColumn {
            column: REQUIRED_COLUMNS[0].to_string(),
        });
    };
    let delim = if header.contains('\t') { '\t' } else { ',' };
    let names: Vec<&str> = header.split(delim).map(|s| s.trim().trim_matches('"')).collect();
    let mut col = BTreeMap::new();
    for required in REQUIRED_COLUMNS {
        let pos = names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(required))
            .ok_or_else(|| Error::MissingColumn {
                column: required.to_string(),
            })?;
        col.insert(required, pos);
    }

    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let cells: Vec<&str> = line.split(delim).map(str::trim).collect();
        let num = |name: &str| -> Result<f64> {
            let pos = col[name];
            let cell = cells.get(pos).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("missing cell for column {name}"),
            })?;
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("column {name}: malformed number {cell:?}"),
                })
        };
        let int = |name: &str| -> Result<i64> {
            let v = num(name)?;
            if v.fract() != 0.0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("column {name}: expected an integer code, got {v}"),
                });
            }
            Ok(v as i64)
        };
        rows.push(RawRow {
            line: line_no,
            group: int("GROUP")?,
            survey: int("SURVEY")?,
            sp: int("SP")?,
            id: int("ID")?,
            purpose: int("PURPOSE")?,
            first: int("FIRST")?,
            who: int("WHO")?,
            luggage: int("LUGGAGE")?,
            age: int("AGE")?,
            male: int("MALE")?,
            income: int("INCOME")?,
            ga: int("GA")?,
            train_av: int("TRAIN_AV")?,
            car_av: int("CAR_AV")?,
            sm_av: int("SM_AV")?,
            train_tt: num("TRAIN_TT")?,
            train_co: num("TRAIN_CO")?,
            train_he: num("TRAIN_HE")?,
            sm_tt: num("SM_TT")?,
            sm_co: num("SM_CO")?,
            sm_he: num("SM_HE")?,
            car_tt: num("CAR_TT")?,
            car_co: num("CAR_CO")?,
            choice: int("CHOICE")?,
        });
    }
    Ok(rows)
}

/// Human-readable statement of the filter, recorded in split manifests.
pub const FILTER_RULE: &str =
    "row kept iff TRAIN_AV = CAR_AV = SM_AV = 1, CHOICE in {1,2,3} and all context codes are valid; \
respondent dropped iff any row has invalid or inconsistent demographics (GROUP, MALE, AGE, INCOME); \
unknown AGE (6) and INCOME (4) fall in the top band";

fn demographics(row: &RawRow) -> Option<SocioDemographics> {
    let gender = match row.male {
        0 => Gender::Female,
        1 => Gender::Male,
        _ => return None,
    };
    let age = match row.age {
        1 => AgeBand::Under25,
        2 => AgeBand::From25To39,
        3 => AgeBand::From40To54,
        4 => AgeBand::From55To65,
        5 | 6 => AgeBand::Over65,
        _ => return None,
    };
    let income = match row.income {
        0 | 1 => IncomeBand::Under50k,
        2 => IncomeBand::From50kTo100k,
        3 | 4 => IncomeBand::Over100k,
        _ => return None,
    };
    let group = match row.group {
        2 => UserGroup::TrainUser,
        3 => UserGroup::CarUser,
        _ => return None,
    };
    Some(SocioDemographics {
        gender,
        age,
        income,
        group,
    })
}

fn flag(v: i64) -> Option<bool> {
    match v {
        0 => Some(false),
        1 => Some(true),
        _ => None,
    }
}

fn context(row: &RawRow) -> Option<ChoiceContext> {
    let purpose = TripPurpose::new(u8::try_from(row.purpose).ok()?).ok()?;
    let who_pays = match row.who {
        0 => WhoPays::Unknown,
        1 => WhoPays::SelfPaid,
        2 => WhoPays::Employer,
        3 => WhoPays::Half,
        _ => return None,
    };
    let luggage = match row.luggage {
        0 => Luggage::NoLuggage,
        1 => Luggage::One,
        3 => Luggage::Several,
        _ => return None,
    };
    let ctx = ChoiceContext {
        purpose,
        first_class: flag(row.first)?,
        who_pays,
        luggage,
        annual_pass: flag(row.ga)?,
        train: AltAttributes {
            cost: row.train_co,
            travel_time: row.train_tt,
            headway: row.train_he,
        },
        swissmetro: AltAttributes {
            cost: row.sm_co,
            travel_time: row.sm_tt,
            headway: row.sm_he,
        },
        car: AltAttributes {
            cost: row.car_co,
            travel_time: row.car_tt,
            headway: 0.0,
        },
    };
    ctx.validate().ok()?;
    Some(ctx)
}

/// Applies the three-mode / known-information filter and groups surviving
/// rows into panels ordered by respondent id. Rows keep file order within a panel.
pub fn filter_records(rows: &[RawRow]) -> Vec<RespondentPanel> {
    let mut by_id: BTreeMap<i64, Vec<&RawRow>> = BTreeMap::new();
    for row in rows {
        by_id.entry(row.id).or_default().push(row);
    }

    let mut panels = Vec::new();
    for (id, rows) in by_id {
        let Ok(respondent) = u32::try_from(id).map(RespondentId) else {
            continue;
        };
        let demos: Option<Vec<SocioDemographics>> = rows.iter().map(|r| demographics(r)).collect();
        let Some(demos) = demos else { continue };
        if demos.windows(2).any(|w| w[0] != w[1]) {
            continue;
        }
        let observations: Vec<Observation> = rows
            .iter()
            .filter(|r| r.train_av == 1 && r.car_av == 1 && r.sm_av == 1)
            .filter_map(|r| {
                let chosen = Alternative::from_code(u8::try_from(r.choice).ok()?)?;
                Some(Observation {
                    context: context(r)?,
                    chosen,
                })
            })
            .collect();
        if observations.is_empty() {
            continue;
        }
        panels.push(RespondentPanel {
            respondent,
            demographics: demos[0],
            observations,
        });
    }
    panels
}

/// Re-encodes a record as a raw survey row (inverse of the filter's decoding,
/// using the lowest raw code of each band).
pub fn to_raw_row(record: &ChoiceRecord, line: usize) -> RawRow {
    let d = &record.demographics;
    let c = &record.context;
    RawRow {
        line,
        group: match d.group {
            UserGroup::TrainUser => 2,
            UserGroup::CarUser => 3,
        },
        survey: match d.group {
            UserGroup::TrainUser => 0,
            UserGroup::CarUser => 1,
        },
        sp: 1,
        id: record.key.respondent.0 as i64,
        purpose: c.purpose.code() as i64,
        first: c.first_class as i64,
        who: match c.who_pays {
            WhoPays::Unknown => 0,
            WhoPays::SelfPaid => 1,
            WhoPays::Employer => 2,
            WhoPays::Half => 3,
        },
        luggage: match c.luggage {
            Luggage::NoLuggage => 0,
            Luggage::One => 1,
            Luggage::Several => 3,
        },
        age: d.age.index() as i64 + 1,
        male: d.gender.index() as i64,
        income: d.income.index() as i64 + 1,
        ga: c.annual_pass as i64,
        train_av: 1,
        car_av: 1,
        sm_av: 1,
        train_tt: c.train.travel_time,
        train_co: c.train.cost,
        train_he: c.train.headway,
        sm_tt: c.swissmetro.travel_time,
        sm_co: c.swissmetro.cost,
        sm_he: c.swissmetro.headway,
        car_tt: c.car.travel_time,
        car_co: c.car.cost,
        choice: record.chosen.code() as i64,
    }
}
