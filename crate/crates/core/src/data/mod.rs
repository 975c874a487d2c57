//! Survey-domain types, Swissmetro ingestion and the experiment splits.

mod render;
mod summary;
pub mod swissmetro;
mod types;

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use render::{describe_alternatives, describe_context, describe_demographics};
pub use summary::{render_table, summarize_bundle, summarize_records, DatasetSummary, ShareRow};
pub use types::*;

use crate::error::{Error, Result};
use crate::{jsonl, seeding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSizes {
    pub n_detailed_respondents: usize,
    pub n_general_records: usize,
    pub n_test_records: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            n_detailed_respondents: 250,
            n_general_records: 200,
            n_test_records: 400,
        }
    }
}

/// The detailed panels (persona source), the general records (training) and
/// the held-out test records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub detailed: Vec<RespondentPanel>,
    pub general: Vec<ChoiceRecord>,
    pub test: Vec<ChoiceRecord>,
    pub split_seed: u64,
}

/// Draws `n_detailed_respondents` whole panels, then general and test records
/// from the remaining respondents' records without overlap.
pub fn split_datasets(panels: &[RespondentPanel], seed: u64, sizes: SplitSizes) -> Result<DatasetBundle> {
    if sizes.n_detailed_respondents > panels.len() {
        return Err(Error::Sizing(format!(
            "requested {} detailed respondents but only {} are available (short by {})",
            sizes.n_detailed_respondents,
            panels.len(),
            sizes.n_detailed_respondents - panels.len()
        )));
    }
    let mut rng = seeding::rng(seed);
    let mut order: Vec<usize> = (0..panels.len()).collect();
    order.shuffle(&mut rng);
    let (chosen, rest) = order.split_at(sizes.n_detailed_respondents);

    let mut detailed: Vec<RespondentPanel> = chosen.iter().map(|&i| panels[i].clone()).collect();
    detailed.sort_by_key(|p| p.respondent);

    let mut rest: Vec<usize> = rest.to_vec();
    rest.sort_unstable();
    let mut pool: Vec<ChoiceRecord> = rest.iter().flat_map(|&i| panels[i].records()).collect();
    let needed = sizes.n_general_records + sizes.n_test_records;
    if needed > pool.len() {
        return Err(Error::Sizing(format!(
            "requested {needed} general+test records but only {} remain after the detailed split (short by {})",
            pool.len(),
            needed - pool.len()
        )));
    }
    pool.shuffle(&mut rng);
    pool.truncate(needed);
    let test = pool.split_off(sizes.n_general_records);
    Ok(DatasetBundle {
        detailed,
        general: pool,
        test,
        split_seed: seed,
    })
}

/// Written next to the three split files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub sizes: SplitSizes,
    pub source_sha256: Option<String>,
    pub filter_rule: String,
    pub filtered_respondents: usize,
    pub filtered_records: usize,
}

pub const DETAILED_FILE: &str = "detailed.jsonl";
pub const GENERAL_FILE: &str = "general.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const SPLIT_MANIFEST_FILE: &str = "split.json";

impl DatasetBundle {
    pub fn check_disjoint(&self) -> Result<()> {
        let detailed: HashSet<RespondentId> = self.detailed.iter().map(|p| p.respondent).collect();
        if detailed.len() != self.detailed.len() {
            return Err(Error::Input("duplicate respondent in detailed set".into()));
        }
        for r in self.general.iter().chain(&self.test) {
            if detailed.contains(&r.key.respondent) {
                return Err(Error::Input(format!(
                    "respondent {} appears in both detailed and record sets",
                    r.key.respondent
                )));
            }
        }
        let general: HashSet<RecordKey> = self.general.iter().map(|r| r.key).collect();
        if let Some(r) = self.test.iter().find(|r| general.contains(&r.key)) {
            return Err(Error::Input(format!("record {} in both general and test", r.key)));
        }
        Ok(())
    }

    /// All detailed-panel observations as flat records.
    pub fn detailed_records(&self) -> Vec<ChoiceRecord> {
        self.detailed.iter().flat_map(|p| p.records()).collect()
    }

    pub fn write_dir(&self, dir: &Path, manifest: &SplitManifest) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        jsonl::write(&dir.join(DETAILED_FILE), &self.detailed)?;
        jsonl::write(&dir.join(GENERAL_FILE), &self.general)?;
        jsonl::write(&dir.join(TEST_FILE), &self.test)?;
        jsonl::write_json(&dir.join(SPLIT_MANIFEST_FILE), manifest)
    }

    pub fn read_dir(dir: &Path) -> Result<(DatasetBundle, SplitManifest)> {
        let manifest: SplitManifest = jsonl::read_json(&dir.join(SPLIT_MANIFEST_FILE))?;
        let bundle = DatasetBundle {
            detailed: jsonl::read(&dir.join(DETAILED_FILE))?,
            general: jsonl::read(&dir.join(GENERAL_FILE))?,
            test: jsonl::read(&dir.join(TEST_FILE))?,
            split_seed: manifest.seed,
        };
        bundle.check_disjoint()?;
        Ok((bundle, manifest))
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn context(seed: u32) -> ChoiceContext {
        let f = seed as f64;
        ChoiceContext {
            purpose: TripPurpose::new((seed % 9 + 1) as u8).unwrap(),
            first_class: seed.is_multiple_of(2),
            who_pays: WhoPays::ALL[(seed % 4) as usize],
            luggage: Luggage::ALL[(seed % 3) as usize],
            annual_pass: seed.is_multiple_of(5),
            train: AltAttributes {
                cost: 40.0 + f,
                travel_time: 100.0 + 2.0 * f,
                headway: 60.0,
            },
            swissmetro: AltAttributes {
                cost: 50.0 + f,
                travel_time: 60.0 + f,
                headway: 20.0,
            },
            car: AltAttributes {
                cost: 70.0 - f % 30.0,
                travel_time: 110.0,
                headway: 0.0,
            },
        }
    }

    pub fn panels(n: u32, per_panel: u32) -> Vec<RespondentPanel> {
        let profiles = SocioDemographics::all_profiles();
        (0..n)
            .map(|i| RespondentPanel {
                respondent: RespondentId(i + 1),
                demographics: profiles[(i as usize * 7) % profiles.len()],
                observations: (0..per_panel)
                    .map(|j| Observation {
                        context: context(i * 31 + j),
                        chosen: Alternative::ALL[((i + j) % 3) as usize],
                    })
                    .collect(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::panels;
    use super::*;

    #[test]
    fn split_sizes_and_disjointness() {
        let p = panels(320, 9);
        let b = split_datasets(&p, 42, SplitSizes::default()).unwrap();
        assert_eq!(b.detailed.len(), 250);
        assert_eq!(b.detailed_records().len(), 2250);
        assert_eq!(b.general.len(), 200);
        assert_eq!(b.test.len(), 400);
        b.check_disjoint().unwrap();
    }

    #[test]
    fn split_is_deterministic() {
        let p = panels(320, 9);
        let a = split_datasets(&p, 42, SplitSizes::default()).unwrap();
        let b = split_datasets(&p, 42, SplitSizes::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            jsonl::to_string(&a.general).unwrap(),
            jsonl::to_string(&b.general).unwrap()
        );
        let c = split_datasets(&p, 43, SplitSizes::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn oversized_request_reports_shortfall() {
        let p = panels(300, 9);
        let sizes = SplitSizes {
            n_detailed_respondents: 1100,
            ..SplitSizes::default()
        };
        match split_datasets(&p, 1, sizes) {
            Err(Error::Sizing(msg)) => assert!(msg.contains("short by 800"), "{msg}"),
            other => panic!("expected sizing error, got {other:?}"),
        }
        let sizes = SplitSizes {
            n_detailed_respondents: 290,
            ..SplitSizes::default()
        };
        assert!(matches!(split_datasets(&p, 1, sizes), Err(Error::Sizing(_))));
    }

    #[test]
    fn bundle_directory_round_trip() {
        let p = panels(40, 9);
        let sizes = SplitSizes {
            n_detailed_respondents: 10,
            n_general_records: 20,
            n_test_records: 30,
        };
        let b = split_datasets(&p, 5, sizes).unwrap();
        let manifest = SplitManifest {
            seed: 5,
            sizes,
            source_sha256: None,
            filter_rule: swissmetro::FILTER_RULE.into(),
            filtered_respondents: 40,
            filtered_records: 360,
        };
        let dir = tempfile::tempdir().unwrap();
        b.write_dir(dir.path(), &manifest).unwrap();
        let (back, m) = DatasetBundle::read_dir(dir.path()).unwrap();
        assert_eq!(back, b);
        assert_eq!(m, manifest);
    }

    #[test]
    fn filter_is_idempotent_on_reencoded_rows() {
        let p = panels(12, 9);
        let rows: Vec<_> = p
            .iter()
            .flat_map(|panel| panel.records())
            .enumerate()
            .map(|(i, r)| swissmetro::to_raw_row(&r, i + 2))
            .collect();
        assert_eq!(swissmetro::filter_records(&rows), p);
    }
}
