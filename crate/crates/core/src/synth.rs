//! Synthetic population with latent preference groups keyed to `user_group`.
//!
//! Train users share one rating archetype and car users another; each
//! respondent's ratings are the archetype plus small jitter. Choices come
//! from the synthetic oracle's utility rule applied to the true ratings, so a
//! deterministic synthetic oracle reproduces them exactly given the right
//! persona.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    AgeBand, AltAttributes, Category, ChoiceContext, ChoiceRecord, DatasetBundle, Gender, IncomeBand, Luggage,
    Observation, RespondentId, RespondentPanel, SocioDemographics, TripPurpose, UserGroup, WhoPays,
};
use crate::error::{Error, Result};
use crate::loading::{loading_distribution, EmbeddingParams};
use crate::oracle::SyntheticOracleParams;
use crate::persona::{Persona, PersonaBasis, Provenance, Ratings};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Panels per latent group in the detailed set (the persona sources).
    pub personas_per_group: usize,
    pub observations_per_panel: usize,
    pub n_general_records: usize,
    pub n_test_records: usize,
    /// Ratings for train users and car users, in factor order.
    pub archetypes: [[u8; 6]; 2],
    /// Maximum absolute per-factor deviation from the archetype.
    pub jitter: u8,
    pub seed: u64,
    pub oracle: SyntheticOracleParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            personas_per_group: 20,
            observations_per_panel: 9,
            n_general_records: 200,
            n_test_records: 400,
            archetypes: [[10, 1, 5, 5, 5, 5], [1, 10, 5, 5, 5, 5]],
            jitter: 1,
            seed: 0,
            oracle: SyntheticOracleParams::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.personas_per_group == 0 || self.observations_per_panel == 0 {
            return Err(Error::Config(
                "personas_per_group and observations_per_panel must be >= 1".into(),
            ));
        }
        for a in &self.archetypes {
            Ratings::new(*a).map_err(|e| Error::Config(format!("archetype: {e}")))?;
        }
        if self.oracle.noise_scale != 0.0 {
            return Err(Error::Config(
                "the synthetic population needs a noise-free oracle".into(),
            ));
        }
        self.oracle.validate()
    }
}

/// Latent group index: 0 for train users, 1 for car users.
pub fn latent_group(d: &SocioDemographics) -> usize {
    d.group.index()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPopulation {
    pub bundle: DatasetBundle,
    pub ratings: BTreeMap<RespondentId, Ratings>,
}

fn random_context<R: Rng + ?Sized>(rng: &mut R) -> ChoiceContext {
    let mut alt = |headway: bool| AltAttributes {
        cost: rng.random_range(5..=150) as f64,
        travel_time: rng.random_range(20..=240) as f64,
        headway: if headway {
            [10.0, 30.0, 60.0][rng.random_range(0..3)]
        } else {
            0.0
        },
    };
    let (train, swissmetro, car) = (alt(true), alt(true), alt(false));
    ChoiceContext {
        purpose: TripPurpose::new(rng.random_range(1..=8)).expect("in range"),
        first_class: rng.random_bool(0.2),
        who_pays: WhoPays::ALL[rng.random_range(0..3)],
        luggage: Luggage::ALL[rng.random_range(0..3)],
        annual_pass: rng.random_bool(0.3),
        train,
        swissmetro,
        car,
    }
}

fn random_profile<R: Rng + ?Sized>(group: UserGroup, rng: &mut R) -> SocioDemographics {
    SocioDemographics {
        gender: Gender::ALL[rng.random_range(0..Gender::ALL.len())],
        age: AgeBand::ALL[rng.random_range(0..AgeBand::ALL.len())],
        income: IncomeBand::ALL[rng.random_range(0..IncomeBand::ALL.len())],
        group,
    }
}

fn jittered<R: Rng + ?Sized>(archetype: [u8; 6], jitter: u8, rng: &mut R) -> Ratings {
    let j = jitter as i16;
    let values = archetype.map(|a| (a as i16 + rng.random_range(-j..=j)).clamp(1, 10) as u8);
    Ratings::new(values).expect("clamped")
}

/// Detailed panels alternate between groups; general and test records come
/// from further respondents, one record each, with random groups.
pub fn generate(config: &SynthConfig) -> Result<SyntheticPopulation> {
    config.validate()?;
    let mut rng = seeding::derived(config.seed, "synth", &[]);
    let mut ratings = BTreeMap::new();
    let mut next_id = 1u32;
    let mut respondent = |group: UserGroup, n_obs: usize, rng: &mut seeding::Rng| {
        let id = RespondentId(next_id);
        next_id += 1;
        let d = random_profile(group, rng);
        let r = jittered(config.archetypes[group.index()], config.jitter, rng);
        let observations = (0..n_obs)
            .map(|seq| {
                let context = random_context(rng);
                let key = format!("{:016x}", ((id.0 as u64) << 16) | seq as u64);
                Observation {
                    chosen: config.oracle.choose(&r, &d, &context, &key),
                    context,
                }
            })
            .collect();
        ratings.insert(id, r);
        RespondentPanel {
            respondent: id,
            demographics: d,
            observations,
        }
    };
    let mut detailed = Vec::with_capacity(2 * config.personas_per_group);
    for k in 0..2 * config.personas_per_group {
        detailed.push(respondent(
            UserGroup::ALL[k % 2],
            config.observations_per_panel,
            &mut rng,
        ));
    }
    let mut single = |n: usize, rng: &mut seeding::Rng| -> Vec<ChoiceRecord> {
        (0..n)
            .flat_map(|_| {
                let group = UserGroup::ALL[rng.random_range(0..2)];
                respondent(group, 1, rng).records().collect::<Vec<_>>()
            })
            .collect()
    };
    let general = single(config.n_general_records, &mut rng);
    let test = single(config.n_test_records, &mut rng);
    Ok(SyntheticPopulation {
        bundle: DatasetBundle {
            detailed,
            general,
            test,
            split_seed: config.seed,
        },
        ratings,
    })
}

impl SyntheticPopulation {
    /// Personas carrying the detailed respondents' true ratings.
    pub fn true_basis(&self) -> PersonaBasis {
        PersonaBasis {
            personas: self
                .bundle
                .detailed
                .iter()
                .map(|p| Persona {
                    source: p.respondent,
                    ratings: self.ratings[&p.respondent],
                    summary: None,
                })
                .collect(),
            demographics: self
                .bundle
                .detailed
                .iter()
                .map(|p| (p.respondent, p.demographics))
                .collect(),
            provenance: Provenance {
                expert_model: "ground-truth".into(),
                prompt_version: "synth".into(),
                date: None,
            },
        }
    }
}

/// Loading mass that a profile places on personas from its own latent group.
pub fn own_group_mass(
    d: &SocioDemographics,
    params: &EmbeddingParams,
    basis: &PersonaBasis,
    lambda: f64,
) -> Result<f64> {
    let dist = loading_distribution(d, params, basis, lambda)?;
    Ok((0..basis.len())
        .filter(|k| latent_group(&basis.demographics_of(*k)) == latent_group(d))
        .map(|k| dist.probabilities[k])
        .sum())
}

/// Mean of [`own_group_mass`] over the given profiles.
pub fn mean_own_group_mass(
    profiles: &[SocioDemographics],
    params: &EmbeddingParams,
    basis: &PersonaBasis,
    lambda: f64,
) -> Result<f64> {
    if profiles.is_empty() {
        return Err(Error::Input("no profiles to average over".into()));
    }
    let mut total = 0.0;
    for d in profiles {
        total += own_group_mass(d, params, basis, lambda)?;
    }
    Ok(total / profiles.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{simulate_choice, SyntheticOracle};
    use crate::predict::build_simulation_prompt;

    #[test]
    fn shape_and_determinism() {
        let cfg = SynthConfig {
            seed: 3,
            ..Default::default()
        };
        let pop = generate(&cfg).unwrap();
        let b = &pop.bundle;
        assert_eq!(b.detailed.len(), 40);
        assert!(b.detailed.iter().all(|p| p.observations.len() == 9));
        assert_eq!(
            b.detailed
                .iter()
                .filter(|p| p.demographics.group == UserGroup::TrainUser)
                .count(),
            20
        );
        assert_eq!((b.general.len(), b.test.len()), (200, 400));
        b.check_disjoint().unwrap();
        assert_eq!(pop, generate(&cfg).unwrap());
        assert_ne!(
            pop,
            generate(&SynthConfig {
                seed: 4,
                ..Default::default()
            })
            .unwrap()
        );
    }

    #[test]
    fn ratings_follow_group_archetypes() {
        let pop = generate(&SynthConfig::default()).unwrap();
        for p in &pop.bundle.detailed {
            let r = pop.ratings[&p.respondent].values();
            let a = SynthConfig::default().archetypes[latent_group(&p.demographics)];
            assert!(r.iter().zip(a).all(|(x, y)| (*x as i16 - y as i16).abs() <= 1));
        }
    }

    #[test]
    fn oracle_with_true_persona_reproduces_choices() {
        let pop = generate(&SynthConfig::default()).unwrap();
        let basis = pop.true_basis();
        let oracle = SyntheticOracle::new(SyntheticOracleParams::default()).unwrap();
        for (k, panel) in pop.bundle.detailed.iter().enumerate() {
            for r in panel.records() {
                let prompt = build_simulation_prompt(&r.demographics, &r.context, &basis.personas[k], Some(r.key));
                assert_eq!(simulate_choice(&oracle, &prompt).unwrap(), r.chosen);
            }
        }
    }

    #[test]
    fn own_group_mass_extremes() {
        let pop = generate(&SynthConfig::default()).unwrap();
        let basis = pop.true_basis();
        let d = pop.bundle.test[0].demographics;
        let uniform = own_group_mass(&d, &EmbeddingParams::random(1), &basis, 0.0).unwrap();
        assert!((uniform - 0.5).abs() < 1e-12);
        // Group coordinates of opposite sign dominate the embedding.
        let mut beta = [0.01; 12];
        beta[10] = 5.0;
        beta[11] = -5.0;
        let sharp = EmbeddingParams::new(beta).unwrap();
        assert!(own_group_mass(&d, &sharp, &basis, crate::loading::DEFAULT_LAMBDA).unwrap() > 0.99);
    }

    #[test]
    fn rejects_noisy_oracle() {
        let mut cfg = SynthConfig::default();
        cfg.oracle.noise_scale = 0.5;
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }
}
