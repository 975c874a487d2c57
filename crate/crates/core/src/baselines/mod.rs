//! Comparison models: MNL and three prompting baselines.

mod mnl;

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use mnl::{
    features as mnl_features, mnl_fit, mnl_fit_from, mnl_predict, MnlFit, MnlParams, GRADIENT_TOL, MNL_NAMES, N_MNL,
};

use crate::data::{Alternative, ChoiceContext, ChoiceRecord, SocioDemographics};
use crate::error::{Error, Result};
use crate::oracle::{Oracle, Prompt, PromptMeta};
use crate::persona::PersonaBasis;
use crate::predict::{
    build_simulation_prompt, compose, json_digest, run_queries, Aggregation, Prediction, PredictionManifest,
    PredictionSet, Query, SIMULATION_TEMPLATE_VERSION,
};
use crate::seeding;

pub const ZERO_SHOT_TEMPLATE_VERSION: &str = "zero-shot/v1";
pub const FEW_SHOT_TEMPLATE_VERSION: &str = "few-shot/v1";

fn manifest(method: &str, oracle: Option<&dyn Oracle>, seed: u64, template: &str) -> PredictionManifest {
    PredictionManifest {
        method: method.into(),
        oracle: oracle.map_or_else(|| "none".into(), |o| o.identity()),
        seed,
        params_digest: None,
        basis_digest: None,
        template: template.into(),
        repeats: 1,
        aggregation: Aggregation::SingleDraw,
    }
}

/// Argmax MNL predictions for every record.
pub fn mnl_prediction_set(params: &MnlParams, records: &[ChoiceRecord]) -> Result<PredictionSet> {
    Ok(PredictionSet {
        manifest: PredictionManifest {
            params_digest: Some(json_digest(params)?),
            ..manifest("mnl", None, 0, "none")
        },
        predictions: records
            .iter()
            .map(|r| Prediction {
                record: r.key,
                predicted: Some(mnl_predict(params, &r.context).1),
                personas: Vec::new(),
                prompts: Vec::new(),
                error: None,
            })
            .collect(),
    })
}

/// Demographics and context only: no persona, no examples.
pub fn zero_shot_prompt(record: &ChoiceRecord) -> Prompt {
    compose(
        &record.demographics,
        &record.context,
        None,
        &[],
        PromptMeta {
            record: Some(record.key),
            persona: None,
            template: ZERO_SHOT_TEMPLATE_VERSION.into(),
        },
    )
}

pub fn zero_shot_predict(records: &[ChoiceRecord], oracle: &dyn Oracle) -> PredictionSet {
    let queries = records
        .iter()
        .map(|r| {
            vec![Query {
                prompt: zero_shot_prompt(r),
                persona: None,
            }]
        })
        .collect();
    PredictionSet {
        manifest: manifest("zero-shot", Some(oracle), 0, ZERO_SHOT_TEMPLATE_VERSION),
        predictions: run_queries(records, queries, oracle, Aggregation::SingleDraw),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FewShotConfig {
    pub n_examples: usize,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        FewShotConfig { n_examples: 5 }
    }
}

/// Cost, time and headway of each alternative, in a fixed order.
fn context_vector(ctx: &ChoiceContext) -> [f64; 9] {
    let mut v = [0.0; 9];
    for (j, alt) in Alternative::ALL.iter().enumerate() {
        let a = ctx.attributes(*alt);
        v[3 * j] = a.cost;
        v[3 * j + 1] = a.travel_time;
        v[3 * j + 2] = a.headway;
    }
    v
}

/// Pool indices ordered by ascending min-max-normalised L1 distance to the
/// target context; ties keep pool order. Returns the first `n`.
pub fn select_examples(target: &ChoiceRecord, pool: &[ChoiceRecord], n: usize) -> Vec<usize> {
    if pool.is_empty() || n == 0 {
        return Vec::new();
    }
    let vecs: Vec<[f64; 9]> = pool.iter().map(|r| context_vector(&r.context)).collect();
    let lo: [f64; 9] = std::array::from_fn(|f| vecs.iter().map(|v| v[f]).fold(f64::INFINITY, f64::min));
    let hi: [f64; 9] = std::array::from_fn(|f| vecs.iter().map(|v| v[f]).fold(f64::NEG_INFINITY, f64::max));
    let norm = |v: &[f64; 9], f: usize| {
        if hi[f] > lo[f] {
            (v[f] - lo[f]) / (hi[f] - lo[f])
        } else {
            0.0
        }
    };
    let t = context_vector(&target.context);
    let dist: Vec<f64> = vecs
        .iter()
        .map(|v| (0..9).map(|f| (norm(&t, f) - norm(v, f)).abs()).sum())
        .collect();
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.sort_by(|a, b| dist[*a].total_cmp(&dist[*b]));
    idx.truncate(n);
    idx
}

pub fn few_shot_prompt(record: &ChoiceRecord, pool: &[ChoiceRecord], config: &FewShotConfig) -> Prompt {
    if config.n_examples == 0 {
        return zero_shot_prompt(record);
    }
    let examples: Vec<ChoiceRecord> = select_examples(record, pool, config.n_examples)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect();
    compose(
        &record.demographics,
        &record.context,
        None,
        &examples,
        PromptMeta {
            record: Some(record.key),
            persona: None,
            template: FEW_SHOT_TEMPLATE_VERSION.into(),
        },
    )
}

pub fn few_shot_predict(
    records: &[ChoiceRecord],
    pool: &[ChoiceRecord],
    config: &FewShotConfig,
    oracle: &dyn Oracle,
) -> Result<PredictionSet> {
    if config.n_examples > pool.len() {
        return Err(Error::Config(format!(
            "n_examples = {} exceeds the example pool of {}",
            config.n_examples,
            pool.len()
        )));
    }
    let pool_keys: HashSet<_> = pool.iter().map(|r| r.key).collect();
    if let Some(r) = records.iter().find(|r| pool_keys.contains(&r.key)) {
        return Err(Error::Input(format!(
            "record {} is both a target and a few-shot example",
            r.key
        )));
    }
    let queries = records
        .iter()
        .map(|r| {
            vec![Query {
                prompt: few_shot_prompt(r, pool, config),
                persona: None,
            }]
        })
        .collect();
    Ok(PredictionSet {
        manifest: manifest(
            &format!("few-shot-{}", config.n_examples),
            Some(oracle),
            0,
            FEW_SHOT_TEMPLATE_VERSION,
        ),
        predictions: run_queries(records, queries, oracle, Aggregation::SingleDraw),
    })
}

/// Variables relaxed, in order, when no persona matches a profile exactly.
pub const RELAXATION_ORDER: [&str; 4] = ["income", "age", "gender", "group"];

/// Personas whose source demographics match `d`, relaxing income, then age,
/// then gender, then group until the set is non-empty. Returns the candidate
/// indices and the number of variables relaxed.
pub fn same_group_candidates(d: &SocioDemographics, basis: &PersonaBasis) -> (Vec<usize>, usize) {
    let profiles = basis.persona_demographics();
    for relaxed in 0..=4 {
        let cands: Vec<usize> = profiles
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                (relaxed > 0 || p.income == d.income)
                    && (relaxed > 1 || p.age == d.age)
                    && (relaxed > 2 || p.gender == d.gender)
                    && (relaxed > 3 || p.group == d.group)
            })
            .map(|(k, _)| k)
            .collect();
        if !cands.is_empty() {
            return (cands, relaxed);
        }
    }
    (Vec::new(), 4)
}

pub fn same_group_draw<R: Rng + ?Sized>(candidates: &[usize], rng: &mut R) -> usize {
    candidates[rng.random_range(0..candidates.len())]
}

pub fn same_group_predict(
    records: &[ChoiceRecord],
    basis: &PersonaBasis,
    oracle: &dyn Oracle,
    seed: u64,
) -> Result<PredictionSet> {
    if basis.is_empty() {
        return Err(Error::Precondition("persona basis is empty".into()));
    }
    let queries = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let (cands, _) = same_group_candidates(&r.demographics, basis);
            let mut rng = seeding::derived(seed, "same-group", &[i as u64]);
            let persona = &basis.personas[same_group_draw(&cands, &mut rng)];
            vec![Query {
                prompt: build_simulation_prompt(&r.demographics, &r.context, persona, Some(r.key)),
                persona: Some(persona.source),
            }]
        })
        .collect();
    Ok(PredictionSet {
        manifest: PredictionManifest {
            basis_digest: Some(json_digest(&basis.personas)?),
            ..manifest("same-group", Some(oracle), seed, SIMULATION_TEMPLATE_VERSION)
        },
        predictions: run_queries(records, queries, oracle, Aggregation::SingleDraw),
    })
}
