//! Persona-conditioned simulation prompts and test-set prediction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    describe_alternatives, describe_context, describe_demographics, Alternative, ChoiceContext, ChoiceRecord,
    RecordKey, RespondentId, SocioDemographics,
};
use crate::error::{Error, Result};
use crate::loading::{loading_distribution, sample_personas, EmbeddingParams};
use crate::oracle::pool::map_bounded;
use crate::oracle::{simulate_choice, Oracle, Payload, Prompt, PromptMeta};
use crate::persona::{Factor, Persona, PersonaBasis};
use crate::{digest, jsonl, seeding};

pub const SIMULATION_TEMPLATE_VERSION: &str = "simulation/v1";

const BACKBONE: &str = "You are an expert in travel behaviour analysis. Your task is to predict which travel \
mode a specific traveler will choose in the trip described below, given their socio-demographic profile and \
the attributes of the available modes. Base the prediction on the information provided. The available modes \
are Train, Swissmetro (a new high-speed underground maglev) and Car. Costs are in Swiss francs (CHF); travel \
times and headways (time between departures) are in minutes. Briefly reason, then end with a single line of \
the form `Final answer: <Train|Swissmetro|Car>`.";

/// Prompt body for one scenario. The persona block and solved examples are optional.
pub(crate) fn compose(
    d: &SocioDemographics,
    ctx: &ChoiceContext,
    persona: Option<&Persona>,
    examples: &[ChoiceRecord],
    meta: PromptMeta,
) -> Prompt {
    let mut user = String::new();
    for (n, ex) in examples.iter().enumerate() {
        user.push_str(&format!(
            "Example {}:\nTraveler:\n{}\nTrip:\n{}\nModes:\n{}\nChosen mode: {}\n\n",
            n + 1,
            describe_demographics(&ex.demographics),
            describe_context(&ex.context),
            describe_alternatives(&ex.context),
            ex.chosen
        ));
    }
    if !examples.is_empty() {
        user.push_str("Now the traveler to predict.\n");
    }
    user.push_str(&format!("Traveler:\n{}\n", describe_demographics(d)));
    if let Some(p) = persona {
        user.push_str("Importance this traveler attaches to each factor (1 = unimportant, 10 = decisive):\n");
        for f in Factor::ALL {
            user.push_str(&format!("- {}: {}\n", f.label(), p.ratings.get(f)));
        }
        if let Some(s) = &p.summary {
            user.push_str(&format!("Traveler description: {s}\n"));
        }
    }
    user.push_str(&format!(
        "Trip:\n{}\nModes:\n{}\nWhich mode will this traveler choose?",
        describe_context(ctx),
        describe_alternatives(ctx)
    ));
    Prompt {
        system: BACKBONE.to_string(),
        user,
        meta,
        payload: Some(Payload::Simulation {
            demographics: *d,
            context: *ctx,
            persona: persona.map(|p| p.ratings),
        }),
    }
}

/// The prompt g(d, X, Z): traveler, persona ratings and the three alternatives.
pub fn build_simulation_prompt(
    d: &SocioDemographics,
    ctx: &ChoiceContext,
    persona: &Persona,
    record: Option<RecordKey>,
) -> Prompt {
    compose(
        d,
        ctx,
        Some(persona),
        &[],
        PromptMeta {
            record,
            persona: Some(persona.source),
            template: SIMULATION_TEMPLATE_VERSION.into(),
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    SingleDraw,
    MajorityVote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionConfig {
    pub repeats: usize,
    pub aggregation: Aggregation,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        PredictionConfig {
            repeats: 1,
            aggregation: Aggregation::SingleDraw,
            lambda: crate::loading::DEFAULT_LAMBDA,
            seed: 0,
        }
    }
}

impl PredictionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if !self.lambda.is_finite() {
            return Err(Error::Config("lambda must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub record: RecordKey,
    /// `None` when every oracle call for the record failed.
    pub predicted: Option<Alternative>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub personas: Vec<RespondentId>,
    /// Digests of the prompt texts sent, one per repeat; they key the response cache.
    pub prompts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionManifest {
    pub method: String,
    pub oracle: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_digest: Option<String>,
    pub template: String,
    pub repeats: usize,
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub manifest: PredictionManifest,
    pub predictions: Vec<Prediction>,
}

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const PREDICTION_MANIFEST_FILE: &str = "predictions_manifest.json";

impl PredictionSet {
    pub fn failed(&self) -> usize {
        self.predictions.iter().filter(|p| p.predicted.is_none()).count()
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        jsonl::write(&dir.join(PREDICTIONS_FILE), &self.predictions)?;
        jsonl::write_json(&dir.join(PREDICTION_MANIFEST_FILE), &self.manifest)
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        Ok(PredictionSet {
            manifest: jsonl::read_json(&dir.join(PREDICTION_MANIFEST_FILE))?,
            predictions: jsonl::read(&dir.join(PREDICTIONS_FILE))?,
        })
    }

    /// Plain-text summary: counts per predicted mode and failures.
    pub fn summary(&self) -> String {
        let mut counts = [0usize; 3];
        for p in self.predictions.iter().filter_map(|p| p.predicted) {
            counts[p.index()] += 1;
        }
        let mut s = format!(
            "method: {}\noracle: {}\nrecords: {}\nfailed: {}\n",
            self.manifest.method,
            self.manifest.oracle,
            self.predictions.len(),
            self.failed()
        );
        for alt in Alternative::ALL {
            s.push_str(&format!("predicted {alt}: {}\n", counts[alt.index()]));
        }
        s
    }
}

pub fn json_digest<T: Serialize>(value: &T) -> Result<String> {
    Ok(digest::fields_hex(&[serde_json::to_string(value)?.as_bytes()]))
}

/// One prompt to send for a record, with the persona it carries (if any).
pub(crate) struct Query {
    pub prompt: Prompt,
    pub persona: Option<RespondentId>,
}

/// Majority over answers; ties follow Train < Swissmetro < Car.
pub fn majority(answers: &[Alternative]) -> Option<Alternative> {
    let mut counts = [0usize; 3];
    for a in answers {
        counts[a.index()] += 1;
    }
    let best = (0..3).fold(0, |b, j| if counts[j] > counts[b] { j } else { b });
    (!answers.is_empty()).then(|| Alternative::ALL[best])
}

/// Sends every query, preserving order, and aggregates per record.
pub(crate) fn run_queries(
    records: &[ChoiceRecord],
    queries: Vec<Vec<Query>>,
    oracle: &dyn Oracle,
    aggregation: Aggregation,
) -> Vec<Prediction> {
    let flat: Vec<(usize, &Query)> = queries
        .iter()
        .enumerate()
        .flat_map(|(i, qs)| qs.iter().map(move |q| (i, q)))
        .collect();
    let answers = map_bounded(&flat, oracle.max_parallel(), |_, (_, q)| {
        simulate_choice(oracle, &q.prompt)
    });
    let mut out: Vec<Prediction> = records
        .iter()
        .map(|r| Prediction {
            record: r.key,
            predicted: None,
            personas: Vec::new(),
            prompts: Vec::new(),
            error: None,
        })
        .collect();
    let mut got: Vec<Vec<Alternative>> = vec![Vec::new(); records.len()];
    for ((i, q), answer) in flat.iter().zip(answers) {
        let p = &mut out[*i];
        p.prompts.push(q.prompt.text_digest());
        if let Some(id) = q.persona {
            p.personas.push(id);
        }
        match answer {
            Ok(a) => got[*i].push(a),
            Err(e) => {
                log::warn!("record {}: {e}", p.record);
                p.error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    for (p, answers) in out.iter_mut().zip(got) {
        p.predicted = match aggregation {
            Aggregation::SingleDraw => answers.first().copied(),
            Aggregation::MajorityVote => majority(&answers),
        };
        if p.predicted.is_some() {
            p.error = None;
        }
    }
    out
}

/// Predicts each test record by drawing personas from the loading distribution.
pub fn predict(
    test: &[ChoiceRecord],
    params: &EmbeddingParams,
    basis: &PersonaBasis,
    oracle: &dyn Oracle,
    config: &PredictionConfig,
) -> Result<PredictionSet> {
    config.validate()?;
    if basis.is_empty() {
        return Err(Error::Precondition("persona basis is empty".into()));
    }
    let mut queries = Vec::with_capacity(test.len());
    for (i, r) in test.iter().enumerate() {
        let dist = loading_distribution(&r.demographics, params, basis, config.lambda)?;
        let mut qs = Vec::with_capacity(config.repeats);
        for rep in 0..config.repeats {
            let mut rng = seeding::derived(config.seed, "predict", &[i as u64, rep as u64]);
            let k = sample_personas(&dist, 1, &mut rng)?[0];
            let persona = &basis.personas[k];
            qs.push(Query {
                prompt: build_simulation_prompt(&r.demographics, &r.context, persona, Some(r.key)),
                persona: Some(persona.source),
            });
        }
        queries.push(qs);
    }
    let predictions = run_queries(test, queries, oracle, config.aggregation);
    Ok(PredictionSet {
        manifest: PredictionManifest {
            method: "persona-loading".into(),
            oracle: oracle.identity(),
            seed: config.seed,
            params_digest: Some(json_digest(params)?),
            basis_digest: Some(json_digest(&basis.personas)?),
            template: SIMULATION_TEMPLATE_VERSION.into(),
            repeats: config.repeats,
            aggregation: config.aggregation,
        },
        predictions,
    })
}
