//! Monte-Carlo stochastic EM estimation of the embedding parameters.

mod mstep;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use mstep::{
    dimension_variances, finite_difference_gradient, gradient, maximize, objective, regularizer, regularizer_gradient,
    MStepConfig, MStepData, MStepResult, VARIANCE_FLOOR,
};

use crate::data::{Alternative, ChoiceRecord, RecordKey};
use crate::error::{Error, Result};
use crate::loading::{sample_personas, similarities, EmbeddingParams, LoadingDistribution, DEFAULT_LAMBDA};
use crate::oracle::pool::map_bounded;
use crate::oracle::{simulate_choice, Oracle};
use crate::persona::PersonaBasis;
use crate::predict::build_simulation_prompt;
use crate::{jsonl, seeding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Personas sampled per record in the first iteration.
    pub l0: usize,
    pub max_iterations: usize,
    /// Stop when the sup-norm of the parameter change falls below this.
    pub convergence_tol: f64,
    /// Down-weighting of records every sampled persona predicts correctly.
    pub alpha_e: f64,
    /// Strength of the variance-disparity penalty.
    pub alpha_m: f64,
    pub lambda: f64,
    pub m_step: MStepConfig,
    pub seed: u64,
    /// Evaluate the full-enumeration log-likelihood each iteration (needs a replayable oracle).
    pub track_exact_likelihood: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l0: 5,
            max_iterations: 30,
            convergence_tol: 1e-3,
            alpha_e: 0.5,
            alpha_m: 0.4,
            lambda: DEFAULT_LAMBDA,
            m_step: MStepConfig::default(),
            seed: 0,
            track_exact_likelihood: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.l0 == 0 {
            return bad("l0 must be >= 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be >= 1");
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return bad("convergence_tol must be > 0");
        }
        if !(0.0..1.0).contains(&self.alpha_e) {
            return bad("alpha_e must lie in [0, 1)");
        }
        if !(self.alpha_m.is_finite() && self.alpha_m >= 0.0) {
            return bad("alpha_m must be >= 0");
        }
        if !self.lambda.is_finite() {
            return bad("lambda must be finite");
        }
        if !(self.m_step.learning_rate.is_finite() && self.m_step.learning_rate > 0.0) {
            return bad("m_step.learning_rate must be > 0");
        }
        if self.m_step.tolerance.is_nan() || self.m_step.tolerance < 0.0 {
            return bad("m_step.tolerance must be >= 0");
        }
        Ok(())
    }

    /// Sample size in 1-based iteration `t`: `l0` first, then one more each iteration, capped at `k_h`.
    pub fn sample_size(&self, t: usize, k_h: usize) -> usize {
        (self.l0 + t - 1).min(k_h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub persona: usize,
    /// Loading probability of the persona under the current parameters.
    pub probability: f64,
    pub predicted: Option<Alternative>,
    pub weight: f64,
}

impl Draw {
    pub fn correct(&self, chosen: Alternative) -> bool {
        self.predicted == Some(chosen)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordDraws {
    pub record: RecordKey,
    pub chosen: Alternative,
    pub draws: Vec<Draw>,
    /// Some oracle call failed; the record carries no weight this iteration.
    pub failed: bool,
}

impl RecordDraws {
    pub fn all_correct(&self) -> bool {
        !self.failed && self.draws.iter().all(|d| d.correct(self.chosen))
    }

    pub fn any_correct(&self) -> bool {
        !self.failed && self.draws.iter().any(|d| d.correct(self.chosen))
    }

    /// Left-to-right sum of the draw weights.
    pub fn weight_sum(&self) -> f64 {
        self.draws.iter().fold(0.0, |acc, d| acc + d.weight)
    }

    /// `sum_l P_l 1_l / sum_l P_l`, or `None` for a failed record.
    pub fn simulated_likelihood(&self) -> Option<f64> {
        if self.failed {
            return None;
        }
        let hit: f64 = self
            .draws
            .iter()
            .filter(|d| d.correct(self.chosen))
            .map(|d| d.probability)
            .sum();
        let all: f64 = self.draws.iter().map(|d| d.probability).sum();
        Some(hit / all)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EStepOutput {
    pub l: usize,
    pub alpha_e: f64,
    pub records: Vec<RecordDraws>,
}

impl EStepOutput {
    pub fn failed_records(&self) -> usize {
        self.records.iter().filter(|r| r.failed).count()
    }
}

/// Sets the modified weights of one record in place:
/// `w_l = P_l 1_l / sum_j P_j 1_j * (1 - alpha_e 1[all correct])`.
///
/// The last correct draw takes the remainder so the weights sum exactly to the regime value.
pub fn assign_weights(rd: &mut RecordDraws, alpha_e: f64) {
    for d in &mut rd.draws {
        d.weight = 0.0;
    }
    if rd.failed || !rd.any_correct() {
        return;
    }
    let target = if rd.all_correct() { 1.0 - alpha_e } else { 1.0 };
    let chosen = rd.chosen;
    let denom: f64 = rd
        .draws
        .iter()
        .filter(|d| d.correct(chosen))
        .map(|d| d.probability)
        .sum();
    let last = rd
        .draws
        .iter()
        .rposition(|d| d.correct(chosen))
        .expect("some draw is correct");
    let mut acc = 0.0;
    for (l, d) in rd.draws.iter_mut().enumerate() {
        if !d.correct(chosen) {
            continue;
        }
        d.weight = if l == last {
            target - acc
        } else {
            target * d.probability / denom
        };
        acc += d.weight;
    }
}

/// Loading distribution of every record, computed once per distinct profile.
fn record_distributions(
    records: &[ChoiceRecord],
    params: &EmbeddingParams,
    basis: &PersonaBasis,
    lambda: f64,
) -> Result<Vec<LoadingDistribution>> {
    let profiles = basis.persona_demographics();
    let mut cache: Vec<(crate::data::SocioDemographics, LoadingDistribution)> = Vec::new();
    records
        .iter()
        .map(|r| {
            if let Some((_, d)) = cache.iter().find(|(p, _)| *p == r.demographics) {
                return Ok(d.clone());
            }
            let d = LoadingDistribution::from_similarities(&similarities(&r.demographics, params, &profiles)?, lambda);
            cache.push((r.demographics, d.clone()));
            Ok(d)
        })
        .collect()
}

/// Samples `l` personas per record, simulates each, and sets the modified weights.
/// Persona draws for record `i` use a stream derived from `(seed, iteration, i)`.
#[allow(clippy::too_many_arguments)]
pub fn e_step(
    params: &EmbeddingParams,
    general: &[ChoiceRecord],
    basis: &PersonaBasis,
    l: usize,
    oracle: &dyn Oracle,
    lambda: f64,
    alpha_e: f64,
    seed: u64,
    iteration: u64,
) -> Result<EStepOutput> {
    if l > basis.len() {
        return Err(Error::Sizing(format!("L = {l} exceeds the basis size {}", basis.len())));
    }
    let dists = record_distributions(general, params, basis, lambda)?;
    let mut records = Vec::with_capacity(general.len());
    let mut jobs = Vec::new();
    for (i, (r, dist)) in general.iter().zip(&dists).enumerate() {
        let mut rng = seeding::derived(seed, "e-step", &[iteration, i as u64]);
        let picks = sample_personas(dist, l, &mut rng)?;
        records.push(RecordDraws {
            record: r.key,
            chosen: r.chosen,
            draws: picks
                .iter()
                .map(|k| Draw {
                    persona: *k,
                    probability: dist.probabilities[*k],
                    predicted: None,
                    weight: 0.0,
                })
                .collect(),
            failed: false,
        });
        for (slot, k) in picks.into_iter().enumerate() {
            jobs.push((i, slot, k));
        }
    }
    let answers = map_bounded(&jobs, oracle.max_parallel(), |_, (i, _, k)| {
        let r = &general[*i];
        simulate_choice(
            oracle,
            &build_simulation_prompt(&r.demographics, &r.context, &basis.personas[*k], Some(r.key)),
        )
    });
    for ((i, slot, _), answer) in jobs.iter().zip(answers) {
        match answer {
            Ok(a) => records[*i].draws[*slot].predicted = Some(a),
            Err(e) => {
                log::warn!("e-step record {}: {e}", records[*i].record);
                records[*i].failed = true;
            }
        }
    }
    for rd in &mut records {
        assign_weights(rd, alpha_e);
    }
    Ok(EStepOutput { l, alpha_e, records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodSummary {
    /// Per-record likelihood; `None` for records excluded after oracle failures.
    pub per_record: Vec<Option<f64>>,
    /// Sum of log-likelihoods over records with positive likelihood.
    pub log_likelihood: f64,
    pub zero_likelihood_records: usize,
}

impl LikelihoodSummary {
    fn from_values(per_record: Vec<Option<f64>>) -> Self {
        let mut log_likelihood = 0.0;
        let mut zero_likelihood_records = 0;
        for v in per_record.iter().flatten() {
            if *v > 0.0 {
                log_likelihood += v.ln();
            } else {
                zero_likelihood_records += 1;
            }
        }
        LikelihoodSummary {
            per_record,
            log_likelihood,
            zero_likelihood_records,
        }
    }
}

pub fn simulated_likelihood(e_out: &EStepOutput) -> LikelihoodSummary {
    LikelihoodSummary::from_values(e_out.records.iter().map(RecordDraws::simulated_likelihood).collect())
}

/// `correct[i][k]`: whether persona `k` reproduces record `i`'s choice. Independent of β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorMatrix {
    pub correct: Vec<Vec<bool>>,
}

impl IndicatorMatrix {
    pub fn evaluate(general: &[ChoiceRecord], basis: &PersonaBasis, oracle: &dyn Oracle) -> Result<Self> {
        if !oracle.is_replayable() {
            return Err(Error::Precondition(
                "the exact likelihood needs a deterministic or cached oracle".into(),
            ));
        }
        let jobs: Vec<(usize, usize)> = (0..general.len())
            .flat_map(|i| (0..basis.len()).map(move |k| (i, k)))
            .collect();
        let answers = map_bounded(&jobs, oracle.max_parallel(), |_, (i, k)| {
            let r = &general[*i];
            simulate_choice(
                oracle,
                &build_simulation_prompt(&r.demographics, &r.context, &basis.personas[*k], Some(r.key)),
            )
        });
        let mut correct = vec![vec![false; basis.len()]; general.len()];
        for ((i, k), a) in jobs.into_iter().zip(answers) {
            correct[i][k] = a? == general[i].chosen;
        }
        Ok(IndicatorMatrix { correct })
    }

    /// `sum_i log sum_k P(Z_k | d_i) 1_ik`.
    pub fn log_likelihood(
        &self,
        params: &EmbeddingParams,
        general: &[ChoiceRecord],
        basis: &PersonaBasis,
        lambda: f64,
    ) -> Result<LikelihoodSummary> {
        let dists = record_distributions(general, params, basis, lambda)?;
        Ok(LikelihoodSummary::from_values(
            dists
                .iter()
                .zip(&self.correct)
                .map(|(d, row)| {
                    Some(
                        d.probabilities
                            .iter()
                            .zip(row)
                            .filter(|(_, c)| **c)
                            .map(|(p, _)| p)
                            .sum(),
                    )
                })
                .collect(),
        ))
    }
}

pub fn exact_log_likelihood(
    params: &EmbeddingParams,
    general: &[ChoiceRecord],
    basis: &PersonaBasis,
    oracle: &dyn Oracle,
    lambda: f64,
) -> Result<LikelihoodSummary> {
    IndicatorMatrix::evaluate(general, basis, oracle)?.log_likelihood(params, general, basis, lambda)
}

/// M-step over the weights of an E-step.
pub fn m_step(
    e_out: &EStepOutput,
    general: &[ChoiceRecord],
    basis: &PersonaBasis,
    params_init: &EmbeddingParams,
    lambda: f64,
    alpha_m: f64,
    config: &MStepConfig,
) -> Result<MStepResult> {
    let profiles: Vec<_> = general.iter().map(|r| r.demographics).collect();
    let weighted: Vec<Vec<(usize, f64)>> = e_out
        .records
        .iter()
        .map(|rd| rd.draws.iter().map(|d| (d.persona, d.weight)).collect())
        .collect();
    let data = MStepData::new(&profiles, &basis.persona_demographics(), &weighted);
    maximize(params_init, &data, lambda, alpha_m, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub l: usize,
    pub simulated_log_likelihood: f64,
    pub zero_likelihood_records: usize,
    pub failed_records: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_log_likelihood: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_step_objective: Option<f64>,
    pub delta_beta: f64,
    /// Cumulative simulation prompts issued by the trainer (cache hits included).
    pub oracle_queries: u64,
    pub stalled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub initial_params: EmbeddingParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_exact_log_likelihood: Option<f64>,
    pub params: EmbeddingParams,
    pub history: Vec<IterationRecord>,
    pub consecutive_stalls: usize,
    pub converged: bool,
}

pub type TrainOutcome = Checkpoint;

pub const PARAMS_FILE: &str = "params.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Consecutive stalled iterations tolerated before training fails.
pub const MAX_STALLS: usize = 3;

impl Checkpoint {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.params.save(&dir.join(PARAMS_FILE))?;
        jsonl::write(&dir.join(HISTORY_FILE), &self.history)?;
        jsonl::write_json(&dir.join(CHECKPOINT_FILE), self)
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        jsonl::read_json(&dir.join(CHECKPOINT_FILE))
    }

    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

pub fn train(
    general: &[ChoiceRecord],
    basis: &PersonaBasis,
    oracle: &dyn Oracle,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_from(general, basis, oracle, config, None, None)
}

/// Runs (or resumes from `resume`) the EM loop, writing a checkpoint after every
/// iteration when `checkpoint_dir` is given.
pub fn train_from(
    general: &[ChoiceRecord],
    basis: &PersonaBasis,
    oracle: &dyn Oracle,
    config: &TrainConfig,
    resume: Option<Checkpoint>,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if general.is_empty() {
        return Err(Error::Precondition("training needs at least one general record".into()));
    }
    if basis.is_empty() {
        return Err(Error::Precondition("persona basis is empty".into()));
    }
    let indicators = if config.track_exact_likelihood {
        Some(IndicatorMatrix::evaluate(general, basis, oracle)?)
    } else {
        None
    };
    let exact = |p: &EmbeddingParams| -> Result<Option<f64>> {
        indicators
            .as_ref()
            .map(|m| {
                m.log_likelihood(p, general, basis, config.lambda)
                    .map(|s| s.log_likelihood)
            })
            .transpose()
    };
    let mut state = match resume {
        Some(cp) => cp,
        None => {
            let init = EmbeddingParams::random(config.seed);
            Checkpoint {
                initial_params: init,
                initial_exact_log_likelihood: exact(&init)?,
                params: init,
                history: Vec::new(),
                consecutive_stalls: 0,
                converged: false,
            }
        }
    };
    while !state.converged && state.history.len() < config.max_iterations {
        let t = state.history.len() + 1;
        let l = config.sample_size(t, basis.len());
        let e_out = e_step(
            &state.params,
            general,
            basis,
            l,
            oracle,
            config.lambda,
            config.alpha_e,
            config.seed,
            t as u64,
        )?;
        let sim = simulated_likelihood(&e_out);
        let queries = state.history.last().map_or(0, |h| h.oracle_queries) + (general.len() * l) as u64;
        let (params, objective, stalled) = match m_step(
            &e_out,
            general,
            basis,
            &state.params,
            config.lambda,
            config.alpha_m,
            &config.m_step,
        ) {
            Ok(m) => (m.params, Some(m.objective_end), false),
            Err(Error::Stall) => (state.params, None, true),
            Err(e) => return Err(e),
        };
        let delta = params.max_abs_diff(&state.params);
        state.consecutive_stalls = if stalled { state.consecutive_stalls + 1 } else { 0 };
        state.history.push(IterationRecord {
            iteration: t,
            l,
            simulated_log_likelihood: sim.log_likelihood,
            zero_likelihood_records: sim.zero_likelihood_records,
            failed_records: e_out.failed_records(),
            exact_log_likelihood: exact(&params)?,
            m_step_objective: objective,
            delta_beta: delta,
            oracle_queries: queries,
            stalled,
        });
        log::info!(
            "iteration {t}: L = {l}, simulated LL = {:.4}, |dβ| = {delta:.3e}{}",
            sim.log_likelihood,
            if stalled { " (stalled)" } else { "" }
        );
        state.params = params;
        state.converged = !stalled && delta < config.convergence_tol;
        if let Some(dir) = checkpoint_dir {
            state.write_dir(dir)?;
        }
        if state.consecutive_stalls >= MAX_STALLS {
            return Err(Error::Stall);
        }
    }
    Ok(state)
}
