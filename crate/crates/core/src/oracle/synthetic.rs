//! Deterministic stand-in for an LLM.
//!
//! As a choice oracle it maximises a utility that is linear in the persona
//! ratings. As an expert oracle it fits a ridge-penalised conditional logit
//! on the panel's observed choices, using the same utility features, and
//! reports the fitted weights rescaled to 1..=10.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Gumbel};
use serde::{Deserialize, Serialize};

use super::{Oracle, OracleStats, Payload, Prompt};
use crate::data::{Alternative, ChoiceContext, RespondentPanel, SocioDemographics};
use crate::error::{Error, Result};
use crate::persona::{Factor, Ratings};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticOracleParams {
    /// Utility per minute of travel time at rating 10.
    pub time_weight: f64,
    /// Utility per CHF at rating 10.
    pub cost_weight: f64,
    /// Utility per minute of headway at rating 10.
    pub headway_weight: f64,
    /// Bonus for the respondent group's habitual mode at rating 10.
    pub habit_bonus: f64,
    /// Bonus for the Swissmetro at rating 10.
    pub comfort_bonus: f64,
    /// Extra time sensitivity on commuting/business trips at rating 10.
    pub purpose_shift: f64,
    /// Scale of Gumbel noise added to each utility; 0 makes the oracle deterministic.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticOracleParams {
    fn default() -> Self {
        SyntheticOracleParams {
            time_weight: 0.01,
            cost_weight: 0.01,
            headway_weight: 0.01,
            habit_bonus: 1.0,
            comfort_bonus: 0.5,
            purpose_shift: 0.0,
            noise_scale: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticOracleParams {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.time_weight,
            self.cost_weight,
            self.headway_weight,
            self.habit_bonus,
            self.comfort_bonus,
            self.purpose_shift,
        ];
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("synthetic oracle weights must be finite".into()));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::Config("synthetic noise_scale must be >= 0".into()));
        }
        Ok(())
    }

    /// Per-factor utility contributions of `alt` at rating 10, in [`Factor`] order.
    pub fn features(&self, d: &SocioDemographics, ctx: &ChoiceContext, alt: Alternative) -> [f64; 6] {
        let a = ctx.attributes(alt);
        let work = if ctx.purpose.is_work_related() { 1.0 } else { 0.0 };
        [
            -self.time_weight * a.travel_time,
            -self.cost_weight * a.cost,
            -self.headway_weight * a.headway,
            if alt == d.habitual_mode() {
                self.habit_bonus
            } else {
                0.0
            },
            if alt == Alternative::Swissmetro {
                self.comfort_bonus
            } else {
                0.0
            },
            -self.purpose_shift * self.time_weight * a.travel_time * work,
        ]
    }

    /// Deterministic utilities `V_j = sum_f (rating_f / 10) * feature_f(j)`.
    pub fn utilities(&self, ratings: &Ratings, d: &SocioDemographics, ctx: &ChoiceContext) -> [f64; 3] {
        Alternative::ALL.map(|alt| {
            self.features(d, ctx, alt)
                .iter()
                .zip(Factor::ALL)
                .map(|(x, f)| ratings.get(f) as f64 / 10.0 * x)
                .sum()
        })
    }

    /// Argmax of (possibly noisy) utilities; ties go to the earlier alternative.
    pub fn choose(
        &self,
        ratings: &Ratings,
        d: &SocioDemographics,
        ctx: &ChoiceContext,
        noise_key: &str,
    ) -> Alternative {
        let mut v = self.utilities(ratings, d, ctx);
        if self.noise_scale > 0.0 {
            let key = u64::from_str_radix(&noise_key[..16.min(noise_key.len())], 16).unwrap_or(0);
            let mut rng = seeding::derived(self.seed, "synthetic-noise", &[key]);
            let gumbel = Gumbel::new(0.0, self.noise_scale).expect("positive scale");
            for u in &mut v {
                *u += gumbel.sample(&mut rng);
            }
        }
        let mut best = 0;
        for j in 1..3 {
            if v[j] > v[best] {
                best = j;
            }
        }
        Alternative::ALL[best]
    }

    /// Regression features for persona inference: the choice features with the
    /// purpose interaction taken at unit shift, so it stays identifiable when
    /// `purpose_shift` is zero.
    fn regression_features(&self, d: &SocioDemographics, ctx: &ChoiceContext, alt: Alternative) -> [f64; 6] {
        let mut x = self.features(d, ctx, alt);
        let work = if ctx.purpose.is_work_related() { 1.0 } else { 0.0 };
        x[Factor::TripPurpose.index()] = -self.time_weight * ctx.attributes(alt).travel_time * work;
        x
    }

    /// Fits factor weights to the panel's choices and rescales them so the
    /// largest maps to 10.
    pub fn infer_ratings(&self, panel: &RespondentPanel) -> Ratings {
        const SCALE: f64 = 10.0;
        const RIDGE: f64 = 0.05;
        let n = Factor::ALL.len();
        let mut w = DVector::<f64>::zeros(n);
        let obs: Vec<([[f64; 6]; 3], usize)> = panel
            .observations
            .iter()
            .map(|o| {
                (
                    Alternative::ALL.map(|a| self.regression_features(&panel.demographics, &o.context, a)),
                    o.chosen.index(),
                )
            })
            .collect();
        for _ in 0..50 {
            let mut grad = -RIDGE * &w;
            let mut hess = DMatrix::<f64>::identity(n, n) * -RIDGE;
            for (x, chosen) in &obs {
                let u: Vec<f64> = x
                    .iter()
                    .map(|xj| SCALE * xj.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>())
                    .collect();
                let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = u.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = e.iter().sum();
                let p: Vec<f64> = e.iter().map(|v| v / z).collect();
                let mean: Vec<f64> = (0..n).map(|f| (0..3).map(|j| p[j] * x[j][f]).sum()).collect();
                for f in 0..n {
                    grad[f] += SCALE * (x[*chosen][f] - mean[f]);
                    for g in 0..n {
                        let cov: f64 = (0..3).map(|j| p[j] * x[j][f] * x[j][g]).sum::<f64>() - mean[f] * mean[g];
                        hess[(f, g)] -= SCALE * SCALE * cov;
                    }
                }
            }
            let Some(step) = (-hess).cholesky().map(|c| c.solve(&grad)) else {
                break;
            };
            w += &step;
            if step.amax() < 1e-10 {
                break;
            }
        }
        let wmax = w.iter().cloned().fold(0.0, f64::max);
        if wmax <= 1e-12 {
            return Ratings::neutral();
        }
        let values = std::array::from_fn(|f| ((10.0 * w[f].max(0.0) / wmax).round() as u8).clamp(1, 10));
        Ratings::new(values).expect("clamped")
    }
}

/// Renders ratings as the labelled block the persona parser expects.
pub fn render_ratings(ratings: &Ratings) -> String {
    Factor::ALL
        .iter()
        .map(|f| format!("{}: {}", f.label(), ratings.get(*f)))
        .collect::<Vec<_>>()
        .join("\n")
}

pub struct SyntheticOracle {
    params: SyntheticOracleParams,
    calls: AtomicU64,
}

impl SyntheticOracle {
    pub fn new(params: SyntheticOracleParams) -> Result<Self> {
        params.validate()?;
        Ok(SyntheticOracle {
            params,
            calls: AtomicU64::new(0),
        })
    }

    pub fn params(&self) -> &SyntheticOracleParams {
        &self.params
    }
}

impl Oracle for SyntheticOracle {
    fn complete(&self, prompt: &Prompt) -> Result<String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        match &prompt.payload {
            Some(Payload::Simulation {
                demographics,
                context,
                persona,
            }) => {
                let ratings = persona.unwrap_or_else(Ratings::neutral);
                let alt = self
                    .params
                    .choose(&ratings, demographics, context, &prompt.text_digest());
                Ok(format!("Final answer: {alt}"))
            }
            Some(Payload::Inference(panel)) => {
                let ratings = self.params.infer_ratings(panel);
                Ok(render_ratings(&ratings))
            }
            None => Err(Error::Input(
                "the synthetic oracle needs a structured prompt payload".into(),
            )),
        }
    }

    fn model_name(&self) -> &str {
        "synthetic-utility"
    }

    fn temperature(&self) -> f64 {
        0.0
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn max_parallel(&self) -> usize {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }

    fn stats(&self) -> OracleStats {
        OracleStats {
            calls: self.calls.load(Ordering::Relaxed),
            cache_hits: 0,
        }
    }

    fn identity(&self) -> String {
        format!(
            "synthetic-utility {}",
            serde_json::to_string(&self.params).unwrap_or_default()
        )
    }
}
