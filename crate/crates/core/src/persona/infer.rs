use super::parse::rating_line;
use super::{
    build_inference_prompt, parse_persona, Persona, PersonaBasis, Provenance, CORRECTIVE_SUFFIX,
    INFERENCE_TEMPLATE_VERSION,
};
use crate::data::{RespondentId, RespondentPanel};
use crate::error::{Error, Result};
use crate::oracle::pool::map_bounded;
use crate::oracle::{infer_persona_text, Oracle};

/// Share of failed panels above which the whole batch is rejected.
pub const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Clone)]
pub struct InferenceOutcome {
    pub basis: PersonaBasis,
    /// Respondents without a persona, with the reason.
    pub failures: Vec<(RespondentId, String)>,
}

/// Free-text lines of an expert answer, i.e. everything but the rating block.
fn summary_of(text: &str) -> Option<String> {
    let prose: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !rating_line().is_match(l))
        .collect();
    (!prose.is_empty()).then(|| prose.join("\n"))
}

fn infer_one(panel: &RespondentPanel, expert: &dyn Oracle) -> Result<Persona> {
    let prompt = build_inference_prompt(panel);
    let text = infer_persona_text(expert, &prompt)?;
    let (persona, text) = match parse_persona(&text, panel.respondent) {
        Ok(p) => (p, text),
        Err(first) => {
            log::info!(
                "respondent {}: retrying with corrective suffix ({first})",
                panel.respondent
            );
            let mut retry = prompt.clone();
            retry.user.push_str(CORRECTIVE_SUFFIX);
            let text = infer_persona_text(expert, &retry)?;
            (parse_persona(&text, panel.respondent)?, text)
        }
    };
    Ok(Persona {
        summary: summary_of(&text),
        ..persona
    })
}

/// Infers one persona per panel. The basis is sorted by respondent id.
pub fn infer_personas(detailed: &[RespondentPanel], expert: &dyn Oracle) -> Result<InferenceOutcome> {
    if detailed.is_empty() {
        return Err(Error::Precondition("persona inference needs at least one panel".into()));
    }
    let results = map_bounded(detailed, expert.max_parallel(), |_, panel| infer_one(panel, expert));
    let mut basis = PersonaBasis {
        personas: Vec::new(),
        demographics: Default::default(),
        provenance: Provenance {
            expert_model: expert.model_name().to_string(),
            prompt_version: INFERENCE_TEMPLATE_VERSION.to_string(),
            date: None,
        },
    };
    let mut failures = Vec::new();
    for (panel, result) in detailed.iter().zip(results) {
        match result {
            Ok(p) => {
                basis.demographics.insert(panel.respondent, panel.demographics);
                basis.personas.push(p);
            }
            Err(e) => {
                log::warn!("no persona for respondent {}: {e}", panel.respondent);
                failures.push((panel.respondent, e.to_string()));
            }
        }
    }
    if failures.len() as f64 > MAX_FAILURE_RATE * detailed.len() as f64 {
        return Err(Error::InferenceBatch {
            failed: failures.len(),
            total: detailed.len(),
        });
    }
    basis.personas.sort_by_key(|p| p.source);
    failures.sort_by_key(|(id, _)| *id);
    Ok(InferenceOutcome { basis, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fixtures, Alternative, Observation};
    use crate::oracle::testing::Scripted;
    use crate::oracle::{Payload, Prompt, PromptMeta, SyntheticOracle, SyntheticOracleParams};
    use crate::persona::{Factor, Ratings};

    const GOOD: &str = "travel time: 8\ntravel cost: 2\nflexibility: 5\ntravel habit: 9\ncomfort: 4\ntrip purpose: 3";

    #[test]
    fn empty_list_is_a_precondition_error() {
        let o = Scripted::new(&[], 0);
        assert!(matches!(infer_personas(&[], &o), Err(Error::Precondition(_))));
    }

    #[test]
    fn corrective_retry_recovers() {
        let panels = fixtures::panels(1, 9);
        let o = Scripted::new(&[Ok("I think time matters."), Ok(GOOD)], 0);
        let out = infer_personas(&panels, &o).unwrap();
        assert_eq!(out.basis.len(), 1);
        assert!(out.failures.is_empty());
        assert_eq!(out.basis.personas[0].summary, None);
    }

    #[test]
    fn too_many_failures_is_a_batch_error() {
        let panels = fixtures::panels(5, 2);
        let o = Scripted::new(
            &[
                Ok(GOOD),
                Ok(GOOD),
                Ok(GOOD),
                Ok(GOOD),
                Ok("nothing"),
                Ok("still nothing"),
            ],
            0,
        );
        match infer_personas(&panels, &o) {
            Err(Error::InferenceBatch { failed: 1, total: 5 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn failures_below_threshold_are_reported() {
        let panels = fixtures::panels(20, 2);
        let mut script: Vec<std::result::Result<&str, &str>> = vec![Ok(GOOD); 19];
        script.push(Err("down"));
        let o = Scripted::new(&script, 0);
        let out = infer_personas(&panels, &o).unwrap();
        assert_eq!(out.basis.len() + out.failures.len(), panels.len());
        assert_eq!(out.failures.len(), 1);
        out.basis.validate().unwrap();
    }

    #[test]
    fn prose_is_kept_as_summary() {
        let panels = fixtures::panels(1, 3);
        let text = format!("Values speed above all.\n{GOOD}");
        let o = Scripted::new(&[Ok(&text)], 0);
        let out = infer_personas(&panels, &o).unwrap();
        assert_eq!(
            out.basis.personas[0].summary.as_deref(),
            Some("Values speed above all.")
        );
    }

    #[test]
    fn deterministic_expert_gives_identical_files() {
        let panels = fixtures::panels(30, 9);
        let o = SyntheticOracle::new(SyntheticOracleParams::default()).unwrap();
        let a = infer_personas(&panels, &o).unwrap().basis;
        let b = infer_personas(&panels, &o).unwrap().basis;
        assert_eq!(a.len(), 30);
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        a.write_dir(da.path()).unwrap();
        b.write_dir(db.path()).unwrap();
        for f in [super::super::BASIS_FILE, super::super::BASIS_META_FILE] {
            assert_eq!(
                std::fs::read(da.path().join(f)).unwrap(),
                std::fs::read(db.path().join(f)).unwrap()
            );
        }
        assert_eq!(PersonaBasis::read_dir(da.path()).unwrap(), a);
    }

    /// Panel answered by the synthetic choice oracle under `ratings`.
    fn simulated_panel(ratings: Ratings, id: u32, n: u32, params: &SyntheticOracleParams) -> RespondentPanel {
        let mut panel = fixtures::panels(1, 0).remove(0);
        panel.respondent = RespondentId(id);
        let oracle = SyntheticOracle::new(params.clone()).unwrap();
        let mut rng = crate::seeding::derived(id as u64, "faithfulness", &[]);
        use rand::Rng;
        for j in 0..n {
            let mut ctx = fixtures::context(j);
            for alt in Alternative::ALL {
                let a = match alt {
                    Alternative::Train => &mut ctx.train,
                    Alternative::Swissmetro => &mut ctx.swissmetro,
                    Alternative::Car => &mut ctx.car,
                };
                a.cost = rng.random_range(10.0..200.0);
                a.travel_time = rng.random_range(30.0..250.0);
                if alt != Alternative::Car {
                    a.headway = rng.random_range(5.0..120.0);
                }
            }
            let prompt = Prompt {
                system: "s".into(),
                user: format!("{j}"),
                meta: PromptMeta::default(),
                payload: Some(Payload::Simulation {
                    demographics: panel.demographics,
                    context: ctx,
                    persona: Some(ratings),
                }),
            };
            let chosen = crate::oracle::simulate_choice(&oracle, &prompt).unwrap();
            panel.observations.push(Observation { context: ctx, chosen });
        }
        panel
    }

    #[test]
    fn synthetic_expert_recovers_dominant_factor() {
        let params = SyntheticOracleParams {
            purpose_shift: 1.0,
            ..Default::default()
        };
        let expert = SyntheticOracle::new(params.clone()).unwrap();
        for f in Factor::ALL {
            let mut v = [1u8; 6];
            v[f.index()] = 10;
            let ratings = Ratings::new(v).unwrap();
            let panel = simulated_panel(ratings, 100 + f.index() as u32, 60, &params);
            let out = infer_personas(std::slice::from_ref(&panel), &expert).unwrap();
            assert_eq!(
                out.basis.personas[0].ratings.dominant(),
                f,
                "{:?}",
                out.basis.personas[0].ratings
            );
        }
    }
}
