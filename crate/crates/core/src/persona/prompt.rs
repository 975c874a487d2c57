use super::Factor;
use crate::data::{describe_alternatives, describe_context, describe_demographics, RespondentPanel};
use crate::oracle::{Payload, Prompt, PromptMeta};

/// Bumped whenever the wording below changes, so cached personas cite the
/// template that produced them.
pub const INFERENCE_TEMPLATE_VERSION: &str = "persona-inference/v1";

/// Appended to the user text when the first answer could not be parsed.
pub const CORRECTIVE_SUFFIX: &str = "\n\nYour previous answer could not be read. Reply with exactly six lines, \
one per factor, in the form `factor: rating` where rating is an integer from 1 to 10, and nothing else.";

fn backbone() -> String {
    let factors: Vec<&str> = Factor::ALL.iter().map(|f| f.label()).collect();
    format!(
        "You are an expert in travel behaviour analysis. You will be shown the profile of one survey \
respondent and every travel mode choice they made in a stated-preference survey. Infer how much \
this respondent values each of the following factors when choosing a travel mode: {}.\n\
Rate each factor with an integer between 1 (not important at all) and 10 (decisive).\n\
End your answer with a rating block of exactly six lines, in this order:\n{}",
        factors.join(", "),
        factors
            .iter()
            .map(|f| format!("{f}: <1-10>"))
            .collect::<Vec<_>>()
            .join("\n")
    )
}

/// Expert prompt for one panel: demographics plus every numbered scenario.
pub fn build_inference_prompt(panel: &RespondentPanel) -> Prompt {
    let mut user = format!("Respondent profile:\n{}\n", describe_demographics(&panel.demographics));
    for (j, obs) in panel.observations.iter().enumerate() {
        user.push_str(&format!(
            "\nScenario {}:\n{}\nAvailable modes:\n{}\nChosen mode: {}\n",
            j + 1,
            describe_context(&obs.context),
            describe_alternatives(&obs.context),
            obs.chosen
        ));
    }
    user.push_str("\nProvide the rating block.");
    Prompt {
        system: backbone(),
        user,
        meta: PromptMeta {
            record: None,
            persona: Some(panel.respondent),
            template: INFERENCE_TEMPLATE_VERSION.into(),
        },
        payload: Some(Payload::Inference(panel.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures;

    #[test]
    fn nine_numbered_scenarios() {
        let panel = &fixtures::panels(1, 9)[0];
        let p = build_inference_prompt(panel);
        for j in 1..=9 {
            assert!(p.user.contains(&format!("Scenario {j}:")));
        }
        assert!(!p.user.contains("Scenario 10:"));
    }

    #[test]
    fn identical_panels_identical_prompts() {
        let a = fixtures::panels(3, 9);
        let b = fixtures::panels(3, 9);
        assert_eq!(build_inference_prompt(&a[2]), build_inference_prompt(&b[2]));
    }

    #[test]
    fn every_survey_variable_is_rendered() {
        let mut panel = fixtures::panels(1, 1).remove(0);
        panel.observations[0].context.annual_pass = true;
        let text = build_inference_prompt(&panel).user;
        for needle in [
            "Gender",
            "Age",
            "income",
            "User group",
            "Trip purpose",
            "first class",
            "paid by",
            "Luggage",
            "annual rail pass (GA): yes",
            "cost",
            "travel time",
            "headway",
            "Chosen mode",
        ] {
            assert!(text.contains(needle), "missing {needle}");
        }
    }

    #[test]
    fn backbone_lists_factors_in_fixed_order() {
        let s = backbone();
        let pos: Vec<usize> = Factor::ALL
            .iter()
            .map(|f| s.rfind(&format!("{}: <1-10>", f.label())).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }
}
