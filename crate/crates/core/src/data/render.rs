//! Plain-text renderings of records shared by every prompt template.

use super::types::{Alternative, ChoiceContext, Gender, SocioDemographics, UserGroup, WhoPays};
use super::Luggage;

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

pub fn describe_demographics(d: &SocioDemographics) -> String {
    let gender = match d.gender {
        Gender::Female => "female",
        Gender::Male => "male",
    };
    let group = match d.group {
        UserGroup::TrainUser => "currently travels by train (rail survey)",
        UserGroup::CarUser => "currently travels by car (road survey)",
    };
    format!(
        "Gender: {gender}\nAge: {} years\nAnnual income: {} CHF\nUser group: {group}",
        d.age, d.income
    )
}

/// Trip context: purpose, class, payer, luggage and rail pass.
pub fn describe_context(ctx: &ChoiceContext) -> String {
    let who = match ctx.who_pays {
        WhoPays::SelfPaid => "the traveler",
        WhoPays::Employer => "the employer",
        WhoPays::Half => "half the traveler, half the employer",
        WhoPays::Unknown => "not stated",
    };
    let luggage = match ctx.luggage {
        Luggage::NoLuggage => "none",
        Luggage::One => "one piece",
        Luggage::Several => "several pieces",
    };
    format!(
        "Trip purpose: {}\nTravels first class: {}\nCost paid by: {who}\nLuggage: {luggage}\nHolds an annual rail pass (GA): {}",
        ctx.purpose.label(),
        if ctx.first_class { "yes" } else { "no" },
        if ctx.annual_pass { "yes" } else { "no" },
    )
}

/// One line per mode with cost (CHF), travel time and headway (minutes).
pub fn describe_alternatives(ctx: &ChoiceContext) -> String {
    Alternative::ALL
        .iter()
        .map(|alt| {
            let a = ctx.attributes(*alt);
            let mut line = format!(
                "- {alt}: cost {} CHF, travel time {} minutes",
                fmt_num(a.cost),
                fmt_num(a.travel_time)
            );
            if *alt != Alternative::Car {
                line.push_str(&format!(", headway {} minutes", fmt_num(a.headway)));
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures;

    #[test]
    fn headway_rendered_in_minutes_under_train() {
        let mut c = fixtures::context(3);
        c.train.headway = 120.0;
        let text = describe_alternatives(&c);
        let train = text.lines().next().unwrap();
        assert!(
            train.starts_with("- Train") && train.contains("headway 120 minutes"),
            "{train}"
        );
        assert!(text.contains("Swissmetro") && text.contains("Car"));
    }

    #[test]
    fn annual_pass_is_mentioned() {
        let mut c = fixtures::context(1);
        c.annual_pass = true;
        assert!(describe_context(&c).contains("annual rail pass (GA): yes"));
    }
}
