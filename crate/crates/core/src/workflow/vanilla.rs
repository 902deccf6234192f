//! Baseline prompt builder in which the model places every event itself: the candidate POIs
//! around home are listed in the prompt and each trajectory needs its own dialogue. Used to
//! compare per-trajectory token cost against gravity grounding.

use std::fmt::Write as _;

use crate::gravity::SpatialIndex;
use crate::llm::{estimate_usage, ChatMessage, TokenUsage};
use crate::model::{IntentionType, Persona, Trajectory};

pub fn vanilla_messages(persona: &Persona, index: &SpatialIndex, radius_km: f64) -> Vec<ChatMessage> {
    let mut prompt = String::new();
    let profile: Vec<String> = persona.attributes.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    let _ = writeln!(prompt, "You are planning one day of movement for a resident ({}).", profile.join("; "));
    let _ = writeln!(
        prompt,
        "Home is at ({:.5}, {:.5}). Places within {radius_km} km, one per line as id | name | category | lat, lon:",
        persona.home.lat, persona.home.lon
    );
    for hit in index.within(persona.home, radius_km) {
        let p = index.get(hit.index);
        let _ = writeln!(
            prompt,
            "{} | {} | {} | {:.5}, {:.5}",
            p.id, p.name, p.category, p.location.lat, p.location.lon
        );
    }
    let labels: Vec<&str> = IntentionType::ALL.iter().map(|i| i.label()).collect();
    let _ = writeln!(
        prompt,
        "Write the whole day as lines of \"(HH:MM, HH:MM) activity @ place id\", using only these activities: {}. Use \"home\" for the home location.",
        labels.join(", ")
    );
    vec![
        ChatMessage::system("You generate realistic daily trajectories for city residents."),
        ChatMessage::user(prompt),
    ]
}

pub fn vanilla_reply(traj: &Trajectory) -> String {
    traj.points
        .iter()
        .map(|p| format!("{} {} @ {}", p.window, p.intention, p.poi_id))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Estimated usage of producing `traj` through one baseline dialogue.
pub fn vanilla_usage(
    persona: &Persona,
    index: &SpatialIndex,
    radius_km: f64,
    traj: &Trajectory,
) -> TokenUsage {
    estimate_usage(&vanilla_messages(persona, index, radius_km), &vanilla_reply(traj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gravity::build_index;
    use crate::gravity::test_support::{offset, poi_at};
    use crate::model::GeoPoint;
    use std::collections::BTreeMap;

    #[test]
    fn prompt_grows_with_poi_count() {
        let home = GeoPoint::new(39.9, 116.4).unwrap();
        let persona = Persona {
            id: "p".into(),
            attributes: BTreeMap::new(),
            home,
            home_region: "r".into(),
            work: None,
        };
        let small = build_index(vec![poi_at("a", "cafe", offset(home, 1.0, 0.0))], 1.0, None).unwrap();
        let big = build_index(
            (0..50).map(|i| poi_at(&i.to_string(), "cafe", offset(home, i as f64 * 0.1, 0.0))).collect(),
            1.0,
            None,
        )
        .unwrap();
        let traj = Trajectory { persona_id: "p".into(), day_index: 0, points: vec![] };
        let u1 = vanilla_usage(&persona, &small, 10.0, &traj);
        let u2 = vanilla_usage(&persona, &big, 10.0, &traj);
        assert!(u2.prompt_tokens > u1.prompt_tokens + 49 * 5);
        let far = vanilla_messages(&persona, &big, 0.5);
        assert!(!far[1].content.contains("| 49 |") && !far[1].content.contains("\n49 |"));
    }
}
