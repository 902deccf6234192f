//! Structured-output parsing for model replies.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

use crate::model::{parse_clock, IntentionType, TimeWindow};

static WINDOW_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(\s*(\d{1,2}:\d{2})\s*,\s*(\d{1,2}:\d{2})\s*\)").unwrap());

/// Likelihood for intentions the reply leaves out.
pub const DEFAULT_LIKELIHOOD: f64 = 0.5;

/// Byte range of the first case-insensitive occurrence of `needle`.
fn find_ci(haystack: &str, needle: &str) -> Option<(usize, usize)> {
    let re = Regex::new(&format!("(?i){}", regex::escape(needle))).ok()?;
    re.find(haystack).map(|m| (m.start(), m.end()))
}

/// Extracts the bracketed list following `marker`, e.g. `⟨Routine⟩: [a, b]`.
///
/// The marker matches case-insensitively and may be wrapped in `⟨⟩` or `<>`.
pub fn parse_marked_list(reply: &str, marker: &str) -> Result<Vec<String>, String> {
    let (_, after) = find_ci(reply, marker).ok_or_else(|| format!("reply lacks the \"{marker}\" marker"))?;
    let rest = &reply[after..];
    let open = rest.find('[').ok_or_else(|| "reply lacks an opening '['".to_string())?;
    let close =
        rest.rfind(']').filter(|&c| c > open).ok_or_else(|| "reply lacks a closing ']'".to_string())?;
    Ok(rest[open + 1..close]
        .split(',')
        .map(|s| s.trim().trim_matches(|c| c == '"' || c == '\'').trim().to_string())
        .filter(|s| !s.is_empty())
        .collect())
}

pub fn parse_attitude(reply: &str) -> Result<Vec<String>, String> {
    parse_marked_list(reply, "Preference")
}

pub fn parse_routine(reply: &str) -> Result<Vec<String>, String> {
    parse_marked_list(reply, "Routine")
}

/// Parses `⟨Perceived likelihood⟩: [eat:0.9, go to work:low]` into a full map over the
/// vocabulary. Numbers are clamped to `[0, 1]`; `low`/`medium`/`high` map to 0.2/0.5/0.8.
pub fn parse_pbc(reply: &str) -> Result<BTreeMap<IntentionType, f64>, String> {
    let items = parse_marked_list(reply, "Perceived likelihood")?;
    let mut map: BTreeMap<IntentionType, f64> =
        IntentionType::ALL.iter().map(|&i| (i, DEFAULT_LIKELIHOOD)).collect();
    for item in items {
        let (label, value) =
            item.rsplit_once(':').ok_or_else(|| format!("entry {item:?} is not label:likelihood"))?;
        let intention = IntentionType::parse_label(label).map_err(|e| e.to_string())?;
        let v = match value.trim().to_lowercase().as_str() {
            "low" => 0.2,
            "medium" => 0.5,
            "high" => 0.8,
            other => other
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("likelihood {value:?} is not a number or low/medium/high"))?
                .clamp(0.0, 1.0),
        };
        map.insert(intention, v);
    }
    Ok(map)
}

/// Reads a single vocabulary label, optionally after an `⟨Intention⟩:` marker.
pub fn parse_intention(reply: &str) -> Result<IntentionType, String> {
    let body = match find_ci(reply, "intention") {
        Some((_, after)) => match reply[after..].find(':') {
            Some(colon) => &reply[after + colon + 1..],
            None => reply,
        },
        None => reply,
    };
    let cleaned = body.trim().trim_matches(|c: char| matches!(c, '[' | ']' | '"' | '\'' | '.' | '`')).trim();
    IntentionType::parse_label(cleaned).map_err(|e| e.to_string())
}

/// Finds the first `(HH:MM, HH:MM)` in the reply and checks it against the previous end.
///
/// Sleep may run past midnight; its window is clipped at `23:59`. Any other backward window is
/// rejected, as is a start that does not come strictly after `previous_end`.
pub fn parse_time_reply(
    reply: &str,
    intention: IntentionType,
    previous_end: Option<u16>,
) -> Result<TimeWindow, String> {
    let caps =
        WINDOW_RE.captures(reply).ok_or_else(|| "reply contains no (HH:MM, HH:MM) window".to_string())?;
    let start = parse_clock(&caps[1]).map_err(|e| e.to_string())?;
    let end = parse_clock(&caps[2]).map_err(|e| e.to_string())?;
    let window = if end < start && intention == IntentionType::Sleep {
        TimeWindow::clip_overnight(start, end).map(|(w, _)| w)
    } else {
        TimeWindow::new(start, end)
    }
    .ok_or_else(|| format!("window {} ends before it starts", &caps[0]))?;
    if let Some(prev) = previous_end {
        if window.start() <= prev {
            return Err(format!("window {} must start after the previous activity ended", &caps[0]));
        }
    }
    Ok(window)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attitude_list() {
        let v = parse_attitude("⟨Preference⟩: [enjoys dining out, dislikes long trips]").unwrap();
        assert_eq!(v, vec!["enjoys dining out", "dislikes long trips"]);
        assert!(parse_attitude("⟨Preference⟩: enjoys dining out").is_err());
        assert!(parse_attitude("I like food").is_err());
    }

    #[test]
    fn routine_list() {
        assert_eq!(parse_routine("⟨Routine⟩: [work 9-6 weekdays]").unwrap(), vec!["work 9-6 weekdays"]);
        assert!(parse_routine("⟨Routine⟩: []").unwrap().is_empty());
        assert_eq!(parse_routine("<routine>: [\"a\", 'b']").unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn pbc_defaults_and_ordinals() {
        let m = parse_pbc("⟨Perceived likelihood⟩: [eat:0.9, go to work:0.1]").unwrap();
        assert_eq!(m.len(), 10);
        assert_eq!(m[&IntentionType::Eat], 0.9);
        assert_eq!(m[&IntentionType::GoToWork], 0.1);
        assert_eq!(m[&IntentionType::Sleep], 0.5);
        let m = parse_pbc("⟨Perceived likelihood⟩: [eat:high, sleep: low, go home:medium]").unwrap();
        assert_eq!(m[&IntentionType::Eat], 0.8);
        assert_eq!(m[&IntentionType::Sleep], 0.2);
        assert_eq!(m[&IntentionType::GoHome], 0.5);
        let m = parse_pbc("⟨Perceived likelihood⟩: [eat:1.7, sleep:-2]").unwrap();
        assert_eq!(m[&IntentionType::Eat], 1.0);
        assert_eq!(m[&IntentionType::Sleep], 0.0);
        assert!(parse_pbc("⟨Perceived likelihood⟩: [commute:0.3]").is_err());
        assert!(parse_pbc("⟨Perceived likelihood⟩: [eat:maybe]").is_err());
    }

    #[test]
    fn intention_reply() {
        assert_eq!(parse_intention("eat").unwrap(), IntentionType::Eat);
        assert_eq!(parse_intention(" Do Shopping.\n").unwrap(), IntentionType::DoShopping);
        assert_eq!(parse_intention("⟨Intention⟩: go home").unwrap(), IntentionType::GoHome);
        assert!(parse_intention("commute home").is_err());
    }

    #[test]
    fn time_reply() {
        let w = parse_time_reply("(18:45, 19:49)", IntentionType::Eat, Some(17 * 60 + 49)).unwrap();
        assert_eq!(w.to_string(), "(18:45, 19:49)");
        assert_eq!(parse_time_reply("(00:00, 08:33)", IntentionType::Sleep, None).unwrap().start(), 0);
        assert!(parse_time_reply("(17:00, 16:00)", IntentionType::Eat, None).is_err());
        assert!(parse_time_reply("(17:00, 18:00)", IntentionType::Eat, Some(17 * 60)).is_err());
        assert!(parse_time_reply("around six", IntentionType::Eat, None).is_err());
        let w = parse_time_reply("(23:10, 07:00)", IntentionType::Sleep, Some(1300)).unwrap();
        assert_eq!(w.to_string(), "(23:10, 23:59)");
    }
}
