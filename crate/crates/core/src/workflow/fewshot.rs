use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::WorkflowError;
use crate::model::{parse_time_window, validate_sequence, IntentionEvent, IntentionSequence, IntentionType};

pub const DEFAULT_BANK_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedEvent {
    pub time: String,
    pub intention: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedDay {
    pub profile: String,
    pub events: Vec<AnnotatedEvent>,
}

impl AnnotatedDay {
    pub fn to_sequence(&self) -> Result<IntentionSequence, WorkflowError> {
        let events = self
            .events
            .iter()
            .map(|e| {
                Ok(IntentionEvent {
                    window: parse_time_window(&e.time)?,
                    intention: IntentionType::parse_label(&e.intention)?,
                })
            })
            .collect::<Result<Vec<_>, crate::model::ParseError>>()
            .map_err(|e| WorkflowError::Config(format!("few-shot example: {e}")))?;
        Ok(IntentionSequence { persona_id: String::new(), day_index: 0, events, cap: None })
    }
}

/// Annotated example days shown to the model in the intention-decision prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotBank {
    pub examples: Vec<AnnotatedDay>,
}

impl Default for FewShotBank {
    fn default() -> Self {
        serde_json::from_str(include_str!("../../assets/fewshot.json")).expect("bundled few-shot bank parses")
    }
}

impl FewShotBank {
    pub fn load(path: &Path) -> Result<Self, WorkflowError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WorkflowError::Config(format!("{}: {e}", path.display())))?;
        let bank: Self = serde_json::from_str(&text)
            .map_err(|e| WorkflowError::Config(format!("{}: {e}", path.display())))?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<(), WorkflowError> {
        if self.examples.is_empty() {
            return Err(WorkflowError::Config("few-shot bank is empty".into()));
        }
        for (i, ex) in self.examples.iter().enumerate() {
            let seq = ex.to_sequence()?;
            if let Err(v) = validate_sequence(&seq) {
                return Err(WorkflowError::Config(format!("few-shot example {i}: {v:?}")));
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, ex) in self.examples.iter().enumerate() {
            let _ = writeln!(out, "Example {} ({})", i + 1, ex.profile);
            for e in &ex.events {
                let _ = writeln!(out, "  {} {} | reason: {}", e.time, e.intention, e.reason);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_bank_has_eight_valid_days() {
        let bank = FewShotBank::default();
        assert_eq!(bank.examples.len(), DEFAULT_BANK_SIZE);
        bank.validate().unwrap();
        for ex in &bank.examples {
            assert!(validate_sequence(&ex.to_sequence().unwrap()).is_ok());
        }
    }

    #[test]
    fn overlapping_example_rejected() {
        let bank = FewShotBank {
            examples: vec![AnnotatedDay {
                profile: "x".into(),
                events: vec![
                    AnnotatedEvent {
                        time: "(09:00, 12:00)".into(),
                        intention: "eat".into(),
                        reason: String::new(),
                    },
                    AnnotatedEvent {
                        time: "(11:00, 13:00)".into(),
                        intention: "eat".into(),
                        reason: String::new(),
                    },
                ],
            }],
        };
        assert!(bank.validate().is_err());
    }
}
