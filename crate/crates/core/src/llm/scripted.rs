use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    check_messages, estimate_usage, ChatBackend, ChatMessage, Completion, CompletionParams, LlmError,
    StepKey, TokenUsage,
};
use crate::io::read_jsonl;

/// One transcript line. Token counts are optional; when absent they are estimated from the
/// actual prompt and response text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptEntry {
    pub tag: String,
    pub persona_id: String,
    pub turn: u32,
    pub response: String,
    #[serde(default)]
    pub prompt_tokens: Option<u64>,
    #[serde(default)]
    pub completion_tokens: Option<u64>,
}

/// Replays canned responses keyed by `(tag, persona_id, turn)`.
///
/// An entry whose `persona_id` is `"*"` answers for any persona without its own entry.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    entries: HashMap<(String, String, u32), TranscriptEntry>,
}

impl ScriptedBackend {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let entries =
            entries.into_iter().map(|e| ((e.tag.clone(), e.persona_id.clone(), e.turn), e)).collect();
        Self { entries }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let entries: Vec<TranscriptEntry> = read_jsonl(path).map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self::new(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, key: &StepKey<'_>) -> Option<&TranscriptEntry> {
        self.entries
            .get(&(key.tag.to_string(), key.persona_id.to_string(), key.turn))
            .or_else(|| self.entries.get(&(key.tag.to_string(), "*".to_string(), key.turn)))
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        _params: &CompletionParams,
        key: &StepKey<'_>,
    ) -> Result<Completion, LlmError> {
        check_messages(messages)?;
        let entry = self.lookup(key).ok_or_else(|| LlmError::MissingTranscript {
            tag: key.tag.to_string(),
            persona_id: key.persona_id.to_string(),
            turn: key.turn,
        })?;
        let estimate = estimate_usage(messages, &entry.response);
        let usage = TokenUsage {
            prompt_tokens: entry.prompt_tokens.unwrap_or(estimate.prompt_tokens),
            completion_tokens: entry.completion_tokens.unwrap_or(estimate.completion_tokens),
        };
        Ok(Completion {
            text: entry.response.clone(),
            usage,
            estimated: entry.prompt_tokens.is_none() || entry.completion_tokens.is_none(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(tag: &str, persona: &str, turn: u32, response: &str) -> TranscriptEntry {
        TranscriptEntry {
            tag: tag.into(),
            persona_id: persona.into(),
            turn,
            response: response.into(),
            prompt_tokens: Some(12),
            completion_tokens: Some(3),
        }
    }

    #[test]
    fn lookup_returns_recorded_text_and_usage() {
        let b = ScriptedBackend::new([entry("attitude", "p1", 0, "⟨Preference⟩: [a]")]);
        let key = StepKey { tag: "attitude", persona_id: "p1", turn: 0 };
        let msgs = [ChatMessage::user("hi")];
        let out = b.complete(&msgs, &CompletionParams::default(), &key).unwrap();
        assert_eq!(out.text, "⟨Preference⟩: [a]");
        assert_eq!(out.usage, TokenUsage::new(12, 3));
        assert!(!out.estimated);
        let again = b.complete(&msgs, &CompletionParams::default(), &key).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn missing_entry_names_the_step() {
        let b = ScriptedBackend::new([entry("attitude", "p1", 0, "x")]);
        let key = StepKey { tag: "routine", persona_id: "p1", turn: 0 };
        let err = b.complete(&[ChatMessage::user("hi")], &CompletionParams::default(), &key);
        match err {
            Err(LlmError::MissingTranscript { tag, .. }) => assert_eq!(tag, "routine"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wildcard_persona_and_estimation() {
        let mut e = entry("routine", "*", 0, "abcdefgh");
        e.prompt_tokens = None;
        let b = ScriptedBackend::new([e]);
        let key = StepKey { tag: "routine", persona_id: "anyone", turn: 0 };
        let out = b.complete(&[ChatMessage::user("abcd")], &CompletionParams::default(), &key).unwrap();
        assert!(out.estimated);
        assert_eq!(out.usage, TokenUsage::new(1, 3));
    }

    #[test]
    fn empty_messages_rejected() {
        let b = ScriptedBackend::default();
        let key = StepKey { tag: "a", persona_id: "p", turn: 0 };
        assert!(matches!(
            b.complete(&[], &CompletionParams::default(), &key),
            Err(LlmError::Precondition(_))
        ));
    }
}
