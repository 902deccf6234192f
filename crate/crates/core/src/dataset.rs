//! Fine-tuning dataset assembly from logged dialogues.
//!
//! Only the attitude, routine, perceived-likelihood and intention exchanges (tags `a`–`d`) are
//! eligible. Each tag is sampled separately, round-robin across personas so that no single
//! persona dominates.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::io::{read_jsonl, to_jsonl, write_atomic, IoError};
use crate::llm::{ChatMessage, Role};
use crate::workflow::{DialogueEntry, LogTag};

pub const DEFAULT_PER_TYPE: usize = 250;
pub const QUESTION_TAGS: [LogTag; 4] = [LogTag::Attitude, LogTag::Routine, LogTag::Pbc, LogTag::Intention];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("tag {tag}: {available} example(s) available, {needed} needed (short by {})", .needed - .available)]
    Insufficient { tag: &'static str, available: usize, needed: usize },
    #[error("per_type must be at least 1")]
    PerType,
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneExample {
    pub messages: Vec<ChatMessage>,
    pub tag: LogTag,
    pub persona_id: String,
    pub day: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub counts: BTreeMap<String, usize>,
    pub per_type: usize,
    pub seed: u64,
    pub source_files: Vec<String>,
    /// `file#line` of each example's source log entry, in output order.
    pub source_ids: Vec<String>,
    pub content_hash: String,
}

pub fn manifest_path(dataset: &Path) -> PathBuf {
    dataset.with_extension("manifest.json")
}

struct Source<'a> {
    id: String,
    entry: &'a DialogueEntry,
}

/// Picks `per_type` examples per tag. Deterministic for a fixed seed and log order.
pub fn select_examples(
    logs: &[(String, Vec<DialogueEntry>)],
    per_type: usize,
    seed: u64,
) -> Result<(Vec<FinetuneExample>, Vec<String>), DatasetError> {
    if per_type == 0 {
        return Err(DatasetError::PerType);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::new();
    let mut ids = Vec::new();
    for tag in QUESTION_TAGS {
        let mut by_persona: BTreeMap<&str, Vec<Source<'_>>> = BTreeMap::new();
        for (file, entries) in logs {
            for (i, e) in entries.iter().enumerate().filter(|(_, e)| e.tag == tag) {
                by_persona
                    .entry(&e.persona_id)
                    .or_default()
                    .push(Source { id: format!("{file}#{}", i + 1), entry: e });
            }
        }
        let available: usize = by_persona.values().map(Vec::len).sum();
        if available < per_type {
            return Err(DatasetError::Insufficient { tag: tag.letter(), available, needed: per_type });
        }
        let mut queues: Vec<Vec<Source<'_>>> = by_persona.into_values().collect();
        for q in &mut queues {
            q.shuffle(&mut rng);
        }
        queues.shuffle(&mut rng);
        let mut taken = 0;
        'outer: while taken < per_type {
            for q in queues.iter_mut() {
                if let Some(s) = q.pop() {
                    examples.push(FinetuneExample {
                        messages: s.entry.messages.clone(),
                        tag,
                        persona_id: s.entry.persona_id.clone(),
                        day: s.entry.day,
                    });
                    ids.push(s.id);
                    taken += 1;
                    if taken == per_type {
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok((examples, ids))
}

/// Reads the logs, selects examples and writes the dataset and its manifest atomically.
pub fn build_dataset(
    log_paths: &[PathBuf],
    out: &Path,
    per_type: usize,
    seed: u64,
) -> Result<Manifest, DatasetError> {
    let mut logs = Vec::new();
    for p in log_paths {
        logs.push((p.display().to_string(), read_jsonl::<DialogueEntry>(p)?));
    }
    let (examples, source_ids) = select_examples(&logs, per_type, seed)?;
    let body = to_jsonl(&examples);
    let mut counts = BTreeMap::new();
    for e in &examples {
        *counts.entry(e.tag.letter().to_string()).or_insert(0) += 1;
    }
    let manifest = Manifest {
        counts,
        per_type,
        seed,
        source_files: log_paths.iter().map(|p| p.display().to_string()).collect(),
        source_ids,
        content_hash: hex::encode(Sha256::digest(body.as_bytes())),
    };
    write_atomic(out, body.as_bytes())?;
    let m = serde_json::to_string_pretty(&manifest).map_err(|e| DatasetError::Json(e.to_string()))?;
    write_atomic(&manifest_path(out), m.as_bytes())?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetViolation {
    /// 1-based line, or 0 for file-level problems.
    pub line: usize,
    pub message: String,
}

/// Optional leading system message, then user/assistant turns alternating and ending with the
/// assistant.
pub fn check_roles(messages: &[ChatMessage]) -> Result<(), String> {
    let body = match messages.first() {
        Some(m) if m.role == Role::System => &messages[1..],
        _ => messages,
    };
    if body.is_empty() {
        return Err("no user/assistant turns".into());
    }
    for (i, m) in body.iter().enumerate() {
        let want = if i % 2 == 0 { Role::User } else { Role::Assistant };
        if m.role != want {
            return Err(format!("turn {i} has role {:?}, expected {want:?}", m.role));
        }
    }
    if body.len() % 2 != 0 {
        return Err("last message is not from the assistant".into());
    }
    Ok(())
}

/// Checks every line and, when a manifest sits next to the file, its counts and hash.
pub fn validate_dataset(path: &Path) -> Result<(), Vec<DatasetViolation>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![DatasetViolation { line: 0, message: format!("{}: {e}", path.display()) }])?;
    let mut violations = Vec::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<FinetuneExample>(line) {
            Ok(ex) => {
                if let Err(m) = check_roles(&ex.messages) {
                    violations.push(DatasetViolation { line: i + 1, message: m });
                }
                *counts.entry(ex.tag.letter().to_string()).or_default() += 1;
            }
            Err(e) => violations.push(DatasetViolation { line: i + 1, message: e.to_string() }),
        }
    }
    let mp = manifest_path(path);
    if mp.exists() {
        match std::fs::read_to_string(&mp)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<Manifest>(&t).map_err(|e| e.to_string()))
        {
            Ok(m) => {
                if m.counts != counts {
                    violations.push(DatasetViolation {
                        line: 0,
                        message: format!(
                            "manifest counts {:?} differ from file counts {:?}",
                            m.counts, counts
                        ),
                    });
                }
                let hash = hex::encode(Sha256::digest(text.as_bytes()));
                if m.content_hash != hash {
                    violations.push(DatasetViolation {
                        line: 0,
                        message: "content hash differs from manifest".into(),
                    });
                }
            }
            Err(e) => {
                violations.push(DatasetViolation { line: 0, message: format!("{}: {e}", mp.display()) })
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_jsonl;
    use crate::llm::TokenUsage;

    fn entry(persona: &str, tag: LogTag, n: usize) -> DialogueEntry {
        DialogueEntry {
            persona_id: persona.into(),
            day: 0,
            tag,
            messages: vec![
                ChatMessage::system("s"),
                ChatMessage::user(format!("q{n}")),
                ChatMessage::assistant(format!("a{n}")),
            ],
            usage: TokenUsage::default(),
        }
    }

    fn logs(per_persona: usize, personas: usize, tags: &[LogTag]) -> Vec<DialogueEntry> {
        let mut v = Vec::new();
        for p in 0..personas {
            for &t in tags {
                for n in 0..per_persona {
                    v.push(entry(&format!("p{p}"), t, n));
                }
            }
            v.push(entry(&format!("p{p}"), LogTag::Time, 0));
        }
        v
    }

    #[test]
    fn one_per_tag() {
        let l = vec![("x".to_string(), logs(1, 1, &QUESTION_TAGS))];
        let (ex, ids) = select_examples(&l, 1, 0).unwrap();
        assert_eq!(ex.len(), 4);
        assert_eq!(ids.len(), 4);
        assert!(ex.iter().all(|e| e.tag != LogTag::Time));
    }

    #[test]
    fn missing_tag_names_shortfall() {
        let l = vec![("x".to_string(), logs(3, 2, &[LogTag::Attitude, LogTag::Routine, LogTag::Intention]))];
        match select_examples(&l, 2, 0) {
            Err(DatasetError::Insufficient { tag, available, needed }) => {
                assert_eq!((tag, available, needed), ("c", 0, 2))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stratified_across_personas() {
        let mut l = logs(1, 5, &QUESTION_TAGS);
        l.extend(logs(100, 1, &QUESTION_TAGS).into_iter().map(|mut e| {
            e.persona_id = "big".into();
            e
        }));
        let (ex, _) = select_examples(&[("x".into(), l)], 10, 3).unwrap();
        let a: Vec<_> = ex.iter().filter(|e| e.tag == LogTag::Attitude).collect();
        let big = a.iter().filter(|e| e.persona_id == "big").count();
        assert_eq!(big, 5, "five small personas give one each, the rest comes from the big one");
    }

    #[test]
    fn build_validate_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        write_jsonl(&log, &logs(5, 4, &QUESTION_TAGS)).unwrap();
        let out = dir.path().join("ds.jsonl");
        let m = build_dataset(std::slice::from_ref(&log), &out, 10, 42).unwrap();
        assert_eq!(m.counts.values().sum::<usize>(), 40);
        validate_dataset(&out).unwrap();
        let first = std::fs::read(&out).unwrap();
        build_dataset(&[log], &out, 10, 42).unwrap();
        assert_eq!(first, std::fs::read(&out).unwrap());

        let text = String::from_utf8(first).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop();
        std::fs::write(&out, lines.join("\n") + "\n").unwrap();
        let v = validate_dataset(&out).unwrap_err();
        assert!(v.iter().any(|x| x.message.contains("counts")));

        let truncated = format!("{}\n{}\n", lines[0], &lines[1][..20]);
        std::fs::write(&out, truncated).unwrap();
        let v = validate_dataset(&out).unwrap_err();
        assert!(v.iter().any(|x| x.line == 2));
    }

    #[test]
    fn role_rules() {
        let ok = vec![
            ChatMessage::user("q"),
            ChatMessage::assistant("a"),
            ChatMessage::user("again"),
            ChatMessage::assistant("b"),
        ];
        assert!(check_roles(&ok).is_ok());
        assert!(check_roles(&ok[..3]).is_err());
        assert!(check_roles(&[ChatMessage::assistant("a")]).is_err());
        assert!(check_roles(&[ChatMessage::system("s")]).is_err());
    }
}
