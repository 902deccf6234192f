//! The planned-behaviour generation chain.
//!
//! Per persona, attitude (tag `a`) and routine (tag `b`) are elicited once and cached. Each
//! step of a day then asks for perceived likelihoods of the possible next activities (`c`),
//! the next intention (`d`) and its time window (`t`). The loop stops when the sampled cap is
//! reached, the day is covered up to 23:30, or a non-initial sleep event closes the day.

pub mod cap;
pub mod fewshot;
pub mod parse;
pub mod templates;
pub mod vanilla;

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatBackend, ChatMessage, CompletionParams, LlmError, Role, StepKey, TokenUsage};
use crate::model::{
    validate_sequence, IntentionEvent, IntentionSequence, IntentionType, ParseError, Persona, TimeWindow,
    TpbContext,
};

pub use cap::{sample_intention_cap, IntentionCountDistribution};
pub use fewshot::FewShotBank;
pub use templates::PromptTemplates;

use templates::render;

/// Extra attempts after a malformed reply before the step fails.
pub const DEFAULT_MAX_RETRIES: u32 = 3;

/// A day counts as covered once its last window ends at or after 23:30.
pub const DAY_COVERED_MINUTE: u16 = 23 * 60 + 30;

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{step} reply unusable after {attempts} attempt(s): {reason}; last reply: {raw:?}")]
    Unparseable { step: &'static str, attempts: u32, reason: String, raw: String },
    #[error("template {template:?} is missing placeholder(s) {missing}")]
    Template { template: String, missing: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("generated day failed validation: {0}")]
    Invalid(String),
}

type ListParser = fn(&str) -> Result<Vec<String>, String>;

/// Switches for removing one planned-behaviour component at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub use_attitude: bool,
    pub use_norms: bool,
    pub use_pbc: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self { use_attitude: true, use_norms: true, use_pbc: true }
    }
}

impl AblationFlags {
    pub fn without_attitude() -> Self {
        Self { use_attitude: false, ..Self::default() }
    }

    pub fn without_norms() -> Self {
        Self { use_norms: false, ..Self::default() }
    }

    pub fn without_pbc() -> Self {
        Self { use_pbc: false, ..Self::default() }
    }

    pub fn none() -> Self {
        Self { use_attitude: false, use_norms: false, use_pbc: false }
    }
}

/// Dialogue log tag. `a`–`d` are the four fine-tuning questions; `t` marks time assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LogTag {
    #[serde(rename = "a")]
    Attitude,
    #[serde(rename = "b")]
    Routine,
    #[serde(rename = "c")]
    Pbc,
    #[serde(rename = "d")]
    Intention,
    #[serde(rename = "t")]
    Time,
}

impl LogTag {
    /// Transcript tag used for scripted lookup.
    pub fn step(self) -> &'static str {
        match self {
            LogTag::Attitude => "attitude",
            LogTag::Routine => "routine",
            LogTag::Pbc => "pbc",
            LogTag::Intention => "intention",
            LogTag::Time => "time",
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            LogTag::Attitude => "a",
            LogTag::Routine => "b",
            LogTag::Pbc => "c",
            LogTag::Intention => "d",
            LogTag::Time => "t",
        }
    }
}

/// One completed exchange: the prompt, any corrective turns, and the accepted reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueEntry {
    pub persona_id: String,
    pub day: u32,
    pub tag: LogTag,
    pub messages: Vec<ChatMessage>,
    pub usage: TokenUsage,
}

pub type DialogueLog = Vec<DialogueEntry>;

pub fn count_tags(log: &[DialogueEntry]) -> BTreeMap<LogTag, usize> {
    let mut counts = BTreeMap::new();
    for e in log {
        *counts.entry(e.tag).or_insert(0) += 1;
    }
    counts
}

pub fn log_usage(log: &[DialogueEntry]) -> TokenUsage {
    log.iter().map(|e| e.usage).sum()
}

/// Per-persona state that survives across days: the cached static context, transcript turn
/// counters and the previous day's sequence.
#[derive(Debug, Clone)]
pub struct PersonaSession {
    pub persona: Persona,
    static_context: Option<(Vec<String>, Vec<String>)>,
    turns: HashMap<&'static str, u32>,
    previous_day: Option<IntentionSequence>,
    /// Optional day-of-week text for the `{weekday}` slot.
    pub weekday: Option<String>,
}

impl PersonaSession {
    pub fn new(persona: Persona) -> Self {
        Self { persona, static_context: None, turns: HashMap::new(), previous_day: None, weekday: None }
    }

    fn next_turn(&mut self, step: &'static str) -> u32 {
        let t = self.turns.entry(step).or_insert(0);
        let out = *t;
        *t += 1;
        out
    }

    pub fn static_context(&self) -> Option<&(Vec<String>, Vec<String>)> {
        self.static_context.as_ref()
    }

    /// Rebuilds a session from the logged exchanges of completed days, so that a resumed run
    /// asks the backend the same turns it would have asked without the interruption.
    pub fn resume(
        persona: Persona,
        entries: &[DialogueEntry],
        previous_day: Option<IntentionSequence>,
    ) -> Result<Self, WorkflowError> {
        let mut s = Self::new(persona);
        if entries.is_empty() && previous_day.is_none() {
            return Ok(s);
        }
        let last_reply = |tag: LogTag| -> Option<&str> {
            entries
                .iter()
                .find(|e| e.tag == tag)
                .and_then(|e| e.messages.iter().rev().find(|m| m.role == Role::Assistant))
                .map(|m| m.content.as_str())
        };
        let restore =
            |tag: LogTag, p: fn(&str) -> Result<Vec<String>, String>| -> Result<Vec<String>, WorkflowError> {
                match last_reply(tag) {
                    Some(r) => {
                        p(r).map_err(|e| WorkflowError::Invalid(format!("logged {} reply: {e}", tag.step())))
                    }
                    None => Ok(Vec::new()),
                }
            };
        s.static_context = Some((
            restore(LogTag::Attitude, parse::parse_attitude)?,
            restore(LogTag::Routine, parse::parse_routine)?,
        ));
        for e in entries {
            let n = e.messages.iter().filter(|m| m.role == Role::Assistant).count() as u32;
            *s.turns.entry(e.tag.step()).or_insert(0) += n;
        }
        s.previous_day = previous_day;
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct DayOutput {
    pub sequence: IntentionSequence,
    pub log: DialogueLog,
    pub usage: TokenUsage,
}

/// A failed day keeps the exchanges that completed before the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct DayFailure {
    #[source]
    pub error: WorkflowError,
    pub log: DialogueLog,
}

pub struct Workflow<'a> {
    templates: &'a PromptTemplates,
    fewshot: String,
    flags: AblationFlags,
    caps: &'a IntentionCountDistribution,
    backend: &'a dyn ChatBackend,
    params: CompletionParams,
    max_retries: u32,
}

struct StepCtx<'s, 'l> {
    session: &'s mut PersonaSession,
    day: u32,
    log: &'l mut DialogueLog,
}

impl<'a> Workflow<'a> {
    pub fn new(
        templates: &'a PromptTemplates,
        bank: &FewShotBank,
        flags: AblationFlags,
        caps: &'a IntentionCountDistribution,
        backend: &'a dyn ChatBackend,
        params: CompletionParams,
    ) -> Result<Self, WorkflowError> {
        templates.validate()?;
        bank.validate()?;
        caps.validate()?;
        Ok(Self {
            templates,
            fewshot: bank.render(),
            flags,
            caps,
            backend,
            params,
            max_retries: DEFAULT_MAX_RETRIES,
        })
    }

    pub fn with_max_retries(mut self, retries: u32) -> Self {
        self.max_retries = retries;
        self
    }

    pub fn flags(&self) -> AblationFlags {
        self.flags
    }

    fn exchange<T>(
        &self,
        ctx: &mut StepCtx<'_, '_>,
        tag: LogTag,
        prompt: String,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, WorkflowError> {
        let mut messages = vec![ChatMessage::system(self.templates.system.trim()), ChatMessage::user(prompt)];
        let mut usage = TokenUsage::default();
        let attempts = 1 + self.max_retries;
        for attempt in 1..=attempts {
            let turn = ctx.session.next_turn(tag.step());
            let key = StepKey { tag: tag.step(), persona_id: &ctx.session.persona.id, turn };
            let completion = self.backend.complete(&messages, &self.params, &key)?;
            usage = usage + completion.usage;
            messages.push(ChatMessage::assistant(completion.text.clone()));
            match parse(&completion.text) {
                Ok(value) => {
                    ctx.log.push(DialogueEntry {
                        persona_id: ctx.session.persona.id.clone(),
                        day: ctx.day,
                        tag,
                        messages,
                        usage,
                    });
                    return Ok(value);
                }
                Err(reason) if attempt == attempts => {
                    return Err(WorkflowError::Unparseable {
                        step: tag.step(),
                        attempts,
                        reason,
                        raw: completion.text,
                    });
                }
                Err(reason) => {
                    log::debug!("{} reply rejected ({reason}), asking again", tag.step());
                    messages.push(ChatMessage::user(format!(
                        "Your previous answer could not be used: {reason}. Answer again, exactly in the requested format."
                    )));
                }
            }
        }
        unreachable!("loop returns on the final attempt")
    }

    fn profile_text(persona: &Persona) -> String {
        if persona.attributes.is_empty() {
            return "(no attributes given)".into();
        }
        persona.attributes.iter().map(|(k, v)| format!("{k}: {v}")).collect::<Vec<_>>().join("; ")
    }

    fn list_text(items: &[String], enabled: bool) -> String {
        if !enabled {
            "(not considered)".into()
        } else {
            format!("[{}]", items.join(", "))
        }
    }

    fn weekday_text(session: &PersonaSession) -> String {
        session.weekday.as_ref().map(|d| format!("Day of the week: {d}.")).unwrap_or_default()
    }

    /// Renders the day so far as `[["(HH:MM, HH:MM)", "label"], ...]`, preceded by a one-line
    /// summary of the previous day when there is one.
    pub fn history_text(previous: Option<&IntentionSequence>, events: &[IntentionEvent]) -> String {
        let mut out = String::new();
        if let Some(prev) = previous {
            match prev.events.last() {
                Some(last) => out.push_str(&format!(
                    "Previous day: {} activities, ending with \"{}\" at {}.\n",
                    prev.events.len(),
                    last.intention,
                    last.window
                )),
                None => out.push_str("Previous day: no recorded activities.\n"),
            }
        }
        if events.is_empty() {
            out.push_str("[] (the day starts at 00:00)");
        } else {
            let pairs: Vec<[String; 2]> =
                events.iter().map(|e| [e.window.to_string(), e.intention.label().to_string()]).collect();
            out.push_str(&serde_json::to_string(&pairs).expect("strings serialize"));
        }
        out
    }

    pub fn pbc_text(pbc: &BTreeMap<IntentionType, f64>) -> String {
        let items: Vec<String> = pbc.iter().map(|(i, v)| format!("{}:{:.2}", i.label(), v)).collect();
        format!("[{}]", items.join(", "))
    }

    fn query_static(
        &self,
        ctx: &mut StepCtx<'_, '_>,
        tag: LogTag,
        enabled: bool,
    ) -> Result<Vec<String>, WorkflowError> {
        if !enabled {
            return Ok(Vec::new());
        }
        let (template, parser): (&str, ListParser) = match tag {
            LogTag::Attitude => (&self.templates.attitude, parse::parse_attitude),
            _ => (&self.templates.routine, parse::parse_routine),
        };
        let profile = Self::profile_text(&ctx.session.persona);
        let prompt = render(template, &[("profile", &profile)]);
        self.exchange(ctx, tag, prompt, parser)
    }

    /// Returns the cached attitude and routine, querying them on the persona's first day.
    fn static_context(&self, ctx: &mut StepCtx<'_, '_>) -> Result<(Vec<String>, Vec<String>), WorkflowError> {
        if let Some(c) = &ctx.session.static_context {
            return Ok(c.clone());
        }
        let attitude = self.query_static(ctx, LogTag::Attitude, self.flags.use_attitude)?;
        let routine = self.query_static(ctx, LogTag::Routine, self.flags.use_norms)?;
        ctx.session.static_context = Some((attitude.clone(), routine.clone()));
        Ok((attitude, routine))
    }

    /// Attitude statements for the persona; queried once and cached in the session.
    pub fn query_attitude(
        &self,
        session: &mut PersonaSession,
        day: u32,
        log: &mut DialogueLog,
    ) -> Result<Vec<String>, WorkflowError> {
        let mut ctx = StepCtx { session, day, log };
        Ok(self.static_context(&mut ctx)?.0)
    }

    /// Routine statements for the persona; queried once and cached in the session.
    pub fn query_routine(
        &self,
        session: &mut PersonaSession,
        day: u32,
        log: &mut DialogueLog,
    ) -> Result<Vec<String>, WorkflowError> {
        let mut ctx = StepCtx { session, day, log };
        Ok(self.static_context(&mut ctx)?.1)
    }

    fn pbc_step(
        &self,
        ctx: &mut StepCtx<'_, '_>,
        tpb: &TpbContext,
        events: &[IntentionEvent],
    ) -> Result<BTreeMap<IntentionType, f64>, WorkflowError> {
        if !self.flags.use_pbc {
            return Ok(IntentionType::ALL.iter().map(|&i| (i, parse::DEFAULT_LIKELIHOOD)).collect());
        }
        let profile = Self::profile_text(&ctx.session.persona);
        let history = Self::history_text(ctx.session.previous_day.as_ref(), events);
        let attitude = Self::list_text(&tpb.attitude, self.flags.use_attitude);
        let routine = Self::list_text(&tpb.routine, self.flags.use_norms);
        let weekday = Self::weekday_text(ctx.session);
        let prompt = render(
            &self.templates.pbc,
            &[
                ("profile", &profile),
                ("history", &history),
                ("attitude", &attitude),
                ("routine", &routine),
                ("weekday", &weekday),
            ],
        );
        self.exchange(ctx, LogTag::Pbc, prompt, parse::parse_pbc)
    }

    fn intention_step(
        &self,
        ctx: &mut StepCtx<'_, '_>,
        tpb: &TpbContext,
        events: &[IntentionEvent],
    ) -> Result<IntentionType, WorkflowError> {
        let profile = Self::profile_text(&ctx.session.persona);
        let history = Self::history_text(ctx.session.previous_day.as_ref(), events);
        let attitude = Self::list_text(&tpb.attitude, self.flags.use_attitude);
        let routine = Self::list_text(&tpb.routine, self.flags.use_norms);
        let pbc = if self.flags.use_pbc { Self::pbc_text(&tpb.pbc) } else { "(not considered)".into() };
        let weekday = Self::weekday_text(ctx.session);
        let prompt = render(
            &self.templates.intention,
            &[
                ("profile", &profile),
                ("history", &history),
                ("attitude", &attitude),
                ("routine", &routine),
                ("pbc", &pbc),
                ("fewshot", &self.fewshot),
                ("weekday", &weekday),
            ],
        );
        self.exchange(ctx, LogTag::Intention, prompt, parse::parse_intention)
    }

    fn time_step(
        &self,
        ctx: &mut StepCtx<'_, '_>,
        events: &[IntentionEvent],
        next: IntentionType,
    ) -> Result<TimeWindow, WorkflowError> {
        let profile = Self::profile_text(&ctx.session.persona);
        let history = Self::history_text(ctx.session.previous_day.as_ref(), events);
        let weekday = Self::weekday_text(ctx.session);
        let prompt = render(
            &self.templates.time,
            &[
                ("profile", &profile),
                ("history", &history),
                ("intention", next.label()),
                ("weekday", &weekday),
            ],
        );
        let previous_end = events.last().map(|e| e.window.end());
        self.exchange(ctx, LogTag::Time, prompt, |reply| parse::parse_time_reply(reply, next, previous_end))
    }

    /// Perceived likelihood of each next intention given the day so far.
    pub fn query_pbc(
        &self,
        session: &mut PersonaSession,
        day: u32,
        tpb: &TpbContext,
        history: &[IntentionEvent],
        log: &mut DialogueLog,
    ) -> Result<BTreeMap<IntentionType, f64>, WorkflowError> {
        self.pbc_step(&mut StepCtx { session, day, log }, tpb, history)
    }

    pub fn decide_next_intention(
        &self,
        session: &mut PersonaSession,
        day: u32,
        tpb: &TpbContext,
        history: &[IntentionEvent],
        log: &mut DialogueLog,
    ) -> Result<IntentionType, WorkflowError> {
        self.intention_step(&mut StepCtx { session, day, log }, tpb, history)
    }

    pub fn assign_time(
        &self,
        session: &mut PersonaSession,
        day: u32,
        history: &[IntentionEvent],
        next: IntentionType,
        log: &mut DialogueLog,
    ) -> Result<TimeWindow, WorkflowError> {
        self.time_step(&mut StepCtx { session, day, log }, history, next)
    }

    /// Generates one persona-day. Attitude and routine are queried only on the session's
    /// first day; afterwards they come from the cache.
    pub fn generate_day<R: Rng + ?Sized>(
        &self,
        session: &mut PersonaSession,
        day: u32,
        rng: &mut R,
    ) -> Result<DayOutput, DayFailure> {
        let mut log = DialogueLog::new();
        match self.run_day(session, day, rng, &mut log) {
            Ok(sequence) => {
                session.previous_day = Some(sequence.clone());
                let usage = log_usage(&log);
                Ok(DayOutput { sequence, log, usage })
            }
            Err(error) => Err(DayFailure { error, log }),
        }
    }

    fn run_day<R: Rng + ?Sized>(
        &self,
        session: &mut PersonaSession,
        day: u32,
        rng: &mut R,
        log: &mut DialogueLog,
    ) -> Result<IntentionSequence, WorkflowError> {
        let cap = sample_intention_cap(self.caps, rng)? as usize;
        let mut ctx = StepCtx { session, day, log };
        let (attitude, routine) = self.static_context(&mut ctx)?;
        let mut tpb = TpbContext::new(attitude, routine);
        let mut events: Vec<IntentionEvent> = Vec::new();
        while events.len() < cap {
            let pbc = self.pbc_step(&mut ctx, &tpb, &events)?;
            tpb.update_pbc(pbc);
            let intention = self.intention_step(&mut ctx, &tpb, &events)?;
            let window = self.time_step(&mut ctx, &events, intention)?;
            events.push(IntentionEvent { window, intention });
            let terminal_sleep = intention == IntentionType::Sleep && events.len() > 1;
            if window.end() >= DAY_COVERED_MINUTE || terminal_sleep {
                break;
            }
        }
        let sequence = IntentionSequence {
            persona_id: ctx.session.persona.id.clone(),
            day_index: day,
            events,
            cap: Some(cap),
        };
        validate_sequence(&sequence).map_err(|v| WorkflowError::Invalid(format!("{v:?}")))?;
        Ok(sequence)
    }
}
