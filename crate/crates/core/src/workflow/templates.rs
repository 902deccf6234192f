use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use super::WorkflowError;

/// Placeholder names understood by [`render`]. Braces around any other text are left alone.
pub const PLACEHOLDERS: [&str; 8] =
    ["profile", "history", "attitude", "routine", "pbc", "fewshot", "intention", "weekday"];

/// Prompt text for each workflow step, with `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub system: String,
    pub attitude: String,
    pub routine: String,
    pub pbc: String,
    pub intention: String,
    pub time: String,
}

const REQUIRED: [(&str, &[&str]); 5] = [
    ("attitude", &["profile"]),
    ("routine", &["profile"]),
    ("pbc", &["profile", "history", "attitude", "routine"]),
    ("intention", &["history", "attitude", "routine", "pbc", "fewshot"]),
    ("time", &["history", "intention"]),
];

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            system: include_str!("../../assets/templates/system.txt").to_string(),
            attitude: include_str!("../../assets/templates/attitude.txt").to_string(),
            routine: include_str!("../../assets/templates/routine.txt").to_string(),
            pbc: include_str!("../../assets/templates/pbc.txt").to_string(),
            intention: include_str!("../../assets/templates/intention.txt").to_string(),
            time: include_str!("../../assets/templates/time.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    /// Loads `<name>.txt` for each step from `dir`; missing files fall back to the defaults.
    pub fn load_dir(dir: &Path) -> Result<Self, WorkflowError> {
        let mut t = Self::default();
        for (name, slot) in [
            ("system", &mut t.system),
            ("attitude", &mut t.attitude),
            ("routine", &mut t.routine),
            ("pbc", &mut t.pbc),
            ("intention", &mut t.intention),
            ("time", &mut t.time),
        ] {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = fs::read_to_string(&path)
                    .map_err(|e| WorkflowError::Config(format!("{}: {e}", path.display())))?;
            }
        }
        t.validate()?;
        Ok(t)
    }

    fn by_name(&self, name: &str) -> &str {
        match name {
            "attitude" => &self.attitude,
            "routine" => &self.routine,
            "pbc" => &self.pbc,
            "intention" => &self.intention,
            "time" => &self.time,
            _ => &self.system,
        }
    }

    /// Every placeholder a step fills must appear in that step's template.
    pub fn validate(&self) -> Result<(), WorkflowError> {
        for (name, required) in REQUIRED {
            let text = self.by_name(name);
            let missing: Vec<&str> =
                required.iter().copied().filter(|p| !text.contains(&format!("{{{p}}}"))).collect();
            if !missing.is_empty() {
                return Err(WorkflowError::Template { template: name.into(), missing: missing.join(", ") });
            }
        }
        Ok(())
    }
}

/// Substitutes known placeholders in a single pass, so substituted text is never re-expanded.
/// Braces around other text are kept; known placeholders without a value render as empty.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    static SLOT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z]+)\}").unwrap());
    SLOT.replace_all(template, |c: &regex::Captures<'_>| {
        let name = &c[1];
        if !PLACEHOLDERS.contains(&name) {
            return c[0].to_string();
        }
        vars.iter().find(|(k, _)| *k == name).map(|(_, v)| v.to_string()).unwrap_or_default()
    })
    .into_owned()
}
