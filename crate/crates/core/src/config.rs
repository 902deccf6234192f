//! The declarative run configuration.
//!
//! One JSON file names every input of a run. Relative paths resolve against the file's own
//! directory, every referenced file must exist at load time, and unknown keys are rejected.
//! Only the HTTP endpoint, key and model may come from the environment instead.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gravity::{build_index, load_pois, CategoryMap, GravityParams, ProfileDistribution, SpatialIndex};
use crate::llm::{BackendConfig, BackendKind, ChatBackend};
use crate::metrics::GridSpec;
use crate::workflow::{
    AblationFlags, FewShotBank, IntentionCountDistribution, PromptTemplates, DEFAULT_MAX_RETRIES,
};

/// Used when the configuration names no intention-count distribution.
pub const DEFAULT_CAPS: [(u32, f64); 4] = [(4, 0.2), (5, 0.3), (6, 0.3), (7, 0.2)];

/// Cell size of the POI lookup grid; independent of the evaluation grid.
pub const POI_INDEX_CELL_KM: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}:{column}: {message}")]
    Syntax { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Either an inline `{count: probability}` map or a path to a JSON file holding one, such as
/// the histogram written by `fit-gravity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CapSource {
    Inline(BTreeMap<String, f64>),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendConfig,
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    #[serde(default)]
    pub fewshot_path: Option<PathBuf>,
    #[serde(default)]
    pub cap_distribution: Option<CapSource>,
    #[serde(default)]
    pub ablation: AblationFlags,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub gravity: GravityParams,
    #[serde(default)]
    pub category_map: Option<PathBuf>,
    pub pois: PathBuf,
    pub profile_distribution: PathBuf,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_days")]
    pub days: u32,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_retries() -> u32 {
    DEFAULT_MAX_RETRIES
}

fn default_days() -> u32 {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn must_exist(what: &str, p: &Path) -> Result<(), ConfigError> {
    if p.exists() {
        Ok(())
    } else {
        Err(ConfigError::File { path: p.to_path_buf(), message: format!("{what} not found") })
    }
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

impl RunConfig {
    /// Parses, resolves paths, fills backend fields from the environment and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::File { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, path, &base)
    }

    pub fn parse(text: &str, path: &Path, base: &Path) -> Result<Self, ConfigError> {
        let mut c: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        c.backend = c.backend.with_env();
        if let Some(t) = c.backend.transcript_path.as_mut() {
            resolve(base, t);
        }
        for p in [&mut c.templates_dir, &mut c.fewshot_path, &mut c.category_map].into_iter().flatten() {
            resolve(base, p);
        }
        if let Some(CapSource::File(p)) = c.cap_distribution.as_mut() {
            resolve(base, p);
        }
        resolve(base, &mut c.pois);
        resolve(base, &mut c.profile_distribution);
        resolve(base, &mut c.output_dir);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.backend.validate().map_err(invalid)?;
        if self.backend.kind == BackendKind::Scripted {
            must_exist("transcript", self.backend.transcript_path.as_deref().expect("validated"))?;
        }
        if let Some(p) = &self.templates_dir {
            must_exist("templates directory", p)?;
        }
        if let Some(p) = &self.fewshot_path {
            must_exist("few-shot bank", p)?;
        }
        if let Some(p) = &self.category_map {
            must_exist("category map", p)?;
        }
        if let Some(CapSource::File(p)) = &self.cap_distribution {
            must_exist("intention-count distribution", p)?;
        }
        must_exist("POI file", &self.pois)?;
        must_exist("profile distribution", &self.profile_distribution)?;
        self.gravity.validate().map_err(invalid)?;
        if let Some(g) = &self.grid {
            g.validate().map_err(invalid)?;
        }
        if self.days == 0 {
            return Err(ConfigError::Invalid("days must be at least 1".into()));
        }
        Ok(())
    }

    pub fn templates(&self) -> Result<PromptTemplates, ConfigError> {
        match &self.templates_dir {
            Some(d) => PromptTemplates::load_dir(d).map_err(invalid),
            None => Ok(PromptTemplates::default()),
        }
    }

    pub fn fewshot(&self) -> Result<FewShotBank, ConfigError> {
        match &self.fewshot_path {
            Some(p) => FewShotBank::load(p).map_err(invalid),
            None => Ok(FewShotBank::default()),
        }
    }

    pub fn caps(&self) -> Result<IntentionCountDistribution, ConfigError> {
        let histogram = match &self.cap_distribution {
            None => DEFAULT_CAPS.into_iter().collect(),
            Some(CapSource::Inline(h)) => h
                .iter()
                .map(|(k, &p)| {
                    k.parse::<u32>()
                        .map(|k| (k, p))
                        .map_err(|_| invalid(format!("cap_distribution key {k:?} is not a count")))
                })
                .collect::<Result<_, _>>()?,
            Some(CapSource::File(p)) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError::File { path: p.clone(), message: e.to_string() })?;
                let d: IntentionCountDistribution = serde_json::from_str(&text)
                    .map_err(|e| ConfigError::File { path: p.clone(), message: e.to_string() })?;
                d.histogram
            }
        };
        IntentionCountDistribution::new(histogram).map_err(invalid)
    }

    pub fn category_map(&self) -> Result<CategoryMap, ConfigError> {
        match &self.category_map {
            Some(p) => CategoryMap::load(p).map_err(invalid),
            None => Ok(CategoryMap::default()),
        }
    }

    pub fn poi_index(&self) -> Result<SpatialIndex, ConfigError> {
        let pois = load_pois(&self.pois).map_err(invalid)?;
        build_index(pois, POI_INDEX_CELL_KM, None).map_err(invalid)
    }

    pub fn profiles(&self) -> Result<ProfileDistribution, ConfigError> {
        ProfileDistribution::load(&self.profile_distribution)
            .and_then(ProfileDistribution::normalised)
            .map_err(invalid)
    }

    pub fn build_backend(&self) -> Result<Arc<dyn ChatBackend>, ConfigError> {
        self.backend.build(Path::new("")).map_err(invalid)
    }
}
