//! Run configuration (TOML) and its dry-run validation.
//!
//! ```toml
//! seed = 42
//! output_dir = "out"
//! fewshot = "fewshot.jsonl"
//!
//! [corpus]
//! path = "corpus.csv"
//!
//! [[models]]
//! kind = "mock"
//! model_name = "mock-a"
//! seed = 7
//! levels = [1, 2, 3]
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::MissingRaterPolicy;
use crate::corpus::{load_corpus, CorpusFormat};
use crate::error::{Error, Result};
use crate::gateway::{BackendConfig, BackendKind};
use crate::prompt::{load_fewshot, FewShotSet, Level, PromptTemplate};
use crate::rubric::RubricMapping;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSource {
    pub path: PathBuf,
    #[serde(default)]
    pub format: Option<CorpusFormat>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TemplatePaths {
    pub level1: Option<PathBuf>,
    pub level2: Option<PathBuf>,
    pub level3: Option<PathBuf>,
}

impl TemplatePaths {
    fn get(&self, level: Level) -> Option<&PathBuf> {
        match level {
            Level::Holistic => self.level1.as_ref(),
            Level::Hybrid => self.level2.as_ref(),
            Level::RubricFewShot => self.level3.as_ref(),
        }
    }
}

fn default_iters() -> usize {
    1000
}
fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self {
            iters: default_iters(),
            alpha: default_alpha(),
        }
    }
}

fn all_levels() -> Vec<Level> {
    Level::ALL.to_vec()
}

/// A backend plus the levels it is enabled for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    #[serde(flatten)]
    pub backend: BackendConfig,
    #[serde(default = "all_levels")]
    pub levels: Vec<Level>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: CorpusSource,
    #[serde(default)]
    pub templates: TemplatePaths,
    #[serde(default)]
    pub fewshot: Option<PathBuf>,
    #[serde(default)]
    pub rubric_mapping: Option<PathBuf>,
    #[serde(default)]
    pub bootstrap: BootstrapSettings,
    #[serde(default)]
    pub on_missing_rater: MissingRaterPolicy,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub baseline: Option<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    pub models: Vec<ModelEntry>,
    /// Restricts the run to these levels (command-line `--level`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_filter: Option<Vec<Level>>,
    /// Restricts the run to these models (command-line `--model`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_filter: Option<Vec<String>>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line overrides; `None` leaves the file value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub levels: Option<Vec<Level>>,
    pub models: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub bootstrap_iters: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub max_concurrency: Option<usize>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.base_dir = base_dir.to_path_buf();
        for m in &mut cfg.models {
            // a mock model without its own seed follows the run seed
            if m.backend.kind == BackendKind::Mock && m.backend.seed.is_none() {
                m.backend.seed = Some(cfg.seed);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(levels) = &o.levels {
            self.level_filter = Some(levels.clone());
        }
        if let Some(models) = &o.models {
            self.model_filter = Some(models.clone());
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(iters) = o.bootstrap_iters {
            self.bootstrap.iters = iters;
        }
        if let Some(dir) = &o.output_dir {
            // command-line paths are relative to the working directory
            self.output_dir = std::path::absolute(dir).unwrap_or_else(|_| dir.clone());
        }
        if let Some(n) = o.max_concurrency {
            for m in &mut self.models {
                m.backend.max_concurrency = n;
            }
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn cache_dir(&self) -> PathBuf {
        match &self.cache_dir {
            Some(d) => self.resolve(d),
            None => self.output_dir().join("cache"),
        }
    }

    pub fn corpus_format(&self) -> Option<CorpusFormat> {
        self.corpus
            .format
            .or_else(|| CorpusFormat::from_path(&self.corpus.path))
    }

    /// Selected models, in file order.
    pub fn selected_models(&self) -> Vec<&ModelEntry> {
        self.models
            .iter()
            .filter(|m| {
                self.model_filter
                    .as_ref()
                    .is_none_or(|f| f.iter().any(|n| n == "all" || *n == m.backend.model_name))
            })
            .collect()
    }

    fn level_selected(&self, level: Level) -> bool {
        self.level_filter
            .as_ref()
            .is_none_or(|f| f.contains(&level))
    }

    /// Enabled (model, level) groups after filters.
    pub fn enabled_groups(&self) -> Vec<(&ModelEntry, Level)> {
        let mut out = Vec::new();
        for m in self.selected_models() {
            for level in Level::ALL {
                if self.level_selected(level) && m.levels.contains(&level) {
                    out.push((m, level));
                }
            }
        }
        out
    }

    /// Groups selected by the filters but disabled for the model.
    pub fn disabled_groups(&self) -> Vec<(&ModelEntry, Level)> {
        let mut out = Vec::new();
        for m in self.selected_models() {
            for level in Level::ALL {
                if self.level_selected(level) && !m.levels.contains(&level) {
                    out.push((m, level));
                }
            }
        }
        out
    }

    fn needs(&self, level: Level) -> bool {
        self.enabled_groups().iter().any(|(_, l)| *l == level)
    }

    /// Short stable digest of the effective configuration, excluding where
    /// outputs and the cache are written.
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).unwrap_or_default();
        if let Some(obj) = value.as_object_mut() {
            obj.remove("output_dir");
            obj.remove("cache_dir");
        }
        let canonical = value.to_string();
        hex::encode(Sha256::digest(canonical.as_bytes()))[..16].to_string()
    }

    pub fn template(&self, level: Level) -> Result<PromptTemplate> {
        match self.templates.get(level) {
            Some(p) => PromptTemplate::load(level, &self.resolve(p)),
            None => Ok(PromptTemplate::default_for(level)),
        }
    }

    pub fn mapping(&self) -> Result<RubricMapping> {
        match &self.rubric_mapping {
            Some(p) => RubricMapping::load(&self.resolve(p)),
            None => Ok(RubricMapping::default()),
        }
    }

    pub fn fewshot_set(&self) -> Result<Option<FewShotSet>> {
        match &self.fewshot {
            Some(p) => load_fewshot(&self.resolve(p)).map(Some),
            None => Ok(None),
        }
    }

    /// Every problem found without contacting any backend.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.models.is_empty() {
            out.push("no models configured".to_string());
        }
        let mut names: Vec<&str> = self
            .models
            .iter()
            .map(|m| m.backend.model_name.as_str())
            .collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            out.push("model names must be unique".to_string());
        }
        for m in &self.models {
            out.extend(m.backend.violations());
        }
        if self.enabled_groups().is_empty() {
            out.push("no (model, level) combination is enabled".to_string());
        }
        if self.bootstrap.iters == 0 {
            out.push("bootstrap iters must be at least 1".to_string());
        }
        if !(self.bootstrap.alpha > 0.0 && self.bootstrap.alpha < 1.0) {
            out.push(format!(
                "bootstrap alpha {} not in (0, 1)",
                self.bootstrap.alpha
            ));
        }

        let corpus_path = self.resolve(&self.corpus.path);
        match self.corpus_format() {
            None => out.push(format!(
                "{}: cannot infer corpus format; set corpus.format",
                corpus_path.display()
            )),
            Some(format) => match load_corpus(&corpus_path, format) {
                Ok(essays) if essays.is_empty() => {
                    out.push(format!("{}: corpus is empty", corpus_path.display()))
                }
                Ok(_) => {}
                Err(e) => out.push(format!("{}: {e}", corpus_path.display())),
            },
        }

        for level in Level::ALL {
            if !self.needs(level) {
                continue;
            }
            match self.template(level) {
                Ok(t) => {
                    if let Err(e) = t.check() {
                        out.push(format!("level {} template: {e}", level.number()));
                    }
                }
                Err(e) => out.push(format!("level {} template: {e}", level.number())),
            }
        }

        if let Err(e) = self.mapping() {
            out.push(format!("rubric mapping: {e}"));
        }

        if self.needs(Level::RubricFewShot) {
            match &self.fewshot {
                None => {
                    out.push("level 3 is enabled but no few-shot file is configured".to_string())
                }
                Some(p) => {
                    let path = self.resolve(p);
                    if let Err(e) = load_fewshot(&path) {
                        out.push(format!("{}: {e}", path.display()));
                    }
                }
            }
        }
        out
    }
}

/// Dry-run validation of a config file.
pub fn validate(path: &Path) -> std::result::Result<(), Vec<String>> {
    let cfg = RunConfig::load(path).map_err(|e| vec![e.to_string()])?;
    let v = cfg.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}
