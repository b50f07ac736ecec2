use std::fmt;
use std::path::{Path, PathBuf};

use molsearch::mcts::SearchConfig;
use molsearch::policy::RemoteConfig;
use molsearch::tasks::{TaskKind, TaskSpec, DEFAULT_FEATURE_CAP};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MAX_RETRIES: usize = 3;

/// Bad input from the user: unreadable or invalid config, missing files.
/// Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(ConfigError(msg.into()).into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Scripted,
    Heuristic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteConfig>,
    /// Directory of edited prompt templates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

fn default_retries() -> usize {
    DEFAULT_MAX_RETRIES
}

/// Search settings that differ from the task's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub task: TaskSpec,
    #[serde(default)]
    pub search: SearchOverrides,
    pub provider: ProviderConfig,
    /// Rule-set document; its sentences are the knowledge handed to the
    /// policy during search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<PathBuf>,
    /// One sentence per line; replaces knowledge synthesis in coldstart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// One start SMILES per line; defaults to the task's start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub provider: Option<ProviderKind>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Reads the file, resolves relative paths against its directory,
    /// applies overrides, and validates.
    pub fn load(path: &Path, ov: &Overrides) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        if let Some(seed) = ov.seed {
            cfg.seed = seed;
        }
        if let Some(kind) = ov.provider {
            cfg.provider.kind = kind;
        }
        if let Some(out) = &ov.out {
            cfg.out = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.rules);
        fix(&mut self.corpus);
        fix(&mut self.dataset);
        fix(&mut self.starts);
        fix(&mut self.out);
        fix(&mut self.provider.script);
        fix(&mut self.provider.prompts);
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return config_err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let files = [
            ("rules", &self.rules),
            ("corpus", &self.corpus),
            ("dataset", &self.dataset),
            ("starts", &self.starts),
            ("provider.script", &self.provider.script),
            ("provider.prompts", &self.provider.prompts),
        ];
        for (name, p) in files {
            if let Some(p) = p {
                if !p.exists() {
                    return config_err(format!("{name}: {} does not exist", p.display()));
                }
            }
        }
        match self.provider.kind {
            ProviderKind::Scripted if self.provider.script.is_none() => {
                return config_err("the scripted provider needs provider.script")
            }
            ProviderKind::Remote if self.provider.remote.is_none() => {
                return config_err("the remote provider needs provider.remote")
            }
            _ => {}
        }
        if let Some(c) = self.feature_cap {
            if c == 0 {
                return config_err("feature_cap must be at least 1");
            }
        }
        self.search_config().validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(())
    }

    pub fn require_kind(&self, kind: TaskKind) -> anyhow::Result<()> {
        if self.task.kind() != kind {
            return config_err(format!("this command needs a {kind:?} task, the config has {:?}", self.task.kind()));
        }
        Ok(())
    }

    pub fn search_config(&self) -> SearchConfig<f64> {
        let base = match self.task.kind() {
            TaskKind::Optimization => SearchConfig::optimization(),
            TaskKind::Prediction => SearchConfig::prediction(),
        };
        let s = &self.search;
        SearchConfig {
            iterations: s.iterations.unwrap_or(base.iterations),
            exploration: s.exploration.unwrap_or(base.exploration),
            width: s.width.unwrap_or(base.width),
            lambda: self.task.lambda,
            gamma: self.task.gamma,
            seed: self.seed,
            dedup: s.dedup.unwrap_or(base.dedup),
            r_min: s.r_min.unwrap_or(base.r_min),
        }
    }

    pub fn feature_cap(&self) -> usize {
        self.feature_cap.unwrap_or(DEFAULT_FEATURE_CAP)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }
}
