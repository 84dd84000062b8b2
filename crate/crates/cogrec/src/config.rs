//! Run configuration: one TOML file, every key optional.
//!
//! ```toml
//! [provider]
//! mode = "oracle"             # oracle | live | replay
//! endpoint = "https://api.example.com/v1/chat/completions"
//! model = "chat-model"
//! api_key_env = "COGREC_API_KEY"
//! temperature = 0.0
//! timeout_secs = 60
//! max_retries = 3
//! max_in_flight = 4
//! cache_dir = "cache"         # optional; responses stored as cache/<sha256>.txt
//! embedding_dim = 128
//!
//! [dataset]
//! id = "synthetic"
//! format = "synthetic"        # synthetic | case_study | movielens-dat | csv | jsonl
//! path = "data/ml-1m"         # directory (movielens-dat) or interactions file
//! items = "items.csv"         # csv / jsonl item metadata
//! mapping = "mapping.toml"    # jsonl field mapping
//! min_interactions = 10
//! domain = "movie"
//!
//! [session]
//! k = 10
//! cycle_limit = 200
//! bootstrap = true
//! chunking = true
//! soar = true
//! chunk_scope = "global"      # global | session
//! chunk_score = 0.8           # numeric preference of learned rules
//! chunk_acceptable = false    # true: learned rules propose with `+` instead
//! candidate_cap = 100
//! history_cap = 50
//! rules_file = "rules.soar"   # optional; replaces bootstrap generation
//!
//! [experiment]
//! seed = 7
//! eval_k = 20
//! max_users = 500             # optional cap on evaluated users
//! lcf_bucket = 50
//! max_failure_rate = 0.01
//! variants = ["full", "w/o-bootstrap", "w/o-chunking", "w/o-soar", "rules-only", "popularity"]
//!
//! [synthetic]
//! users = 500
//! items = 1000
//! ...
//! ```

use std::path::{Path, PathBuf};

use cogrec_core::agent::{ChunkScope, FallbackPolicy, SessionConfig};
use cogrec_core::chunking::DEFAULT_CHUNK_SCORE;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::synthetic::SyntheticConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderMode {
    #[default]
    Oracle,
    Live,
    /// Answers only from the response cache; a miss is a provider error.
    Replay,
}

impl ProviderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderMode::Oracle => "oracle",
            ProviderMode::Live => "live",
            ProviderMode::Replay => "replay",
        }
    }
}

impl std::str::FromStr for ProviderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(ProviderMode::Oracle),
            "live" => Ok(ProviderMode::Live),
            "replay" | "replay-cache" => Ok(ProviderMode::Replay),
            other => Err(format!("unknown provider mode '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub cache_dir: Option<PathBuf>,
    pub embedding_dim: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            mode: ProviderMode::Oracle,
            endpoint: String::from("https://api.deepseek.com/v1/chat/completions"),
            model: String::from("deepseek-chat"),
            api_key_env: String::from("COGREC_API_KEY"),
            temperature: 0.0,
            timeout_secs: 60,
            max_retries: 3,
            max_in_flight: 4,
            cache_dir: None,
            embedding_dim: 128,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    #[default]
    Synthetic,
    CaseStudy,
    MovielensDat,
    Csv,
    Jsonl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub id: String,
    pub format: DatasetFormat,
    pub path: Option<PathBuf>,
    pub items: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub min_interactions: usize,
    pub domain: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            id: String::from("synthetic"),
            format: DatasetFormat::Synthetic,
            path: None,
            items: None,
            mapping: None,
            min_interactions: cogrec_core::data::MIN_INTERACTIONS,
            domain: String::from("movie"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeName {
    #[default]
    Global,
    Session,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSection {
    pub k: usize,
    pub cycle_limit: u64,
    pub bootstrap: bool,
    pub chunking: bool,
    pub soar: bool,
    pub chunk_scope: ScopeName,
    pub chunk_score: f64,
    pub chunk_acceptable: bool,
    pub candidate_cap: usize,
    pub history_cap: usize,
    pub rules_file: Option<PathBuf>,
}

impl Default for SessionSection {
    fn default() -> Self {
        let d = SessionConfig::default();
        SessionSection {
            k: d.k,
            cycle_limit: d.cycle_limit,
            bootstrap: true,
            chunking: true,
            soar: true,
            chunk_scope: ScopeName::Global,
            chunk_score: DEFAULT_CHUNK_SCORE,
            chunk_acceptable: false,
            candidate_cap: d.candidate_cap,
            history_cap: d.history_cap,
            rules_file: None,
        }
    }
}

impl SessionSection {
    pub fn to_session_config(&self, trace: bool) -> SessionConfig {
        SessionConfig {
            k: self.k,
            cycle_limit: self.cycle_limit,
            bootstrap: self.bootstrap,
            chunking: self.chunking,
            soar: self.soar,
            chunk_scope: match self.chunk_scope {
                ScopeName::Global => ChunkScope::Global,
                ScopeName::Session => ChunkScope::Session,
            },
            chunk_score: if self.chunk_acceptable { None } else { Some(self.chunk_score) },
            fallback: FallbackPolicy::OverlapRanking,
            candidate_cap: self.candidate_cap,
            history_cap: self.history_cap,
            trace,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: u64,
    pub eval_k: usize,
    pub max_users: Option<usize>,
    pub lcf_bucket: usize,
    pub max_failure_rate: f64,
    pub variants: Vec<String>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            seed: 7,
            eval_k: 20,
            max_users: None,
            lcf_bucket: 50,
            max_failure_rate: 0.01,
            variants: crate::experiment::Variant::ALL.iter().map(|v| v.name().to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub provider: ProviderConfig,
    pub dataset: DatasetConfig,
    pub session: SessionSection,
    pub experiment: ExperimentSection,
    pub synthetic: SyntheticConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut config = Config::parse(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Makes relative paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.dataset.path);
        fix(&mut self.dataset.items);
        fix(&mut self.dataset.mapping);
        fix(&mut self.session.rules_file);
        fix(&mut self.provider.cache_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.provider.temperature >= 0.0) {
            return bad("provider.temperature must be >= 0");
        }
        if self.provider.max_in_flight == 0 {
            return bad("provider.max_in_flight must be >= 1");
        }
        if self.session.k == 0 {
            return bad("session.k must be >= 1");
        }
        if self.experiment.eval_k == 0 {
            return bad("experiment.eval_k must be >= 1");
        }
        if self.experiment.lcf_bucket == 0 {
            return bad("experiment.lcf_bucket must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.experiment.max_failure_rate) {
            return bad("experiment.max_failure_rate must be within [0, 1]");
        }
        if !self.session.chunk_score.is_finite() {
            return bad("session.chunk_score must be finite");
        }
        for v in &self.experiment.variants {
            if v.parse::<crate::experiment::Variant>().is_err() {
                return Err(ConfigError::Invalid(format!("unknown variant '{v}'")));
            }
        }
        self.synthetic.validate().map_err(ConfigError::Invalid)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.session.k, 10);
        assert_eq!(c.provider.temperature, 0.0);
    }

    #[test]
    fn canonical_form_round_trips() {
        let c = Config::parse("[session]\nk = 5\nchunking = false\n[provider]\nmode = \"replay\"\n").unwrap();
        let again = Config::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert_eq!(again.provider.mode, ProviderMode::Replay);
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(matches!(Config::parse("[session]\nk = 0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(Config::parse("[provider]\ntemperature = -1.0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(Config::parse("[session]\nkk = 3"), Err(ConfigError::Parse(_))));
        assert!(matches!(Config::parse("[experiment]\nvariants = [\"nope\"]"), Err(ConfigError::Invalid(_))));
    }
}
