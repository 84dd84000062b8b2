//! `manifest.json`: what was run, with which inputs, written next to the
//! outputs together with the effective `config.toml`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Config;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub dataset_id: String,
    pub provider_mode: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub config_hash: String,
}

impl RunManifest {
    pub fn new(command: Vec<String>, config_path: Option<&Path>, config: &Config, output_dir: &Path) -> Self {
        RunManifest {
            command,
            config_path: config_path.map(Path::to_path_buf),
            dataset_id: config.dataset.id.clone(),
            provider_mode: config.provider.mode.as_str().to_string(),
            seed: config.experiment.seed,
            output_dir: output_dir.to_path_buf(),
            config_hash: config.hash(),
        }
    }

    /// Creates the output directory and writes the manifest and the
    /// effective configuration into it.
    pub fn write(&self, config: &Config) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.output_dir)?;
        std::fs::write(self.output_dir.join("config.toml"), config.to_toml())?;
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(self.output_dir.join("manifest.json"), json + "\n")
    }

    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(dir.join("manifest.json"))?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn written_config_reproduces_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let config = Config::parse("[session]\nk = 3\n").unwrap();
        let m = RunManifest::new(vec!["eval".into()], None, &config, &out);
        m.write(&config).unwrap();
        assert_eq!(RunManifest::read(&out).unwrap(), m);
        let again = Config::load(&out.join("config.toml")).unwrap();
        assert_eq!(again.hash(), m.config_hash);
    }
}
