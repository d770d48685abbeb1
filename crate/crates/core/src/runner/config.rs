use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::gateway::BackendConfig;
use crate::ingest::{SourceSpec, SubsetSpec};
use crate::prompt::StsqaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dqa,
    Stsqa,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dqa" => Ok(Method::Dqa),
            "stsqa" => Ok(Method::Stsqa),
            other => Err(format!("unknown method {other:?} (expected dqa or stsqa)")),
        }
    }
}

/// A complete evaluation setup, read from TOML. Relative paths are
/// resolved against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: SourceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets_filter: Option<Vec<String>>,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stsqa: Option<StsqaConfig>,
    pub backend: BackendConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<SubsetSpec>,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub seed: u64,
    /// QAP library JSONL; the bundled SemEval-2016 library when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qap_library: Option<PathBuf>,
}

fn default_concurrency() -> usize {
    4
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, RunError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text =
            fs::read_to_string(path).map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.source.path);
        resolve(&mut self.cache_dir);
        resolve(&mut self.output_dir);
        if let Some(lib) = self.qap_library.as_mut() {
            resolve(lib);
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.concurrency == 0 {
            return Err(RunError::Config("concurrency must be at least 1".into()));
        }
        match (&self.method, &self.stsqa) {
            (Method::Stsqa, None) => {
                return Err(RunError::Config(
                    "method = \"stsqa\" requires an [stsqa] section".into(),
                ))
            }
            (_, Some(s)) => s.validate().map_err(RunError::Config)?,
            _ => {}
        }
        if let Some(s) = &self.subset {
            if s.n == 0 {
                return Err(RunError::Config("subset.n must be at least 1".into()));
            }
        }
        self.backend.validate().map_err(|e| RunError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
