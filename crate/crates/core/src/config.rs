//! The pipeline config file.
//!
//! A single JSON document drives every subcommand. Relative paths are
//! resolved against the directory holding the file. Unknown fields are
//! rejected so typos fail early. Example:
//!
//! ```json
//! {
//!   "campaign_id": "dec-2023",
//!   "repository": "repo",
//!   "inputs": { "url_lists": ["urls.txt"], "captures": [], "collapse_registrable": false },
//!   "ti": { "provider_id": "vt", "fixture": "ti.jsonl" },
//!   "lists": [{ "path": "pihole.hosts", "format": "hosts" }],
//!   "limits": { "max_inflight": 64, "qps": 20 },
//!   "analytics": { "percent_mode": "truncate2", "agreement_denominator": "opinions" }
//! }
//! ```
//!
//! `resolvers` defaults to the shipped Cisco / Quad9 / Cloudflare profiles.
//! The TI API key is never read from the file, only from
//! [`crate::ti::API_KEY_ENV`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adlists::{sha256_hex, ListFormat, SubdomainMatching};
use crate::analytics::{AnalyzeOptions, ReportFormat};
use crate::dns::{validate_profiles, CampaignLimits, ProfileError, ResolverProfile};
use crate::repository::validate_campaign_id;
use crate::ti::LiveConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    #[serde(default)]
    pub url_lists: Vec<PathBuf>,
    #[serde(default)]
    pub captures: Vec<PathBuf>,
    /// Files with one domain per line, taken as-is.
    #[serde(default)]
    pub domain_lists: Vec<PathBuf>,
    #[serde(default)]
    pub collapse_registrable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiConfig {
    #[serde(default = "default_ti_provider")]
    pub provider_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub live: Option<LiveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_path: Option<PathBuf>,
    #[serde(default = "default_ti_concurrency")]
    pub concurrency: usize,
}

fn default_ti_provider() -> String {
    "ti".into()
}

fn default_ti_concurrency() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ListSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: ListFormat,
    /// Defaults to the file name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl ListSpec {
    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.path.display().to_string())
        })
    }
}

fn default_formats() -> Vec<ReportFormat> {
    vec![ReportFormat::Json, ReportFormat::Plotdata]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyticsConfig {
    #[serde(flatten)]
    pub options: AnalyzeOptions,
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        AnalyticsConfig {
            options: AnalyzeOptions::default(),
            formats: default_formats(),
        }
    }
}

fn default_repository() -> PathBuf {
    "repo".into()
}

fn default_out() -> PathBuf {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub campaign_id: String,
    #[serde(default = "default_repository")]
    pub repository: PathBuf,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default = "ResolverProfile::defaults")]
    pub resolvers: Vec<ResolverProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ti: Option<TiConfig>,
    #[serde(default)]
    pub lists: Vec<ListSpec>,
    #[serde(default)]
    pub subdomain_matching: SubdomainMatching,
    #[serde(default)]
    pub limits: CampaignLimits,
    #[serde(default)]
    pub analytics: AnalyticsConfig,
    /// sha256 of the config bytes; filled in on load.
    #[serde(skip)]
    pub digest: String,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str_in(&text, base)
    }

    /// Parse `text`, resolving relative paths against `base`, and validate.
    pub fn from_str_in(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.digest = sha256_hex(text.as_bytes());
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.repository);
        fix(&mut self.out);
        self.inputs
            .url_lists
            .iter_mut()
            .chain(&mut self.inputs.captures)
            .chain(&mut self.inputs.domain_lists)
            .for_each(fix);
        for l in &mut self.lists {
            fix(&mut l.path);
        }
        if let Some(ti) = &mut self.ti {
            ti.fixture.as_mut().map(fix);
            ti.cache_path.as_mut().map(fix);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_campaign_id(&self.campaign_id).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        validate_profiles(&self.resolvers)?;
        if self.limits.max_inflight == 0 {
            return Err(ConfigError::Invalid("limits.max_inflight must be >= 1".into()));
        }
        if !self.limits.qps.is_finite() {
            return Err(ConfigError::Invalid("limits.qps must be finite".into()));
        }
        if self.analytics.options.workers == 0 {
            return Err(ConfigError::Invalid("analytics.workers must be >= 1".into()));
        }
        if let Some(ti) = &self.ti {
            match (&ti.fixture, &ti.live) {
                (Some(_), Some(_)) => return Err(ConfigError::Invalid("ti: set either fixture or live, not both".into())),
                (None, None) => return Err(ConfigError::Invalid("ti: one of fixture or live is required".into())),
                _ => {}
            }
            if ti.provider_id.is_empty() {
                return Err(ConfigError::Invalid("ti.provider_id must be nonempty".into()));
            }
            if ti.concurrency == 0 {
                return Err(ConfigError::Invalid("ti.concurrency must be >= 1".into()));
            }
            if let Some(live) = &ti.live {
                if !(live.requests_per_minute.is_finite() && live.requests_per_minute > 0.0) {
                    return Err(ConfigError::Invalid("ti.live.requests_per_minute must be > 0".into()));
                }
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for l in &self.lists {
            if !names.insert(l.name()) {
                return Err(ConfigError::Invalid(format!("duplicate list name {:?}", l.name())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = PipelineConfig::from_str_in(r#"{"campaign_id":"c1"}"#, Path::new("/base")).unwrap();
        assert_eq!(cfg.resolvers.len(), 3);
        assert_eq!(cfg.repository, Path::new("/base/repo"));
        assert_eq!(cfg.limits.max_inflight, 64);
        assert_eq!(cfg.digest.len(), 64);
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let cfg = PipelineConfig::from_str_in(
            r#"{"campaign_id":"c1","repository":"/abs/repo","inputs":{"url_lists":["u.txt"]},
                "ti":{"fixture":"ti.jsonl"},"lists":[{"path":"l/hosts","format":"hosts"}]}"#,
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!(cfg.repository, Path::new("/abs/repo"));
        assert_eq!(cfg.inputs.url_lists[0], Path::new("/cfg/u.txt"));
        assert_eq!(cfg.ti.unwrap().fixture.unwrap(), Path::new("/cfg/ti.jsonl"));
        assert_eq!(cfg.lists[0].name(), "hosts");
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            r#"{"campaign_id":"a/b"}"#,
            r#"{"campaign_id":"c","limits":{"max_inflight":0}}"#,
            r#"{"campaign_id":"c","ti":{}}"#,
            r#"{"campaign_id":"c","typo":1}"#,
            r#"{"campaign_id":"c","lists":[{"path":"x"},{"path":"d/x"}]}"#,
        ];
        for text in bad {
            assert!(PipelineConfig::from_str_in(text, Path::new(".")).is_err(), "{text}");
        }
    }

    #[test]
    fn digest_tracks_bytes() {
        let a = PipelineConfig::from_str_in(r#"{"campaign_id":"c1"}"#, Path::new(".")).unwrap();
        let b = PipelineConfig::from_str_in(r#"{"campaign_id":"c2"}"#, Path::new(".")).unwrap();
        assert_ne!(a.digest, b.digest);
    }
}
