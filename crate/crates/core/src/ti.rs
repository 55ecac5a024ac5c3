//! Threat-intelligence reports with per-partner tallies, from a JSONL fixture
//! or a live VirusTotal-shaped HTTP endpoint.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::Domain;
use crate::ratelimit::RateLimiter;
use crate::timestamp;

/// Environment variable holding the live provider's API key.
pub const API_KEY_ENV: &str = "ADMAL_TI_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Harmless,
    Undetected,
    Suspicious,
    Malicious,
    Timeout,
}

impl Category {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "harmless" => Some(Category::Harmless),
            "undetected" => Some(Category::Undetected),
            "suspicious" => Some(Category::Suspicious),
            "malicious" => Some(Category::Malicious),
            "timeout" => Some(Category::Timeout),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum TiError {
    #[error("no partner expressed an opinion")]
    Undefined,
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("unexpected response shape: {0}")]
    Schema(String),
    #[error("fixture line {line}: {message}")]
    Fixture { line: usize, message: String },
    #[error("cache {path}: {source}")]
    Cache {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Partner tallies for one domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TiReport {
    pub domain: Domain,
    pub harmless: u32,
    pub undetected: u32,
    pub suspicious: u32,
    pub malicious: u32,
    #[serde(default)]
    pub timeout: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner_verdicts: Option<BTreeMap<String, Category>>,
    #[serde(with = "timestamp")]
    pub fetched_at: DateTime<Utc>,
}

impl TiReport {
    /// Counts in the order harmless, undetected, suspicious, malicious, timeout.
    pub fn from_counts(domain: Domain, counts: [u32; 5]) -> Self {
        let [harmless, undetected, suspicious, malicious, timeout] = counts;
        TiReport {
            domain,
            harmless,
            undetected,
            suspicious,
            malicious,
            timeout,
            partner_verdicts: None,
            fetched_at: DateTime::UNIX_EPOCH,
        }
    }

    pub fn from_partners(domain: Domain, partners: BTreeMap<String, Category>) -> Self {
        let mut report = TiReport::from_counts(domain, [0; 5]);
        for cat in partners.values() {
            *report.count_mut(*cat) += 1;
        }
        report.partner_verdicts = Some(partners);
        report
    }

    pub fn count(&self, cat: Category) -> u32 {
        match cat {
            Category::Harmless => self.harmless,
            Category::Undetected => self.undetected,
            Category::Suspicious => self.suspicious,
            Category::Malicious => self.malicious,
            Category::Timeout => self.timeout,
        }
    }

    fn count_mut(&mut self, cat: Category) -> &mut u32 {
        match cat {
            Category::Harmless => &mut self.harmless,
            Category::Undetected => &mut self.undetected,
            Category::Suspicious => &mut self.suspicious,
            Category::Malicious => &mut self.malicious,
            Category::Timeout => &mut self.timeout,
        }
    }

    /// Partner map, when present, must tally to the count fields.
    pub fn is_consistent(&self) -> bool {
        let Some(partners) = &self.partner_verdicts else {
            return true;
        };
        let mut tally = [0u32; 5];
        for cat in partners.values() {
            tally[*cat as usize] += 1;
        }
        tally
            == [
                self.harmless,
                self.undetected,
                self.suspicious,
                self.malicious,
                self.timeout,
            ]
    }

    pub fn threat_votes(&self) -> u64 {
        self.suspicious as u64 + self.malicious as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TiLookupResult {
    Report(TiReport),
    NoReport { domain: Domain },
}

impl TiLookupResult {
    pub fn domain(&self) -> &Domain {
        match self {
            TiLookupResult::Report(r) => &r.domain,
            TiLookupResult::NoReport { domain } => domain,
        }
    }

    pub fn report(&self) -> Option<&TiReport> {
        match self {
            TiLookupResult::Report(r) => Some(r),
            TiLookupResult::NoReport { .. } => None,
        }
    }
}

/// At least one partner voted suspicious or malicious.
pub fn threat_flag(report: &TiReport) -> bool {
    report.threat_votes() >= 1
}

/// Which votes count in the agreement denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementDenominator {
    /// harmless + suspicious + malicious
    #[default]
    Opinions,
    /// every partner, including undetected and timeout
    AllPartners,
}

/// Share of counted partners that flag the domain as a threat.
pub fn agreement_ratio(report: &TiReport, denominator: AgreementDenominator) -> Result<f64, TiError> {
    let threats = report.threat_votes();
    let mut base = report.harmless as u64 + threats;
    if denominator == AgreementDenominator::AllPartners {
        base += report.undetected as u64 + report.timeout as u64;
    }
    if threats + report.harmless as u64 == 0 || base == 0 {
        return Err(TiError::Undefined);
    }
    Ok(threats as f64 / base as f64)
}

#[derive(Debug, Deserialize)]
struct FixtureLine {
    domain: String,
    #[serde(default)]
    harmless: u32,
    #[serde(default)]
    undetected: u32,
    #[serde(default)]
    suspicious: u32,
    #[serde(default)]
    malicious: u32,
    #[serde(default)]
    timeout: u32,
    #[serde(default)]
    partners: Option<BTreeMap<String, Category>>,
}

/// Offline reports keyed by domain. Domains not present yield `NoReport`.
#[derive(Debug, Clone, Default)]
pub struct FixtureProvider {
    reports: HashMap<Domain, TiReport>,
}

impl FixtureProvider {
    pub fn from_reports(reports: impl IntoIterator<Item = TiReport>) -> Self {
        FixtureProvider {
            reports: reports.into_iter().map(|r| (r.domain.clone(), r)).collect(),
        }
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TiError> {
        let mut reports = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| TiError::Fixture { line: line_no, message };
            let raw: FixtureLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            let domain = Domain::parse(&raw.domain).map_err(|e| err(e.to_string()))?;
            let mut report = TiReport::from_counts(
                domain.clone(),
                [raw.harmless, raw.undetected, raw.suspicious, raw.malicious, raw.timeout],
            );
            report.partner_verdicts = raw.partners;
            if !report.is_consistent() {
                return Err(err("partner categories do not tally to the counts".into()));
            }
            reports.insert(domain, report);
        }
        Ok(FixtureProvider { reports })
    }

    pub fn load(path: &Path) -> Result<Self, TiError> {
        let text = std::fs::read_to_string(path).map_err(|source| TiError::Cache {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_jsonl(&text)
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn lookup(&self, domain: &Domain) -> TiLookupResult {
        match self.reports.get(domain) {
            Some(r) => {
                let mut r = r.clone();
                r.fetched_at = timestamp::now();
                TiLookupResult::Report(r)
            }
            None => TiLookupResult::NoReport {
                domain: domain.clone(),
            },
        }
    }
}

/// JSON pointers locating the tallies in a live response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldPaths {
    pub harmless: String,
    pub undetected: String,
    pub suspicious: String,
    pub malicious: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout: Option<String>,
    /// Object of partner name to per-partner result.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partners: Option<String>,
    #[serde(default = "default_partner_category")]
    pub partner_category: String,
}

fn default_partner_category() -> String {
    "category".into()
}

impl Default for FieldPaths {
    fn default() -> Self {
        let stat = |k: &str| format!("/data/attributes/last_analysis_stats/{k}");
        FieldPaths {
            harmless: stat("harmless"),
            undetected: stat("undetected"),
            suspicious: stat("suspicious"),
            malicious: stat("malicious"),
            timeout: Some(stat("timeout")),
            partners: Some("/data/attributes/last_analysis_results".into()),
            partner_category: default_partner_category(),
        }
    }
}

fn default_api_key_header() -> String {
    "x-apikey".into()
}

fn default_rpm() -> f64 {
    4.0
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    1000
}

fn default_http_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub base_url: String,
    #[serde(default = "default_api_key_header")]
    pub api_key_header: String,
    #[serde(default)]
    pub fields: FieldPaths,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_http_timeout_ms")]
    pub timeout_ms: u64,
}

impl LiveConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        LiveConfig {
            base_url: base_url.into(),
            api_key_header: default_api_key_header(),
            fields: FieldPaths::default(),
            requests_per_minute: default_rpm(),
            max_retries: default_max_retries(),
            backoff_ms: default_backoff_ms(),
            timeout_ms: default_http_timeout_ms(),
        }
    }
}

/// Map a live JSON body onto a report using the configured field paths.
pub fn report_from_json(domain: &Domain, body: &Value, fields: &FieldPaths) -> Result<TiReport, TiError> {
    let count = |ptr: &str| -> Result<u32, TiError> {
        body.pointer(ptr)
            .and_then(Value::as_u64)
            .map(|n| n.min(u32::MAX as u64) as u32)
            .ok_or_else(|| TiError::Schema(format!("missing count at {ptr}")))
    };
    let timeout = match &fields.timeout {
        Some(ptr) => body.pointer(ptr).and_then(Value::as_u64).unwrap_or(0) as u32,
        None => 0,
    };
    let mut report = TiReport::from_counts(
        domain.clone(),
        [
            count(&fields.harmless)?,
            count(&fields.undetected)?,
            count(&fields.suspicious)?,
            count(&fields.malicious)?,
            timeout,
        ],
    );
    if let Some(obj) = fields
        .partners
        .as_deref()
        .and_then(|p| body.pointer(p))
        .and_then(Value::as_object)
    {
        let partners: BTreeMap<String, Category> = obj
            .iter()
            .filter_map(|(name, res)| {
                let cat = res.get(&fields.partner_category)?.as_str()?;
                Some((name.clone(), Category::parse(cat)?))
            })
            .collect();
        report.partner_verdicts = Some(partners);
        if !report.is_consistent() {
            tracing::warn!(domain = %domain, "partner results disagree with tallies; dropping partner map");
            report.partner_verdicts = None;
        }
    }
    report.fetched_at = timestamp::now();
    Ok(report)
}

#[derive(Debug)]
pub struct LiveProvider {
    config: LiveConfig,
    api_key: String,
    http: reqwest::Client,
}

impl LiveProvider {
    pub fn new(config: LiveConfig, api_key: String) -> Result<Self, TiError> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| TiError::Transport(e.to_string()))?;
        Ok(LiveProvider {
            config,
            api_key,
            http,
        })
    }

    fn url(&self, domain: &Domain) -> String {
        format!("{}/domains/{}", self.config.base_url.trim_end_matches('/'), domain)
    }

    async fn fetch_once(&self, domain: &Domain) -> Result<Option<TiLookupResult>, TiError> {
        let resp = self
            .http
            .get(self.url(domain))
            .header(self.config.api_key_header.as_str(), &self.api_key)
            .send()
            .await
            .map_err(|e| TiError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            200 => {
                let body: Value = resp
                    .json()
                    .await
                    .map_err(|e| TiError::Schema(e.to_string()))?;
                let report = report_from_json(domain, &body, &self.config.fields)?;
                Ok(Some(TiLookupResult::Report(report)))
            }
            404 => Ok(Some(TiLookupResult::NoReport {
                domain: domain.clone(),
            })),
            401 | 403 => Err(TiError::Auth(status)),
            429 | 500..=599 => Ok(None),
            other => Err(TiError::Transport(format!("unexpected HTTP {other}"))),
        }
    }
}

#[derive(Debug)]
pub enum TiSource {
    Fixture(FixtureProvider),
    Live(LiveProvider),
}

/// Caching, rate-limited front end over a [`TiSource`]. Safe to share
/// between concurrent tasks.
#[derive(Debug)]
pub struct TiClient {
    source: TiSource,
    cache: Mutex<HashMap<Domain, TiLookupResult>>,
    cache_file: Option<(PathBuf, Mutex<File>)>,
    limiter: Option<RateLimiter>,
    remote_requests: AtomicU64,
}

impl TiClient {
    pub fn new(source: TiSource) -> Self {
        let limiter = match &source {
            TiSource::Live(p) => RateLimiter::per_minute(p.config.requests_per_minute, 1),
            TiSource::Fixture(_) => None,
        };
        TiClient {
            source,
            cache: Mutex::new(HashMap::new()),
            cache_file: None,
            limiter,
            remote_requests: AtomicU64::new(0),
        }
    }

    /// Load and then append to an on-disk JSONL cache of lookup results.
    pub fn with_cache_file(mut self, path: &Path) -> Result<Self, TiError> {
        let cache_err = |source| TiError::Cache {
            path: path.to_path_buf(),
            source,
        };
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(cache_err)?);
            let mut cache = self.cache.lock().unwrap();
            for line in reader.lines() {
                let line = line.map_err(cache_err)?;
                // A torn final line from an interrupted run is skipped.
                if let Ok(result) = serde_json::from_str::<TiLookupResult>(&line) {
                    cache.insert(result.domain().clone(), result);
                }
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(cache_err)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(cache_err)?;
        self.cache_file = Some((path.to_path_buf(), Mutex::new(file)));
        Ok(self)
    }

    /// Number of lookups that reached the underlying source.
    pub fn remote_requests(&self) -> u64 {
        self.remote_requests.load(Ordering::Relaxed)
    }

    pub fn cached(&self, domain: &Domain) -> Option<TiLookupResult> {
        self.cache.lock().unwrap().get(domain).cloned()
    }

    pub async fn fetch_report(&self, domain: &Domain) -> Result<TiLookupResult, TiError> {
        if let Some(hit) = self.cached(domain) {
            return Ok(hit);
        }
        let result = match &self.source {
            TiSource::Fixture(f) => {
                self.remote_requests.fetch_add(1, Ordering::Relaxed);
                f.lookup(domain)
            }
            TiSource::Live(live) => self.fetch_live(live, domain).await?,
        };
        self.remember(&result)?;
        Ok(result)
    }

    async fn fetch_live(&self, live: &LiveProvider, domain: &Domain) -> Result<TiLookupResult, TiError> {
        let mut attempt = 0u32;
        loop {
            if let Some(l) = &self.limiter {
                l.acquire().await;
            }
            self.remote_requests.fetch_add(1, Ordering::Relaxed);
            let outcome = live.fetch_once(domain).await;
            match outcome {
                Ok(Some(result)) => return Ok(result),
                Err(e @ (TiError::Auth(_) | TiError::Schema(_))) => return Err(e),
                Ok(None) | Err(_) if attempt < live.config.max_retries => {
                    let backoff = live.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    tokio::time::sleep(Duration::from_millis(backoff)).await;
                    attempt += 1;
                }
                Ok(None) => {
                    return Err(TiError::Transport("retries exhausted (throttled or server error)".into()))
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn remember(&self, result: &TiLookupResult) -> Result<(), TiError> {
        if let Some((path, file)) = &self.cache_file {
            let mut line = serde_json::to_vec(result).expect("lookup results serialize");
            line.push(b'\n');
            file.lock()
                .unwrap()
                .write_all(&line)
                .map_err(|source| TiError::Cache {
                    path: path.clone(),
                    source,
                })?;
        }
        self.cache
            .lock()
            .unwrap()
            .insert(result.domain().clone(), result.clone());
        Ok(())
    }
}
