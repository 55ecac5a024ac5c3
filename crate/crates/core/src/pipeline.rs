//! The pipeline steps behind each subcommand. Every step reads and writes
//! through the repository, so steps can be rerun and resumed independently.

use std::collections::BTreeMap;
use std::future::Future;
use std::io::Write;
use std::path::{Path, PathBuf};

use futures::{stream, StreamExt};
use serde::Serialize;
use thiserror::Error;

use crate::adlists::{classify_domain, AdMatcher, AdMatcherBuilder};
use crate::analytics::{build_report, emit_report, AnalysisReport, AnalyticsError};
use crate::config::{ConfigError, ListSpec, PipelineConfig};
use crate::dns::{run_campaign, CampaignOutcome};
use crate::domain::Domain;
use crate::ingest::{self, Corpus, DedupeOptions, RejectReason};
use crate::repository::{Payload, RepoError, Repository, VerdictRecord};
use crate::ti::{FixtureProvider, LiveProvider, TiClient, TiError, TiSource, API_KEY_ENV};

/// Provider id used for stored ad classifications.
pub const AD_PROVIDER: &str = "adlists";
pub const TI_MANIFEST_KIND: &str = "ti";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {source}")]
    Input {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    InputSchema { path: PathBuf, message: String },
    #[error("campaign {0:?} has no corpus; run ingest first")]
    NoCorpus(String),
    #[error(transparent)]
    Repository(#[from] RepoError),
    #[error(transparent)]
    Ti(#[from] TiError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("output error: {0}")]
    Output(std::io::Error),
}

impl PipelineError {
    /// Config and input problems are the caller's to fix; the rest are
    /// runtime failures.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_) | PipelineError::NoCorpus(_) | PipelineError::InputSchema { .. }
        ) || matches!(self, PipelineError::Ti(TiError::Fixture { .. }))
    }
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|source| PipelineError::Input {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub campaign_id: String,
    pub records: usize,
    pub domains: usize,
    pub rejects: BTreeMap<RejectReason, usize>,
}

/// Build the corpus from the configured inputs and store it with the
/// campaign. An existing corpus is left untouched so a resumed campaign
/// keeps its domain set.
pub fn ingest(cfg: &PipelineConfig, repo: &Repository) -> Result<(Corpus, IngestSummary), PipelineError> {
    if let Some(domains) = repo.load_corpus(&cfg.campaign_id)? {
        tracing::info!(campaign = %cfg.campaign_id, domains = domains.len(), "corpus already stored");
        let summary = IngestSummary {
            campaign_id: cfg.campaign_id.clone(),
            records: 0,
            domains: domains.len(),
            rejects: BTreeMap::new(),
        };
        return Ok((
            Corpus {
                domains,
                rejects: BTreeMap::new(),
            },
            summary,
        ));
    }
    let corpus = build_corpus(cfg)?;
    repo.save_corpus(&cfg.campaign_id, &corpus.0.domains)?;
    tracing::info!(campaign = %cfg.campaign_id, domains = corpus.0.len(), "corpus stored");
    let summary = IngestSummary {
        campaign_id: cfg.campaign_id.clone(),
        records: corpus.1,
        domains: corpus.0.len(),
        rejects: corpus.0.rejects.clone(),
    };
    Ok((corpus.0, summary))
}

fn build_corpus(cfg: &PipelineConfig) -> Result<(Corpus, usize), PipelineError> {
    let mut records = Vec::new();
    let mut rejects: BTreeMap<RejectReason, usize> = BTreeMap::new();
    for path in &cfg.inputs.url_lists {
        let parsed = ingest::parse_url_list(&read(path)?);
        for r in parsed.rejects {
            *rejects.entry(r.reason).or_default() += 1;
        }
        records.extend(parsed.records);
    }
    for path in &cfg.inputs.captures {
        let parsed = ingest::parse_capture(&read(path)?).map_err(|e| PipelineError::InputSchema {
            path: path.clone(),
            message: e.to_string(),
        })?;
        records.extend(parsed);
    }
    let n_records = records.len();
    let mut corpus = ingest::dedupe_with(
        &records,
        DedupeOptions {
            collapse_registrable: cfg.inputs.collapse_registrable,
        },
    );
    for path in &cfg.inputs.domain_lists {
        let (domains, bad) = ingest::parse_domain_list(&read(path)?);
        for r in bad {
            *rejects.entry(r.reason).or_default() += 1;
        }
        let mut seen: std::collections::HashSet<Domain> = corpus.domains.iter().cloned().collect();
        for d in domains {
            let d = if cfg.inputs.collapse_registrable {
                d.registrable().unwrap_or(d)
            } else {
                d
            };
            if seen.insert(d.clone()) {
                corpus.domains.push(d);
            }
        }
    }
    for (reason, n) in rejects {
        *corpus.rejects.entry(reason).or_default() += n;
    }
    Ok((corpus, n_records))
}

fn load_corpus(cfg: &PipelineConfig, repo: &Repository) -> Result<Vec<Domain>, PipelineError> {
    repo.load_corpus(&cfg.campaign_id)?
        .ok_or_else(|| PipelineError::NoCorpus(cfg.campaign_id.clone()))
}

pub async fn dns_scan(
    cfg: &PipelineConfig,
    repo: &mut Repository,
    shutdown: impl Future<Output = ()>,
) -> Result<CampaignOutcome, PipelineError> {
    let domains = load_corpus(cfg, repo)?;
    Ok(run_campaign(repo, &cfg.campaign_id, &domains, &cfg.resolvers, &cfg.limits, shutdown).await?)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct TiFetchSummary {
    pub with_report: usize,
    pub no_report: usize,
    /// Transport failures after retries. Nothing is stored for these, so a
    /// rerun fetches them again.
    pub unfetched: usize,
    pub skipped: usize,
    pub interrupted: bool,
}

pub fn ti_client(cfg: &PipelineConfig) -> Result<Option<TiClient>, PipelineError> {
    let Some(ti) = &cfg.ti else {
        return Ok(None);
    };
    let source = match (&ti.fixture, &ti.live) {
        (Some(path), _) => TiSource::Fixture(FixtureProvider::load(path)?),
        (None, Some(live)) => {
            let key = std::env::var(API_KEY_ENV)
                .map_err(|_| ConfigError::Invalid(format!("{API_KEY_ENV} is not set")))?;
            TiSource::Live(LiveProvider::new(live.clone(), key)?)
        }
        (None, None) => unreachable!("validated config"),
    };
    let mut client = TiClient::new(source);
    if let Some(cache) = &ti.cache_path {
        client = client.with_cache_file(cache)?;
    }
    Ok(Some(client))
}

/// Fetch a report for every corpus domain that has no stored TI result.
/// An authentication failure aborts; transport failures leave the domain
/// unfetched.
pub async fn ti_fetch(
    cfg: &PipelineConfig,
    repo: &mut Repository,
    client: &TiClient,
    shutdown: impl Future<Output = ()>,
) -> Result<TiFetchSummary, PipelineError> {
    let ti = cfg
        .ti
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("no ti section in config".into()))?;
    let domains = load_corpus(cfg, repo)?;
    let mut summary = TiFetchSummary::default();
    let pending: Vec<Domain> = domains
        .into_iter()
        .filter(|d| {
            let done = repo.contains(&cfg.campaign_id, d, &ti.provider_id);
            summary.skipped += done as usize;
            !done
        })
        .collect();

    let mut results = stream::iter(pending)
        .map(|d| async move {
            let r = client.fetch_report(&d).await;
            (d, r)
        })
        .buffer_unordered(ti.concurrency)
        .ready_chunks(256);
    tokio::pin!(shutdown);
    loop {
        let batch = tokio::select! {
            biased;
            _ = &mut shutdown => { summary.interrupted = true; break; }
            next = results.next() => match next {
                Some(b) => b,
                None => break,
            },
        };
        let mut records = Vec::with_capacity(batch.len());
        let mut fatal = None;
        for (domain, res) in batch {
            match res {
                Ok(r) => {
                    if r.report().is_some() {
                        summary.with_report += 1;
                    } else {
                        summary.no_report += 1;
                    }
                    records.push(VerdictRecord::new(&cfg.campaign_id, &ti.provider_id, domain, Payload::Ti(r)));
                }
                Err(e @ TiError::Auth(_)) => fatal = Some(e),
                Err(e) => {
                    tracing::warn!(domain = %domain, error = %e, "ti lookup failed");
                    summary.unfetched += 1;
                }
            }
        }
        // Results already received are kept even when the batch hit an auth error.
        repo.upsert_batch(records)?;
        if let Some(e) = fatal {
            return Err(e.into());
        }
    }
    repo.write_manifest(&cfg.campaign_id, TI_MANIFEST_KIND, &summary)?;
    Ok(summary)
}

pub fn build_matcher(cfg: &PipelineConfig) -> Result<AdMatcher, PipelineError> {
    matcher_from_lists(&cfg.lists, cfg.subdomain_matching)
}

pub fn matcher_from_lists(
    lists: &[ListSpec],
    mode: crate::adlists::SubdomainMatching,
) -> Result<AdMatcher, PipelineError> {
    let mut builder = AdMatcherBuilder::new(mode);
    for l in lists {
        builder.add_list(&l.name(), &read(&l.path)?, l.format);
    }
    for (list, rejects) in builder.rejects() {
        if !rejects.is_empty() {
            tracing::debug!(list = %list, rejected = rejects.len(), "list lines skipped");
        }
    }
    Ok(builder.build())
}

/// Write one JSONL classification per domain to `out`. Returns the number
/// of ad domains.
pub fn ads_classify(matcher: &AdMatcher, domains: &[Domain], out: &mut impl Write) -> Result<usize, PipelineError> {
    let mut ads = 0;
    for d in domains {
        let c = classify_domain(matcher, d);
        ads += c.is_ad as usize;
        serde_json::to_writer(&mut *out, &c).map_err(|e| PipelineError::Output(e.into()))?;
        out.write_all(b"\n").map_err(PipelineError::Output)?;
    }
    Ok(ads)
}

/// Store ad classifications for the campaign corpus.
pub fn store_ad_classifications(
    cfg: &PipelineConfig,
    repo: &mut Repository,
    matcher: &AdMatcher,
) -> Result<usize, PipelineError> {
    let domains = load_corpus(cfg, repo)?;
    let records: Vec<VerdictRecord> = domains
        .iter()
        .map(|d| {
            let c = classify_domain(matcher, d);
            VerdictRecord::new(&cfg.campaign_id, AD_PROVIDER, d.clone(), Payload::Ad(c))
        })
        .collect();
    let n = records.len();
    repo.upsert_batch(records)?;
    Ok(n)
}

/// Compute the report from stored data only and write every configured
/// format under `out`.
pub fn analyze(cfg: &PipelineConfig, repo: &Repository, out: &Path) -> Result<(AnalysisReport, Vec<PathBuf>), PipelineError> {
    let matcher = build_matcher(cfg)?;
    let report = build_report(repo, &cfg.campaign_id, &matcher, &cfg.analytics.options, &cfg.digest)?;
    let mut written = Vec::new();
    for &format in &cfg.analytics.formats {
        written.extend(emit_report(&report, format, out)?);
    }
    Ok((report, written))
}
