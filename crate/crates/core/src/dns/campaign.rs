use std::collections::BTreeMap;
use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::classify::{classify, Evidence, ProviderVerdict, ResolverProfile, ResponseSummary, Verdict};
use super::transport::{query, QueryOptions};
use super::wire::QueryType;
use crate::domain::Domain;
use crate::ratelimit::RateLimiter;
use crate::repository::{Payload, RepoError, Repository, VerdictRecord};
use crate::timestamp;

pub const MANIFEST_KIND: &str = "dns";

fn default_max_inflight() -> usize {
    64
}

fn default_qps() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignLimits {
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
    /// Per-provider query rate; zero or negative disables limiting.
    #[serde(default = "default_qps")]
    pub qps: f64,
    #[serde(default)]
    pub query_type: QueryType,
    #[serde(default = "default_true")]
    pub edns: bool,
}

fn default_true() -> bool {
    true
}

impl Default for CampaignLimits {
    fn default() -> Self {
        CampaignLimits {
            max_inflight: default_max_inflight(),
            qps: default_qps(),
            query_type: QueryType::A,
            edns: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignManifest {
    #[serde(with = "timestamp")]
    pub started: DateTime<Utc>,
    #[serde(with = "timestamp::option")]
    pub finished: Option<DateTime<Utc>>,
    pub providers: Vec<String>,
    pub domains: usize,
    pub inconclusive: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignOutcome {
    pub manifest: CampaignManifest,
    /// Verdicts written by this run (excludes pairs skipped on resume).
    pub written: usize,
    pub skipped: usize,
    pub interrupted: bool,
}

async fn probe(domain: Domain, profile: Arc<ResolverProfile>, limiter: Option<Arc<RateLimiter>>, limits: Arc<CampaignLimits>) -> ProviderVerdict {
    let opts = QueryOptions {
        qtype: limits.query_type,
        transport: profile.transport,
        timeout: Duration::from_millis(profile.timeout_ms),
        retries: profile.retries,
        edns: limits.edns,
    };
    if let Some(l) = &limiter {
        l.acquire().await;
    }
    let mut evidence = Evidence::default();
    let verdict = match query(profile.filtered_address, &domain, &opts).await {
        Err(e) => Verdict::inconclusive(e.reason()),
        Ok(filtered) => {
            evidence.filtered = Some(ResponseSummary::from(&filtered));
            // The control answer only matters when a block signature matched.
            match profile.control_address {
                Some(ctl_addr) if profile.match_signature(&filtered).is_some() => {
                    if let Some(l) = &limiter {
                        l.acquire().await;
                    }
                    match query(ctl_addr, &domain, &opts).await {
                        Ok(ctl) => {
                            evidence.control = Some(ResponseSummary::from(&ctl));
                            classify(&filtered, Some(&ctl), &profile)
                        }
                        Err(e) => Verdict::inconclusive(format!("control-{}", e.reason())),
                    }
                }
                _ => classify(&filtered, None, &profile),
            }
        }
    };
    ProviderVerdict {
        domain,
        provider_id: profile.provider_id.clone(),
        verdict,
        evidence,
        queried_at: timestamp::now(),
    }
}

/// Query every (domain, profile) pair not already stored for `campaign_id`
/// and append one verdict per pair to the repository.
///
/// Completing `shutdown` stops issuing queries; results already received are
/// committed and the manifest is written with `finished = null`. Network
/// failures become Inconclusive verdicts; only repository errors abort.
pub async fn run_campaign(
    repo: &mut Repository,
    campaign_id: &str,
    domains: &[Domain],
    profiles: &[ResolverProfile],
    limits: &CampaignLimits,
    shutdown: impl Future<Output = ()>,
) -> Result<CampaignOutcome, RepoError> {
    crate::repository::validate_campaign_id(campaign_id)?;
    let started = repo
        .read_manifest::<CampaignManifest>(campaign_id, MANIFEST_KIND)?
        .map(|m| m.started)
        .unwrap_or_else(timestamp::now);
    let providers: Vec<String> = profiles.iter().map(|p| p.provider_id.clone()).collect();
    let mut manifest = CampaignManifest {
        started,
        finished: None,
        providers: providers.clone(),
        domains: domains.len(),
        inconclusive: profiles.iter().map(|p| (p.provider_id.clone(), 0)).collect(),
    };
    repo.write_manifest(campaign_id, MANIFEST_KIND, &manifest)?;

    let limits_arc = Arc::new(limits.clone());
    let profiles: Vec<Arc<ResolverProfile>> = profiles.iter().cloned().map(Arc::new).collect();
    let limiters: Vec<Option<Arc<RateLimiter>>> = profiles
        .iter()
        .map(|_| RateLimiter::per_second(limits.qps, 1).map(Arc::new))
        .collect();

    let mut pending = Vec::new();
    let mut skipped = 0usize;
    // Domain-major order spreads load across providers.
    for domain in domains {
        for (i, p) in profiles.iter().enumerate() {
            if repo.contains(campaign_id, domain, &p.provider_id) {
                skipped += 1;
            } else {
                pending.push((domain.clone(), i));
            }
        }
    }
    tracing::info!(campaign = campaign_id, pending = pending.len(), skipped, "dns campaign starting");

    let mut results = stream::iter(pending)
        .map(|(domain, i)| probe(domain, profiles[i].clone(), limiters[i].clone(), limits_arc.clone()))
        .buffer_unordered(limits.max_inflight.max(1))
        .ready_chunks(256);

    let mut written = 0usize;
    let mut interrupted = false;
    tokio::pin!(shutdown);
    loop {
        let batch = tokio::select! {
            biased;
            _ = &mut shutdown => { interrupted = true; break; }
            next = results.next() => match next {
                Some(b) => b,
                None => break,
            },
        };
        written += batch.len();
        repo.upsert_batch(batch.into_iter().map(|pv| {
            let (domain, provider) = (pv.domain.clone(), pv.provider_id.clone());
            VerdictRecord::new(campaign_id, &provider, domain, Payload::Dns(pv))
        }))?;
    }

    for rec in repo.query(campaign_id, None) {
        if let Payload::Dns(pv) = &rec.payload {
            if pv.verdict.is_inconclusive() && providers.contains(&rec.provider_id) {
                *manifest.inconclusive.entry(rec.provider_id.clone()).or_default() += 1;
            }
        }
    }
    if !interrupted {
        manifest.finished = Some(timestamp::now());
    }
    repo.write_manifest(campaign_id, MANIFEST_KIND, &manifest)?;
    tracing::info!(campaign = campaign_id, written, interrupted, "dns campaign done");
    Ok(CampaignOutcome {
        manifest,
        written,
        skipped,
        interrupted,
    })
}
