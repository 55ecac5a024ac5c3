//! Provider-consensus analytics: blocked sets, Venn regions, ad shares,
//! threat shares, the partner-agreement ECDF, and report emission.

mod ecdf;
mod emit;
mod percent;
mod venn;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ecdf::{ecdf, EcdfPoint};
pub use emit::{emit_report, ReportFormat};
pub use percent::{percent, Percent, PercentMode};
pub use venn::{venn3, Venn3};

use crate::adlists::AdMatcher;
use crate::dns::{CampaignManifest, MANIFEST_KIND};
use crate::domain::Domain;
use crate::repository::{Payload, RepoError, Repository};
use crate::ti::{agreement_ratio, threat_flag, AgreementDenominator, TiLookupResult};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("campaign {0:?} has no DNS verdicts; run dns-scan first")]
    NoDnsVerdicts(String),
    #[error("percentage of a zero base")]
    ZeroBase,
    #[error("empty input")]
    EmptyInput,
    #[error("ratio {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error(transparent)]
    Repository(#[from] RepoError),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

/// Per-provider Blocked sets of one campaign, plus the counts that were
/// kept out of them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockedSets {
    /// Provider ids in campaign order.
    pub providers: Vec<String>,
    pub blocked: BTreeMap<String, BTreeSet<Domain>>,
    pub inconclusive: BTreeMap<String, usize>,
    pub not_blocked: BTreeMap<String, usize>,
}

impl BlockedSets {
    pub fn get(&self, provider: &str) -> &BTreeSet<Domain> {
        static EMPTY: BTreeSet<Domain> = BTreeSet::new();
        self.blocked.get(provider).unwrap_or(&EMPTY)
    }
}

pub fn blocked_sets(repo: &Repository, campaign_id: &str) -> Result<BlockedSets, AnalyticsError> {
    let manifest: Option<CampaignManifest> = repo.read_manifest(campaign_id, MANIFEST_KIND)?;
    let mut out = BlockedSets::default();
    let mut seen_dns = false;
    for rec in repo.query(campaign_id, None) {
        let Payload::Dns(pv) = &rec.payload else {
            continue;
        };
        seen_dns = true;
        let p = rec.provider_id.clone();
        out.blocked.entry(p.clone()).or_default();
        if pv.verdict.is_blocked() {
            out.blocked.get_mut(&p).unwrap().insert(rec.domain.clone());
        } else if pv.verdict.is_inconclusive() {
            *out.inconclusive.entry(p).or_default() += 1;
        } else {
            *out.not_blocked.entry(p).or_default() += 1;
        }
    }
    if !seen_dns && manifest.is_none() {
        return Err(AnalyticsError::NoDnsVerdicts(campaign_id.to_string()));
    }
    out.providers = match manifest {
        Some(m) => m.providers,
        None => out.blocked.keys().cloned().collect(),
    };
    for p in &out.providers {
        out.blocked.entry(p.clone()).or_default();
        out.inconclusive.entry(p.clone()).or_default();
        out.not_blocked.entry(p.clone()).or_default();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AdShare {
    pub ad_count: u64,
    pub share_pct: Percent,
    /// The blocked set was empty; the share is reported as zero.
    pub empty: bool,
}

pub fn ad_share(blocked: &BTreeSet<Domain>, matcher: &AdMatcher, mode: PercentMode) -> AdShare {
    let ad_count = blocked.iter().filter(|d| matcher.is_ad(d)).count() as u64;
    match percent(ad_count, blocked.len() as u64, mode) {
        Ok(share_pct) => AdShare {
            ad_count,
            share_pct,
            empty: false,
        },
        Err(_) => AdShare {
            ad_count: 0,
            share_pct: Percent::zero(mode),
            empty: true,
        },
    }
}

/// Denominator for the overall threat share.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreatShareBase {
    /// Domains that have a report.
    #[default]
    WithReport,
    /// Domains that have a report or an explicit no-report answer.
    Looked,
    Fixed(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TiOptions {
    #[serde(default)]
    pub threat_share_base: ThreatShareBase,
    #[serde(default = "default_threat_mode")]
    pub threat_share_mode: PercentMode,
    #[serde(default)]
    pub ad_threat_mode: PercentMode,
}

fn default_threat_mode() -> PercentMode {
    PercentMode::Truncate1
}

impl Default for TiOptions {
    fn default() -> Self {
        TiOptions {
            threat_share_base: ThreatShareBase::WithReport,
            threat_share_mode: default_threat_mode(),
            ad_threat_mode: PercentMode::Truncate2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TiSection {
    pub with_report: u64,
    pub no_report: u64,
    pub threat_count: u64,
    pub threat_share_base: u64,
    pub threat_share_pct: Percent,
    /// Threat share over domains with a report, whatever the configured base.
    pub threat_share_pct_with_report: Percent,
    /// Threat share over reports and no-report answers together.
    pub threat_share_pct_looked: Percent,
    pub ad_threat_count: u64,
    pub ad_threat_share_pct: Percent,
    pub unanimous_threat: u64,
    pub unanimous_harmless: u64,
    /// Reports where no partner expressed an opinion.
    pub no_opinion: u64,
}

fn pct_or_zero(count: u64, base: u64, mode: PercentMode) -> Percent {
    percent(count, base, mode).unwrap_or_else(|_| Percent::zero(mode))
}

/// Counts and shares over a stream of lookup results.
pub fn ti_stats<'a>(
    results: impl IntoIterator<Item = &'a TiLookupResult>,
    matcher: &AdMatcher,
    options: &TiOptions,
) -> TiSection {
    let (mut with_report, mut no_report, mut threats, mut ad_threats) = (0u64, 0u64, 0u64, 0u64);
    let (mut unanimous_threat, mut unanimous_harmless, mut no_opinion) = (0u64, 0u64, 0u64);
    for res in results {
        let Some(report) = res.report() else {
            no_report += 1;
            continue;
        };
        with_report += 1;
        match agreement_ratio(report, AgreementDenominator::Opinions) {
            Ok(r) if r == 1.0 => unanimous_threat += 1,
            Ok(r) if r == 0.0 => unanimous_harmless += 1,
            Ok(_) => {}
            Err(_) => no_opinion += 1,
        }
        if threat_flag(report) {
            threats += 1;
            if matcher.is_ad(&report.domain) {
                ad_threats += 1;
            }
        }
    }
    let base = match options.threat_share_base {
        ThreatShareBase::WithReport => with_report,
        ThreatShareBase::Looked => with_report + no_report,
        ThreatShareBase::Fixed(n) => n,
    };
    TiSection {
        with_report,
        no_report,
        threat_count: threats,
        threat_share_base: base,
        threat_share_pct: pct_or_zero(threats, base, options.threat_share_mode),
        threat_share_pct_with_report: pct_or_zero(threats, with_report, options.threat_share_mode),
        threat_share_pct_looked: pct_or_zero(threats, with_report + no_report, options.threat_share_mode),
        ad_threat_count: ad_threats,
        ad_threat_share_pct: pct_or_zero(ad_threats, threats, options.ad_threat_mode),
        unanimous_threat,
        unanimous_harmless,
        no_opinion,
    }
}

/// Agreement ratios of every report where the ratio is defined.
pub fn agreement_ratios<'a>(
    results: impl IntoIterator<Item = &'a TiLookupResult>,
    denominator: AgreementDenominator,
) -> Vec<f64> {
    results
        .into_iter()
        .filter_map(TiLookupResult::report)
        .filter_map(|r| agreement_ratio(r, denominator).ok())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProviderStats {
    pub provider: String,
    pub blocked: u64,
    pub blocked_pct: Percent,
    pub inconclusive: u64,
    pub ad_blocked: u64,
    pub ad_share_pct: Percent,
    pub ad_share_empty: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VennSection {
    /// Provider ids behind sets a, b and c.
    pub sets: [String; 3],
    #[serde(flatten)]
    pub regions: Venn3,
    pub union_pct: Percent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub campaign_id: String,
    pub list_digests: BTreeMap<String, String>,
    pub config_digest: String,
    pub venn_regions: &'static str,
    pub ad_malware_definition: &'static str,
    pub percent_mode: PercentMode,
    pub agreement_denominator: AgreementDenominator,
    pub threat_share_base: ThreatShareBase,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub corpus_size: u64,
    pub providers: Vec<ProviderStats>,
    pub blocked_union: u64,
    pub blocked_union_pct: Percent,
    pub venn: Option<VennSection>,
    pub ti: TiSection,
    pub ecdf: Vec<EcdfPoint>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    #[serde(default)]
    pub percent_mode: PercentMode,
    #[serde(default)]
    pub agreement_denominator: AgreementDenominator,
    #[serde(default, flatten)]
    pub ti: TiOptions,
    /// Threads for per-provider work; output does not depend on it.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    1
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            percent_mode: PercentMode::Truncate2,
            agreement_denominator: AgreementDenominator::Opinions,
            ti: TiOptions::default(),
            workers: 1,
        }
    }
}

fn corpus_size(repo: &Repository, campaign_id: &str, manifest: Option<&CampaignManifest>) -> Result<u64, AnalyticsError> {
    if let Some(m) = manifest {
        return Ok(m.domains as u64);
    }
    if let Some(c) = repo.load_corpus(campaign_id)? {
        return Ok(c.len() as u64);
    }
    let distinct: BTreeSet<&Domain> = repo.query(campaign_id, None).map(|r| &r.domain).collect();
    Ok(distinct.len() as u64)
}

fn provider_stats(
    sets: &BlockedSets,
    matcher: &AdMatcher,
    corpus: u64,
    mode: PercentMode,
    workers: usize,
) -> Vec<ProviderStats> {
    let one = |p: &String| {
        let blocked = sets.get(p);
        let share = ad_share(blocked, matcher, mode);
        ProviderStats {
            provider: p.clone(),
            blocked: blocked.len() as u64,
            blocked_pct: pct_or_zero(blocked.len() as u64, corpus, mode),
            inconclusive: sets.inconclusive.get(p).copied().unwrap_or(0) as u64,
            ad_blocked: share.ad_count,
            ad_share_pct: share.share_pct,
            ad_share_empty: share.empty,
        }
    };
    let workers = workers.clamp(1, sets.providers.len().max(1));
    if workers == 1 {
        return sets.providers.iter().map(one).collect();
    }
    let chunk = sets.providers.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = sets
            .providers
            .chunks(chunk)
            .map(|ps| s.spawn(move || ps.iter().map(one).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("provider worker panicked"))
            .collect()
    })
}

/// Assemble the full report for one campaign. Reads only the repository
/// and the compiled lists; never touches the network.
pub fn build_report(
    repo: &Repository,
    campaign_id: &str,
    matcher: &AdMatcher,
    options: &AnalyzeOptions,
    config_digest: &str,
) -> Result<AnalysisReport, AnalyticsError> {
    let manifest: Option<CampaignManifest> = repo.read_manifest(campaign_id, MANIFEST_KIND)?;
    let sets = blocked_sets(repo, campaign_id)?;
    let corpus = corpus_size(repo, campaign_id, manifest.as_ref())?;
    let mode = options.percent_mode;

    let providers = provider_stats(&sets, matcher, corpus, mode, options.workers);
    let union: BTreeSet<&Domain> = sets.blocked.values().flatten().collect();
    let venn = (sets.providers.len() >= 3).then(|| {
        let names = [
            sets.providers[0].clone(),
            sets.providers[1].clone(),
            sets.providers[2].clone(),
        ];
        let regions = venn3(sets.get(&names[0]), sets.get(&names[1]), sets.get(&names[2]));
        VennSection {
            union_pct: pct_or_zero(regions.union as u64, corpus, mode),
            sets: names,
            regions,
        }
    });

    let ti_results: Vec<&TiLookupResult> = repo
        .query(campaign_id, None)
        .filter_map(|r| match &r.payload {
            Payload::Ti(t) => Some(t),
            _ => None,
        })
        .collect();
    let ti = ti_stats(ti_results.iter().copied(), matcher, &options.ti);
    let ratios = agreement_ratios(ti_results.iter().copied(), options.agreement_denominator);
    let ecdf_points = if ratios.is_empty() { Vec::new() } else { ecdf(&ratios)? };

    Ok(AnalysisReport {
        corpus_size: corpus,
        providers,
        blocked_union: union.len() as u64,
        blocked_union_pct: pct_or_zero(union.len() as u64, corpus, mode),
        venn,
        ti,
        ecdf: ecdf_points,
        provenance: Provenance {
            campaign_id: campaign_id.to_string(),
            list_digests: matcher.digests().clone(),
            config_digest: config_digest.to_string(),
            venn_regions: "exclusive",
            ad_malware_definition: "candidate ad-malware: blocked or flagged domain that matches an ad list",
            percent_mode: mode,
            agreement_denominator: options.agreement_denominator,
            threat_share_base: options.ti.threat_share_base,
        },
    })
}
