//! Synthetic data sets with prescribed counts, for tests, examples and
//! offline demonstrations of the report.
//!
//! Domains are generated from their role so that the expected result of
//! every computation is known by construction: members of Venn region
//! `mask` are `r{mask}-{i}.blocked.test`, and the ad-related ones live
//! under [`AD_ZONE`], which [`AD_LIST`] marks as advertising.

use std::collections::BTreeMap;

use chrono::DateTime;

use crate::adlists::{compile, parse_list, AdMatcher, ListFormat};
use crate::dns::{BlockSignature, CampaignManifest, Evidence, ProviderVerdict, SignatureKind, Verdict, MANIFEST_KIND};
use crate::domain::Domain;
use crate::repository::{Payload, RepoError, Repository, VerdictRecord};
use crate::ti::{TiLookupResult, TiReport};

pub const AD_ZONE: &str = "ads.test";
/// An adblock rule covering [`AD_ZONE`] and all its subdomains.
pub const AD_LIST: &str = "||ads.test^\n";

pub fn ad_matcher() -> AdMatcher {
    compile(&parse_list(AD_LIST, ListFormat::Adblock, "fixture").entries)
}

fn domain(s: String) -> Domain {
    Domain::parse(&s).expect("generated names are valid")
}

/// Three providers and the exclusive size of each Venn region, indexed by
/// membership mask (bit 0 = first provider).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockedFixture {
    pub providers: [String; 3],
    pub regions: [usize; 8],
    /// How many members of each region are ad-related.
    pub ads: [usize; 8],
    pub corpus_size: usize,
}

impl BlockedFixture {
    pub fn domains(&self, mask: usize) -> Vec<Domain> {
        (0..self.regions[mask])
            .map(|i| {
                if i < self.ads[mask] {
                    domain(format!("r{mask}-{i}.{AD_ZONE}"))
                } else {
                    domain(format!("r{mask}-{i}.blocked.test"))
                }
            })
            .collect()
    }

    /// Store one Blocked verdict per (member, provider) and a finished
    /// campaign manifest. Domains that no provider blocked are represented
    /// only through the manifest's corpus size.
    pub fn write(&self, repo: &mut Repository, campaign_id: &str) -> Result<(), RepoError> {
        let epoch = DateTime::UNIX_EPOCH;
        let signature = BlockSignature::of_kind(SignatureKind::Nxdomain);
        let mut records = Vec::new();
        for mask in 1..8 {
            for d in self.domains(mask) {
                for (bit, provider) in self.providers.iter().enumerate() {
                    if mask & (1 << bit) == 0 {
                        continue;
                    }
                    let pv = ProviderVerdict {
                        domain: d.clone(),
                        provider_id: provider.clone(),
                        verdict: Verdict::Blocked {
                            signature: signature.clone(),
                        },
                        evidence: Evidence::default(),
                        queried_at: epoch,
                    };
                    records.push(VerdictRecord::new(campaign_id, provider, d.clone(), Payload::Dns(pv)));
                }
            }
        }
        repo.upsert_batch(records)?;
        let manifest = CampaignManifest {
            started: epoch,
            finished: Some(epoch),
            providers: self.providers.to_vec(),
            domains: self.corpus_size,
            inconclusive: self.providers.iter().map(|p| (p.clone(), 0)).collect(),
        };
        repo.write_manifest(campaign_id, MANIFEST_KIND, &manifest)
    }
}

/// Shape of a threat-intelligence result set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TiFixture {
    /// Flagged by every partner with an opinion.
    pub unanimous_threat: usize,
    /// Flagged by some partners, called harmless by others.
    pub split_threat: usize,
    /// Called harmless by every partner with an opinion.
    pub unanimous_harmless: usize,
    /// Threat domains (of either kind) that are ad-related.
    pub ad_threats: usize,
    pub no_report: usize,
}

impl TiFixture {
    pub fn threats(&self) -> usize {
        self.unanimous_threat + self.split_threat
    }

    pub fn reports(&self) -> usize {
        self.threats() + self.unanimous_harmless
    }

    /// Results in a fixed order. Tallies vary per domain; undetected and
    /// timeout votes are sprinkled in without changing any ratio class.
    pub fn results(&self) -> Vec<TiLookupResult> {
        let mut out = Vec::with_capacity(self.reports() + self.no_report);
        let threat_name = |i: usize| {
            if i < self.ad_threats {
                domain(format!("t{i}.{AD_ZONE}"))
            } else {
                domain(format!("t{i}.threat.test"))
            }
        };
        for i in 0..self.threats() {
            let k = i as u32;
            let counts = if i < self.unanimous_threat {
                [0, k % 40, k % 2, 1 + k % 9, k % 3]
            } else {
                [1 + k % 60, k % 20, k % 3, 1 + k % 5, k % 2]
            };
            out.push(report(threat_name(i), counts));
        }
        for i in 0..self.unanimous_harmless {
            let k = i as u32;
            out.push(report(
                domain(format!("h{i}.clean.test")),
                [1 + k % 70, k % 15, 0, 0, k % 2],
            ));
        }
        for i in 0..self.no_report {
            out.push(TiLookupResult::NoReport {
                domain: domain(format!("n{i}.unknown.test")),
            });
        }
        out
    }
}

fn report(d: Domain, counts: [u32; 5]) -> TiLookupResult {
    TiLookupResult::Report(TiReport::from_counts(d, counts))
}

/// Store `results` under one TI provider id.
pub fn write_ti(
    repo: &mut Repository,
    campaign_id: &str,
    provider_id: &str,
    results: Vec<TiLookupResult>,
) -> Result<(), RepoError> {
    repo.upsert_batch(results.into_iter().map(|r| {
        let d = r.domain().clone();
        VerdictRecord::new(campaign_id, provider_id, d, Payload::Ti(r))
    }))
}

/// Counts of a stored region layout, as a map for display.
pub fn region_map(f: &BlockedFixture) -> BTreeMap<String, usize> {
    (1..8)
        .map(|mask| {
            let names: Vec<&str> = (0..3)
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| f.providers[b].as_str())
                .collect();
            (names.join("&"), f.regions[mask])
        })
        .collect()
}
