//! Resolver profiles and the Blocked / NotBlocked / Inconclusive decision.

use std::collections::HashSet;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::wire::{rcode, DnsResponse, RData, RecordType};
use crate::domain::Domain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureKind {
    SinkholeA,
    SinkholeAaaa,
    Nxdomain,
    Refused,
    ZeroAnswerNoError,
}

/// How a filtered endpoint signals a block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSignature {
    pub kind: SignatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sinkhole_ips: Vec<IpAddr>,
}

impl BlockSignature {
    pub fn sinkhole_a(ips: impl IntoIterator<Item = Ipv4Addr>) -> Self {
        BlockSignature {
            kind: SignatureKind::SinkholeA,
            sinkhole_ips: ips.into_iter().map(IpAddr::V4).collect(),
        }
    }

    pub fn sinkhole_aaaa(ips: impl IntoIterator<Item = Ipv6Addr>) -> Self {
        BlockSignature {
            kind: SignatureKind::SinkholeAaaa,
            sinkhole_ips: ips.into_iter().map(IpAddr::V6).collect(),
        }
    }

    pub fn of_kind(kind: SignatureKind) -> Self {
        BlockSignature {
            kind,
            sinkhole_ips: Vec::new(),
        }
    }

    /// Sinkhole signatures match when the answer carries at least one address
    /// of the signature's family and every such address is a sinkhole.
    pub fn matches(&self, resp: &DnsResponse) -> bool {
        match self.kind {
            SignatureKind::Nxdomain => resp.rcode == rcode::NXDOMAIN,
            SignatureKind::Refused => resp.rcode == rcode::REFUSED,
            SignatureKind::ZeroAnswerNoError => {
                resp.rcode == rcode::NOERROR && resp.answers.is_empty()
            }
            SignatureKind::SinkholeA | SignatureKind::SinkholeAaaa => {
                if resp.rcode != rcode::NOERROR {
                    return false;
                }
                let want_v4 = self.kind == SignatureKind::SinkholeA;
                let mut addrs = resp.answers.iter().filter_map(|rr| match (&rr.rdata, want_v4) {
                    (RData::A(ip), true) => Some(IpAddr::V4(*ip)),
                    (RData::Aaaa(ip), false) => Some(IpAddr::V6(*ip)),
                    _ => None,
                });
                let Some(first) = addrs.next() else {
                    return false;
                };
                std::iter::once(first).chain(addrs).all(|ip| self.sinkhole_ips.contains(&ip))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    #[default]
    UdpWithTcpFallback,
    Tcp,
}

fn default_timeout_ms() -> u64 {
    3000
}

fn default_retries() -> u32 {
    2
}

/// One filtered endpoint plus its optional unfiltered control sibling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolverProfile {
    pub provider_id: String,
    pub display_name: String,
    pub filtered_address: SocketAddr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_address: Option<SocketAddr>,
    #[serde(default)]
    pub transport: Transport,
    pub blocked_signatures: Vec<BlockSignature>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("duplicate provider_id {0:?}")]
    DuplicateProvider(String),
    #[error("provider {0:?}: timeout_ms must be > 0")]
    ZeroTimeout(String),
    #[error("provider {0:?}: sinkhole signature without addresses")]
    EmptySinkhole(String),
    #[error("provider id must be nonempty")]
    EmptyId,
    #[error("no resolver profiles configured")]
    NoProfiles,
}

impl ResolverProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.provider_id.is_empty() {
            return Err(ProfileError::EmptyId);
        }
        if self.timeout_ms == 0 {
            return Err(ProfileError::ZeroTimeout(self.provider_id.clone()));
        }
        for sig in &self.blocked_signatures {
            let sinkhole = matches!(sig.kind, SignatureKind::SinkholeA | SignatureKind::SinkholeAaaa);
            if sinkhole && sig.sinkhole_ips.is_empty() {
                return Err(ProfileError::EmptySinkhole(self.provider_id.clone()));
            }
        }
        Ok(())
    }

    /// The profiles shipped as defaults. Cisco's sinkhole list is a
    /// placeholder the user is expected to override.
    pub fn defaults() -> Vec<ResolverProfile> {
        let sa = |ip: [u8; 4]| SocketAddr::new(IpAddr::V4(Ipv4Addr::from(ip)), 53);
        vec![
            ResolverProfile {
                provider_id: "cisco".into(),
                display_name: "Cisco OpenDNS".into(),
                filtered_address: sa([208, 67, 222, 222]),
                control_address: Some(sa([1, 1, 1, 1])),
                transport: Transport::default(),
                blocked_signatures: vec![BlockSignature::sinkhole_a([
                    Ipv4Addr::new(146, 112, 61, 104),
                    Ipv4Addr::new(146, 112, 61, 105),
                    Ipv4Addr::new(146, 112, 61, 106),
                    Ipv4Addr::new(146, 112, 61, 107),
                    Ipv4Addr::new(146, 112, 61, 108),
                    Ipv4Addr::new(146, 112, 61, 110),
                ])],
                timeout_ms: default_timeout_ms(),
                retries: default_retries(),
            },
            ResolverProfile {
                provider_id: "quad9".into(),
                display_name: "Quad9".into(),
                filtered_address: sa([9, 9, 9, 9]),
                control_address: Some(sa([9, 9, 9, 10])),
                transport: Transport::default(),
                blocked_signatures: vec![BlockSignature::of_kind(SignatureKind::Nxdomain)],
                timeout_ms: default_timeout_ms(),
                retries: default_retries(),
            },
            ResolverProfile {
                provider_id: "cloudflare".into(),
                display_name: "Cloudflare".into(),
                filtered_address: sa([1, 1, 1, 2]),
                control_address: Some(sa([1, 1, 1, 1])),
                transport: Transport::default(),
                blocked_signatures: vec![
                    BlockSignature::sinkhole_a([Ipv4Addr::UNSPECIFIED]),
                    BlockSignature::sinkhole_aaaa([Ipv6Addr::UNSPECIFIED]),
                ],
                timeout_ms: default_timeout_ms(),
                retries: default_retries(),
            },
        ]
    }

    /// First signature matching the filtered response.
    pub fn match_signature(&self, resp: &DnsResponse) -> Option<&BlockSignature> {
        self.blocked_signatures.iter().find(|s| s.matches(resp))
    }
}

pub fn validate_profiles(profiles: &[ResolverProfile]) -> Result<(), ProfileError> {
    if profiles.is_empty() {
        return Err(ProfileError::NoProfiles);
    }
    let mut ids = HashSet::new();
    for p in profiles {
        p.validate()?;
        if !ids.insert(p.provider_id.as_str()) {
            return Err(ProfileError::DuplicateProvider(p.provider_id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Blocked { signature: BlockSignature },
    NotBlocked,
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn inconclusive(reason: impl Into<String>) -> Self {
        Verdict::Inconclusive {
            reason: reason.into(),
        }
    }

    pub fn is_blocked(&self) -> bool {
        matches!(self, Verdict::Blocked { .. })
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self, Verdict::Inconclusive { .. })
    }
}

/// What gets stored about one response. Latency is left out so that stored
/// evidence depends only on what the resolver said.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseSummary {
    pub rcode: u8,
    pub truncated: bool,
    pub authoritative: bool,
    pub answers: Vec<AnswerSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSummary {
    pub name: String,
    #[serde(rename = "type")]
    pub rtype: String,
    pub ttl: u32,
    pub rdata: String,
}

impl From<&DnsResponse> for ResponseSummary {
    fn from(resp: &DnsResponse) -> Self {
        ResponseSummary {
            rcode: resp.rcode,
            truncated: resp.flags.tc,
            authoritative: resp.flags.aa,
            answers: resp
                .answers
                .iter()
                .map(|rr| AnswerSummary {
                    name: rr.name.clone(),
                    rtype: rr.rtype.to_string(),
                    ttl: rr.ttl,
                    rdata: match &rr.rdata {
                        RData::A(ip) => ip.to_string(),
                        RData::Aaaa(ip) => ip.to_string(),
                        RData::Cname(n) => n.clone(),
                        RData::Opaque(b) => hex::encode(b),
                    },
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filtered: Option<ResponseSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ResponseSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderVerdict {
    pub domain: Domain,
    pub provider_id: String,
    pub verdict: Verdict,
    pub evidence: Evidence,
    #[serde(with = "crate::timestamp")]
    pub queried_at: DateTime<Utc>,
}

/// True when a response is a normal positive resolution: NOERROR with at
/// least one address or alias record.
fn resolves(resp: &DnsResponse) -> bool {
    resp.rcode == rcode::NOERROR
        && resp
            .answers
            .iter()
            .any(|rr| matches!(rr.rtype, RecordType::A | RecordType::AAAA | RecordType::CNAME))
}

fn rcode_reason(code: u8) -> String {
    match code {
        rcode::NOERROR => "no-answer".into(),
        rcode::FORMERR => "formerr".into(),
        rcode::SERVFAIL => "servfail".into(),
        rcode::NXDOMAIN => "nxdomain".into(),
        rcode::NOTIMP => "notimp".into(),
        rcode::REFUSED => "refused".into(),
        other => format!("rcode-{other}"),
    }
}

/// Classify a filtered response, optionally corroborated by the control
/// resolver's answer for the same name.
///
/// Blocked requires a signature match and, when a control answer is present,
/// that the control resolves normally (without itself looking like the same
/// block). A filtered positive answer with no signature match is NotBlocked.
/// Everything else is Inconclusive with a reason.
pub fn classify(
    filtered: &DnsResponse,
    control: Option<&DnsResponse>,
    profile: &ResolverProfile,
) -> Verdict {
    if let Some(sig) = profile.match_signature(filtered) {
        return match control {
            None => Verdict::Blocked {
                signature: sig.clone(),
            },
            Some(ctl) if resolves(ctl) && !sig.matches(ctl) => Verdict::Blocked {
                signature: sig.clone(),
            },
            Some(ctl) if resolves(ctl) => Verdict::inconclusive("sinkhole-on-control"),
            Some(ctl) => Verdict::inconclusive(format!("{}-on-control", rcode_reason(ctl.rcode))),
        };
    }
    if resolves(filtered) {
        return Verdict::NotBlocked;
    }
    Verdict::inconclusive(rcode_reason(filtered.rcode))
}
