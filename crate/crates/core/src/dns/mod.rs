//! Filtered-DNS probing: wire format, transport, classification and the
//! campaign runner.

mod campaign;
mod classify;
mod transport;
pub mod wire;

pub use campaign::{run_campaign, CampaignLimits, CampaignManifest, CampaignOutcome, MANIFEST_KIND};
pub use classify::{
    classify, validate_profiles, AnswerSummary, BlockSignature, Evidence, ProfileError, ProviderVerdict,
    ResolverProfile, ResponseSummary, SignatureKind, Transport, Verdict,
};
pub use transport::{query, QueryError, QueryOptions};
pub use wire::{build_query, parse_response, DnsResponse, MalformedMessage, QueryType};
