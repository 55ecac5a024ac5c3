//! Ad-malware measurement pipeline.
//!
//! Domains harvested from request captures are checked against filtered DNS
//! resolvers and a threat-intelligence service, matched against advertising
//! filter lists, and summarised into per-provider blocked sets, Venn regions,
//! ad and threat shares, and a partner-agreement ECDF.
//!
//! The modules follow the data flow:
//!
//! - [`ingest`] turns URL lists and JSON captures into a deduplicated [`Domain`] corpus.
//! - [`dns`] speaks RFC 1035, classifies filtered answers and runs resumable campaigns.
//! - [`ti`] fetches partner tallies from fixtures or a live HTTP endpoint.
//! - [`adlists`] compiles hosts, plain and adblock lists into a suffix trie.
//! - [`repository`] is the append-only JSONL store all verdicts go through.
//! - [`analytics`] computes the report and writes JSON / CSV / plot data.
//! - [`mockdns`] is a deterministic UDP resolver farm for offline runs.
//! - [`fixtures`] generates data sets with prescribed counts.
//! - [`config`], [`pipeline`] and [`cli`] wire it together.

pub mod adlists;
pub mod analytics;
pub mod cli;
pub mod config;
pub mod dns;
pub mod fixtures;
pub mod domain;
pub mod ingest;
pub mod mockdns;
pub mod pipeline;
pub mod ratelimit;
pub mod repository;
pub mod ti;
pub mod timestamp;

pub use domain::{Domain, DomainError};
