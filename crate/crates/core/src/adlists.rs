//! Advertising filter lists: hosts files, plain domain lists and the
//! domain-anchor subset of Adblock syntax, compiled into a reversed-label
//! trie.

use std::collections::{BTreeMap, HashMap};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::Domain;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ListFormat {
    #[default]
    Auto,
    Hosts,
    Plain,
    Adblock,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilterEntry {
    pub pattern: Domain,
    pub match_subdomains: bool,
    pub source_list: String,
    pub line_no: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ListRejectReason {
    Comment,
    CosmeticRule,
    ExceptionRule,
    PathRule,
    RuleOptions,
    UnsupportedSyntax,
    LocalHostsEntry,
    InvalidDomain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ListReject {
    pub line_no: usize,
    pub reason: ListRejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedList {
    pub entries: Vec<FilterEntry>,
    pub rejects: Vec<ListReject>,
}

/// Whether entries match their subdomains.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubdomainMatching {
    /// Hosts and plain entries are exact; adblock `||d^` covers subdomains.
    #[default]
    Strict,
    /// Every entry covers its subdomains.
    Always,
}

const LOCAL_HOSTNAMES: &[&str] = &[
    "localhost",
    "localhost.localdomain",
    "local",
    "broadcasthost",
    "ip6-localhost",
    "ip6-loopback",
    "ip6-localnet",
    "ip6-mcastprefix",
    "ip6-allnodes",
    "ip6-allrouters",
    "ip6-allhosts",
    "0.0.0.0",
];

fn strip_inline_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => line[..i].trim_end(),
        None => line,
    }
}

fn parse_adblock(line: &str) -> Result<(String, bool), ListRejectReason> {
    if line.starts_with("@@") {
        return Err(ListRejectReason::ExceptionRule);
    }
    if line.contains("##") || line.contains("#@#") || line.contains("#?#") || line.contains("#$#") {
        return Err(ListRejectReason::CosmeticRule);
    }
    let Some(rest) = line.strip_prefix("||") else {
        return Err(ListRejectReason::UnsupportedSyntax);
    };
    if rest.contains('$') {
        return Err(ListRejectReason::RuleOptions);
    }
    let end = rest
        .find(|c: char| c == '^' || c == '/' || c == '*' || c == '|')
        .unwrap_or(rest.len());
    let (host, tail) = rest.split_at(end);
    match tail {
        "" | "^" | "^|" => Ok((host.to_string(), true)),
        _ => Err(ListRejectReason::PathRule),
    }
}

enum Parsed {
    Entries(Vec<(String, bool)>),
    Reject(ListRejectReason),
}

fn parse_hosts(line: &str) -> Parsed {
    let line = strip_inline_comment(line);
    let mut tokens = line.split_whitespace();
    let Some(first) = tokens.next() else {
        return Parsed::Reject(ListRejectReason::Comment);
    };
    if first.parse::<IpAddr>().is_err() {
        return Parsed::Reject(ListRejectReason::UnsupportedSyntax);
    }
    let names: Vec<_> = tokens
        .filter(|t| !LOCAL_HOSTNAMES.contains(&t.to_ascii_lowercase().as_str()))
        .map(|t| (t.to_string(), false))
        .collect();
    if names.is_empty() {
        return Parsed::Reject(ListRejectReason::LocalHostsEntry);
    }
    Parsed::Entries(names)
}

fn parse_plain(line: &str) -> Parsed {
    let line = strip_inline_comment(line);
    if line.contains('/') || line.split_whitespace().count() != 1 {
        return Parsed::Reject(ListRejectReason::UnsupportedSyntax);
    }
    Parsed::Entries(vec![(line.to_string(), false)])
}

fn parse_line(line: &str, format: ListFormat) -> Parsed {
    if line.starts_with('#') && !line.starts_with("##") || line.starts_with('!') || line.starts_with('[') {
        return Parsed::Reject(ListRejectReason::Comment);
    }
    match format {
        ListFormat::Hosts => parse_hosts(line),
        ListFormat::Plain => parse_plain(line),
        ListFormat::Adblock => match parse_adblock(line) {
            Ok(e) => Parsed::Entries(vec![e]),
            Err(r) => Parsed::Reject(r),
        },
        ListFormat::Auto => {
            if line.starts_with("||") || line.starts_with("@@") || line.contains("##") || line.contains("#@#") {
                parse_line(line, ListFormat::Adblock)
            } else if line
                .split_whitespace()
                .next()
                .is_some_and(|t| t.parse::<IpAddr>().is_ok())
            {
                parse_hosts(line)
            } else {
                parse_plain(line)
            }
        }
    }
}

/// Parse one list. Never fails: unusable lines are returned as rejects.
pub fn parse_list(text: &str, format: ListFormat, source_list: &str) -> ParsedList {
    let mut out = ParsedList::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match parse_line(line, format) {
            Parsed::Reject(reason) => out.rejects.push(ListReject { line_no, reason }),
            Parsed::Entries(names) => {
                for (name, match_subdomains) in names {
                    match Domain::parse(&name) {
                        Ok(pattern) => out.entries.push(FilterEntry {
                            pattern,
                            match_subdomains,
                            source_list: source_list.to_string(),
                            line_no,
                        }),
                        Err(_) => out.rejects.push(ListReject {
                            line_no,
                            reason: ListRejectReason::InvalidDomain,
                        }),
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Terminal {
    match_subdomains: bool,
    source_list: String,
    line_no: usize,
}

#[derive(Debug, Clone, Default)]
struct Node {
    children: HashMap<Box<str>, Node>,
    terminal: Option<Terminal>,
}

/// The entry that made a domain count as advertising.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdMatch {
    pub pattern: String,
    pub match_subdomains: bool,
    pub source_list: String,
    pub line_no: usize,
}

/// Compiled filter lists. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct AdMatcher {
    root: Node,
    entry_count: usize,
    digests: BTreeMap<String, String>,
}

/// Merge duplicates (subdomain flag OR-combined) and build the trie.
pub fn compile(entries: &[FilterEntry]) -> AdMatcher {
    compile_with(entries, SubdomainMatching::Strict)
}

pub fn compile_with(entries: &[FilterEntry], mode: SubdomainMatching) -> AdMatcher {
    let mut matcher = AdMatcher::default();
    for e in entries {
        let mut node = &mut matcher.root;
        for label in e.pattern.labels().rev() {
            node = node.children.entry(label.into()).or_default();
        }
        let subs = e.match_subdomains || mode == SubdomainMatching::Always;
        match &mut node.terminal {
            None => {
                matcher.entry_count += 1;
                node.terminal = Some(Terminal {
                    match_subdomains: subs,
                    source_list: e.source_list.clone(),
                    line_no: e.line_no,
                });
            }
            Some(t) => {
                t.match_subdomains |= subs;
                // Keep the smallest provenance so results do not depend on
                // insertion order.
                if (e.source_list.as_str(), e.line_no) < (t.source_list.as_str(), t.line_no) {
                    t.source_list = e.source_list.clone();
                    t.line_no = e.line_no;
                }
            }
        }
    }
    matcher
}

impl AdMatcher {
    pub fn entry_count(&self) -> usize {
        self.entry_count
    }

    /// SHA-256 of each source list's text, keyed by list name.
    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.digests
    }

    pub fn is_ad(&self, domain: &Domain) -> bool {
        self.lookup(domain).is_some()
    }

    /// Most specific matching entry: an exact match wins, otherwise the
    /// deepest ancestor entry that covers subdomains.
    pub fn lookup(&self, domain: &Domain) -> Option<AdMatch> {
        let labels: Vec<&str> = domain.labels().rev().collect();
        let mut node = &self.root;
        let mut best: Option<(&Terminal, usize)> = None;
        for (depth, label) in labels.iter().enumerate() {
            match node.children.get(*label) {
                Some(child) => node = child,
                None => break,
            }
            if let Some(t) = &node.terminal {
                let exact = depth + 1 == labels.len();
                if exact || t.match_subdomains {
                    best = Some((t, depth + 1));
                }
            }
        }
        best.map(|(t, depth)| AdMatch {
            pattern: labels[..depth].iter().rev().copied().collect::<Vec<_>>().join("."),
            match_subdomains: t.match_subdomains,
            source_list: t.source_list.clone(),
            line_no: t.line_no,
        })
    }
}

/// Collects named lists, records their digests, and compiles them.
#[derive(Debug, Clone, Default)]
pub struct AdMatcherBuilder {
    entries: Vec<FilterEntry>,
    rejects: BTreeMap<String, Vec<ListReject>>,
    digests: BTreeMap<String, String>,
    mode: SubdomainMatching,
}

impl AdMatcherBuilder {
    pub fn new(mode: SubdomainMatching) -> Self {
        AdMatcherBuilder {
            mode,
            ..Default::default()
        }
    }

    pub fn add_list(&mut self, name: &str, text: &str, format: ListFormat) -> &mut Self {
        let parsed = parse_list(text, format, name);
        self.entries.extend(parsed.entries);
        self.rejects.insert(name.to_string(), parsed.rejects);
        self.digests.insert(name.to_string(), sha256_hex(text.as_bytes()));
        self
    }

    pub fn rejects(&self) -> &BTreeMap<String, Vec<ListReject>> {
        &self.rejects
    }

    pub fn build(&self) -> AdMatcher {
        let mut m = compile_with(&self.entries, self.mode);
        m.digests = self.digests.clone();
        m
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One line of `ads-classify` output; also the stored ad payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdClassification {
    pub domain: Domain,
    pub is_ad: bool,
    pub matched_entry: Option<String>,
    pub source_list: Option<String>,
}

pub fn classify_domain(matcher: &AdMatcher, domain: &Domain) -> AdClassification {
    let hit = matcher.lookup(domain);
    AdClassification {
        domain: domain.clone(),
        is_ad: hit.is_some(),
        matched_entry: hit.as_ref().map(|m| m.pattern.clone()),
        source_list: hit.map(|m| m.source_list),
    }
}
