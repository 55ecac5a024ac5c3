//! Request-log ingestion: URL lists and JSON captures in, a deduplicated
//! domain corpus out.

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use url::{Host, Url};

use crate::domain::{Domain, DomainError};

/// One captured HTTP request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_page: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_at: Option<DateTime<Utc>>,
}

impl RequestRecord {
    /// Validates that `url` is an absolute http/https URL with a host.
    pub fn new(url: &str) -> Result<Self, RejectReason> {
        let parsed = parse_http_url(url)?;
        Ok(RequestRecord {
            url: parsed.to_string(),
            source_page: None,
            observed_at: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    MalformedUrl,
    UnsupportedScheme,
    MissingHost,
    IpLiteral,
    InvalidHost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub line_no: usize,
    pub line: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UrlListParse {
    pub records: Vec<RequestRecord>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("capture schema error at {path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn parse_http_url(raw: &str) -> Result<Url, RejectReason> {
    let url = Url::parse(raw).map_err(|_| RejectReason::MalformedUrl)?;
    if url.scheme() != "http" && url.scheme() != "https" {
        return Err(RejectReason::UnsupportedScheme);
    }
    if url.host().is_none() {
        return Err(RejectReason::MissingHost);
    }
    Ok(url)
}

/// Parse a newline-delimited URL list. Blank lines and `#` comments are
/// skipped; anything else that is not an absolute http(s) URL is rejected.
pub fn parse_url_list(text: &str) -> UrlListParse {
    let mut out = UrlListParse::default();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match RequestRecord::new(line) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.rejects.push(Reject {
                line_no: idx + 1,
                line: line.to_string(),
                reason,
            }),
        }
    }
    out
}

/// Parse a JSON capture `{ "entries": [ { "url", "page"?, "ts"? } ] }`.
pub fn parse_capture(doc: &str) -> Result<Vec<RequestRecord>, SchemaError> {
    let root: Value =
        serde_json::from_str(doc).map_err(|e| SchemaError::new("$", e.to_string()))?;
    let entries = root
        .get("entries")
        .ok_or_else(|| SchemaError::new("entries", "missing required field"))?
        .as_array()
        .ok_or_else(|| SchemaError::new("entries", "expected array"))?;

    let mut records = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let obj = entry
            .as_object()
            .ok_or_else(|| SchemaError::new(format!("entries[{i}]"), "expected object"))?;
        let url_path = format!("entries[{i}].url");
        let url = match obj.get("url") {
            None | Some(Value::Null) => {
                return Err(SchemaError::new(url_path, "missing required field"))
            }
            Some(Value::String(s)) => s,
            Some(_) => return Err(SchemaError::new(url_path, "expected string")),
        };
        let mut record = RequestRecord::new(url)
            .map_err(|r| SchemaError::new(url_path, format!("{r:?}")))?;

        match obj.get("page") {
            None | Some(Value::Null) => {}
            Some(Value::String(s)) => record.source_page = Some(s.clone()),
            Some(_) => {
                return Err(SchemaError::new(format!("entries[{i}].page"), "expected string"))
            }
        }
        match obj.get("ts") {
            None | Some(Value::Null) => {}
            Some(Value::String(s)) => {
                let ts = DateTime::parse_from_rfc3339(s).map_err(|e| {
                    SchemaError::new(format!("entries[{i}].ts"), e.to_string())
                })?;
                record.observed_at = Some(ts.with_timezone(&Utc));
            }
            Some(_) => {
                return Err(SchemaError::new(format!("entries[{i}].ts"), "expected RFC3339 string"))
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Host of an absolute http(s) URL as a normalized [`Domain`].
pub fn extract_domain(url: &str) -> Result<Domain, DomainError> {
    let parsed = Url::parse(url).map_err(|_| DomainError::InvalidHost {
        host: url.to_string(),
        reason: "malformed url",
    })?;
    match parsed.host() {
        Some(Host::Domain(host)) => Domain::parse(host),
        Some(Host::Ipv4(ip)) => Err(DomainError::IpLiteral(ip.to_string())),
        Some(Host::Ipv6(ip)) => Err(DomainError::IpLiteral(ip.to_string())),
        None => Err(DomainError::InvalidHost {
            host: url.to_string(),
            reason: "no host",
        }),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupeOptions {
    /// Collapse each FQDN to its registrable domain.
    #[serde(default)]
    pub collapse_registrable: bool,
}

/// The deduplicated analysis corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    /// First-seen order.
    pub domains: Vec<Domain>,
    pub rejects: BTreeMap<RejectReason, usize>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    /// One domain per line, trailing newline.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.domains.len() * 24);
        for d in &self.domains {
            out.push_str(d.as_str());
            out.push('\n');
        }
        out
    }
}

pub fn dedupe(records: &[RequestRecord]) -> Corpus {
    dedupe_with(records, DedupeOptions::default())
}

pub fn dedupe_with(records: &[RequestRecord], options: DedupeOptions) -> Corpus {
    let mut seen = HashSet::with_capacity(records.len());
    let mut corpus = Corpus::default();
    for rec in records {
        let domain = match extract_domain(&rec.url) {
            Ok(d) => d,
            Err(DomainError::IpLiteral(_)) => {
                *corpus.rejects.entry(RejectReason::IpLiteral).or_default() += 1;
                continue;
            }
            Err(DomainError::InvalidHost { .. }) => {
                *corpus.rejects.entry(RejectReason::InvalidHost).or_default() += 1;
                continue;
            }
        };
        let domain = if options.collapse_registrable {
            domain.registrable().unwrap_or(domain)
        } else {
            domain
        };
        if seen.insert(domain.clone()) {
            corpus.domains.push(domain);
        }
    }
    corpus
}

/// Read a corpus file (one domain per line, `#` comments allowed).
pub fn parse_domain_list(text: &str) -> (Vec<Domain>, Vec<Reject>) {
    let mut domains = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match Domain::parse(line) {
            Ok(d) => {
                if seen.insert(d.clone()) {
                    domains.push(d);
                }
            }
            Err(e) => rejects.push(Reject {
                line_no: idx + 1,
                line: line.to_string(),
                reason: match e {
                    DomainError::IpLiteral(_) => RejectReason::IpLiteral,
                    DomainError::InvalidHost { .. } => RejectReason::InvalidHost,
                },
            }),
        }
    }
    (domains, rejects)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(url: &str) -> RequestRecord {
        RequestRecord::new(url).unwrap()
    }

    #[test]
    fn url_list_skips_comments() {
        let out = parse_url_list("https://ads.example.com/x\n# c\n");
        assert_eq!(out.records.len(), 1);
        assert!(out.rejects.is_empty());
    }

    #[test]
    fn url_list_rejects_malformed() {
        let out = parse_url_list("not a url\n");
        assert!(out.records.is_empty());
        assert_eq!(out.rejects.len(), 1);
        assert_eq!(out.rejects[0].reason, RejectReason::MalformedUrl);
        assert_eq!(out.rejects[0].line_no, 1);
    }

    #[test]
    fn url_list_rejects_other_schemes() {
        let out = parse_url_list("ftp://files.example.com/a\n\n  \nhttp://ok.example/\n");
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.rejects[0].reason, RejectReason::UnsupportedScheme);
        assert_eq!(out.rejects[0].line_no, 1);
    }

    #[test]
    fn capture_two_entries() {
        let doc = r#"{"entries":[{"url":"https://a.example/x","page":"https://p.example/"},
                     {"url":"http://b.example/y","ts":"2023-12-17T10:00:00+01:00"}]}"#;
        let recs = parse_capture(doc).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].source_page.as_deref(), Some("https://p.example/"));
        assert_eq!(
            recs[1].observed_at.unwrap().to_rfc3339(),
            "2023-12-17T09:00:00+00:00"
        );
    }

    #[test]
    fn capture_missing_url_names_path() {
        let err = parse_capture(r#"{"entries":[{"page":"https://p.example/"}]}"#).unwrap_err();
        assert_eq!(err.path, "entries[0].url");
        let err = parse_capture(r#"{"entries":[{"url":"https://a.example/"},{"ts":"x"}]}"#)
            .unwrap_err();
        assert_eq!(err.path, "entries[1].url");
        let err = parse_capture(r#"{}"#).unwrap_err();
        assert_eq!(err.path, "entries");
        let err = parse_capture(r#"{"entries":[{"url":"https://a.example/","ts":"yesterday"}]}"#)
            .unwrap_err();
        assert_eq!(err.path, "entries[0].ts");
    }

    #[test]
    fn extract_normalizes_case_and_port() {
        let d = extract_domain("https://Ads.Example.COM:8443/a?b=c").unwrap();
        assert_eq!(d.as_str(), "ads.example.com");
        let d = extract_domain("https://trailing.example./").unwrap();
        assert_eq!(d.as_str(), "trailing.example");
    }

    #[test]
    fn extract_punycodes_idn() {
        let d = extract_domain("https://bücher.example/x").unwrap();
        assert_eq!(d.as_str(), "xn--bcher-kva.example");
    }

    #[test]
    fn extract_excludes_ip_literals() {
        assert!(matches!(
            extract_domain("http://192.0.2.7/ad"),
            Err(DomainError::IpLiteral(_))
        ));
        assert!(matches!(
            extract_domain("http://[2001:db8::1]:8080/ad"),
            Err(DomainError::IpLiteral(_))
        ));
    }

    #[test]
    fn dedupe_is_case_insensitive_and_ordered() {
        let recs = [
            rec("https://a.com/1"),
            rec("https://A.COM/2"),
            rec("https://b.com/"),
        ];
        let corpus = dedupe(&recs);
        let names: Vec<_> = corpus.domains.iter().map(Domain::as_str).collect();
        assert_eq!(names, ["a.com", "b.com"]);
        assert!(dedupe(&[]).is_empty());
    }

    #[test]
    fn dedupe_counts_ip_rejects() {
        let corpus = dedupe(&[rec("http://192.0.2.7/ad"), rec("http://x.example/")]);
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.rejects[&RejectReason::IpLiteral], 1);
    }

    #[test]
    fn dedupe_collapse_flag() {
        let recs = [rec("https://a.ads.example.co.uk/"), rec("https://b.ads.example.co.uk/")];
        assert_eq!(dedupe(&recs).len(), 2);
        let collapsed = dedupe_with(&recs, DedupeOptions { collapse_registrable: true });
        assert_eq!(collapsed.domains[0].as_str(), "example.co.uk");
        assert_eq!(collapsed.len(), 1);
    }

    #[test]
    fn domain_list_parse() {
        let (d, r) = parse_domain_list("a.com\n# x\nA.com\n10.0.0.1\nb.com\n");
        assert_eq!(d.len(), 2);
        assert_eq!(r.len(), 1);
    }
}
