//! Normalized hostnames, the unit every verdict is keyed on.

use std::fmt;
use std::net::{Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const MAX_NAME_LEN: usize = 253;
const MAX_LABEL_LEN: usize = 63;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("host is an IP literal: {0}")]
    IpLiteral(String),
    #[error("invalid host {host:?}: {reason}")]
    InvalidHost { host: String, reason: &'static str },
}

impl DomainError {
    fn invalid(host: &str, reason: &'static str) -> Self {
        DomainError::InvalidHost {
            host: host.to_string(),
            reason,
        }
    }
}

/// A lowercase ASCII hostname with IDN labels in punycode, no trailing dot
/// and no port.
///
/// Ordering is plain byte order of the ASCII form, which is the canonical
/// order used for exports.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Domain(Box<str>);

impl Domain {
    /// Normalize a bare host (no scheme, no port).
    pub fn parse(host: &str) -> Result<Self, DomainError> {
        let trimmed = host.trim();
        let trimmed = trimmed.strip_suffix('.').unwrap_or(trimmed);
        if trimmed.is_empty() {
            return Err(DomainError::invalid(host, "empty"));
        }
        if trimmed.starts_with('[')
            || trimmed.parse::<Ipv4Addr>().is_ok()
            || trimmed.parse::<Ipv6Addr>().is_ok()
        {
            return Err(DomainError::IpLiteral(trimmed.to_string()));
        }

        let ascii = if trimmed.is_ascii() {
            trimmed.to_ascii_lowercase()
        } else {
            idna::domain_to_ascii(trimmed).map_err(|_| DomainError::invalid(host, "idna"))?
        };
        if ascii.parse::<Ipv4Addr>().is_ok() {
            return Err(DomainError::IpLiteral(ascii));
        }
        if ascii.len() > MAX_NAME_LEN {
            return Err(DomainError::invalid(host, "name longer than 253"));
        }

        let mut last = "";
        for label in ascii.split('.') {
            if label.is_empty() {
                return Err(DomainError::invalid(host, "empty label"));
            }
            if label.len() > MAX_LABEL_LEN {
                return Err(DomainError::invalid(host, "label longer than 63"));
            }
            if !label
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
            {
                return Err(DomainError::invalid(host, "disallowed character"));
            }
            last = label;
        }
        if last.bytes().all(|b| b.is_ascii_digit()) {
            return Err(DomainError::invalid(host, "numeric top-level label"));
        }
        Ok(Domain(ascii.into_boxed_str()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Labels from left to right.
    pub fn labels(&self) -> impl DoubleEndedIterator<Item = &str> {
        self.0.split('.')
    }

    /// The registrable domain (public suffix + one label), if the name has one.
    pub fn registrable(&self) -> Option<Domain> {
        psl::domain_str(&self.0).map(|s| Domain(s.into()))
    }

    /// True when `self` equals `parent` or is a label-aligned subdomain of it.
    pub fn is_within(&self, parent: &Domain) -> bool {
        let (me, p) = (self.as_str(), parent.as_str());
        me == p
            || (me.len() > p.len()
                && me.ends_with(p)
                && me.as_bytes()[me.len() - p.len() - 1] == b'.')
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Domain({})", self.0)
    }
}

impl FromStr for Domain {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::parse(s)
    }
}

impl AsRef<str> for Domain {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Serialize for Domain {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Domain::parse(&s).map_err(serde::de::Error::custom)
    }
}
