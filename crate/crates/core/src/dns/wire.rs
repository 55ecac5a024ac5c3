//! RFC 1035 message encoding and decoding, limited to what filtered-resolver
//! probing needs: one-question queries out, full header and resource-record
//! parsing in.

use std::fmt;
use std::net::{Ipv4Addr, Ipv6Addr};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Domain;

pub const HEADER_LEN: usize = 12;
pub const EDNS_UDP_SIZE: u16 = 1232;
const MAX_NAME_WIRE_LEN: usize = 255;

pub mod rcode {
    pub const NOERROR: u8 = 0;
    pub const FORMERR: u8 = 1;
    pub const SERVFAIL: u8 = 2;
    pub const NXDOMAIN: u8 = 3;
    pub const NOTIMP: u8 = 4;
    pub const REFUSED: u8 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecordType(pub u16);

impl RecordType {
    pub const A: RecordType = RecordType(1);
    pub const NS: RecordType = RecordType(2);
    pub const CNAME: RecordType = RecordType(5);
    pub const SOA: RecordType = RecordType(6);
    pub const AAAA: RecordType = RecordType(28);
    pub const OPT: RecordType = RecordType(41);
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RecordType::A => f.write_str("A"),
            RecordType::NS => f.write_str("NS"),
            RecordType::CNAME => f.write_str("CNAME"),
            RecordType::SOA => f.write_str("SOA"),
            RecordType::AAAA => f.write_str("AAAA"),
            RecordType::OPT => f.write_str("OPT"),
            RecordType(other) => write!(f, "TYPE{other}"),
        }
    }
}

/// Query types the broker issues.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum QueryType {
    #[default]
    A,
    Aaaa,
}

impl From<QueryType> for RecordType {
    fn from(q: QueryType) -> Self {
        match q {
            QueryType::A => RecordType::A,
            QueryType::Aaaa => RecordType::AAAA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MalformedMessage {
    #[error("message shorter than header ({0} bytes)")]
    TruncatedHeader(usize),
    #[error("read past end of message at offset {0}")]
    Overrun(usize),
    #[error("compression pointer at {at} does not point backwards (target {target})")]
    PointerLoop { at: usize, target: usize },
    #[error("name exceeds 255 octets at offset {0}")]
    NameTooLong(usize),
    #[error("reserved label type at offset {0}")]
    BadLabel(usize),
    #[error("rdata length mismatch at offset {0}")]
    BadRdata(usize),
}

/// Header flag bits as received.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub qr: bool,
    pub opcode: u8,
    pub aa: bool,
    pub tc: bool,
    pub rd: bool,
    pub ra: bool,
    pub ad: bool,
    pub cd: bool,
}

impl Flags {
    fn from_bits(hi: u8, lo: u8) -> Self {
        Flags {
            qr: hi & 0x80 != 0,
            opcode: (hi >> 3) & 0x0f,
            aa: hi & 0x04 != 0,
            tc: hi & 0x02 != 0,
            rd: hi & 0x01 != 0,
            ra: lo & 0x80 != 0,
            ad: lo & 0x20 != 0,
            cd: lo & 0x10 != 0,
        }
    }

    fn to_bits(self, rcode: u8) -> [u8; 2] {
        let mut hi = (self.opcode & 0x0f) << 3;
        if self.qr {
            hi |= 0x80;
        }
        if self.aa {
            hi |= 0x04;
        }
        if self.tc {
            hi |= 0x02;
        }
        if self.rd {
            hi |= 0x01;
        }
        let mut lo = rcode & 0x0f;
        if self.ra {
            lo |= 0x80;
        }
        if self.ad {
            lo |= 0x20;
        }
        if self.cd {
            lo |= 0x10;
        }
        [hi, lo]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub name: String,
    pub qtype: RecordType,
    pub qclass: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum RData {
    A(Ipv4Addr),
    Aaaa(Ipv6Addr),
    Cname(String),
    /// Unknown or uninteresting types, kept verbatim.
    Opaque(#[serde(with = "hex_bytes")] Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceRecord {
    pub name: String,
    pub rtype: RecordType,
    pub class: u16,
    pub ttl: u32,
    pub rdata: RData,
}

/// A parsed DNS message. `latency_ms` is filled in by the transport.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsResponse {
    pub id: u16,
    pub flags: Flags,
    pub rcode: u8,
    pub questions: Vec<Question>,
    pub answers: Vec<ResourceRecord>,
    pub authority: Vec<ResourceRecord>,
    pub additional: Vec<ResourceRecord>,
    #[serde(default)]
    pub latency_ms: u64,
}

impl DnsResponse {
    pub fn truncated(&self) -> bool {
        self.flags.tc
    }

    /// Address records in the answer section.
    pub fn addresses(&self) -> impl Iterator<Item = std::net::IpAddr> + '_ {
        self.answers.iter().filter_map(|rr| match rr.rdata {
            RData::A(ip) => Some(ip.into()),
            RData::Aaaa(ip) => Some(ip.into()),
            _ => None,
        })
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

fn push_name(buf: &mut Vec<u8>, name: &str) {
    for label in name.split('.').filter(|l| !l.is_empty()) {
        buf.push(label.len() as u8);
        buf.extend_from_slice(label.as_bytes());
    }
    buf.push(0);
}

/// Standard recursive query with one question and, optionally, an EDNS0 OPT
/// record advertising a 1232-byte UDP payload.
pub fn build_query(domain: &Domain, qtype: QueryType, id: u16, edns: bool) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + domain.as_str().len() + 2 + 4 + 11);
    buf.extend_from_slice(&id.to_be_bytes());
    let flags = Flags {
        rd: true,
        ..Flags::default()
    };
    buf.extend_from_slice(&flags.to_bits(0));
    buf.extend_from_slice(&1u16.to_be_bytes());
    buf.extend_from_slice(&0u16.to_be_bytes());
    buf.extend_from_slice(&0u16.to_be_bytes());
    buf.extend_from_slice(&(edns as u16).to_be_bytes());
    push_name(&mut buf, domain.as_str());
    buf.extend_from_slice(&RecordType::from(qtype).0.to_be_bytes());
    buf.extend_from_slice(&1u16.to_be_bytes());
    if edns {
        buf.push(0);
        buf.extend_from_slice(&RecordType::OPT.0.to_be_bytes());
        buf.extend_from_slice(&EDNS_UDP_SIZE.to_be_bytes());
        buf.extend_from_slice(&0u32.to_be_bytes());
        buf.extend_from_slice(&0u16.to_be_bytes());
    }
    buf
}

/// Answer to encode into a response built by [`build_response`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    pub ttl: u32,
    pub rdata: RData,
}

/// Response echoing the query's id and first question. Answer owner names are
/// written as compression pointers to the question name.
pub fn build_response(query: &DnsResponse, rcode: u8, answers: &[Answer]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(512);
    buf.extend_from_slice(&query.id.to_be_bytes());
    let flags = Flags {
        qr: true,
        opcode: query.flags.opcode,
        rd: query.flags.rd,
        ra: true,
        cd: query.flags.cd,
        ..Flags::default()
    };
    buf.extend_from_slice(&flags.to_bits(rcode));
    let qd = query.questions.first();
    buf.extend_from_slice(&(qd.is_some() as u16).to_be_bytes());
    let an = if qd.is_some() { answers.len() as u16 } else { 0 };
    buf.extend_from_slice(&an.to_be_bytes());
    buf.extend_from_slice(&0u16.to_be_bytes());
    buf.extend_from_slice(&0u16.to_be_bytes());
    let Some(q) = qd else {
        return buf;
    };
    push_name(&mut buf, &q.name);
    buf.extend_from_slice(&q.qtype.0.to_be_bytes());
    buf.extend_from_slice(&q.qclass.to_be_bytes());
    for answer in answers {
        buf.extend_from_slice(&[0xc0, HEADER_LEN as u8]);
        let (rtype, rdata): (RecordType, Vec<u8>) = match &answer.rdata {
            RData::A(ip) => (RecordType::A, ip.octets().to_vec()),
            RData::Aaaa(ip) => (RecordType::AAAA, ip.octets().to_vec()),
            RData::Cname(name) => {
                let mut v = Vec::new();
                push_name(&mut v, name);
                (RecordType::CNAME, v)
            }
            RData::Opaque(bytes) => (q.qtype, bytes.clone()),
        };
        buf.extend_from_slice(&rtype.0.to_be_bytes());
        buf.extend_from_slice(&1u16.to_be_bytes());
        buf.extend_from_slice(&answer.ttl.to_be_bytes());
        buf.extend_from_slice(&(rdata.len() as u16).to_be_bytes());
        buf.extend_from_slice(&rdata);
    }
    buf
}

struct Reader<'a> {
    msg: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MalformedMessage> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.msg.len())
            .ok_or(MalformedMessage::Overrun(self.pos))?;
        let out = &self.msg[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, MalformedMessage> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, MalformedMessage> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, MalformedMessage> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Reads a possibly compressed name starting at the cursor.
    fn name(&mut self) -> Result<String, MalformedMessage> {
        let (name, next) = read_name(self.msg, self.pos)?;
        self.pos = next;
        Ok(name)
    }
}

/// Decodes the name at `start`; returns it and the offset just past its
/// in-place encoding. Compression pointers must point strictly backwards,
/// which bounds the walk and rules out loops.
fn read_name(msg: &[u8], start: usize) -> Result<(String, usize), MalformedMessage> {
    let mut name = String::new();
    let mut wire_len = 0usize;
    let mut pos = start;
    let mut resume: Option<usize> = None;
    // Lowest offset we may still jump to; shrinks with each pointer.
    let mut limit = start;

    loop {
        let len = *msg.get(pos).ok_or(MalformedMessage::Overrun(pos))?;
        match len & 0xc0 {
            0x00 => {
                if len == 0 {
                    let next = resume.unwrap_or(pos + 1);
                    if name.is_empty() {
                        name.push('.');
                    }
                    return Ok((name, next));
                }
                let len = len as usize;
                let label = msg
                    .get(pos + 1..pos + 1 + len)
                    .ok_or(MalformedMessage::Overrun(pos))?;
                wire_len += len + 1;
                if wire_len > MAX_NAME_WIRE_LEN {
                    return Err(MalformedMessage::NameTooLong(start));
                }
                if !name.is_empty() {
                    name.push('.');
                }
                for &b in label {
                    name.push(b.to_ascii_lowercase() as char);
                }
                pos += 1 + len;
            }
            0xc0 => {
                let lo = *msg.get(pos + 1).ok_or(MalformedMessage::Overrun(pos))?;
                let target = (((len & 0x3f) as usize) << 8) | lo as usize;
                if target >= limit {
                    return Err(MalformedMessage::PointerLoop { at: pos, target });
                }
                if resume.is_none() {
                    resume = Some(pos + 2);
                }
                limit = target;
                pos = target;
            }
            _ => return Err(MalformedMessage::BadLabel(pos)),
        }
    }
}

fn read_record(r: &mut Reader<'_>) -> Result<ResourceRecord, MalformedMessage> {
    let name = r.name()?;
    let rtype = RecordType(r.u16()?);
    let class = r.u16()?;
    let ttl = r.u32()?;
    let rdlen = r.u16()? as usize;
    let rdata_start = r.pos;
    let raw = r.take(rdlen)?;
    let rdata = match rtype {
        RecordType::A => {
            let b: [u8; 4] = raw.try_into().map_err(|_| MalformedMessage::BadRdata(rdata_start))?;
            RData::A(Ipv4Addr::from(b))
        }
        RecordType::AAAA => {
            let b: [u8; 16] =
                raw.try_into().map_err(|_| MalformedMessage::BadRdata(rdata_start))?;
            RData::Aaaa(Ipv6Addr::from(b))
        }
        RecordType::CNAME => {
            let (target, end) = read_name(r.msg, rdata_start)?;
            if end != rdata_start + rdlen {
                return Err(MalformedMessage::BadRdata(rdata_start));
            }
            RData::Cname(target)
        }
        _ => RData::Opaque(raw.to_vec()),
    };
    Ok(ResourceRecord {
        name,
        rtype,
        class,
        ttl,
        rdata,
    })
}

/// Parse any DNS message (query or response).
pub fn parse_response(bytes: &[u8]) -> Result<DnsResponse, MalformedMessage> {
    if bytes.len() < HEADER_LEN {
        return Err(MalformedMessage::TruncatedHeader(bytes.len()));
    }
    let mut r = Reader { msg: bytes, pos: 0 };
    let id = r.u16()?;
    let hi = r.u8()?;
    let lo = r.u8()?;
    let counts = [r.u16()?, r.u16()?, r.u16()?, r.u16()?];

    let mut questions = Vec::with_capacity(counts[0].min(4) as usize);
    for _ in 0..counts[0] {
        let name = r.name()?;
        let qtype = RecordType(r.u16()?);
        let qclass = r.u16()?;
        questions.push(Question { name, qtype, qclass });
    }
    let mut sections: [Vec<ResourceRecord>; 3] = Default::default();
    for (section, &count) in sections.iter_mut().zip(&counts[1..]) {
        for _ in 0..count {
            section.push(read_record(&mut r)?);
        }
    }
    let [answers, authority, additional] = sections;
    Ok(DnsResponse {
        id,
        flags: Flags::from_bits(hi, lo),
        rcode: lo & 0x0f,
        questions,
        answers,
        authority,
        additional,
        latency_ms: 0,
    })
}

/// Transaction id of a message, if it has a header.
pub fn message_id(bytes: &[u8]) -> Option<u16> {
    (bytes.len() >= 2).then(|| u16::from_be_bytes([bytes[0], bytes[1]]))
}
