//! Sending one query to one resolver over UDP (with TCP fallback) or TCP.

use std::net::SocketAddr;
use std::time::Duration;

use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpStream, UdpSocket};
use tokio::time::{timeout, Instant};

use super::classify::Transport;
use super::wire::{build_query, message_id, parse_response, DnsResponse, MalformedMessage, QueryType};
use crate::domain::Domain;

const MAX_UDP_RESPONSE: usize = 4096;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("timeout")]
    Timeout,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed response: {0}")]
    Malformed(#[from] MalformedMessage),
}

impl QueryError {
    /// Short reason string used for Inconclusive verdicts.
    pub fn reason(&self) -> &'static str {
        match self {
            QueryError::Timeout => "timeout",
            QueryError::Io(_) => "io-error",
            QueryError::Malformed(_) => "malformed-response",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QueryOptions {
    pub qtype: QueryType,
    pub transport: Transport,
    pub timeout: Duration,
    pub retries: u32,
    pub edns: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions {
            qtype: QueryType::A,
            transport: Transport::UdpWithTcpFallback,
            timeout: Duration::from_millis(3000),
            retries: 2,
            edns: true,
        }
    }
}

/// Query `server` for `domain`, retrying timeouts up to `opts.retries` times.
pub async fn query(
    server: SocketAddr,
    domain: &Domain,
    opts: &QueryOptions,
) -> Result<DnsResponse, QueryError> {
    let mut last = QueryError::Timeout;
    for _ in 0..=opts.retries {
        let id: u16 = rand::random();
        let msg = build_query(domain, opts.qtype, id, opts.edns);
        let started = Instant::now();
        let attempt = match opts.transport {
            Transport::Tcp => query_tcp(server, &msg, opts.timeout).await,
            Transport::UdpWithTcpFallback => match query_udp(server, &msg, opts.timeout).await {
                Ok(resp) if resp.truncated() => query_tcp(server, &msg, opts.timeout).await,
                other => other,
            },
        };
        match attempt {
            Ok(mut resp) => {
                resp.latency_ms = started.elapsed().as_millis() as u64;
                return Ok(resp);
            }
            Err(e @ QueryError::Malformed(_)) => return Err(e),
            Err(e) => last = e,
        }
    }
    Err(last)
}

async fn query_udp(
    server: SocketAddr,
    msg: &[u8],
    limit: Duration,
) -> Result<DnsResponse, QueryError> {
    let bind: SocketAddr = if server.is_ipv4() {
        "0.0.0.0:0".parse().unwrap()
    } else {
        "[::]:0".parse().unwrap()
    };
    let sock = UdpSocket::bind(bind).await?;
    sock.connect(server).await?;
    sock.send(msg).await?;
    let want = message_id(msg);
    let deadline = Instant::now() + limit;
    let mut buf = vec![0u8; MAX_UDP_RESPONSE];
    loop {
        let n = match timeout(deadline.saturating_duration_since(Instant::now()), sock.recv(&mut buf)).await {
            Err(_) => return Err(QueryError::Timeout),
            Ok(r) => r?,
        };
        // Ignore stray datagrams that do not answer our id.
        if message_id(&buf[..n]) != want {
            continue;
        }
        return Ok(parse_response(&buf[..n])?);
    }
}

async fn query_tcp(
    server: SocketAddr,
    msg: &[u8],
    limit: Duration,
) -> Result<DnsResponse, QueryError> {
    let exchange = async {
        let mut stream = TcpStream::connect(server).await?;
        let mut framed = Vec::with_capacity(msg.len() + 2);
        framed.extend_from_slice(&(msg.len() as u16).to_be_bytes());
        framed.extend_from_slice(msg);
        stream.write_all(&framed).await?;
        let mut len = [0u8; 2];
        stream.read_exact(&mut len).await?;
        let mut body = vec![0u8; u16::from_be_bytes(len) as usize];
        stream.read_exact(&mut body).await?;
        Ok::<_, QueryError>(parse_response(&body)?)
    };
    timeout(limit, exchange).await.map_err(|_| QueryError::Timeout)?
}
