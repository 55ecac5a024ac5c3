//! A farm of simulated filtered resolvers on local UDP sockets, for offline
//! campaigns and tests.

use std::collections::BTreeSet;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::net::UdpSocket;
use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::dns::wire::{build_response, parse_response, rcode, Answer, RData, RecordType};
use crate::domain::Domain;

#[derive(Debug, Error)]
pub enum MockError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("provider {0:?}: drop_rate must lie in [0, 1]")]
    DropRate(String),
    #[error("farm config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockBehavior {
    SinkholeA { ip: IpAddr },
    Nxdomain,
}

fn default_answer() -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(203, 0, 113, 10))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockProviderSpec {
    #[serde(default)]
    pub name: String,
    pub listen: SocketAddr,
    #[serde(default)]
    pub blocklist: BTreeSet<Domain>,
    pub block_behavior: BlockBehavior,
    #[serde(default = "default_answer")]
    pub default_answer: IpAddr,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub drop_rate: f64,
}

impl MockProviderSpec {
    pub fn new(name: &str, block_behavior: BlockBehavior) -> Self {
        MockProviderSpec {
            name: name.to_string(),
            listen: SocketAddr::from(([127, 0, 0, 1], 0)),
            blocklist: BTreeSet::new(),
            block_behavior,
            default_answer: default_answer(),
            latency_ms: 0,
            drop_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), MockError> {
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(MockError::DropRate(self.name.clone()));
        }
        Ok(())
    }
}

/// The `mock-dns` config file: `{ "providers": [...], "seed": n }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmConfig {
    pub providers: Vec<MockProviderSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl FarmConfig {
    pub fn from_json(text: &str) -> Result<Self, MockError> {
        serde_json::from_str(text).map_err(|e| MockError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FarmManifest {
    pub seed: u64,
    pub providers: Vec<FarmEndpoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FarmEndpoint {
    pub name: String,
    pub addr: SocketAddr,
    pub blocked: usize,
}

fn drop_decision(seed: u64, provider_index: usize, query: &[u8], drop_rate: f64) -> bool {
    if drop_rate <= 0.0 {
        return false;
    }
    if drop_rate >= 1.0 {
        return true;
    }
    // Keyed on the query without its transaction id so retries of the same
    // question meet the same fate.
    let mut h = Sha256::new();
    h.update((provider_index as u64).to_be_bytes());
    h.update(query.get(2..).unwrap_or_default());
    let digest = h.finalize();
    let key = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ key);
    rng.gen::<f64>() < drop_rate
}

/// The pure request handler: query bytes in, response bytes out (`None`
/// means no reply, either dropped or unparseable).
pub fn respond(spec: &MockProviderSpec, seed: u64, provider_index: usize, query: &[u8]) -> Option<Vec<u8>> {
    if drop_decision(seed, provider_index, query, spec.drop_rate) {
        return None;
    }
    let msg = parse_response(query).ok()?;
    if msg.flags.qr {
        return None;
    }
    let Some(q) = msg.questions.first() else {
        return Some(build_response(&msg, rcode::FORMERR, &[]));
    };
    let Ok(name) = Domain::parse(&q.name) else {
        return Some(build_response(&msg, rcode::NXDOMAIN, &[]));
    };
    let address = |ip: IpAddr| -> Vec<Answer> {
        let rdata = match (ip, q.qtype) {
            (IpAddr::V4(v4), RecordType::A) => RData::A(v4),
            (IpAddr::V6(v6), RecordType::AAAA) => RData::Aaaa(v6),
            _ => return Vec::new(),
        };
        vec![Answer { ttl: 60, rdata }]
    };
    let bytes = if spec.blocklist.contains(&name) {
        match spec.block_behavior {
            BlockBehavior::Nxdomain => build_response(&msg, rcode::NXDOMAIN, &[]),
            BlockBehavior::SinkholeA { ip } => build_response(&msg, rcode::NOERROR, &address(ip)),
        }
    } else {
        build_response(&msg, rcode::NOERROR, &address(spec.default_answer))
    };
    Some(bytes)
}

/// Running farm. Stops on [`FarmHandle::stop`] or drop.
#[derive(Debug)]
pub struct FarmHandle {
    manifest: FarmManifest,
    stop_tx: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl FarmHandle {
    pub fn manifest(&self) -> &FarmManifest {
        &self.manifest
    }

    /// Bound address of the provider at `index` (config order).
    pub fn addr(&self, index: usize) -> SocketAddr {
        self.manifest.providers[index].addr
    }

    pub fn addr_of(&self, name: &str) -> Option<SocketAddr> {
        self.manifest.providers.iter().find(|p| p.name == name).map(|p| p.addr)
    }

    /// Idempotent.
    pub async fn stop(&mut self) {
        let _ = self.stop_tx.send(true);
        for t in self.tasks.drain(..) {
            let _ = t.await;
        }
    }
}

impl Drop for FarmHandle {
    fn drop(&mut self) {
        let _ = self.stop_tx.send(true);
        for t in &self.tasks {
            t.abort();
        }
    }
}

/// Bind every provider and start serving. Port 0 picks a free port; the
/// manifest reports the bound addresses.
pub async fn serve(config: &FarmConfig) -> Result<FarmHandle, MockError> {
    let (stop_tx, stop_rx) = watch::channel(false);
    let mut tasks = Vec::new();
    let mut endpoints = Vec::new();
    for (index, spec) in config.providers.iter().enumerate() {
        spec.validate()?;
        let sock = UdpSocket::bind(spec.listen).await.map_err(|source| MockError::Bind {
            addr: spec.listen,
            source,
        })?;
        let addr = sock.local_addr().map_err(|source| MockError::Bind {
            addr: spec.listen,
            source,
        })?;
        endpoints.push(FarmEndpoint {
            name: if spec.name.is_empty() {
                format!("provider-{index}")
            } else {
                spec.name.clone()
            },
            addr,
            blocked: spec.blocklist.len(),
        });
        tasks.push(tokio::spawn(serve_one(
            Arc::new(sock),
            Arc::new(spec.clone()),
            config.seed,
            index,
            stop_rx.clone(),
        )));
    }
    Ok(FarmHandle {
        manifest: FarmManifest {
            seed: config.seed,
            providers: endpoints,
        },
        stop_tx,
        tasks,
    })
}

async fn serve_one(
    sock: Arc<UdpSocket>,
    spec: Arc<MockProviderSpec>,
    seed: u64,
    index: usize,
    mut stop: watch::Receiver<bool>,
) {
    let mut buf = vec![0u8; 4096];
    loop {
        let (n, peer) = tokio::select! {
            _ = stop.changed() => return,
            r = sock.recv_from(&mut buf) => match r {
                Ok(v) => v,
                Err(e) => {
                    tracing::debug!(error = %e, "mock recv error");
                    continue;
                }
            },
        };
        let Some(reply) = respond(&spec, seed, index, &buf[..n]) else {
            continue;
        };
        if spec.latency_ms == 0 {
            let _ = sock.send_to(&reply, peer).await;
        } else {
            let sock = sock.clone();
            let delay = Duration::from_millis(spec.latency_ms);
            tokio::spawn(async move {
                tokio::time::sleep(delay).await;
                let _ = sock.send_to(&reply, peer).await;
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dns::wire::{build_query, QueryType};

    fn d(s: &str) -> Domain {
        Domain::parse(s).unwrap()
    }

    fn spec() -> MockProviderSpec {
        let mut s = MockProviderSpec::new(
            "p",
            BlockBehavior::SinkholeA {
                ip: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            },
        );
        s.blocklist.insert(d("d1.example"));
        s
    }

    #[test]
    fn sinkholes_blocked_domains() {
        let q = build_query(&d("d1.example"), QueryType::A, 5, true);
        let resp = parse_response(&respond(&spec(), 0, 0, &q).unwrap()).unwrap();
        assert_eq!(resp.id, 5);
        assert_eq!(resp.answers[0].rdata, RData::A(Ipv4Addr::UNSPECIFIED));
    }

    #[test]
    fn passes_through_others() {
        let q = build_query(&d("d2.example"), QueryType::A, 6, true);
        let resp = parse_response(&respond(&spec(), 0, 0, &q).unwrap()).unwrap();
        assert_eq!(resp.rcode, rcode::NOERROR);
        assert_eq!(resp.answers[0].rdata, RData::A(Ipv4Addr::new(203, 0, 113, 10)));
    }

    #[test]
    fn nxdomain_behavior_and_aaaa() {
        let mut s = spec();
        s.block_behavior = BlockBehavior::Nxdomain;
        let q = build_query(&d("d1.example"), QueryType::A, 1, false);
        assert_eq!(parse_response(&respond(&s, 0, 0, &q).unwrap()).unwrap().rcode, rcode::NXDOMAIN);
        let q = build_query(&d("d2.example"), QueryType::Aaaa, 1, false);
        let resp = parse_response(&respond(&s, 0, 0, &q).unwrap()).unwrap();
        assert_eq!(resp.rcode, rcode::NOERROR);
        assert!(resp.answers.is_empty());
    }

    #[test]
    fn deterministic_modulo_id() {
        let s = spec();
        let a = respond(&s, 7, 0, &build_query(&d("d1.example"), QueryType::A, 1, true)).unwrap();
        let b = respond(&s, 7, 0, &build_query(&d("d1.example"), QueryType::A, 2, true)).unwrap();
        assert_eq!(a[2..], b[2..]);
    }

    #[test]
    fn drop_rate_bounds() {
        let mut s = spec();
        s.drop_rate = 1.0;
        let q = build_query(&d("d2.example"), QueryType::A, 1, true);
        assert!(respond(&s, 0, 0, &q).is_none());
        s.drop_rate = 1.5;
        assert!(s.validate().is_err());
        // Partial drop is a stable function of (seed, provider, question).
        s.drop_rate = 0.5;
        let dropped: Vec<bool> = (0..200)
            .map(|i| respond(&s, 42, 0, &build_query(&d(&format!("h{i}.example")), QueryType::A, 1, true)).is_none())
            .collect();
        let again: Vec<bool> = (0..200)
            .map(|i| respond(&s, 42, 0, &build_query(&d(&format!("h{i}.example")), QueryType::A, 9, true)).is_none())
            .collect();
        assert_eq!(dropped, again);
        let n = dropped.iter().filter(|&&x| x).count();
        assert!((50..150).contains(&n), "{n}");
    }

    #[test]
    fn ignores_responses_and_garbage() {
        assert!(respond(&spec(), 0, 0, &[1, 2, 3]).is_none());
        let q = build_query(&d("d1.example"), QueryType::A, 1, true);
        let resp = respond(&spec(), 0, 0, &q).unwrap();
        assert!(respond(&spec(), 0, 0, &resp).is_none());
    }

    #[test]
    fn farm_config_json() {
        let cfg = FarmConfig::from_json(
            r#"{"seed": 3, "providers": [{"name": "q9", "listen": "127.0.0.1:0",
                "blocklist": ["bad.example"], "block_behavior": {"kind": "nxdomain"}}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.providers[0].block_behavior, BlockBehavior::Nxdomain);
        assert_eq!(cfg.providers[0].default_answer, default_answer());
    }

    #[tokio::test]
    async fn serves_over_udp() {
        let mut farm = serve(&FarmConfig {
            providers: vec![spec()],
            seed: 0,
        })
        .await
        .unwrap();
        let resp = crate::dns::query(farm.addr(0), &d("d1.example"), &Default::default())
            .await
            .unwrap();
        assert_eq!(resp.answers[0].rdata, RData::A(Ipv4Addr::UNSPECIFIED));
        farm.stop().await;
        farm.stop().await;
    }
}
