//! The whole pipeline through the library API: ingest, scan a mock farm,
//! classify ads, look up TI and write the report files.

use std::net::Ipv4Addr;

use admal::config::PipelineConfig;
use admal::dns::{BlockSignature, ResolverProfile, SignatureKind, Transport};
use admal::mockdns::{serve, BlockBehavior, FarmConfig, MockProviderSpec};
use admal::pipeline;
use admal::repository::Repository;
use admal::Domain;
use serde_json::json;

#[tokio::main]
async fn main() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    std::fs::write(
        base.join("urls.txt"),
        "https://ads.adnet.example/p.gif\nhttps://news.example/\nhttps://cdn.news.example/app.js\nhttps://evil.example/x\nhttps://shop.example/\n",
    )
    .unwrap();
    std::fs::write(base.join("ads.txt"), "||adnet.example^\n").unwrap();
    std::fs::write(
        base.join("ti.jsonl"),
        "{\"domain\":\"evil.example\",\"harmless\":1,\"undetected\":5,\"suspicious\":0,\"malicious\":7}\n\
         {\"domain\":\"ads.adnet.example\",\"harmless\":40,\"undetected\":9,\"suspicious\":1,\"malicious\":0}\n\
         {\"domain\":\"news.example\",\"harmless\":70,\"undetected\":3,\"suspicious\":0,\"malicious\":0}\n",
    )
    .unwrap();

    let block = |names: &[&str]| names.iter().map(|n| Domain::parse(n).unwrap()).collect();
    let sinkhole = BlockBehavior::SinkholeA { ip: Ipv4Addr::UNSPECIFIED.into() };
    let mut specs = vec![
        MockProviderSpec::new("one", sinkhole),
        MockProviderSpec::new("two", BlockBehavior::Nxdomain),
        MockProviderSpec::new("three", sinkhole),
        MockProviderSpec::new("control", BlockBehavior::Nxdomain),
    ];
    specs[0].blocklist = block(&["evil.example", "ads.adnet.example"]);
    specs[1].blocklist = block(&["evil.example"]);
    specs[2].blocklist = block(&["ads.adnet.example"]);
    let farm = serve(&FarmConfig { providers: specs, seed: 1 }).await.unwrap();
    let resolvers: Vec<ResolverProfile> = (0..3)
        .map(|i| ResolverProfile {
            provider_id: farm.manifest().providers[i].name.clone(),
            display_name: farm.manifest().providers[i].name.clone(),
            filtered_address: farm.addr(i),
            control_address: Some(farm.addr(3)),
            transport: Transport::UdpWithTcpFallback,
            blocked_signatures: vec![if i == 1 {
                BlockSignature::of_kind(SignatureKind::Nxdomain)
            } else {
                BlockSignature::sinkhole_a([Ipv4Addr::UNSPECIFIED])
            }],
            timeout_ms: 1000,
            retries: 1,
        })
        .collect();

    let text = json!({
        "campaign_id": "example",
        "inputs": { "url_lists": ["urls.txt"] },
        "resolvers": resolvers,
        "ti": { "fixture": "ti.jsonl" },
        "lists": [{ "path": "ads.txt" }],
    })
    .to_string();
    let cfg = PipelineConfig::from_str_in(&text, base).unwrap();
    let mut repo = Repository::open(&cfg.repository).unwrap();

    let (corpus, summary) = pipeline::ingest(&cfg, &repo).unwrap();
    println!("ingest: {} domains {}", corpus.len(), serde_json::to_string(&summary).unwrap());
    let scan = pipeline::dns_scan(&cfg, &mut repo, std::future::pending()).await.unwrap();
    println!("dns: {} verdicts", scan.written);
    let client = pipeline::ti_client(&cfg).unwrap().unwrap();
    let ti = pipeline::ti_fetch(&cfg, &mut repo, &client, std::future::pending()).await.unwrap();
    println!("ti: {}", serde_json::to_string(&ti).unwrap());
    let matcher = pipeline::build_matcher(&cfg).unwrap();
    pipeline::store_ad_classifications(&cfg, &mut repo, &matcher).unwrap();

    let (report, files) = pipeline::analyze(&cfg, &repo, &cfg.out).unwrap();
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    for f in files {
        println!("wrote {}", f.strip_prefix(base).unwrap_or(&f).display());
    }
}
