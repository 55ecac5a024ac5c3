//! Run a scan against an in-process mock resolver farm and print the
//! campaign manifest.

use std::net::Ipv4Addr;

use admal::analytics::{blocked_sets, venn3};
use admal::dns::{run_campaign, BlockSignature, CampaignLimits, ResolverProfile, SignatureKind, Transport};
use admal::mockdns::{serve, BlockBehavior, FarmConfig, MockProviderSpec};
use admal::repository::Repository;
use admal::Domain;

fn dom(s: &str) -> Domain {
    Domain::parse(s).unwrap()
}

#[tokio::main]
async fn main() {
    let sinkhole = BlockBehavior::SinkholeA { ip: Ipv4Addr::UNSPECIFIED.into() };
    let mut specs = vec![
        MockProviderSpec::new("alpha", sinkhole),
        MockProviderSpec::new("beta", BlockBehavior::Nxdomain),
        MockProviderSpec::new("gamma", sinkhole),
        MockProviderSpec::new("control", BlockBehavior::Nxdomain),
    ];
    specs[0].blocklist = ["bad1.example", "bad2.example", "bad3.example"].map(dom).into();
    specs[1].blocklist = ["bad2.example", "bad3.example"].map(dom).into();
    specs[2].blocklist = ["bad3.example", "bad4.example"].map(dom).into();
    specs[2].drop_rate = 0.1;
    let farm = serve(&FarmConfig { providers: specs, seed: 7 }).await.unwrap();

    let profiles: Vec<ResolverProfile> = (0..3)
        .map(|i| {
            let name = farm.manifest().providers[i].name.clone();
            let sig = if i == 1 {
                BlockSignature::of_kind(SignatureKind::Nxdomain)
            } else {
                BlockSignature::sinkhole_a([Ipv4Addr::UNSPECIFIED])
            };
            ResolverProfile {
                display_name: name.clone(),
                provider_id: name,
                filtered_address: farm.addr(i),
                control_address: Some(farm.addr(3)),
                transport: Transport::UdpWithTcpFallback,
                blocked_signatures: vec![sig],
                timeout_ms: 200,
                retries: 1,
            }
        })
        .collect();

    let mut domains: Vec<Domain> = (1..=4).map(|i| dom(&format!("bad{i}.example"))).collect();
    domains.extend((0..96).map(|i| dom(&format!("site{i}.example"))));

    let dir = tempfile::tempdir().unwrap();
    let mut repo = Repository::open(dir.path()).unwrap();
    let limits = CampaignLimits { max_inflight: 32, ..CampaignLimits::default() };
    let outcome = run_campaign(&mut repo, "demo", &domains, &profiles, &limits, std::future::pending())
        .await
        .unwrap();
    println!("{}", serde_json::to_string_pretty(&outcome.manifest).unwrap());

    let sets = blocked_sets(&repo, "demo").unwrap();
    let v = venn3(sets.get("alpha"), sets.get("beta"), sets.get("gamma"));
    println!("venn: {}", serde_json::to_string(&v).unwrap());
}
