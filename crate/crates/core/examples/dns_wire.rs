//! Encode a query, fabricate answers and classify them against the default
//! resolver profiles.

use std::net::Ipv4Addr;

use admal::dns::wire::{build_response, Answer, RData};
use admal::dns::{build_query, classify, parse_response, QueryType, ResolverProfile};
use admal::Domain;

fn main() {
    let domain = Domain::parse("malware.example").unwrap();
    let query = build_query(&domain, QueryType::A, 0x2a2a, true);
    println!("query: {} bytes", query.len());
    let q = parse_response(&query).unwrap();

    let answer = |ip: Ipv4Addr| vec![Answer { ttl: 60, rdata: RData::A(ip) }];
    let control = parse_response(&build_response(&q, 0, &answer(Ipv4Addr::new(198, 51, 100, 4)))).unwrap();
    let cases = [
        ("nxdomain", build_response(&q, 3, &[])),
        ("sinkhole 0.0.0.0", build_response(&q, 0, &answer(Ipv4Addr::UNSPECIFIED))),
        ("sinkhole 146.112.61.106", build_response(&q, 0, &answer(Ipv4Addr::new(146, 112, 61, 106)))),
        ("real address", build_response(&q, 0, &answer(Ipv4Addr::new(198, 51, 100, 4)))),
        ("servfail", build_response(&q, 2, &[])),
    ];
    for profile in ResolverProfile::defaults() {
        println!("{}", profile.display_name);
        for (name, bytes) in &cases {
            let resp = parse_response(bytes).unwrap();
            let verdict = classify(&resp, Some(&control), &profile);
            println!("  {name:<24} {}", serde_json::to_string(&verdict).unwrap());
        }
    }
}
