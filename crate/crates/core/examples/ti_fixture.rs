//! Look domains up in an offline threat-intelligence fixture and compute
//! agreement ratios.

use admal::ti::{agreement_ratio, threat_flag, AgreementDenominator, FixtureProvider, TiClient, TiLookupResult, TiSource};
use admal::Domain;

const FIXTURE: &str = r#"{"domain": "evil.example", "harmless": 0, "undetected": 20, "suspicious": 1, "malicious": 6}
{"domain": "grey.example", "harmless": 60, "undetected": 10, "suspicious": 0, "malicious": 2}
{"domain": "fine.example", "harmless": 70, "undetected": 12, "suspicious": 0, "malicious": 0}
{"domain": "quiet.example", "harmless": 0, "undetected": 80, "suspicious": 0, "malicious": 0}
"#;

#[tokio::main]
async fn main() {
    let client = TiClient::new(TiSource::Fixture(FixtureProvider::from_jsonl(FIXTURE).unwrap()));
    for name in ["evil.example", "grey.example", "fine.example", "quiet.example", "unknown.example"] {
        let domain = Domain::parse(name).unwrap();
        match client.fetch_report(&domain).await.unwrap() {
            TiLookupResult::Report(r) => {
                let ratio = match agreement_ratio(&r, AgreementDenominator::Opinions) {
                    Ok(x) => format!("{x:.4}"),
                    Err(e) => format!("undefined ({e})"),
                };
                println!("{name:<16} threat={:<5} ratio={ratio}", threat_flag(&r));
            }
            TiLookupResult::NoReport { .. } => println!("{name:<16} no report"),
        }
    }
}
