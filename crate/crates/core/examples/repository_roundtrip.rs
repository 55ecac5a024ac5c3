//! Store verdicts, reopen the log, query, export and compact.

use admal::dns::{Evidence, ProviderVerdict, Verdict};
use admal::repository::{Payload, Repository, VerdictRecord};
use admal::Domain;

fn record(domain: &str, provider: &str, verdict: Verdict) -> VerdictRecord {
    let domain = Domain::parse(domain).unwrap();
    let pv = ProviderVerdict {
        domain: domain.clone(),
        provider_id: provider.into(),
        verdict,
        evidence: Evidence::default(),
        queried_at: chrono::Utc::now(),
    };
    VerdictRecord::new("demo", provider, domain, Payload::Dns(pv))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    {
        let mut repo = Repository::open(dir.path()).unwrap();
        repo.upsert_batch([
            record("a.example", "quad9", Verdict::inconclusive("timeout")),
            record("a.example", "cisco", Verdict::NotBlocked),
            record("b.example", "quad9", Verdict::NotBlocked),
        ])
        .unwrap();
        // A later verdict for the same key supersedes the earlier one.
        repo.upsert(record("a.example", "quad9", Verdict::NotBlocked)).unwrap();
        println!("records {} over {} log lines", repo.len(), repo.log_lines());
    }

    let mut repo = Repository::open(dir.path()).unwrap();
    for r in repo.query("demo", Some("quad9")) {
        println!("{} {} {}", r.provider_id, r.domain, r.payload.kind());
    }
    let export = dir.path().join("export.jsonl");
    println!("exported {}", repo.export(&export).unwrap());
    repo.compact().unwrap();
    println!("after compaction: {} log lines", repo.log_lines());
}
