use std::collections::{BTreeSet, HashSet};

use admal::adlists::{compile, compile_with, parse_list, AdMatcherBuilder, FilterEntry, ListFormat, SubdomainMatching};
use admal::Domain;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive(entries: &[FilterEntry], d: &Domain, always: bool) -> bool {
    entries.iter().any(|e| {
        d.as_str() == e.pattern.as_str()
            || ((e.match_subdomains || always) && d.as_str().ends_with(&format!(".{}", e.pattern.as_str())))
    })
}

fn random_domain(rng: &mut ChaCha8Rng) -> Domain {
    const LABELS: [&str; 9] = ["ads", "cdn", "a", "b", "track", "doubleclick", "example", "com", "net"];
    let n = rng.gen_range(1..=4);
    let labels: Vec<&str> = (0..n).map(|_| *LABELS.choose(rng).unwrap()).collect();
    Domain::parse(&labels.join(".")).unwrap()
}

fn entry(d: Domain, sub: bool, line_no: usize) -> FilterEntry {
    FilterEntry {
        pattern: d,
        match_subdomains: sub,
        source_list: "list".into(),
        line_no,
    }
}

#[test]
fn thousand_domains_against_hundred_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let entries: Vec<FilterEntry> = (0..100).map(|i| entry(random_domain(&mut rng), rng.gen(), i + 1)).collect();
    let strict = compile(&entries);
    let always = compile_with(&entries, SubdomainMatching::Always);
    let mut hits = 0;
    for _ in 0..1_000 {
        let d = random_domain(&mut rng);
        assert_eq!(strict.is_ad(&d), naive(&entries, &d, false), "{d}");
        assert_eq!(always.is_ad(&d), naive(&entries, &d, true), "{d}");
        hits += strict.is_ad(&d) as usize;
    }
    assert!(hits > 0 && hits < 1_000);
}

#[test]
fn entry_count_is_distinct_pattern_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let entries: Vec<FilterEntry> = (0..10_000)
        .map(|i| {
            let d = Domain::parse(&format!("p{}.{}.example", rng.gen_range(0..4_000), rng.gen_range(0..3))).unwrap();
            entry(d, rng.gen(), i)
        })
        .collect();
    let distinct: HashSet<&str> = entries.iter().map(|e| e.pattern.as_str()).collect();
    assert_eq!(compile(&entries).entry_count(), distinct.len());
}

#[test]
fn mixed_list_text_parses_per_line() {
    let text = "# pi-hole style\n0.0.0.0 ads.tracker.net\n127.0.0.1 localhost\n||doubleclick.net^\nplain.example\n! note\n##.banner\n@@||good.example^\n||x.example^$third-party\nexample.com/path\n";
    let parsed = parse_list(text, ListFormat::Auto, "mixed");
    let got: BTreeSet<(String, bool)> = parsed
        .entries
        .iter()
        .map(|e| (e.pattern.as_str().to_string(), e.match_subdomains))
        .collect();
    let want: BTreeSet<(String, bool)> = [("ads.tracker.net", false), ("doubleclick.net", true), ("plain.example", false)]
        .into_iter()
        .map(|(p, s)| (p.to_string(), s))
        .collect();
    assert_eq!(got, want);
    assert_eq!(parsed.rejects.len(), 7);
}

#[test]
fn builder_digest_is_content_hash() {
    let mut b = AdMatcherBuilder::new(SubdomainMatching::Strict);
    b.add_list("one", "||ads.example^\n", ListFormat::Adblock);
    let m = b.build();
    let mut b2 = AdMatcherBuilder::new(SubdomainMatching::Strict);
    b2.add_list("one", "||ads.example^\n", ListFormat::Adblock);
    assert_eq!(m.digests(), b2.build().digests());
    assert_eq!(m.digests()["one"].len(), 64);
}

fn entries_strategy() -> impl Strategy<Value = Vec<(String, bool)>> {
    prop::collection::vec(
        (prop::sample::select(vec!["ads.example", "example", "a.ads.example", "b.example", "ads.net"]), any::<bool>())
            .prop_map(|(p, s)| (p.to_string(), s)),
        0..12,
    )
}

proptest! {
    #[test]
    fn insertion_order_does_not_matter(mut es in entries_strategy(), seed in any::<u64>(),
                                       probes in prop::collection::vec(prop::sample::select(vec!["ads.example", "x.ads.example", "notads.example", "a.ads.example", "example", "ads.net.example"]), 1..8)) {
        let to_entries = |es: &[(String, bool)]| -> Vec<FilterEntry> {
            es.iter().enumerate().map(|(i, (p, s))| entry(Domain::parse(p).unwrap(), *s, i + 1)).collect()
        };
        let a = compile(&to_entries(&es));
        es.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = compile(&to_entries(&es));
        prop_assert_eq!(a.entry_count(), b.entry_count());
        for p in probes {
            let d = Domain::parse(p).unwrap();
            prop_assert_eq!(a.is_ad(&d), b.is_ad(&d));
            prop_assert_eq!(a.lookup(&d).map(|m| m.pattern), b.lookup(&d).map(|m| m.pattern));
        }
    }

    #[test]
    fn suffix_matches_are_label_aligned(prefix in "[a-z]{1,8}", sub in any::<bool>()) {
        let m = compile(&[entry(Domain::parse("ads.example.com").unwrap(), sub, 1)]);
        let glued = Domain::parse(&format!("{prefix}ads.example.com")).unwrap();
        prop_assert!(!m.is_ad(&glued));
        let child = Domain::parse(&format!("{prefix}.ads.example.com")).unwrap();
        prop_assert_eq!(m.is_ad(&child), sub);
    }
}
