//! Compile filter lists in several syntaxes and classify domains.

use admal::adlists::{classify_domain, AdMatcherBuilder, ListFormat, SubdomainMatching};
use admal::Domain;

fn main() {
    let hosts = "# hosts file\n0.0.0.0 tracker.example\n127.0.0.1 localhost\n";
    let adblock = "! adblock\n||adnet.example^\n||pixel.example^$third-party\n@@||adnet.example/ok^\n##.banner\n";
    let plain = "metrics.example\n";

    for mode in [SubdomainMatching::Strict, SubdomainMatching::Always] {
        let mut b = AdMatcherBuilder::new(mode);
        b.add_list("hosts", hosts, ListFormat::Auto)
            .add_list("adblock", adblock, ListFormat::Auto)
            .add_list("plain", plain, ListFormat::Auto);
        let m = b.build();
        println!("{mode:?}: {} entries", m.entry_count());
        for (list, rejects) in b.rejects() {
            println!("  {list}: {} lines skipped", rejects.len());
        }
        for d in ["tracker.example", "cdn.tracker.example", "x.adnet.example", "notadnet.example", "metrics.example"] {
            let c = classify_domain(&m, &Domain::parse(d).unwrap());
            println!("  {}", serde_json::to_string(&c).unwrap());
        }
    }
}
