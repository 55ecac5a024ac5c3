//! Build a deduplicated domain corpus from a URL list.

use admal::ingest::{dedupe, dedupe_with, parse_url_list, DedupeOptions};

fn main() {
    let text = "\
https://ads.adnet.example/pixel?id=1
https://ADS.adnet.example:8443/banner
http://cdn.static.example/app.js
https://bücher.example/
https://192.0.2.7/raw
not a url
https://news.example.co.uk/story
https://img.news.example.co.uk/a.png
";
    let parsed = parse_url_list(text);
    for r in &parsed.rejects {
        println!("rejected line {}: {:?} ({:?})", r.line_no, r.line, r.reason);
    }

    let corpus = dedupe(&parsed.records);
    println!("{} domains, rejects {:?}", corpus.len(), corpus.rejects);
    print!("{}", corpus.to_text());

    let collapsed = dedupe_with(&parsed.records, DedupeOptions { collapse_registrable: true });
    println!("registrable domains: {}", collapsed.len());
    print!("{}", collapsed.to_text());
}
