//! Regenerate the headline tables from synthetic data with the reference
//! counts: blocked sets, their overlap, ad shares and the TI statistics.

use admal::analytics::{build_report, AnalyzeOptions};
use admal::fixtures::{ad_matcher, write_ti, BlockedFixture, TiFixture};
use admal::repository::Repository;

fn main() {
    // Exclusive Venn regions indexed by membership mask:
    // bit 0 = quad9, bit 1 = cisco, bit 2 = cloudflare.
    let mut regions = [0usize; 8];
    regions[0b001] = 3_130;
    regions[0b010] = 397;
    regions[0b100] = 1_952;
    regions[0b011] = 28;
    regions[0b101] = 230;
    regions[0b110] = 40;
    regions[0b111] = 7;
    let mut ads = [0usize; 8];
    ads[0b001] = 60;
    ads[0b010] = 7;
    ads[0b100] = 72;
    let blocked = BlockedFixture {
        providers: ["quad9".into(), "cisco".into(), "cloudflare".into()],
        regions,
        ads,
        corpus_size: 1_206_803,
    };
    let ti = TiFixture {
        unanimous_threat: 141,
        split_threat: 94_521,
        unanimous_harmless: 975_338,
        ad_threats: 673,
        no_report: 37_141,
    };

    let dir = tempfile::tempdir().unwrap();
    let mut repo = Repository::open(dir.path()).unwrap();
    blocked.write(&mut repo, "figures").unwrap();
    write_ti(&mut repo, "figures", "ti", ti.results()).unwrap();

    let report = build_report(&repo, "figures", &ad_matcher(), &AnalyzeOptions::default(), "example").unwrap();
    println!("corpus {}", report.corpus_size);
    for p in &report.providers {
        println!(
            "{:<11} blocked {:>5} ({}%)  ad {:>3} ({}% of blocked)",
            p.provider, p.blocked, p.blocked_pct, p.ad_blocked, p.ad_share_pct
        );
    }
    println!("union {} ({}%)", report.blocked_union, report.blocked_union_pct);
    if let Some(v) = &report.venn {
        println!("{}", serde_json::to_string(&v.regions).unwrap());
    }
    let t = &report.ti;
    println!(
        "reports {} / no report {}; threats {} ({}%); ad threats {} ({}%)",
        t.with_report, t.no_report, t.threat_count, t.threat_share_pct, t.ad_threat_count, t.ad_threat_share_pct
    );
    let mass = |x: f64| report.ecdf.iter().find(|p| p.ratio == x).map_or(0, |p| p.count);
    println!("ecdf mass at 0.0: {}, at 1.0: {}", mass(0.0), mass(1.0));
}
