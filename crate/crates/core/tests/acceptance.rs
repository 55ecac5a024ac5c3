//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any failed.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::net::{Ipv4Addr, Ipv6Addr, SocketAddr};
use std::path::Path;
use std::time::{Duration, Instant};

use admal::adlists::{compile, FilterEntry};
use admal::analytics::{
    blocked_sets, build_report, ecdf, emit_report, percent, venn3, AnalyzeOptions, PercentMode,
    ReportFormat,
};
use admal::dns::wire::{build_response, Answer, RData};
use admal::dns::{
    build_query, classify, parse_response, run_campaign, BlockSignature, CampaignLimits, QueryType, ResolverProfile,
    SignatureKind, Transport, Verdict,
};
use admal::fixtures::{ad_matcher, write_ti, BlockedFixture, TiFixture};
use admal::mockdns::{self, BlockBehavior, FarmConfig, MockProviderSpec};
use admal::repository::Repository;
use admal::Domain;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Reference counts.
const CORPUS: usize = 1_206_803;
const QUAD9: usize = 3_395;
const CISCO: usize = 472;
const CLOUDFLARE: usize = 2_229;
const Q9_CF: usize = 230;
const Q9_CISCO: usize = 28;
const ALL_THREE: usize = 7;
const UNION: usize = 5_784;
const CF_ADS: usize = 72;
const CISCO_ADS: usize = 7;
const TI_REPORTS: usize = 1_070_000;
const TI_THREATS: usize = 94_662;
const TI_UNANIMOUS_THREAT: usize = 141;
const TI_UNANIMOUS_HARMLESS: usize = 975_338;
const TI_AD_THREATS: usize = 673;
const TI_NO_REPORT: usize = 37_141;

// Pinned tolerances.
const OVERLAP_RUNTIME: Duration = Duration::from_secs(10);
const SHARE_TOLERANCE_PP: f64 = 0.01;
const VENN_RUNTIME: Duration = Duration::from_secs(5);
const CAMPAIGN_RUNTIME: Duration = Duration::from_secs(60);
const FUZZ_CASES: usize = 10_000;
const MATCHER_CASES: usize = 10_000;

const CAMPAIGN: &str = "fixture";

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn run(n: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
        .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>().map(String::as_str).or(p.downcast_ref::<&str>().copied()))));
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(detail) => println!("criterion {n} [{name}]: PASS ({secs:.2}s) {detail}"),
        Err(why) => println!("criterion {n} [{name}]: FAIL ({secs:.2}s) {why}"),
    }
    result.is_ok()
}

/// Exclusive Cisco∩Cloudflare region implied by the reference totals:
/// union = |Q9| + |Cisco| + |CF| - (pairwise intersections) + triple, where
/// each pairwise intersection is its exclusive region plus the triple.
fn cisco_cf_exclusive() -> usize {
    let sum_totals = QUAD9 + CISCO + CLOUDFLARE;
    // union = sum_totals - (Σ exclusive pairs + 3·triple) + triple
    sum_totals - UNION - Q9_CF - Q9_CISCO - 2 * ALL_THREE
}

fn reference_fixture() -> BlockedFixture {
    let cisco_cf = cisco_cf_exclusive();
    // Provider order: quad9 = bit 0, cisco = bit 1, cloudflare = bit 2.
    let mut regions = [0usize; 8];
    regions[0b011] = Q9_CISCO;
    regions[0b101] = Q9_CF;
    regions[0b110] = cisco_cf;
    regions[0b111] = ALL_THREE;
    regions[0b001] = QUAD9 - Q9_CISCO - Q9_CF - ALL_THREE;
    regions[0b010] = CISCO - Q9_CISCO - cisco_cf - ALL_THREE;
    regions[0b100] = CLOUDFLARE - Q9_CF - cisco_cf - ALL_THREE;
    let mut ads = [0usize; 8];
    ads[0b100] = CF_ADS;
    ads[0b010] = CISCO_ADS;
    // Not given; any count keeps the other two shares unaffected.
    ads[0b001] = 60;
    BlockedFixture {
        providers: ["quad9".into(), "cisco".into(), "cloudflare".into()],
        regions,
        ads,
        corpus_size: CORPUS,
    }
}

fn criterion_1(repo: &mut Repository, out: &Path) -> Outcome {
    let start = Instant::now();
    let fx = reference_fixture();
    ensure!(cisco_cf_exclusive() == 40, "derived Cisco∩Cloudflare region is {}", cisco_cf_exclusive());
    fx.write(repo, CAMPAIGN).map_err(|e| e.to_string())?;
    let sets = blocked_sets(repo, CAMPAIGN).map_err(|e| e.to_string())?;
    ensure!(sets.get("quad9").len() == QUAD9, "quad9 blocked {}", sets.get("quad9").len());
    ensure!(sets.get("cisco").len() == CISCO, "cisco blocked {}", sets.get("cisco").len());
    ensure!(sets.get("cloudflare").len() == CLOUDFLARE, "cloudflare blocked {}", sets.get("cloudflare").len());
    let report = build_report(repo, CAMPAIGN, &ad_matcher(), &AnalyzeOptions::default(), "acceptance")
        .map_err(|e| e.to_string())?;
    emit_report(&report, ReportFormat::Json, out).map_err(|e| e.to_string())?;
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let venn = &json["venn"];
    ensure!(venn["sets"] == serde_json::json!(["quad9", "cisco", "cloudflare"]), "venn sets {}", venn["sets"]);
    let expect = [("abc", ALL_THREE), ("ac", Q9_CF), ("ab", Q9_CISCO), ("bc", 40), ("union", UNION)];
    for (k, v) in expect {
        ensure!(venn[k] == v, "venn.{k} = {} (want {v})", venn[k]);
    }
    ensure!(json["corpus_size"] == CORPUS, "corpus {}", json["corpus_size"]);
    let pct: Vec<String> = report.providers.iter().map(|p| p.blocked_pct.to_string()).collect();
    ensure!(pct == ["0.28", "0.03", "0.18"], "provider percentages {pct:?}");
    let union_pct = report.venn.as_ref().unwrap().union_pct.to_string();
    ensure!(union_pct == "0.47", "union pct {union_pct}");
    let elapsed = start.elapsed();
    ensure!(elapsed < OVERLAP_RUNTIME, "took {elapsed:?}");
    Ok(format!(
        "union={} pct={}/{}/{}/{} abc={}",
        report.blocked_union, pct[0], pct[1], pct[2], union_pct, venn["abc"]
    ))
}

fn criterion_2(repo: &Repository) -> Outcome {
    let report = build_report(repo, CAMPAIGN, &ad_matcher(), &AnalyzeOptions::default(), "acceptance")
        .map_err(|e| e.to_string())?;
    let by: BTreeMap<&str, _> = report.providers.iter().map(|p| (p.provider.as_str(), p)).collect();
    let (cf, cisco) = (by["cloudflare"], by["cisco"]);
    ensure!(cf.ad_blocked == CF_ADS as u64, "cloudflare ad count {}", cf.ad_blocked);
    ensure!(cisco.ad_blocked == CISCO_ADS as u64, "cisco ad count {}", cisco.ad_blocked);
    for (got, want) in [(cf.ad_share_pct.as_f64(), 3.23), (cisco.ad_share_pct.as_f64(), 1.48)] {
        ensure!((got - want).abs() <= SHARE_TOLERANCE_PP + 1e-9, "share {got} vs {want}");
    }
    // Independent check of the shares with plain float arithmetic.
    let oracle = |c: usize, b: usize| (c as f64 / b as f64 * 10_000.0).floor() / 100.0;
    ensure!(oracle(CF_ADS, CLOUDFLARE) == 3.23 && oracle(CISCO_ADS, CISCO) == 1.48, "float oracle disagrees");
    Ok(format!(
        "cloudflare {}/{} = {}%, cisco {}/{} = {}%",
        cf.ad_blocked, cf.blocked, cf.ad_share_pct, cisco.ad_blocked, cisco.blocked, cisco.ad_share_pct
    ))
}

fn criterion_3(repo: &mut Repository) -> Outcome {
    let fx = TiFixture {
        unanimous_threat: TI_UNANIMOUS_THREAT,
        split_threat: TI_THREATS - TI_UNANIMOUS_THREAT,
        unanimous_harmless: TI_UNANIMOUS_HARMLESS,
        ad_threats: TI_AD_THREATS,
        no_report: TI_NO_REPORT,
    };
    ensure!(fx.reports() == TI_REPORTS, "fixture has {} reports", fx.reports());
    write_ti(repo, CAMPAIGN, "vt", fx.results()).map_err(|e| e.to_string())?;
    let report = build_report(repo, CAMPAIGN, &ad_matcher(), &AnalyzeOptions::default(), "acceptance")
        .map_err(|e| e.to_string())?;
    let ti = &report.ti;
    ensure!(ti.with_report == TI_REPORTS as u64, "with_report {}", ti.with_report);
    ensure!(ti.no_report == TI_NO_REPORT as u64, "no_report {}", ti.no_report);
    ensure!(ti.threat_count == TI_THREATS as u64, "threats {}", ti.threat_count);
    ensure!(ti.threat_share_pct.to_string() == "8.8", "threat share {}", ti.threat_share_pct);
    ensure!(ti.ad_threat_count == TI_AD_THREATS as u64, "ad threats {}", ti.ad_threat_count);
    let ad = ti.ad_threat_share_pct.as_f64();
    ensure!((ad - 0.71).abs() <= SHARE_TOLERANCE_PP + 1e-9, "ad threat share {ad}");
    let first = report.ecdf.first().ok_or("empty ecdf")?;
    let last = report.ecdf.last().unwrap();
    ensure!(first.ratio == 0.0 && first.count == TI_UNANIMOUS_HARMLESS as u64, "mass at 0: {first:?}");
    ensure!(last.ratio == 1.0 && last.count == TI_UNANIMOUS_THREAT as u64, "mass at 1: {last:?}");
    ensure!(last.cum_fraction == 1.0, "ecdf ends at {}", last.cum_fraction);
    ensure!(TI_REPORTS - TI_THREATS == TI_UNANIMOUS_HARMLESS, "reference counts disagree");
    Ok(format!(
        "threat share {}% of {}, ad-threat {}% ({}), ecdf mass 0.0={} 1.0={}, no-report {}",
        ti.threat_share_pct, ti.threat_share_base, ti.ad_threat_share_pct, ti.ad_threat_count, first.count, last.count, ti.no_report
    ))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1_000 {
        let universe = rng.gen_range(1..=1_500u32);
        let mut set = || -> BTreeSet<u32> {
            let n = rng.gen_range(0..=1_000usize.min(universe as usize));
            (0..n).map(|_| rng.gen_range(0..universe)).collect()
        };
        let (a, b, c) = (set(), set(), set());
        let v = venn3(&a, &b, &c);
        // Brute force: membership mask of every element of the universe.
        let mut regions = [0usize; 8];
        for x in 0..universe {
            let m = a.contains(&x) as usize | (b.contains(&x) as usize) << 1 | (c.contains(&x) as usize) << 2;
            regions[m] += 1;
        }
        let got = [v.a_only, v.b_only, v.ab, v.c_only, v.ac, v.bc, v.abc];
        let want = [regions[1], regions[2], regions[3], regions[4], regions[5], regions[6], regions[7]];
        ensure!(got == want, "case {case}: regions {got:?} vs {want:?}");
        let union: HashSet<&u32> = a.iter().chain(&b).chain(&c).collect();
        ensure!(v.union == union.len(), "case {case}: union {} vs {}", v.union, union.len());
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < VENN_RUNTIME, "took {elapsed:?}");
    Ok("1000 random triples match brute force".into())
}

fn mock_domain(i: usize) -> Domain {
    Domain::parse(&format!("site{i}.corpus.test")).unwrap()
}

struct Farm {
    /// Keeps the servers running.
    _handle: mockdns::FarmHandle,
    profiles: Vec<ResolverProfile>,
    blocklists: BTreeMap<String, BTreeSet<Domain>>,
}

async fn start_farm(n: usize) -> Farm {
    let sinkhole = Ipv4Addr::new(146, 112, 61, 104);
    let mut specs = vec![
        MockProviderSpec::new("alpha", BlockBehavior::SinkholeA { ip: Ipv4Addr::UNSPECIFIED.into() }),
        MockProviderSpec::new("beta", BlockBehavior::Nxdomain),
        MockProviderSpec::new("gamma", BlockBehavior::SinkholeA { ip: sinkhole.into() }),
        MockProviderSpec::new("control", BlockBehavior::Nxdomain),
    ];
    // alpha: every 7th; beta: every 11th (overlaps alpha on multiples of 77);
    // gamma: 5 mod 13, a few also in alpha or beta.
    for i in 0..n {
        let d = mock_domain(i);
        if i % 7 == 0 {
            specs[0].blocklist.insert(d.clone());
        }
        if i % 11 == 0 {
            specs[1].blocklist.insert(d.clone());
        }
        if i % 13 == 5 {
            specs[2].blocklist.insert(d);
        }
    }
    let blocklists = specs[..3].iter().map(|s| (s.name.clone(), s.blocklist.clone())).collect();
    let handle = mockdns::serve(&FarmConfig { providers: specs, seed: 7 }).await.unwrap();
    let control = Some(handle.addr(3));
    let profile = |i: usize, sig: BlockSignature| ResolverProfile {
        provider_id: handle.manifest().providers[i].name.clone(),
        display_name: handle.manifest().providers[i].name.clone(),
        filtered_address: handle.addr(i),
        control_address: control,
        transport: Transport::UdpWithTcpFallback,
        blocked_signatures: vec![sig],
        timeout_ms: 1000,
        retries: 2,
    };
    let profiles = vec![
        profile(0, BlockSignature::sinkhole_a([Ipv4Addr::UNSPECIFIED])),
        profile(1, BlockSignature::of_kind(SignatureKind::Nxdomain)),
        profile(2, BlockSignature::sinkhole_a([sinkhole])),
    ];
    Farm {
        _handle: handle,
        profiles,
        blocklists,
    }
}

fn limits() -> CampaignLimits {
    CampaignLimits {
        max_inflight: 64,
        qps: 0.0,
        query_type: QueryType::A,
        edns: true,
    }
}

/// Exported repository with volatile timestamps removed.
fn normalized_export(repo: &Repository, path: &Path) -> Vec<serde_json::Value> {
    repo.export(path).unwrap();
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("ts");
            v["payload"].as_object_mut().unwrap().remove("queried_at");
            v
        })
        .collect()
}

fn count_lines(path: &Path) -> usize {
    std::fs::read(path).map(|b| b.iter().filter(|&&c| c == b'\n').count()).unwrap_or(0)
}

fn criterion_5(tmp: &Path) -> Outcome {
    const N: usize = 10_000;
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let start = Instant::now();
        let farm = start_farm(N).await;
        let domains: Vec<Domain> = (0..N).map(mock_domain).collect();

        let clean_dir = tmp.join("clean");
        let mut clean = Repository::open(&clean_dir).unwrap();
        let outcome = run_campaign(&mut clean, "mock", &domains, &farm.profiles, &limits(), std::future::pending())
            .await
            .map_err(|e| e.to_string())?;
        let clean_time = start.elapsed();
        ensure!(outcome.written == 3 * N, "clean run wrote {}", outcome.written);
        ensure!(clean_time < CAMPAIGN_RUNTIME, "clean run took {clean_time:?}");
        let sets = blocked_sets(&clean, "mock").map_err(|e| e.to_string())?;
        for (name, want) in &farm.blocklists {
            ensure!(sets.get(name) == want, "{name}: blocked {} vs configured {}", sets.get(name).len(), want.len());
        }
        let inconclusive: usize = sets.inconclusive.values().sum();
        ensure!(inconclusive == 0, "{inconclusive} inconclusive verdicts");

        // Kill mid-campaign: abort the task once some batches hit the log.
        let killed_dir = tmp.join("killed");
        let task = {
            let (dir, domains, profiles) = (killed_dir.clone(), domains.clone(), farm.profiles.clone());
            tokio::spawn(async move {
                let mut repo = Repository::open(&dir).unwrap();
                run_campaign(&mut repo, "mock", &domains, &profiles, &limits(), std::future::pending()).await
            })
        };
        let log = killed_dir.join("records.jsonl");
        while count_lines(&log) < 3 * N / 4 && !task.is_finished() {
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
        task.abort();
        let _ = task.await;
        let partial = count_lines(&log);
        ensure!(partial > 0 && partial < 3 * N, "kill landed after {partial} records");

        let mut resumed = Repository::open(&killed_dir).unwrap();
        let second = run_campaign(&mut resumed, "mock", &domains, &farm.profiles, &limits(), std::future::pending())
            .await
            .map_err(|e| e.to_string())?;
        ensure!(second.skipped == partial, "resume skipped {} of {partial}", second.skipped);
        ensure!(resumed.len() == 3 * N, "resumed repository holds {}", resumed.len());
        let a = normalized_export(&clean, &tmp.join("clean.jsonl"));
        let b = normalized_export(&resumed, &tmp.join("resumed.jsonl"));
        ensure!(a == b, "resumed repository differs from the clean run");
        Ok(format!(
            "{} verdicts, clean run {:.2}s, killed after {partial}, resumed identical",
            a.len(),
            clean_time.as_secs_f64()
        ))
    })
}

fn fuzz_profiles() -> Vec<ResolverProfile> {
    let mut ps = ResolverProfile::defaults();
    ps.push(ResolverProfile {
        provider_id: "refuse".into(),
        display_name: "refuse".into(),
        filtered_address: SocketAddr::from(([127, 0, 0, 1], 53)),
        control_address: None,
        transport: Transport::Tcp,
        blocked_signatures: vec![
            BlockSignature::of_kind(SignatureKind::Refused),
            BlockSignature::of_kind(SignatureKind::ZeroAnswerNoError),
            BlockSignature::sinkhole_aaaa([Ipv6Addr::UNSPECIFIED]),
        ],
        timeout_ms: 1,
        retries: 0,
    });
    ps
}

fn valid_message(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let d = Domain::parse(&format!("h{}.example.com", rng.gen_range(0..50))).unwrap();
    let q = parse_response(&build_query(&d, QueryType::A, rng.gen(), rng.gen())).unwrap();
    let pool = [
        RData::A(Ipv4Addr::UNSPECIFIED),
        RData::A(Ipv4Addr::new(146, 112, 61, 105)),
        RData::A(Ipv4Addr::new(203, 0, 113, 9)),
        RData::Aaaa(Ipv6Addr::UNSPECIFIED),
        RData::Cname("alias.example.net".into()),
    ];
    let answers: Vec<Answer> = (0..rng.gen_range(0..4))
        .map(|_| Answer {
            ttl: rng.gen(),
            rdata: pool.choose(rng).unwrap().clone(),
        })
        .collect();
    build_response(&q, *[0u8, 0, 2, 3, 5].choose(rng).unwrap(), &answers)
}

fn mutate(rng: &mut ChaCha8Rng, mut msg: Vec<u8>) -> Vec<u8> {
    for _ in 0..rng.gen_range(1..5) {
        match rng.gen_range(0..4) {
            0 if !msg.is_empty() => {
                let i = rng.gen_range(0..msg.len());
                msg[i] ^= 1 << rng.gen_range(0..8);
            }
            1 if !msg.is_empty() => {
                let i = rng.gen_range(0..msg.len());
                msg[i] = rng.gen();
            }
            2 => msg.truncate(rng.gen_range(0..=msg.len())),
            _ => {
                let i = rng.gen_range(0..=msg.len());
                msg.insert(i, rng.gen());
            }
        }
    }
    msg
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let profiles = fuzz_profiles();
    let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
    let mut parsed_ok = Vec::new();
    for case in 0..2 * FUZZ_CASES {
        let bytes = if case < FUZZ_CASES {
            let n = rng.gen_range(0..600);
            (0..n).map(|_| rng.gen()).collect()
        } else {
            let v = valid_message(&mut rng);
            mutate(&mut rng, v)
        };
        let outcome = std::panic::catch_unwind(|| parse_response(&bytes));
        let Ok(parsed) = outcome else {
            return Err(format!("parse_response panicked on {bytes:02x?}"));
        };
        let resp = match parsed {
            Err(_) => {
                *tally.entry("malformed").or_default() += 1;
                continue;
            }
            Ok(r) => r,
        };
        parsed_ok.push(resp);
    }
    // Untouched valid messages too, so every verdict kind is exercised.
    for _ in 0..FUZZ_CASES {
        parsed_ok.push(parse_response(&valid_message(&mut rng)).unwrap());
    }
    for (i, resp) in parsed_ok.iter().enumerate() {
        let control = if i % 3 == 0 { None } else { parsed_ok.choose(&mut rng) };
        for p in &profiles {
            let v = std::panic::catch_unwind(|| classify(resp, control, p))
                .map_err(|_| format!("classify panicked on {resp:?}"))?;
            let key = match &v {
                Verdict::Blocked { signature } => {
                    ensure!(p.blocked_signatures.contains(signature), "blocked with foreign signature {signature:?}");
                    ensure!(signature.matches(resp), "named signature does not match");
                    "blocked"
                }
                Verdict::NotBlocked => "not_blocked",
                Verdict::Inconclusive { reason } => {
                    ensure!(!reason.is_empty(), "empty inconclusive reason");
                    "inconclusive"
                }
            };
            *tally.entry(key).or_default() += 1;
            ensure!(classify(resp, control, p) == v, "classify is not deterministic");
        }
    }
    for k in ["malformed", "blocked", "not_blocked", "inconclusive"] {
        ensure!(tally.get(k).copied().unwrap_or(0) > 0, "no {k} outcomes: {tally:?}");
    }
    Ok(format!("{} fuzzed messages, outcomes {tally:?}", 2 * FUZZ_CASES))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let labels = ["ads", "notads", "a", "b", "x-y", "example", "com", "net"];
    let random_domain = |rng: &mut ChaCha8Rng| {
        let n = rng.gen_range(1..=4);
        let s: Vec<&str> = (0..n).map(|_| *labels.choose(rng).unwrap()).collect();
        Domain::parse(&s.join(".")).unwrap()
    };
    let mut positives = 0;
    for case in 0..MATCHER_CASES {
        let entries: Vec<FilterEntry> = (0..rng.gen_range(0..12))
            .map(|i| FilterEntry {
                pattern: random_domain(&mut rng),
                match_subdomains: rng.gen(),
                source_list: "l".into(),
                line_no: i + 1,
            })
            .collect();
        let matcher = compile(&entries);
        let d = random_domain(&mut rng);
        let naive = entries.iter().any(|e| {
            d.as_str() == e.pattern.as_str()
                || (e.match_subdomains && d.as_str().ends_with(&format!(".{}", e.pattern.as_str())))
        });
        ensure!(matcher.is_ad(&d) == naive, "case {case}: {d} vs {entries:?}");
        positives += naive as usize;
    }
    let alignment = [
        ("notads.example.com", "ads.example.com"),
        ("xads.example.com", "ads.example.com"),
        ("ads.example.com.evil", "ads.example.com"),
        ("example.com", "ads.example.com"),
        ("badoubleclick.net", "doubleclick.net"),
    ];
    for (dom, pat) in alignment {
        let m = compile(&[FilterEntry {
            pattern: Domain::parse(pat).unwrap(),
            match_subdomains: true,
            source_list: "l".into(),
            line_no: 1,
        }]);
        ensure!(!m.is_ad(&Domain::parse(dom).unwrap()), "{dom} matched {pat}");
    }
    Ok(format!("{MATCHER_CASES} cases ({positives} positive), alignment cases negative"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..2_000 {
        let n = rng.gen_range(1..300);
        let grid = rng.gen_range(1..20u32);
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    rng.gen_range(0..=grid) as f64 / grid as f64
                } else {
                    rng.gen::<f64>()
                }
            })
            .collect();
        let pts = ecdf(&xs).map_err(|e| e.to_string())?;
        ensure!(pts.windows(2).all(|w| w[0].ratio < w[1].ratio), "case {case}: x not strictly increasing");
        ensure!(pts.windows(2).all(|w| w[0].cum_fraction <= w[1].cum_fraction), "case {case}: F decreases");
        ensure!(pts.last().unwrap().cum_fraction == 1.0, "case {case}: F ends below 1");
        ensure!(pts.iter().all(|p| (0.0..=1.0).contains(&p.ratio)), "case {case}: x outside [0,1]");
        // Oracle: distinct sorted values and the share of inputs at or below each.
        let mut sorted = xs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted.dedup();
        ensure!(sorted.len() == pts.len(), "case {case}: {} steps vs {}", pts.len(), sorted.len());
        for (p, x) in pts.iter().zip(&sorted) {
            let below = xs.iter().filter(|v| *v <= x).count();
            ensure!(p.ratio == *x && p.cum_count == below as u64, "case {case}: step at {x}");
            ensure!((p.cum_fraction - below as f64 / n as f64).abs() < 1e-12, "case {case}: F({x})");
        }
    }
    ensure!(ecdf(&[]).is_err(), "empty input accepted");
    let two_step = ecdf(&[0.0, 0.0, 1.0]).unwrap();
    ensure!(
        two_step.len() == 2 && (two_step[0].cum_fraction - 2.0 / 3.0).abs() < 1e-12,
        "[0,0,1] gives {two_step:?}"
    );
    Ok("2000 random inputs match sort-and-count".into())
}

fn digests(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        out.insert(e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap());
    }
    out
}

fn criterion_9(repo: &Repository, tmp: &Path) -> Outcome {
    let matcher = ad_matcher();
    let mut reference: Option<BTreeMap<String, Vec<u8>>> = None;
    let mut runs = 0;
    for workers in [1usize, 2, 3, 8] {
        for rep in 0..2 {
            let opts = AnalyzeOptions {
                workers,
                ..AnalyzeOptions::default()
            };
            let report = build_report(repo, CAMPAIGN, &matcher, &opts, "acceptance").map_err(|e| e.to_string())?;
            let dir = tmp.join(format!("w{workers}-{rep}"));
            for f in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Plotdata] {
                emit_report(&report, f, &dir).map_err(|e| e.to_string())?;
            }
            let files = digests(&dir);
            match &reference {
                None => reference = Some(files),
                Some(r) => ensure!(*r == files, "workers={workers} run {rep} differs"),
            }
            runs += 1;
        }
    }
    let files = reference.unwrap();
    ensure!(files.len() == 5, "emitted {:?}", files.keys());
    let ecdf_csv = String::from_utf8(files["ecdf.csv"].clone()).unwrap();
    let xs: Vec<f64> = ecdf_csv.lines().skip(2).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    ensure!(xs.windows(2).all(|w| w[0] < w[1]), "ecdf.csv rows not increasing");
    Ok(format!("{runs} runs over workers 1/2/3/8, {} files byte-identical", files.len()))
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut repo = Repository::open(tmp.path().join("repo")).unwrap();
    let sanity = percent(QUAD9 as u64, CORPUS as u64, PercentMode::Truncate2).unwrap();
    assert_eq!(sanity.to_string(), "0.28");

    let results = [
        run(1, "blocking-overlap", || criterion_1(&mut repo, &tmp.path().join("overlap"))),
        run(2, "ad-share", || criterion_2(&repo)),
        run(3, "threat-intel", || criterion_3(&mut repo)),
        run(4, "venn-oracle", criterion_4),
        run(5, "mock-campaign", || criterion_5(&tmp.path().join("mock"))),
        run(6, "classification-totality", criterion_6),
        run(7, "matcher-oracle", criterion_7),
        run(8, "ecdf-validity", criterion_8),
        run(9, "determinism", || criterion_9(&repo, &tmp.path().join("det"))),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
