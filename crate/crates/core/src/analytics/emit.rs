use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnalysisReport, AnalyticsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Plotdata,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "plotdata" => Ok(ReportFormat::Plotdata),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

fn header(report: &AnalysisReport) -> String {
    format!(
        "# campaign={} config_digest={}\n",
        report.provenance.campaign_id, report.provenance.config_digest
    )
}

/// Region label from the provider ids of the sets it belongs to.
fn region_label(sets: &[String; 3], name: &str) -> String {
    let members: &[usize] = match name {
        "a_only" => &[0],
        "b_only" => &[1],
        "c_only" => &[2],
        "ab" => &[0, 1],
        "ac" => &[0, 2],
        "bc" => &[1, 2],
        _ => &[0, 1, 2],
    };
    members.iter().map(|&i| sets[i].as_str()).collect::<Vec<_>>().join("&")
}

pub fn render_json(report: &AnalysisReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn render_venn_csv(report: &AnalysisReport) -> String {
    let mut out = header(report);
    out.push_str("region,count\n");
    if let Some(v) = &report.venn {
        for (name, n) in v.regions.regions() {
            writeln!(out, "{},{n}", region_label(&v.sets, name)).unwrap();
        }
        writeln!(out, "union,{}", v.regions.union).unwrap();
    }
    out
}

pub fn render_shares_csv(report: &AnalysisReport) -> String {
    let mut out = header(report);
    out.push_str("provider,blocked,blocked_pct,ad_count,ad_share_pct\n");
    for p in &report.providers {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.provider, p.blocked, p.blocked_pct, p.ad_blocked, p.ad_share_pct
        )
        .unwrap();
    }
    out
}

pub fn render_ecdf_csv(report: &AnalysisReport) -> String {
    let mut out = header(report);
    out.push_str("ratio,cum_fraction\n");
    for p in &report.ecdf {
        writeln!(out, "{},{}", p.ratio, p.cum_fraction).unwrap();
    }
    out
}

/// Flat `section,key,value` rendering of the whole report.
pub fn render_flat_csv(report: &AnalysisReport) -> String {
    let mut out = header(report);
    out.push_str("section,key,value\n");
    let mut row = |section: &str, key: &str, value: String| {
        writeln!(out, "{section},{key},{value}").unwrap();
    };
    row("corpus", "size", report.corpus_size.to_string());
    row("corpus", "blocked_union", report.blocked_union.to_string());
    row("corpus", "blocked_union_pct", report.blocked_union_pct.to_string());
    for p in &report.providers {
        let sec = format!("provider:{}", p.provider);
        row(&sec, "blocked", p.blocked.to_string());
        row(&sec, "blocked_pct", p.blocked_pct.to_string());
        row(&sec, "inconclusive", p.inconclusive.to_string());
        row(&sec, "ad_blocked", p.ad_blocked.to_string());
        row(&sec, "ad_share_pct", p.ad_share_pct.to_string());
    }
    if let Some(v) = &report.venn {
        for (name, n) in v.regions.regions() {
            row("venn", &region_label(&v.sets, name), n.to_string());
        }
        row("venn", "union", v.regions.union.to_string());
        row("venn", "union_pct", v.union_pct.to_string());
    }
    let ti = &report.ti;
    row("ti", "with_report", ti.with_report.to_string());
    row("ti", "no_report", ti.no_report.to_string());
    row("ti", "threat_count", ti.threat_count.to_string());
    row("ti", "threat_share_base", ti.threat_share_base.to_string());
    row("ti", "threat_share_pct", ti.threat_share_pct.to_string());
    row("ti", "threat_share_pct_with_report", ti.threat_share_pct_with_report.to_string());
    row("ti", "threat_share_pct_looked", ti.threat_share_pct_looked.to_string());
    row("ti", "ad_threat_count", ti.ad_threat_count.to_string());
    row("ti", "ad_threat_share_pct", ti.ad_threat_share_pct.to_string());
    row("ti", "unanimous_threat", ti.unanimous_threat.to_string());
    row("ti", "unanimous_harmless", ti.unanimous_harmless.to_string());
    for p in &report.ecdf {
        row("ecdf", &p.ratio.to_string(), p.cum_fraction.to_string());
    }
    out
}

/// Write the report in `format` under `dir` and return the files written.
pub fn emit_report(report: &AnalysisReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>, AnalyticsError> {
    let files: Vec<(&str, String)> = match format {
        ReportFormat::Json => vec![("report.json", render_json(report))],
        ReportFormat::Csv => vec![("report.csv", render_flat_csv(report))],
        ReportFormat::Plotdata => vec![
            ("venn.csv", render_venn_csv(report)),
            ("shares.csv", render_shares_csv(report)),
            ("ecdf.csv", render_ecdf_csv(report)),
        ],
    };
    fs::create_dir_all(dir).map_err(|source| AnalyticsError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        crate::repository::write_atomically(&path, |w| w.write_all(body.as_bytes()))?;
        written.push(path);
    }
    Ok(written)
}
