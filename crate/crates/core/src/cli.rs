//! Command-line front end. Exit codes: 0 success, 1 usage or config error,
//! 2 runtime failure. Logs go to stderr as JSON lines; data goes to stdout
//! or files.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::adlists::{ListFormat, SubdomainMatching};
use crate::config::{ConfigError, ListSpec, PipelineConfig};
use crate::ingest;
use crate::mockdns::{self, FarmConfig};
use crate::pipeline::{self, PipelineError};
use crate::repository::Repository;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "admal", version, about = "Ad-malware consensus pipeline over filtered DNS and threat intelligence")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Pipeline config file (JSON)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the campaign id from the config
    #[arg(long, global = true)]
    pub campaign: Option<String>,
    /// Output directory for reports
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the domain corpus from the configured inputs
    Ingest,
    /// Query every corpus domain against the configured resolvers
    DnsScan,
    /// Fetch threat-intelligence reports for the corpus
    TiFetch,
    /// Classify domains against advertising filter lists (JSONL on stdout)
    AdsClassify {
        /// List files; format is detected per line
        #[arg(long, num_args = 1..)]
        lists: Vec<PathBuf>,
        /// Domain file, one per line; defaults to the campaign corpus
        #[arg(long)]
        domains: Option<PathBuf>,
    },
    /// Compute the report from stored data (no network)
    Analyze {
        /// Worker threads; the output does not depend on it
        #[arg(long)]
        workers: Option<usize>,
    },
    /// ingest, dns-scan, ti-fetch, ads-classify and analyze in order
    RunAll,
    /// Serve a mock resolver farm until interrupted
    MockDns {
        /// Farm config: {"providers": [...], "seed": n}
        #[arg(long)]
        farm: PathBuf,
        /// Also write the bound addresses here
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            tracing::error!(error = %e, "cannot start runtime");
            return EXIT_RUNTIME;
        }
    };
    match rt.block_on(run(cli)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            tracing::error!(error = %e, "command failed");
            eprintln!("error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("ADMAL_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn load_config(global: &Global) -> Result<PipelineConfig, PipelineError> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("--config is required".into()))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(c) = &global.campaign {
        cfg.campaign_id = c.clone();
        cfg.validate()?;
    }
    Ok(cfg)
}

fn open_repo(cfg: &PipelineConfig) -> Result<Repository, PipelineError> {
    Ok(Repository::open(&cfg.repository)?)
}

fn print_json(value: &impl Serialize) -> Result<(), PipelineError> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value).map_err(|e| PipelineError::Output(e.into()))?;
    out.write_all(b"\n").map_err(PipelineError::Output)
}

async fn ctrl_c() {
    if tokio::signal::ctrl_c().await.is_err() {
        std::future::pending::<()>().await;
    }
    tracing::warn!("interrupt received, checkpointing");
}

fn out_dir(global: &Global, cfg: &PipelineConfig) -> PathBuf {
    global.out.clone().unwrap_or_else(|| cfg.out.clone())
}

pub async fn run(cli: Cli) -> Result<(), PipelineError> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest => {
            let cfg = load_config(g)?;
            let repo = open_repo(&cfg)?;
            let (_, summary) = pipeline::ingest(&cfg, &repo)?;
            print_json(&summary)
        }
        Command::DnsScan => {
            let cfg = load_config(g)?;
            let mut repo = open_repo(&cfg)?;
            let outcome = pipeline::dns_scan(&cfg, &mut repo, ctrl_c()).await?;
            print_json(&outcome.manifest)
        }
        Command::TiFetch => {
            let cfg = load_config(g)?;
            let mut repo = open_repo(&cfg)?;
            let client = pipeline::ti_client(&cfg)?
                .ok_or_else(|| ConfigError::Invalid("no ti section in config".into()))?;
            let summary = pipeline::ti_fetch(&cfg, &mut repo, &client, ctrl_c()).await?;
            print_json(&summary)
        }
        Command::AdsClassify { lists, domains } => ads_classify(g, &lists, domains.as_deref()),
        Command::Analyze { workers } => {
            let mut cfg = load_config(g)?;
            if let Some(w) = workers {
                cfg.analytics.options.workers = w;
                cfg.validate()?;
            }
            let repo = open_repo(&cfg)?;
            let (_, written) = pipeline::analyze(&cfg, &repo, &out_dir(g, &cfg))?;
            print_json(&written)
        }
        Command::RunAll => run_all(g).await,
        Command::MockDns { farm, manifest } => mock_dns(&farm, manifest.as_deref()).await,
    }
}

fn ads_classify(g: &Global, lists: &[PathBuf], domains: Option<&Path>) -> Result<(), PipelineError> {
    let cfg = match &g.config {
        Some(_) => Some(load_config(g)?),
        None => None,
    };
    let matcher = if lists.is_empty() {
        let cfg = cfg
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("ads-classify needs --lists or --config".into()))?;
        pipeline::build_matcher(cfg)?
    } else {
        let specs: Vec<ListSpec> = lists
            .iter()
            .map(|p| ListSpec {
                path: p.clone(),
                format: ListFormat::Auto,
                name: Some(p.display().to_string()),
            })
            .collect();
        let mode = cfg.as_ref().map(|c| c.subdomain_matching).unwrap_or(SubdomainMatching::Strict);
        pipeline::matcher_from_lists(&specs, mode)?
    };
    let mut stdout = std::io::stdout().lock();
    match (domains, &cfg) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Input {
                path: path.to_path_buf(),
                source,
            })?;
            let (domains, rejects) = ingest::parse_domain_list(&text);
            if !rejects.is_empty() {
                tracing::warn!(rejected = rejects.len(), "invalid domain lines skipped");
            }
            pipeline::ads_classify(&matcher, &domains, &mut stdout)?;
        }
        (None, Some(cfg)) => {
            let mut repo = open_repo(cfg)?;
            let corpus = repo
                .load_corpus(&cfg.campaign_id)?
                .ok_or_else(|| PipelineError::NoCorpus(cfg.campaign_id.clone()))?;
            pipeline::ads_classify(&matcher, &corpus, &mut stdout)?;
            pipeline::store_ad_classifications(cfg, &mut repo, &matcher)?;
        }
        (None, None) => return Err(ConfigError::Invalid("ads-classify needs --domains or --config".into()).into()),
    }
    stdout.flush().map_err(PipelineError::Output)
}

async fn run_all(g: &Global) -> Result<(), PipelineError> {
    let cfg = load_config(g)?;
    let mut repo = open_repo(&cfg)?;
    pipeline::ingest(&cfg, &repo)?;
    let outcome = pipeline::dns_scan(&cfg, &mut repo, ctrl_c()).await?;
    if outcome.interrupted {
        tracing::warn!("dns-scan interrupted; rerun to resume");
        return Ok(());
    }
    if let Some(client) = pipeline::ti_client(&cfg)? {
        let summary = pipeline::ti_fetch(&cfg, &mut repo, &client, ctrl_c()).await?;
        if summary.interrupted {
            tracing::warn!("ti-fetch interrupted; rerun to resume");
            return Ok(());
        }
    }
    let matcher = pipeline::build_matcher(&cfg)?;
    pipeline::store_ad_classifications(&cfg, &mut repo, &matcher)?;
    let (_, written) = pipeline::analyze(&cfg, &repo, &out_dir(g, &cfg))?;
    print_json(&written)
}

async fn mock_dns(farm: &Path, manifest_path: Option<&Path>) -> Result<(), PipelineError> {
    let text = std::fs::read_to_string(farm).map_err(|source| PipelineError::Input {
        path: farm.to_path_buf(),
        source,
    })?;
    let config = FarmConfig::from_json(&text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let mut handle = mockdns::serve(&config)
        .await
        .map_err(|e| PipelineError::Output(std::io::Error::other(e.to_string())))?;
    let manifest = serde_json::to_string(handle.manifest()).expect("manifest serializes");
    if let Some(p) = manifest_path {
        std::fs::write(p, &manifest).map_err(PipelineError::Output)?;
    }
    println!("{manifest}");
    ctrl_c().await;
    handle.stop().await;
    Ok(())
}
