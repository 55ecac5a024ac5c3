//! Durable verdict storage: an append-only JSONL log with a latest-wins view
//! keyed by (campaign, domain, provider).

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adlists::AdClassification;
use crate::dns::ProviderVerdict;
use crate::domain::Domain;
use crate::ti::TiLookupResult;
use crate::timestamp;

const LOG_FILE: &str = "records.jsonl";
const MANIFEST_DIR: &str = "manifests";
const CORPUS_DIR: &str = "corpus";

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("storage error on {path}: {source}")]
    Storage {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid campaign id {0:?} (allowed: letters, digits, '.', '_', '-')")]
    InvalidCampaignId(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RepoError + '_ {
    move |source| RepoError::Storage {
        path: path.to_path_buf(),
        source,
    }
}

pub fn validate_campaign_id(id: &str) -> Result<(), RepoError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
    if ok {
        Ok(())
    } else {
        Err(RepoError::InvalidCampaignId(id.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "lowercase")]
pub enum Payload {
    Dns(ProviderVerdict),
    Ti(TiLookupResult),
    Ad(AdClassification),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Dns(_) => "dns",
            Payload::Ti(_) => "ti",
            Payload::Ad(_) => "ad",
        }
    }
}

/// One stored result. Field order is the canonical JSONL field order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub domain: Domain,
    #[serde(rename = "provider")]
    pub provider_id: String,
    #[serde(rename = "campaign")]
    pub campaign_id: String,
    #[serde(flatten)]
    pub payload: Payload,
    #[serde(rename = "ts", with = "timestamp")]
    pub recorded_at: DateTime<Utc>,
}

impl VerdictRecord {
    pub fn new(campaign_id: &str, provider_id: &str, domain: Domain, payload: Payload) -> Self {
        VerdictRecord {
            domain,
            provider_id: provider_id.to_string(),
            campaign_id: campaign_id.to_string(),
            payload,
            recorded_at: timestamp::now(),
        }
    }

    fn to_line(&self) -> Vec<u8> {
        let mut line = serde_json::to_vec(self).expect("records serialize");
        line.push(b'\n');
        line
    }
}

/// How hard an acknowledged append is pushed towards the disk.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Durability {
    /// fsync after every append or batch.
    #[default]
    Sync,
    /// Hand to the OS only; survives a process kill but not power loss.
    Flush,
}

type CampaignView = BTreeMap<(Domain, String), VerdictRecord>;

#[derive(Debug)]
pub struct Repository {
    dir: PathBuf,
    log_path: PathBuf,
    log: BufWriter<File>,
    durability: Durability,
    view: BTreeMap<String, CampaignView>,
    log_lines: usize,
}

impl Repository {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, RepoError> {
        Self::open_with(dir, Durability::default())
    }

    pub fn open_with(dir: impl AsRef<Path>, durability: Durability) -> Result<Self, RepoError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let log_path = dir.join(LOG_FILE);
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;

        let mut view: BTreeMap<String, CampaignView> = BTreeMap::new();
        let mut log_lines = 0usize;
        let mut good_len = 0u64;
        let mut torn_tail = false;
        {
            let mut reader = BufReader::new(&mut file);
            reader.seek(SeekFrom::Start(0)).map_err(io_err(&log_path))?;
            let mut buf = Vec::new();
            let mut line_no = 0usize;
            loop {
                buf.clear();
                let n = reader.read_until(b'\n', &mut buf).map_err(io_err(&log_path))?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                let complete = buf.last() == Some(&b'\n');
                match serde_json::from_slice::<VerdictRecord>(&buf) {
                    Ok(rec) if complete => {
                        good_len += n as u64;
                        log_lines += 1;
                        insert(&mut view, rec);
                    }
                    // An incomplete final line is the footprint of a write
                    // interrupted by a crash; drop it.
                    _ if !complete => {
                        torn_tail = true;
                        break;
                    }
                    Ok(_) => unreachable!(),
                    Err(e) => {
                        return Err(RepoError::Schema {
                            path: log_path,
                            line: line_no,
                            message: e.to_string(),
                        })
                    }
                }
            }
        }
        if torn_tail {
            tracing::warn!(path = %log_path.display(), "truncating torn trailing record");
            file.set_len(good_len).map_err(io_err(&log_path))?;
            file.sync_all().map_err(io_err(&log_path))?;
        }

        Ok(Repository {
            dir,
            log_path,
            log: BufWriter::new(file),
            durability,
            view,
            log_lines,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn commit(&mut self) -> Result<(), RepoError> {
        self.log.flush().map_err(io_err(&self.log_path))?;
        if self.durability == Durability::Sync {
            self.log.get_ref().sync_data().map_err(io_err(&self.log_path))?;
        }
        Ok(())
    }

    /// Append and acknowledge one record; latest wins on its key.
    pub fn upsert(&mut self, record: VerdictRecord) -> Result<(), RepoError> {
        self.upsert_batch(std::iter::once(record))
    }

    /// Append several records with a single flush/sync.
    pub fn upsert_batch(&mut self, records: impl IntoIterator<Item = VerdictRecord>) -> Result<(), RepoError> {
        let mut pending = Vec::new();
        for rec in records {
            validate_campaign_id(&rec.campaign_id)?;
            self.log.write_all(&rec.to_line()).map_err(io_err(&self.log_path))?;
            pending.push(rec);
        }
        if pending.is_empty() {
            return Ok(());
        }
        self.commit()?;
        self.log_lines += pending.len();
        for rec in pending {
            insert(&mut self.view, rec);
        }
        Ok(())
    }

    pub fn get(&self, campaign_id: &str, domain: &Domain, provider_id: &str) -> Option<&VerdictRecord> {
        self.view
            .get(campaign_id)?
            .get(&(domain.clone(), provider_id.to_string()))
    }

    pub fn contains(&self, campaign_id: &str, domain: &Domain, provider_id: &str) -> bool {
        self.get(campaign_id, domain, provider_id).is_some()
    }

    /// Records of one campaign in (domain, provider) order, optionally
    /// restricted to one provider.
    pub fn query<'a>(
        &'a self,
        campaign_id: &str,
        provider_id: Option<&'a str>,
    ) -> impl Iterator<Item = &'a VerdictRecord> + 'a {
        self.view
            .get(campaign_id)
            .into_iter()
            .flat_map(|v| v.values())
            .filter(move |r| provider_id.is_none_or(|p| r.provider_id == p))
    }

    pub fn campaigns(&self) -> impl Iterator<Item = &str> {
        self.view.keys().map(String::as_str)
    }

    pub fn has_campaign(&self, campaign_id: &str) -> bool {
        self.view.contains_key(campaign_id) || self.manifest_path(campaign_id, "dns").exists()
    }

    /// Number of live records across all campaigns.
    pub fn len(&self) -> usize {
        self.view.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lines in the log, including superseded ones.
    pub fn log_lines(&self) -> usize {
        self.log_lines
    }

    fn sorted(&self) -> Vec<&VerdictRecord> {
        let mut all: Vec<&VerdictRecord> = self.view.values().flat_map(|v| v.values()).collect();
        all.sort_by(|a, b| {
            (a.domain.as_str(), a.provider_id.as_str(), a.campaign_id.as_str()).cmp(&(
                b.domain.as_str(),
                b.provider_id.as_str(),
                b.campaign_id.as_str(),
            ))
        });
        all
    }

    /// Write the current view as JSONL sorted by (domain, provider, campaign).
    pub fn export(&self, path: &Path) -> Result<usize, RepoError> {
        let records = self.sorted();
        write_atomically(path, |w| {
            for rec in &records {
                w.write_all(&rec.to_line())?;
            }
            Ok(())
        })?;
        Ok(records.len())
    }

    /// Append every record of an exported file; returns the count.
    pub fn import(&mut self, path: &Path) -> Result<usize, RepoError> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut records = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: VerdictRecord = serde_json::from_str(&line).map_err(|e| RepoError::Schema {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        let n = records.len();
        self.upsert_batch(records)?;
        Ok(n)
    }

    /// Rewrite the log to hold only the current view.
    pub fn compact(&mut self) -> Result<(), RepoError> {
        self.commit()?;
        let records = self.sorted();
        write_atomically(&self.log_path, |w| {
            for rec in &records {
                w.write_all(&rec.to_line())?;
            }
            Ok(())
        })?;
        let n = records.len();
        let file = OpenOptions::new()
            .append(true)
            .open(&self.log_path)
            .map_err(io_err(&self.log_path))?;
        self.log = BufWriter::new(file);
        self.log_lines = n;
        Ok(())
    }

    /// Compact when more than half of the log is superseded records.
    pub fn maybe_compact(&mut self) -> Result<bool, RepoError> {
        if self.log_lines > 1024 && self.log_lines > 2 * self.len() {
            self.compact()?;
            return Ok(true);
        }
        Ok(false)
    }

    fn manifest_path(&self, campaign_id: &str, kind: &str) -> PathBuf {
        self.dir.join(MANIFEST_DIR).join(format!("{campaign_id}.{kind}.json"))
    }

    pub fn write_manifest<T: Serialize>(&self, campaign_id: &str, kind: &str, value: &T) -> Result<(), RepoError> {
        validate_campaign_id(campaign_id)?;
        let path = self.manifest_path(campaign_id, kind);
        let mut bytes = serde_json::to_vec_pretty(value).expect("manifests serialize");
        bytes.push(b'\n');
        write_atomically(&path, |w| w.write_all(&bytes))
    }

    pub fn read_manifest<T: DeserializeOwned>(&self, campaign_id: &str, kind: &str) -> Result<Option<T>, RepoError> {
        let path = self.manifest_path(campaign_id, kind);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map(Some).map_err(|e| RepoError::Schema {
            path,
            line: e.line(),
            message: e.to_string(),
        })
    }

    fn corpus_path(&self, campaign_id: &str) -> PathBuf {
        self.dir.join(CORPUS_DIR).join(format!("{campaign_id}.txt"))
    }

    pub fn save_corpus(&self, campaign_id: &str, domains: &[Domain]) -> Result<(), RepoError> {
        validate_campaign_id(campaign_id)?;
        let path = self.corpus_path(campaign_id);
        write_atomically(&path, |w| {
            for d in domains {
                w.write_all(d.as_str().as_bytes())?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })
    }

    pub fn load_corpus(&self, campaign_id: &str) -> Result<Option<Vec<Domain>>, RepoError> {
        let path = self.corpus_path(campaign_id);
        if !path.exists() {
            return Ok(None);
        }
        let mut text = String::new();
        File::open(&path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(io_err(&path))?;
        let mut out = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let d = Domain::parse(line).map_err(|e| RepoError::Schema {
                path: path.clone(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            out.push(d);
        }
        Ok(Some(out))
    }
}

fn insert(view: &mut BTreeMap<String, CampaignView>, rec: VerdictRecord) {
    view.entry(rec.campaign_id.clone())
        .or_default()
        .insert((rec.domain.clone(), rec.provider_id.clone()), rec);
}

/// Write through a temporary sibling, fsync, then rename into place.
pub(crate) fn write_atomically(
    path: &Path,
    fill: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), RepoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let file = File::create(&tmp).map_err(io_err(&tmp))?;
    let mut w = BufWriter::new(file);
    fill(&mut w).map_err(io_err(&tmp))?;
    w.flush().map_err(io_err(&tmp))?;
    w.get_ref().sync_all().map_err(io_err(&tmp))?;
    drop(w);
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}
