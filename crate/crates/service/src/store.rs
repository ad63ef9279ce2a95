//! Directory-per-entity file store.
//!
//! ```text
//! <data>/catalog/...                       variable layers (see `Catalog`)
//! <data>/collections/<id>/sites.csv
//! <data>/analyses/<id>/record.json         status, request, timestamps
//! <data>/analyses/<id>/result.json ...     outputs, present once done
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sitebias_core::collections::{parse_sites_csv, Collection};
use sitebias_core::grid::GridConfig;
use sitebias_core::ingest::Catalog;
use sitebias_core::pipeline::{to_json, AnalysisRequest};
use sitebias_core::{Error, Result, SCHEMA_VERSION};

const SITES_FILE: &str = "sites.csv";
const RECORD_FILE: &str = "record.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl AnalysisStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisStatus::Pending => "pending",
            AnalysisStatus::Running => "running",
            AnalysisStatus::Done => "done",
            AnalysisStatus::Failed => "failed",
        }
    }
}

/// Persisted state of one analysis. The result document lives beside it in
/// `result.json` and is attached when the record is served.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub schema_version: u32,
    pub analysis_id: String,
    pub status: AnalysisStatus,
    pub request: AnalysisRequest,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AnalysisRecord {
    pub fn new(analysis_id: String, request: AnalysisRequest) -> Self {
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            schema_version: SCHEMA_VERSION,
            analysis_id,
            status: AnalysisStatus::Pending,
            request,
            created_at,
            error: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
    catalog: Catalog,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>, grid: GridConfig) -> Result<Self> {
        let root = root.into();
        for dir in ["collections", "analyses"] {
            let path = root.join(dir);
            fs::create_dir_all(&path).map_err(|e| io_error(&path, e))?;
        }
        let catalog = Catalog::open_or_create(root.join("catalog"), grid)?;
        Ok(Self { root, catalog })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    fn collection_dir(&self, id: &str) -> PathBuf {
        self.root.join("collections").join(id)
    }

    pub fn analysis_dir(&self, id: &str) -> PathBuf {
        self.root.join("analyses").join(id)
    }

    pub fn has_collection(&self, id: &str) -> bool {
        self.collection_dir(id).join(SITES_FILE).is_file()
    }

    /// Persists a parsed collection; an existing id is a conflict.
    pub fn put_collection(&self, collection: &Collection) -> Result<()> {
        let id = &collection.collection_id;
        let dir = self.collection_dir(id);
        match fs::create_dir(&dir) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(Error::Conflict {
                    what: "collection",
                    id: id.clone(),
                })
            }
            Err(e) => return Err(io_error(&dir, e)),
        }
        let mut buf = Vec::new();
        collection.write_csv(&mut buf)?;
        write_atomic(&dir.join(SITES_FILE), &buf)
    }

    pub fn load_collection(&self, id: &str) -> Result<Collection> {
        let path = self.collection_dir(id).join(SITES_FILE);
        let file = match fs::File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(Error::NotFound {
                    what: "collection",
                    id: id.to_string(),
                })
            }
            Err(e) => return Err(io_error(&path, e)),
        };
        parse_sites_csv(io::BufReader::new(file), id)
    }

    pub fn list_collections(&self) -> Result<Vec<String>> {
        let mut ids = self.subdirs("collections")?;
        ids.retain(|id| self.has_collection(id));
        Ok(ids)
    }

    pub fn put_record(&self, record: &AnalysisRecord) -> Result<()> {
        let dir = self.analysis_dir(&record.analysis_id);
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        write_atomic(&dir.join(RECORD_FILE), to_json(record)?.as_bytes())
    }

    pub fn get_record(&self, id: &str) -> Result<Option<AnalysisRecord>> {
        let path = self.analysis_dir(id).join(RECORD_FILE);
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_error(&path, e)),
        }
    }

    pub fn list_records(&self) -> Result<Vec<AnalysisRecord>> {
        let mut out = Vec::new();
        for id in self.subdirs("analyses")? {
            if let Some(r) = self.get_record(&id)? {
                out.push(r);
            }
        }
        Ok(out)
    }

    fn subdirs(&self, under: &str) -> Result<Vec<String>> {
        let dir = self.root.join(under);
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| io_error(&dir, e))? {
            let entry = entry.map_err(|e| io_error(&dir, e))?;
            if entry.path().is_dir() {
                if let Some(name) = entry.file_name().to_str() {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

fn io_error(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write-then-rename so readers never observe a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}
