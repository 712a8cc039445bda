//! Durable control-plane mappings.
//!
//! Every named map is persisted as one value under its map name. A mutation
//! is applied to a copy, written through to the backend and only then made
//! visible, so an acknowledged change always survives a restart.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::appmodel::ApplicationDag;
use crate::registry::{ResourceId, ResourceRecord};

pub const RESOURCE_MAPPING: &str = "resource_mapping";
pub const CANDIDATE_RESOURCE: &str = "candidate_resource";
pub const BUCKET_MAP: &str = "bucket_map";
pub const APPLICATION_BUCKET: &str = "application_bucket";
pub const DAG_STORE: &str = "dag_store";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("mapping store I/O failure: {0}")]
    Io(String),
    #[error("mapping `{name}` is corrupt: {reason}")]
    CorruptStore { name: String, reason: String },
}

/// Key-value persistence for named maps.
pub trait KvBackend: Send + Sync {
    fn get(&self, name: &str) -> Result<Option<String>, StoreError>;
    fn put(&self, name: &str, content: &str) -> Result<(), StoreError>;
}

/// In-process backend. Clones share contents, which lets tests simulate a
/// restart by opening a second `Mappings` on the same backend.
#[derive(Debug, Clone, Default)]
pub struct MemoryKv {
    inner: Arc<Mutex<BTreeMap<String, String>>>,
}

impl MemoryKv {
    pub fn raw(&self) -> BTreeMap<String, String> {
        self.inner.lock().clone()
    }

    pub fn set_raw(&self, name: &str, content: &str) {
        self.inner.lock().insert(name.to_string(), content.to_string());
    }
}

impl KvBackend for MemoryKv {
    fn get(&self, name: &str) -> Result<Option<String>, StoreError> {
        Ok(self.inner.lock().get(name).cloned())
    }

    fn put(&self, name: &str, content: &str) -> Result<(), StoreError> {
        self.inner.lock().insert(name.to_string(), content.to_string());
        Ok(())
    }
}

/// One JSON snapshot file per map inside a directory, replaced atomically.
#[derive(Debug, Clone)]
pub struct FileKv {
    dir: PathBuf,
}

impl FileKv {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| StoreError::Io(e.to_string()))?;
        Ok(FileKv { dir })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.json"))
    }
}

impl KvBackend for FileKv {
    fn get(&self, name: &str) -> Result<Option<String>, StoreError> {
        match fs::read_to_string(self.path(name)) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(StoreError::Io(e.to_string())),
        }
    }

    fn put(&self, name: &str, content: &str) -> Result<(), StoreError> {
        let io = |e: std::io::Error| StoreError::Io(e.to_string());
        let tmp = self.dir.join(format!(".{name}.json.tmp"));
        let mut file = fs::File::create(&tmp).map_err(io)?;
        file.write_all(content.as_bytes()).map_err(io)?;
        file.sync_all().map_err(io)?;
        fs::rename(&tmp, self.path(name)).map_err(io)?;
        Ok(())
    }
}

/// Generic HTTP key-value service: `GET`/`PUT {base}/{name}`, 404 = absent.
#[derive(Debug, Clone)]
pub struct HttpKv {
    base: String,
    agent: ureq::Agent,
}

impl HttpKv {
    pub fn new(base: &str) -> Self {
        HttpKv {
            base: base.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(10))
                .build(),
        }
    }
}

impl KvBackend for HttpKv {
    fn get(&self, name: &str) -> Result<Option<String>, StoreError> {
        match self.agent.get(&format!("{}/{name}", self.base)).call() {
            Ok(resp) => resp
                .into_string()
                .map(Some)
                .map_err(|e| StoreError::Io(e.to_string())),
            Err(ureq::Error::Status(404, _)) => Ok(None),
            Err(e) => Err(StoreError::Io(e.to_string())),
        }
    }

    fn put(&self, name: &str, content: &str) -> Result<(), StoreError> {
        self.agent
            .put(&format!("{}/{name}", self.base))
            .set("content-type", "application/json")
            .send_string(content)
            .map(|_| ())
            .map_err(|e| StoreError::Io(e.to_string()))
    }
}

/// Contents of every named map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapSnapshot {
    pub resource_mapping: BTreeMap<ResourceId, ResourceRecord>,
    /// `application.function` -> resources hosting it.
    pub candidate_resource: BTreeMap<String, Vec<ResourceId>>,
    /// Namespaced bucket -> resource.
    pub bucket_map: BTreeMap<String, ResourceId>,
    /// Application -> user-visible bucket names.
    pub application_bucket: BTreeMap<String, Vec<String>>,
    /// Application -> parsed DAG.
    pub dag_store: BTreeMap<String, ApplicationDag>,
}

pub struct Mappings {
    backend: Arc<dyn KvBackend>,
    data: MapSnapshot,
}

impl std::fmt::Debug for Mappings {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mappings").field("data", &self.data).finish()
    }
}

fn load_map<T: DeserializeOwned + Default>(
    backend: &dyn KvBackend,
    name: &str,
) -> Result<T, StoreError> {
    match backend.get(name)? {
        None => Ok(T::default()),
        Some(raw) => serde_json::from_str(&raw).map_err(|e| StoreError::CorruptStore {
            name: name.to_string(),
            reason: e.to_string(),
        }),
    }
}

fn encode<T: Serialize>(value: &T) -> Result<String, StoreError> {
    serde_json::to_string(value).map_err(|e| StoreError::Io(e.to_string()))
}

impl Mappings {
    /// Loads every named map from the backend. Absent maps start empty.
    pub fn open(backend: Arc<dyn KvBackend>) -> Result<Self, StoreError> {
        let b = backend.as_ref();
        let data = MapSnapshot {
            resource_mapping: load_map(b, RESOURCE_MAPPING)?,
            candidate_resource: load_map(b, CANDIDATE_RESOURCE)?,
            bucket_map: load_map(b, BUCKET_MAP)?,
            application_bucket: load_map(b, APPLICATION_BUCKET)?,
            dag_store: load_map(b, DAG_STORE)?,
        };
        Ok(Mappings { backend, data })
    }

    pub fn snapshot(&self) -> &MapSnapshot {
        &self.data
    }

    /// Overwrites every map, persisting each one.
    pub fn replace_all(&mut self, data: MapSnapshot) -> Result<(), StoreError> {
        self.backend.put(RESOURCE_MAPPING, &encode(&data.resource_mapping)?)?;
        self.backend.put(CANDIDATE_RESOURCE, &encode(&data.candidate_resource)?)?;
        self.backend.put(BUCKET_MAP, &encode(&data.bucket_map)?)?;
        self.backend.put(APPLICATION_BUCKET, &encode(&data.application_bucket)?)?;
        self.backend.put(DAG_STORE, &encode(&data.dag_store)?)?;
        self.data = data;
        Ok(())
    }

    pub fn update_resources<R>(
        &mut self,
        f: impl FnOnce(&mut BTreeMap<ResourceId, ResourceRecord>) -> R,
    ) -> Result<R, StoreError> {
        let mut next = self.data.resource_mapping.clone();
        let out = f(&mut next);
        self.backend.put(RESOURCE_MAPPING, &encode(&next)?)?;
        self.data.resource_mapping = next;
        Ok(out)
    }

    /// Empty candidate lists are dropped before persisting.
    pub fn update_candidates<R>(
        &mut self,
        f: impl FnOnce(&mut BTreeMap<String, Vec<ResourceId>>) -> R,
    ) -> Result<R, StoreError> {
        let mut next = self.data.candidate_resource.clone();
        let out = f(&mut next);
        next.retain(|_, ids| !ids.is_empty());
        self.backend.put(CANDIDATE_RESOURCE, &encode(&next)?)?;
        self.data.candidate_resource = next;
        Ok(out)
    }

    /// Bucket and application maps always change together.
    pub fn update_buckets<R>(
        &mut self,
        f: impl FnOnce(&mut BTreeMap<String, ResourceId>, &mut BTreeMap<String, Vec<String>>) -> R,
    ) -> Result<R, StoreError> {
        let mut buckets = self.data.bucket_map.clone();
        let mut apps = self.data.application_bucket.clone();
        let out = f(&mut buckets, &mut apps);
        apps.retain(|_, names| !names.is_empty());
        self.backend.put(BUCKET_MAP, &encode(&buckets)?)?;
        self.backend.put(APPLICATION_BUCKET, &encode(&apps)?)?;
        self.data.bucket_map = buckets;
        self.data.application_bucket = apps;
        Ok(out)
    }

    pub fn update_dags<R>(
        &mut self,
        f: impl FnOnce(&mut BTreeMap<String, ApplicationDag>) -> R,
    ) -> Result<R, StoreError> {
        let mut next = self.data.dag_store.clone();
        let out = f(&mut next);
        self.backend.put(DAG_STORE, &encode(&next)?)?;
        self.data.dag_store = next;
        Ok(out)
    }
}

/// Opens a file-backed store rooted at `dir`.
pub fn open_dir(dir: &Path) -> Result<Mappings, StoreError> {
    Mappings::open(Arc::new(FileKv::new(dir)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::tests::manifest_with_gateway;
    use proptest::prelude::*;

    fn record(id: u32) -> ResourceRecord {
        manifest_with_gateway(&format!("10.1.0.{id}:8080")).into_record(ResourceId(id))
    }

    #[test]
    fn empty_backend_opens_empty() {
        let maps = Mappings::open(Arc::new(MemoryKv::default())).unwrap();
        assert_eq!(maps.snapshot(), &MapSnapshot::default());
    }

    #[test]
    fn corrupt_map_is_reported() {
        let kv = MemoryKv::default();
        kv.set_raw(BUCKET_MAP, "{not json");
        let err = Mappings::open(Arc::new(kv)).unwrap_err();
        assert!(matches!(err, StoreError::CorruptStore { name, .. } if name == BUCKET_MAP));
    }

    #[test]
    fn map_names_are_persistence_keys() {
        let kv = MemoryKv::default();
        let mut maps = Mappings::open(Arc::new(kv.clone())).unwrap();
        maps.update_resources(|m| {
            m.insert(ResourceId(3), record(3));
        })
        .unwrap();
        let raw = kv.raw();
        assert!(raw[RESOURCE_MAPPING].contains("\"3\""));
    }

    #[test]
    fn file_backend_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let mut maps = open_dir(dir.path()).unwrap();
        maps.update_candidates(|m| {
            m.insert("a.f".into(), vec![ResourceId(1), ResourceId(2)]);
        })
        .unwrap();
        drop(maps);
        let reopened = open_dir(dir.path()).unwrap();
        assert_eq!(
            reopened.snapshot().candidate_resource["a.f"],
            vec![ResourceId(1), ResourceId(2)]
        );
    }

    proptest! {
        #[test]
        fn persistence_round_trip(
            ids in prop::collection::btree_set(0u32..64, 0..8),
            candidates in prop::collection::btree_map("[a-z]{1,6}\\.[a-z]{1,6}", prop::collection::vec(0u32..64, 1..4), 0..6),
            buckets in prop::collection::btree_map("[a-z]{1,6}-[a-z]{3,8}", 0u32..64, 0..6),
        ) {
            let kv = MemoryKv::default();
            let mut maps = Mappings::open(Arc::new(kv.clone())).unwrap();
            let mut data = MapSnapshot::default();
            for id in ids {
                data.resource_mapping.insert(ResourceId(id), record(id));
            }
            for (k, v) in candidates {
                data.candidate_resource.insert(k, v.into_iter().map(ResourceId).collect());
            }
            for (k, v) in buckets {
                let (app, user) = k.split_once('-').unwrap();
                data.application_bucket.entry(app.to_string()).or_default().push(user.to_string());
                data.bucket_map.insert(k, ResourceId(v));
            }
            maps.replace_all(data.clone()).unwrap();
            drop(maps);
            let reloaded = Mappings::open(Arc::new(kv)).unwrap();
            prop_assert_eq!(reloaded.snapshot(), &data);
        }
    }
}
