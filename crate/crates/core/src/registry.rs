//! Resource registration: manifest parsing, ID assignment and
//! unregistration gating.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_yaml::{Mapping, Value};
use thiserror::Error;
use tracing::warn;

use crate::store::{Mappings, StoreError};

/// Placeholder written over credential fields in anything user-visible.
pub const REDACTED: &str = "<redacted>";

const MANIFEST_KEYS: [&str; 13] = [
    "name",
    "node",
    "memory",
    "cpu",
    "storage",
    "gpunode",
    "gpu",
    "gateway",
    "pwd",
    "prometheus",
    "minio",
    "minioakey",
    "minioskey",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceId(pub u32);

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for ResourceId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(ResourceId)
    }
}

/// Resource tier. Affinity only ever matches the three known tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Iot,
    Edge,
    Cloud,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Iot, Tier::Edge, Tier::Cloud];

    /// Case-insensitive match against the three tier labels.
    pub fn from_label(label: &str) -> Option<Tier> {
        match label.trim().to_ascii_lowercase().as_str() {
            "iot" => Some(Tier::Iot),
            "edge" => Some(Tier::Edge),
            "cloud" => Some(Tier::Cloud),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Tier::Iot => "iot",
            Tier::Edge => "edge",
            Tier::Cloud => "cloud",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A registered cluster or device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceRecord {
    pub resource_id: ResourceId,
    /// Tier label as given at registration.
    pub name: String,
    pub node: u32,
    /// Per-node memory, bytes.
    pub memory: u64,
    pub cpu: u32,
    /// Per-node disk, bytes.
    pub storage: u64,
    pub gpunode: u32,
    pub gpu: u32,
    pub gateway: String,
    pub pwd: String,
    pub prometheus: String,
    pub minio: String,
    #[serde(rename = "minioakey")]
    pub minio_access_key: String,
    #[serde(rename = "minioskey")]
    pub minio_secret_key: String,
}

impl ResourceRecord {
    pub fn tier(&self) -> Option<Tier> {
        Tier::from_label(&self.name)
    }

    pub fn total_memory(&self) -> u64 {
        self.memory * u64::from(self.node)
    }

    pub fn total_cpu(&self) -> f64 {
        f64::from(self.cpu) * f64::from(self.node)
    }

    pub fn total_gpu(&self) -> f64 {
        f64::from(self.gpu) * f64::from(self.gpunode)
    }

    pub fn redacted(&self) -> ResourceRecord {
        ResourceRecord {
            pwd: REDACTED.to_string(),
            minio_access_key: REDACTED.to_string(),
            minio_secret_key: REDACTED.to_string(),
            ..self.clone()
        }
    }

    /// Credential values that must never leave the control plane.
    pub fn secrets(&self) -> [&str; 3] {
        [&self.pwd, &self.minio_access_key, &self.minio_secret_key]
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("gateway {0} is already registered")]
    DuplicateEndpoint(String),
    #[error("unknown resource {0}")]
    UnknownResource(ResourceId),
    #[error("resource {id} is still referenced by {reason}")]
    ResourceBusy { id: ResourceId, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Registration manifest after parsing, before an ID is assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceManifest {
    pub name: String,
    pub node: u32,
    pub memory: u64,
    pub cpu: u32,
    pub storage: u64,
    pub gpunode: u32,
    pub gpu: u32,
    pub gateway: String,
    pub pwd: String,
    pub prometheus: String,
    pub minio: String,
    pub minio_access_key: String,
    pub minio_secret_key: String,
    pub warnings: Vec<String>,
}

impl ResourceManifest {
    pub fn into_record(self, resource_id: ResourceId) -> ResourceRecord {
        ResourceRecord {
            resource_id,
            name: self.name,
            node: self.node,
            memory: self.memory,
            cpu: self.cpu,
            storage: self.storage,
            gpunode: self.gpunode,
            gpu: self.gpu,
            gateway: self.gateway,
            pwd: self.pwd,
            prometheus: self.prometheus,
            minio: self.minio,
            minio_access_key: self.minio_access_key,
            minio_secret_key: self.minio_secret_key,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Registration {
    pub resource_id: ResourceId,
    pub warnings: Vec<String>,
}

/// Parses capacity strings such as `64GB`. Units are powers of 1024; a bare
/// integer is taken as bytes.
pub fn parse_capacity(text: &str) -> Option<u64> {
    let text = text.trim();
    let split = text
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(text.len());
    let (digits, unit) = text.split_at(split);
    if digits.is_empty() {
        return None;
    }
    let value: u64 = digits.parse().ok()?;
    let shift = match unit.trim() {
        "" => 0,
        "KB" => 10,
        "MB" => 20,
        "GB" => 30,
        "TB" => 40,
        _ => return None,
    };
    value.checked_mul(1u64 << shift)
}

/// `host:port` with a non-empty host free of whitespace and slashes.
pub fn is_host_port(text: &str) -> bool {
    let Some((host, port)) = text.rsplit_once(':') else {
        return false;
    };
    !host.is_empty()
        && !host.contains(|c: char| c.is_whitespace() || c == '/')
        && port.parse::<u16>().is_ok()
}

fn scalar_string(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

pub fn parse_manifest(document: &str) -> Result<ResourceManifest, RegistryError> {
    let malformed = |msg: String| RegistryError::MalformedManifest(msg);
    let root: Value =
        serde_yaml::from_str(document).map_err(|e| malformed(format!("invalid YAML: {e}")))?;
    let Value::Mapping(map) = root else {
        return Err(malformed("manifest must be a mapping".into()));
    };
    parse_manifest_mapping(&map)
}

fn parse_manifest_mapping(map: &Mapping) -> Result<ResourceManifest, RegistryError> {
    let malformed = |msg: String| RegistryError::MalformedManifest(msg);
    let mut warnings = Vec::new();
    for key in map.keys() {
        let key = scalar_string(key).unwrap_or_default();
        if !MANIFEST_KEYS.contains(&key.as_str()) {
            warnings.push(format!("unknown manifest key `{key}` ignored"));
        }
    }

    let field = |key: &str| -> Result<String, RegistryError> {
        let value = map
            .get(key)
            .ok_or_else(|| malformed(format!("missing field `{key}`")))?;
        scalar_string(value).ok_or_else(|| malformed(format!("field `{key}` must be a scalar")))
    };
    let count = |key: &str| -> Result<u32, RegistryError> {
        field(key)?
            .trim()
            .parse()
            .map_err(|_| malformed(format!("field `{key}` must be a non-negative integer")))
    };
    let capacity = |key: &str| -> Result<u64, RegistryError> {
        let raw = field(key)?;
        parse_capacity(&raw).ok_or_else(|| malformed(format!("field `{key}`: bad capacity `{raw}`")))
    };
    let endpoint = |key: &str| -> Result<String, RegistryError> {
        let raw = field(key)?;
        if is_host_port(&raw) {
            Ok(raw)
        } else {
            Err(malformed(format!("field `{key}`: `{raw}` is not host:port")))
        }
    };

    let manifest = ResourceManifest {
        name: field("name")?,
        node: count("node")?,
        memory: capacity("memory")?,
        cpu: count("cpu")?,
        storage: capacity("storage")?,
        gpunode: count("gpunode")?,
        gpu: count("gpu")?,
        gateway: endpoint("gateway")?,
        pwd: field("pwd")?,
        prometheus: endpoint("prometheus")?,
        minio: endpoint("minio")?,
        minio_access_key: field("minioakey")?,
        minio_secret_key: field("minioskey")?,
        warnings: Vec::new(),
    };

    if manifest.node == 0 || manifest.cpu == 0 || manifest.memory == 0 || manifest.storage == 0 {
        return Err(malformed("node, cpu, memory and storage must be positive".into()));
    }
    if manifest.gpunode > manifest.node {
        return Err(malformed("gpunode exceeds node".into()));
    }
    if manifest.gpu > 0 && manifest.gpunode == 0 {
        return Err(malformed("gpu > 0 requires gpunode > 0".into()));
    }
    if Tier::from_label(&manifest.name).is_none() {
        warnings.push(format!(
            "tier `{}` is not one of iot/edge/cloud and will never match an affinity",
            manifest.name
        ));
    }
    Ok(ResourceManifest { warnings, ..manifest })
}

/// Smallest non-negative integer not in `live`.
pub fn next_free_id<'a>(live: impl IntoIterator<Item = &'a ResourceId>) -> ResourceId {
    let used: BTreeSet<u32> = live.into_iter().map(|id| id.0).collect();
    let mut candidate = 0;
    for id in used {
        if id != candidate {
            break;
        }
        candidate += 1;
    }
    ResourceId(candidate)
}

pub fn register_resource(
    maps: &mut Mappings,
    manifest: ResourceManifest,
) -> Result<Registration, RegistryError> {
    let snapshot = maps.snapshot();
    if snapshot
        .resource_mapping
        .values()
        .any(|r| r.gateway == manifest.gateway)
    {
        return Err(RegistryError::DuplicateEndpoint(manifest.gateway));
    }
    for w in &manifest.warnings {
        warn!(gateway = %manifest.gateway, "{w}");
    }
    let resource_id = next_free_id(snapshot.resource_mapping.keys());
    let warnings = manifest.warnings.clone();
    let record = manifest.into_record(resource_id);
    maps.update_resources(|m| {
        m.insert(resource_id, record);
    })?;
    Ok(Registration { resource_id, warnings })
}

pub fn unregister_resource(maps: &mut Mappings, id: ResourceId) -> Result<(), RegistryError> {
    let snapshot = maps.snapshot();
    if !snapshot.resource_mapping.contains_key(&id) {
        return Err(RegistryError::UnknownResource(id));
    }
    if let Some((name, _)) = snapshot
        .candidate_resource
        .iter()
        .find(|(_, ids)| ids.contains(&id))
    {
        return Err(RegistryError::ResourceBusy {
            id,
            reason: format!("function {name}"),
        });
    }
    if let Some((bucket, _)) = snapshot.bucket_map.iter().find(|(_, rid)| **rid == id) {
        return Err(RegistryError::ResourceBusy {
            id,
            reason: format!("bucket {bucket}"),
        });
    }
    maps.update_resources(|m| {
        m.remove(&id);
    })?;
    Ok(())
}

pub fn list_resources(maps: &Mappings) -> Vec<ResourceRecord> {
    maps.snapshot()
        .resource_mapping
        .values()
        .map(ResourceRecord::redacted)
        .collect()
}
