//! Virtualized object storage.
//!
//! User bucket names are namespaced as `<application>-<bucket>` before they
//! reach a backend store; objects are addressed by the four-segment URL
//! `application/bucket/resource_id/object`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::appmodel::valid_application_name;
use crate::backends::{BackendError, ObjectStore};
use crate::registry::{ResourceId, ResourceRecord};
use crate::store::{Mappings, StoreError};

/// Volume above which intermediate data stays with its producer.
pub const DEFAULT_LARGE_DATA_THRESHOLD: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("invalid bucket name `{0}`")]
    InvalidBucketName(String),
    #[error("invalid application name `{0}`")]
    InvalidApplication(String),
    #[error("bucket `{0}` already exists")]
    BucketExists(String),
    #[error("unknown bucket `{0}`")]
    UnknownBucket(String),
    #[error("bucket `{0}` is not empty")]
    BucketNotEmpty(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("malformed object url `{0}`")]
    MalformedUrl(String),
    #[error("url points at resource {url} but the bucket lives on {mapped}")]
    MapMismatch { url: ResourceId, mapped: ResourceId },
    #[error("no registered resource can store the data")]
    NoStorageCapacity,
    #[error("placement failed: {0}")]
    PlacementFailed(String),
    #[error("backend write failed: {0}")]
    BackendWriteFailure(String),
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
    #[error("local file error: {0}")]
    LocalIo(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ObjectUrl {
    pub application: String,
    pub bucket: String,
    pub resource_id: ResourceId,
    pub object: String,
}

impl ObjectUrl {
    pub fn new(application: &str, bucket: &str, resource_id: ResourceId, object: &str) -> Self {
        ObjectUrl {
            application: application.to_string(),
            bucket: bucket.to_string(),
            resource_id,
            object: object.to_string(),
        }
    }

    pub fn namespaced_bucket(&self) -> String {
        namespaced_bucket(&self.application, &self.bucket)
    }
}

impl fmt::Display for ObjectUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.application, self.bucket, self.resource_id, self.object
        )
    }
}

impl FromStr for ObjectUrl {
    type Err = StorageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StorageError::MalformedUrl(s.to_string());
        let parts: Vec<&str> = s.split('/').collect();
        let [app, bucket, rid, object] = parts.as_slice() else {
            return Err(bad());
        };
        if [app, bucket, rid, object].iter().any(|p| p.is_empty()) {
            return Err(bad());
        }
        // Only canonical decimal ids, so render(parse(s)) == s.
        if rid.len() > 1 && rid.starts_with('0') || !rid.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        Ok(ObjectUrl {
            application: app.to_string(),
            bucket: bucket.to_string(),
            resource_id: rid.parse().map_err(|_| bad())?,
            object: object.to_string(),
        })
    }
}

impl TryFrom<String> for ObjectUrl {
    type Error = StorageError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ObjectUrl> for String {
    fn from(u: ObjectUrl) -> String {
        u.to_string()
    }
}

/// S3 bucket naming: 3-63 characters of lowercase letters, digits, dots and
/// hyphens, starting and ending alphanumeric, no adjacent dots, and not
/// shaped like an IPv4 address.
pub fn valid_bucket_name(name: &str) -> bool {
    let bytes = name.as_bytes();
    let alnum = |b: u8| b.is_ascii_lowercase() || b.is_ascii_digit();
    (3..=63).contains(&bytes.len())
        && alnum(bytes[0])
        && alnum(bytes[bytes.len() - 1])
        && bytes.iter().all(|&b| alnum(b) || b == b'-' || b == b'.')
        && !name.contains("..")
        && name.parse::<std::net::Ipv4Addr>().is_err()
}

pub fn namespaced_bucket(application: &str, bucket: &str) -> String {
    format!("{application}-{bucket}").to_ascii_lowercase()
}

/// Inverse of [`namespaced_bucket`]; application names carry no hyphen.
pub fn split_namespaced(name: &str) -> Option<(&str, &str)> {
    name.split_once('-')
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlacementHints {
    /// Where the data is produced at the edge of the system (an IoT device).
    pub generator_resource: Option<ResourceId>,
    pub expected_volume: Option<u64>,
    /// Where the function writing the data runs.
    #[serde(default)]
    pub producer_resources: Vec<ResourceId>,
    /// Where the function reading the data runs.
    #[serde(default)]
    pub consumer_resources: Vec<ResourceId>,
}

/// Locality-driven placement: generator first, then the producer for large
/// volumes, else the consumer. Falls back to the smallest registered id.
pub fn place_data(
    maps: &Mappings,
    hints: &PlacementHints,
    large_data_threshold: u64,
) -> Result<ResourceId, StorageError> {
    let registered = &maps.snapshot().resource_mapping;
    let usable = |id: &ResourceId| registered.get(id).is_some_and(|r| r.storage > 0);
    let smallest = |ids: &[ResourceId]| ids.iter().copied().filter(usable).min();

    let choice = if let Some(g) = hints.generator_resource {
        Some(g).filter(usable)
    } else if hints.expected_volume.is_some_and(|v| v > large_data_threshold)
        && !hints.producer_resources.is_empty()
    {
        smallest(&hints.producer_resources)
    } else if !hints.consumer_resources.is_empty() {
        smallest(&hints.consumer_resources)
    } else if !hints.producer_resources.is_empty() {
        smallest(&hints.producer_resources)
    } else {
        registered.keys().copied().find(usable)
    };
    choice.ok_or(StorageError::NoStorageCapacity)
}

fn check_names(application: &str, bucket: &str) -> Result<String, StorageError> {
    if !valid_application_name(application) {
        return Err(StorageError::InvalidApplication(application.to_string()));
    }
    if !valid_bucket_name(bucket) {
        return Err(StorageError::InvalidBucketName(bucket.to_string()));
    }
    let namespaced = namespaced_bucket(application, bucket);
    if !valid_bucket_name(&namespaced) {
        return Err(StorageError::InvalidBucketName(namespaced));
    }
    Ok(namespaced)
}

fn bucket_home(
    maps: &Mappings,
    application: &str,
    bucket: &str,
) -> Result<(String, ResourceRecord), StorageError> {
    let namespaced = namespaced_bucket(application, bucket);
    let snap = maps.snapshot();
    let rid = snap
        .bucket_map
        .get(&namespaced)
        .ok_or_else(|| StorageError::UnknownBucket(format!("{application}/{bucket}")))?;
    let record = snap
        .resource_mapping
        .get(rid)
        .cloned()
        .ok_or(StorageError::NoStorageCapacity)?;
    Ok((namespaced, record))
}

pub fn create_bucket(
    maps: &mut Mappings,
    objects: &dyn ObjectStore,
    application: &str,
    bucket: &str,
    hints: &PlacementHints,
    large_data_threshold: u64,
) -> Result<ResourceId, StorageError> {
    let namespaced = check_names(application, bucket)?;
    if maps.snapshot().bucket_map.contains_key(&namespaced) {
        return Err(StorageError::BucketExists(format!("{application}/{bucket}")));
    }
    let rid = place_data(maps, hints, large_data_threshold)?;
    let record = maps.snapshot().resource_mapping[&rid].clone();
    match objects.make_bucket(&record, &namespaced) {
        Ok(()) => {}
        Err(BackendError::BucketExists(_)) => {
            return Err(StorageError::BucketExists(format!("{application}/{bucket}")))
        }
        Err(e) => return Err(StorageError::PlacementFailed(e.to_string())),
    }
    maps.update_buckets(|buckets, apps| {
        buckets.insert(namespaced, rid);
        let names = apps.entry(application.to_string()).or_default();
        names.push(bucket.to_string());
        names.sort();
        names.dedup();
    })?;
    Ok(rid)
}

pub fn delete_bucket(
    maps: &mut Mappings,
    objects: &dyn ObjectStore,
    application: &str,
    bucket: &str,
) -> Result<(), StorageError> {
    let (namespaced, record) = bucket_home(maps, application, bucket)?;
    match objects.remove_bucket(&record, &namespaced) {
        Ok(()) | Err(BackendError::NoSuchBucket(_)) => {}
        Err(BackendError::BucketNotEmpty(_)) => {
            return Err(StorageError::BucketNotEmpty(format!("{application}/{bucket}")))
        }
        Err(e) => return Err(e.into()),
    }
    maps.update_buckets(|buckets, apps| {
        buckets.remove(&namespaced);
        if let Some(names) = apps.get_mut(application) {
            names.retain(|n| n != bucket);
        }
    })?;
    Ok(())
}

pub fn list_buckets(maps: &Mappings, application: &str) -> Vec<String> {
    maps.snapshot()
        .application_bucket
        .get(application)
        .cloned()
        .unwrap_or_default()
}

/// Uploads `data` as `object`; returns the canonical URL.
pub fn put_bytes(
    maps: &Mappings,
    objects: &dyn ObjectStore,
    application: &str,
    bucket: &str,
    object: &str,
    data: &[u8],
) -> Result<ObjectUrl, StorageError> {
    if object.is_empty() || object.contains('/') {
        return Err(StorageError::MalformedUrl(object.to_string()));
    }
    let (namespaced, record) = bucket_home(maps, application, bucket)?;
    objects
        .put_object(&record, &namespaced, object, data)
        .map_err(|e| StorageError::BackendWriteFailure(e.to_string()))?;
    Ok(ObjectUrl::new(application, bucket, record.resource_id, object))
}

/// Uploads the file; the object is named after its final path component.
pub fn put_object(
    maps: &Mappings,
    objects: &dyn ObjectStore,
    file_path: &Path,
    application: &str,
    bucket: &str,
) -> Result<ObjectUrl, StorageError> {
    let object = file_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| StorageError::LocalIo(format!("{} has no file name", file_path.display())))?;
    let data = fs::read(file_path).map_err(|e| StorageError::LocalIo(e.to_string()))?;
    put_bytes(maps, objects, application, bucket, object, &data)
}

pub fn get_bytes(
    maps: &Mappings,
    objects: &dyn ObjectStore,
    url: &str,
) -> Result<Vec<u8>, StorageError> {
    let url: ObjectUrl = url.parse()?;
    let snap = maps.snapshot();
    let namespaced = url.namespaced_bucket();
    let Some(mapped) = snap.bucket_map.get(&namespaced).copied() else {
        return Err(StorageError::UnknownObject(url.to_string()));
    };
    if mapped != url.resource_id {
        return Err(StorageError::MapMismatch {
            url: url.resource_id,
            mapped,
        });
    }
    let record = snap
        .resource_mapping
        .get(&mapped)
        .ok_or_else(|| StorageError::UnknownObject(url.to_string()))?;
    match objects.get_object(record, &namespaced, &url.object) {
        Ok(data) => Ok(data),
        Err(BackendError::NoSuchObject(_)) | Err(BackendError::NoSuchBucket(_)) => {
            Err(StorageError::UnknownObject(url.to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn get_object(
    maps: &Mappings,
    objects: &dyn ObjectStore,
    url: &str,
    file_path: &Path,
) -> Result<(), StorageError> {
    let data = get_bytes(maps, objects, url)?;
    fs::write(file_path, data).map_err(|e| StorageError::LocalIo(e.to_string()))
}

pub fn delete_object(
    maps: &Mappings,
    objects: &dyn ObjectStore,
    object: &str,
    application: &str,
    bucket: &str,
) -> Result<(), StorageError> {
    let (namespaced, record) = bucket_home(maps, application, bucket)?;
    match objects.delete_object(&record, &namespaced, object) {
        Ok(()) => Ok(()),
        Err(BackendError::NoSuchObject(_)) => Err(StorageError::UnknownObject(object.to_string())),
        Err(e) => Err(e.into()),
    }
}

pub fn list_objects(
    maps: &Mappings,
    objects: &dyn ObjectStore,
    application: &str,
    bucket: &str,
) -> Result<Vec<String>, StorageError> {
    let (namespaced, record) = bucket_home(maps, application, bucket)?;
    let mut names = objects.list_objects(&record, &namespaced)?;
    names.sort();
    Ok(names)
}
