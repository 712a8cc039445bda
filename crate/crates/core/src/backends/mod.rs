//! Provider abstractions for function execution and object storage, with a
//! deterministic simulated fabric and generic HTTP implementations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{ResourceId, ResourceRecord, Tier};

pub mod des;
pub mod http;
pub mod sim;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("resource {0} is unreachable")]
    Unreachable(ResourceId),
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("no such function `{0}`")]
    NoSuchFunction(String),
    #[error("no such bucket `{0}`")]
    NoSuchBucket(String),
    #[error("no such object `{0}`")]
    NoSuchObject(String),
    #[error("bucket `{0}` already exists")]
    BucketExists(String),
    #[error("bucket `{0}` is not empty")]
    BucketNotEmpty(String),
    #[error("no link between resources {src} and {dst}")]
    NoLink { src: ResourceId, dst: ResourceId },
}

/// Stand-in body for a function when running on the simulated fabric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Behavior {
    /// Returns the payload unchanged.
    Echo,
    /// Returns `{"output_bytes": size}`.
    FixedOutput { size: u64 },
    /// Returns the payload after the compute-table latency.
    Delay,
    /// Weighted mean of `{"weights", "count"}` inputs, inline or by URL.
    VectorAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFunction {
    pub behavior: Behavior,
    /// Seconds of compute per tier.
    #[serde(default)]
    pub compute: BTreeMap<Tier, f64>,
}

impl SyntheticFunction {
    pub fn echo() -> Self {
        SyntheticFunction {
            behavior: Behavior::Echo,
            compute: BTreeMap::new(),
        }
    }
}

/// What a provider receives when a function is deployed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDeployment {
    /// Qualified `application.function` name.
    pub service: String,
    pub image: String,
    pub handler: String,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticFunction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionStatus {
    pub name: String,
    pub status: String,
    pub replicas: u32,
    pub invocation_count: u64,
    pub image: String,
    pub url: String,
    pub labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvokeReply {
    pub body: Vec<u8>,
    /// Seconds; virtual on the simulator, wall-clock over HTTP.
    pub latency: f64,
}

/// OpenFaaS-style function provider.
pub trait FaasProvider: Send + Sync {
    fn deploy(&self, target: &ResourceRecord, deployment: &FunctionDeployment)
        -> Result<(), BackendError>;
    fn remove(&self, target: &ResourceRecord, service: &str) -> Result<(), BackendError>;
    fn describe(&self, target: &ResourceRecord, service: &str)
        -> Result<FunctionStatus, BackendError>;
    fn invoke(&self, target: &ResourceRecord, service: &str, body: &[u8])
        -> Result<InvokeReply, BackendError>;
}

/// S3-style per-resource object store.
pub trait ObjectStore: Send + Sync {
    fn make_bucket(&self, target: &ResourceRecord, bucket: &str) -> Result<(), BackendError>;
    fn remove_bucket(&self, target: &ResourceRecord, bucket: &str) -> Result<(), BackendError>;
    /// Returns the version assigned to this write.
    fn put_object(
        &self,
        target: &ResourceRecord,
        bucket: &str,
        object: &str,
        data: &[u8],
    ) -> Result<u64, BackendError>;
    fn get_object(&self, target: &ResourceRecord, bucket: &str, object: &str)
        -> Result<Vec<u8>, BackendError>;
    fn list_objects(&self, target: &ResourceRecord, bucket: &str)
        -> Result<Vec<String>, BackendError>;
    fn delete_object(&self, target: &ResourceRecord, bucket: &str, object: &str)
        -> Result<(), BackendError>;
}
