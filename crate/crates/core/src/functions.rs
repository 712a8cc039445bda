//! Function lifecycle building blocks: namespaced names, invocation
//! envelopes, deployment packages, instance selection, fan-in barriers and
//! async result retention.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::io::{Cursor, Read, Write};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backends::{FunctionStatus, SyntheticFunction};
use crate::metrics::MetricsSnapshot;
use crate::registry::{ResourceId, ResourceRecord};
use crate::scheduler::RttMatrix;
use crate::storage::ObjectUrl;

pub const DESCRIPTOR_FILE: &str = "edgefaas.yaml";
pub const DEFAULT_ASYNC_TTL: Duration = Duration::from_secs(3600);
pub const DEFAULT_BARRIER_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("`{0}` is not deployed")]
    NotDeployed(String),
    #[error("deploying `{function}` failed on resources {failed:?}")]
    PartialDeployFailure {
        function: String,
        failed: Vec<ResourceId>,
        reasons: Vec<String>,
    },
    #[error("deleting `{function}` failed on resources {failed:?}")]
    PartialDeleteFailure {
        function: String,
        failed: Vec<ResourceId>,
        reasons: Vec<String>,
    },
    #[error("invocation on resource {resource_id} failed: {reason}")]
    InvokeFailure {
        resource_id: ResourceId,
        reason: String,
    },
    #[error("`{next}` does not follow `{from}`")]
    NotASuccessor { from: String, next: String },
    #[error("fan-in round for `{0}` expired before all inputs arrived")]
    BarrierTimeout(String),
    #[error("unknown invocation `{0}`")]
    UnknownInvocation(String),
    #[error("bad deployment package: {0}")]
    BadPackage(String),
}

/// `application.function`, unique across the registry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NamespacedFunction {
    pub application: String,
    pub function: String,
}

impl NamespacedFunction {
    pub fn new(application: &str, function: &str) -> Self {
        NamespacedFunction {
            application: application.to_string(),
            function: function.to_string(),
        }
    }

    pub fn qualified(&self) -> String {
        format!("{}.{}", self.application, self.function)
    }

    /// Application names may contain dots, function names may not, so the
    /// last dot separates them.
    pub fn parse(qualified: &str) -> Option<Self> {
        let (app, func) = qualified.rsplit_once('.')?;
        (!app.is_empty() && !func.is_empty()).then(|| Self::new(app, func))
    }
}

impl fmt::Display for NamespacedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.application, self.function)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeMeta {
    pub resource_id: ResourceId,
    pub application: String,
    pub function: String,
    pub invocation_id: String,
    #[serde(default)]
    pub sync: bool,
}

/// What a function instance receives: the caller's payload plus the
/// resource it was scheduled on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationEnvelope {
    pub payload: Value,
    pub edgefaas: EnvelopeMeta,
}

impl InvocationEnvelope {
    pub fn new(
        function: &NamespacedFunction,
        resource_id: ResourceId,
        invocation_id: &str,
        payload: Value,
        sync: bool,
    ) -> Self {
        InvocationEnvelope {
            payload,
            edgefaas: EnvelopeMeta {
                resource_id,
                application: function.application.clone(),
                function: function.function.clone(),
                invocation_id: invocation_id.to_string(),
                sync,
            },
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("envelope serializes")
    }
}

/// JSON bodies pass through as JSON; anything else becomes a base64 string.
pub fn payload_from_bytes(bytes: &[u8]) -> Value {
    if bytes.is_empty() {
        return Value::Null;
    }
    serde_json::from_slice(bytes)
        .unwrap_or_else(|_| Value::String(base64::engine::general_purpose::STANDARD.encode(bytes)))
}

pub fn new_invocation_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

/// Contents of `edgefaas.yaml` inside a deployment archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageDescriptor {
    pub handler: String,
    #[serde(default)]
    pub image: Option<String>,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    /// Stand-in behavior for simulated resources.
    #[serde(default)]
    pub synthetic: Option<SyntheticFunction>,
}

/// Builds a `.zip` deployment archive holding the descriptor and `files`.
pub fn build_package(
    descriptor: &PackageDescriptor,
    files: &[(&str, &[u8])],
) -> Result<Vec<u8>, FunctionError> {
    let bad = |e: &dyn fmt::Display| FunctionError::BadPackage(e.to_string());
    let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let opts = zip::write::SimpleFileOptions::default();
    let yaml = serde_yaml::to_string(descriptor).map_err(|e| bad(&e))?;
    zip.start_file(DESCRIPTOR_FILE, opts).map_err(|e| bad(&e))?;
    zip.write_all(yaml.as_bytes()).map_err(|e| bad(&e))?;
    for (name, data) in files {
        zip.start_file(*name, opts).map_err(|e| bad(&e))?;
        zip.write_all(data).map_err(|e| bad(&e))?;
    }
    Ok(zip.finish().map_err(|e| bad(&e))?.into_inner())
}

/// Reads the descriptor from a deployment archive.
pub fn read_package(archive: &[u8]) -> Result<PackageDescriptor, FunctionError> {
    let bad = |e: &dyn fmt::Display| FunctionError::BadPackage(e.to_string());
    let mut zip = zip::ZipArchive::new(Cursor::new(archive)).map_err(|e| bad(&e))?;
    let mut file = zip
        .by_name(DESCRIPTOR_FILE)
        .map_err(|_| FunctionError::BadPackage(format!("archive has no {DESCRIPTOR_FILE}")))?;
    let mut text = String::new();
    file.read_to_string(&mut text).map_err(|e| bad(&e))?;
    let desc: PackageDescriptor = serde_yaml::from_str(&text).map_err(|e| bad(&e))?;
    if desc.handler.trim().is_empty() {
        return Err(FunctionError::BadPackage("descriptor names no handler".into()));
    }
    Ok(desc)
}

/// One resource's answer to an invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationResult {
    pub resource_id: ResourceId,
    pub invocation_id: String,
    pub output: Value,
    /// Seconds.
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceFunctionStatus {
    pub resource_id: ResourceId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<FunctionStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDescription {
    pub function: String,
    pub deployed: bool,
    pub resources: Vec<ResourceFunctionStatus>,
}

/// Invoke-one target: lowest CPU load fraction, ties to the smallest id.
/// Candidates without a snapshot rank last.
pub fn pick_least_loaded(
    candidates: &[ResourceId],
    records: &BTreeMap<ResourceId, ResourceRecord>,
    snapshots: &BTreeMap<ResourceId, MetricsSnapshot>,
) -> Option<ResourceId> {
    let load = |id: &ResourceId| match (records.get(id), snapshots.get(id)) {
        (Some(r), Some(s)) => s.cpu_load(r),
        _ => f64::INFINITY,
    };
    let mut sorted = candidates.to_vec();
    sorted.sort();
    sorted.dedup();
    sorted
        .into_iter()
        .map(|id| (load(&id), id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

/// Successor instance that a predecessor at `from` hands its output to:
/// the nearest by RTT, ties to the smallest id.
pub fn route_to(from: ResourceId, instances: &[ResourceId], rtt: &RttMatrix) -> Option<ResourceId> {
    instances
        .iter()
        .map(|&id| (rtt.get(from, id), id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

/// Identifies a completing predecessor instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Sender {
    pub function: String,
    pub resource_id: ResourceId,
}

#[derive(Debug)]
struct Round {
    opened: Instant,
    arrived: BTreeMap<Sender, Vec<ObjectUrl>>,
}

/// Counts predecessor completions per successor instance and releases one
/// batch per round once every expected sender has reported.
#[derive(Debug, Default)]
pub struct Barrier {
    rounds: HashMap<(String, ResourceId), VecDeque<Round>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BarrierOutcome {
    Waiting { arrived: usize, expected: usize },
    /// All inputs of a round, ordered by sender.
    Released(Vec<ObjectUrl>),
}

impl Barrier {
    /// Records one completion for successor `target` on `instance`. A sender
    /// that already reported in the open round counts toward the next one.
    pub fn arrive(
        &mut self,
        target: &str,
        instance: ResourceId,
        expected: usize,
        sender: Sender,
        urls: Vec<ObjectUrl>,
        now: Instant,
        timeout: Duration,
    ) -> Result<BarrierOutcome, FunctionError> {
        if expected <= 1 {
            return Ok(BarrierOutcome::Released(urls));
        }
        let key = (target.to_string(), instance);
        let rounds = self.rounds.entry(key.clone()).or_default();
        if rounds
            .front()
            .is_some_and(|r| now.saturating_duration_since(r.opened) > timeout)
        {
            rounds.pop_front();
            if rounds.is_empty() {
                self.rounds.remove(&key);
            }
            return Err(FunctionError::BarrierTimeout(target.to_string()));
        }
        let slot = match rounds.iter().position(|r| !r.arrived.contains_key(&sender)) {
            Some(i) => i,
            None => {
                rounds.push_back(Round {
                    opened: now,
                    arrived: BTreeMap::new(),
                });
                rounds.len() - 1
            }
        };
        let round = &mut rounds[slot];
        round.arrived.insert(sender, urls);
        let arrived = round.arrived.len();
        if arrived < expected {
            return Ok(BarrierOutcome::Waiting { arrived, expected });
        }
        let done = rounds.remove(slot).expect("slot exists");
        if rounds.is_empty() {
            self.rounds.remove(&key);
        }
        Ok(BarrierOutcome::Released(
            done.arrived.into_values().flatten().collect(),
        ))
    }

    pub fn pending(&self) -> usize {
        self.rounds.values().map(VecDeque::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum AsyncState {
    Pending,
    Done { results: Vec<InvocationResult> },
    Failed { error: String },
}

/// Results of asynchronous invocations, kept for a fixed time.
#[derive(Debug)]
pub struct AsyncResults {
    ttl: Duration,
    entries: HashMap<String, (Instant, AsyncState)>,
}

impl AsyncResults {
    pub fn new(ttl: Duration) -> Self {
        AsyncResults {
            ttl,
            entries: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: &str, state: AsyncState, now: Instant) {
        self.purge(now);
        self.entries.insert(id.to_string(), (now, state));
    }

    pub fn get(&mut self, id: &str, now: Instant) -> Option<AsyncState> {
        self.purge(now);
        self.entries.get(id).map(|(_, s)| s.clone())
    }

    fn purge(&mut self, now: Instant) {
        let ttl = self.ttl;
        self.entries
            .retain(|_, (at, _)| now.saturating_duration_since(*at) <= ttl);
    }
}
