//! The control plane: one object owning the mapping store, the provider
//! backends and the scheduling policy, exposing every registry, application,
//! function and storage operation.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::appmodel::{self, AppError, ApplicationDag, Reduce};
use crate::backends::sim::SimFabric;
use crate::backends::{BackendError, FaasProvider, FunctionDeployment, ObjectStore};
use crate::functions::{
    self, AsyncResults, AsyncState, Barrier, BarrierOutcome, FunctionDescription, FunctionError,
    InvocationEnvelope, InvocationResult, NamespacedFunction, ResourceFunctionStatus, Sender,
};
use crate::metrics::{fetch_snapshot, MetricsProvider, SimMetrics, DEFAULT_STALENESS};
use crate::registry::{self, Registration, RegistryError, ResourceId, ResourceManifest, ResourceRecord};
use crate::scheduler::{
    policy_by_name, ClusterView, FunctionCreation, RttMatrix, ScheduleError, SchedulingPolicy,
};
use crate::storage::{self, ObjectUrl, PlacementHints, StorageError};
use crate::store::{KvBackend, MapSnapshot, Mappings, MemoryKv, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlatformConfig {
    pub policy: String,
    #[serde(with = "secs")]
    pub staleness: Duration,
    #[serde(with = "secs")]
    pub async_ttl: Duration,
    #[serde(with = "secs")]
    pub barrier_timeout: Duration,
    pub large_data_threshold: u64,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            policy: "two-phase".into(),
            staleness: DEFAULT_STALENESS,
            async_ttl: functions::DEFAULT_ASYNC_TTL,
            barrier_timeout: functions::DEFAULT_BARRIER_TIMEOUT,
            large_data_threshold: storage::DEFAULT_LARGE_DATA_THRESHOLD,
        }
    }
}

/// Durations as fractional seconds.
pub mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(serde::de::Error::custom("duration must be a positive number of seconds"));
        }
        Ok(Duration::from_secs_f64(v))
    }
}

#[derive(Clone)]
pub struct Backends {
    pub faas: Arc<dyn FaasProvider>,
    pub objects: Arc<dyn ObjectStore>,
    pub metrics: Arc<dyn MetricsProvider>,
}

impl Backends {
    pub fn sim(fabric: &SimFabric, metrics: &SimMetrics) -> Self {
        Backends {
            faas: Arc::new(fabric.clone()),
            objects: Arc::new(fabric.clone()),
            metrics: Arc::new(metrics.clone()),
        }
    }
}

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    App(#[from] AppError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("mapping store is corrupt, writes are refused: {0}")]
    Degraded(String),
}

/// Coarse outcome class, used to pick HTTP status and exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    NotFound,
    Conflict,
    Validation,
    Backend,
    Unavailable,
}

impl PlatformError {
    pub fn class(&self) -> ErrorClass {
        use ErrorClass::*;
        match self {
            PlatformError::Registry(e) => match e {
                RegistryError::MalformedManifest(_) => Validation,
                RegistryError::DuplicateEndpoint(_) | RegistryError::ResourceBusy { .. } => Conflict,
                RegistryError::UnknownResource(_) => NotFound,
                RegistryError::Store(_) => Unavailable,
            },
            PlatformError::App(e) => match e {
                AppError::DuplicateApplication(_) => Conflict,
                AppError::UnknownApplication(_) => NotFound,
                AppError::Store(_) => Unavailable,
                _ => Validation,
            },
            PlatformError::Schedule(_) => Validation,
            PlatformError::Function(e) => match e {
                FunctionError::UnknownFunction(_)
                | FunctionError::NotDeployed(_)
                | FunctionError::UnknownInvocation(_) => NotFound,
                FunctionError::NotASuccessor { .. } | FunctionError::BadPackage(_) => Validation,
                FunctionError::BarrierTimeout(_) => Conflict,
                FunctionError::PartialDeployFailure { .. }
                | FunctionError::PartialDeleteFailure { .. }
                | FunctionError::InvokeFailure { .. } => Backend,
            },
            PlatformError::Storage(e) => match e {
                StorageError::InvalidBucketName(_)
                | StorageError::InvalidApplication(_)
                | StorageError::MalformedUrl(_)
                | StorageError::LocalIo(_) => Validation,
                StorageError::BucketExists(_)
                | StorageError::BucketNotEmpty(_)
                | StorageError::MapMismatch { .. } => Conflict,
                StorageError::UnknownBucket(_) | StorageError::UnknownObject(_) => NotFound,
                StorageError::NoStorageCapacity => Validation,
                StorageError::PlacementFailed(_)
                | StorageError::BackendWriteFailure(_)
                | StorageError::Backend(_) => Backend,
                StorageError::Store(_) => Unavailable,
            },
            PlatformError::Store(_) | PlatformError::Degraded(_) => Unavailable,
        }
    }

    /// Resources named by a backend failure.
    pub fn failed_resources(&self) -> Vec<ResourceId> {
        match self {
            PlatformError::Function(FunctionError::PartialDeployFailure { failed, .. })
            | PlatformError::Function(FunctionError::PartialDeleteFailure { failed, .. }) => {
                failed.clone()
            }
            PlatformError::Function(FunctionError::InvokeFailure { resource_id, .. }) => {
                vec![*resource_id]
            }
            PlatformError::Storage(StorageError::Backend(BackendError::Unreachable(id))) => {
                vec![*id]
            }
            _ => Vec::new(),
        }
    }
}

/// Result of reporting a stage completion to the next stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum ChainOutcome {
    Waiting {
        instance: ResourceId,
        arrived: usize,
        expected: usize,
    },
    Invoked {
        result: InvocationResult,
    },
}

pub struct ControlPlane {
    maps: RwLock<Mappings>,
    degraded: Option<String>,
    backends: Backends,
    policy: RwLock<Arc<dyn SchedulingPolicy>>,
    rtt: RwLock<RttMatrix>,
    config: PlatformConfig,
    fn_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    barrier: Mutex<Barrier>,
    results: Mutex<AsyncResults>,
}

impl std::fmt::Debug for ControlPlane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlPlane")
            .field("policy", &self.policy.read().name())
            .field("degraded", &self.degraded)
            .finish()
    }
}

fn parse_output(body: &[u8]) -> Value {
    functions::payload_from_bytes(body)
}

impl ControlPlane {
    /// Loads every mapping from `kv`. A corrupt store leaves the plane
    /// serving reads of an empty state and refusing writes.
    pub fn open(
        kv: Arc<dyn KvBackend>,
        backends: Backends,
        config: PlatformConfig,
    ) -> Result<Self, PlatformError> {
        let policy = policy_by_name(&config.policy)?;
        let (maps, degraded) = match Mappings::open(kv) {
            Ok(m) => (m, None),
            Err(e @ StoreError::CorruptStore { .. }) => {
                tracing::error!(error = %e, "mapping store is corrupt; serving read-only");
                (
                    Mappings::open(Arc::new(MemoryKv::default()))?,
                    Some(e.to_string()),
                )
            }
            Err(e) => return Err(e.into()),
        };
        Ok(ControlPlane {
            maps: RwLock::new(maps),
            degraded,
            backends,
            policy: RwLock::new(policy),
            rtt: RwLock::new(RttMatrix::new()),
            results: Mutex::new(AsyncResults::new(config.async_ttl)),
            config,
            fn_locks: Mutex::new(HashMap::new()),
            barrier: Mutex::new(Barrier::default()),
        })
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn degraded(&self) -> Option<&str> {
        self.degraded.as_deref()
    }

    pub fn set_rtt(&self, rtt: RttMatrix) {
        *self.rtt.write() = rtt;
    }

    pub fn rtt(&self) -> RttMatrix {
        self.rtt.read().clone()
    }

    pub fn set_policy(&self, policy: Arc<dyn SchedulingPolicy>) {
        *self.policy.write() = policy;
    }

    pub fn policy_name(&self) -> String {
        self.policy.read().name().to_string()
    }

    pub fn snapshot(&self) -> MapSnapshot {
        self.maps.read().snapshot().clone()
    }

    fn writable(&self) -> Result<(), PlatformError> {
        match &self.degraded {
            Some(reason) => Err(PlatformError::Degraded(reason.clone())),
            None => Ok(()),
        }
    }

    fn fn_lock(&self, qualified: &str) -> Arc<Mutex<()>> {
        self.fn_locks
            .lock()
            .entry(qualified.to_string())
            .or_default()
            .clone()
    }

    // Registry

    pub fn register_resource(&self, document: &str) -> Result<Registration, PlatformError> {
        self.register_manifest(registry::parse_manifest(document)?)
    }

    pub fn register_manifest(
        &self,
        manifest: ResourceManifest,
    ) -> Result<Registration, PlatformError> {
        self.writable()?;
        Ok(registry::register_resource(&mut self.maps.write(), manifest)?)
    }

    pub fn unregister_resource(&self, id: ResourceId) -> Result<(), PlatformError> {
        self.writable()?;
        Ok(registry::unregister_resource(&mut self.maps.write(), id)?)
    }

    /// Registered resources with credentials redacted.
    pub fn list_resources(&self) -> Vec<ResourceRecord> {
        registry::list_resources(&self.maps.read())
            .iter()
            .map(ResourceRecord::redacted)
            .collect()
    }

    pub fn get_resource(&self, id: ResourceId) -> Result<ResourceRecord, PlatformError> {
        self.maps
            .read()
            .snapshot()
            .resource_mapping
            .get(&id)
            .map(ResourceRecord::redacted)
            .ok_or(RegistryError::UnknownResource(id).into())
    }

    // Applications

    pub fn register_application(&self, document: &str) -> Result<ApplicationDag, PlatformError> {
        self.writable()?;
        let dag = appmodel::parse_application(document)?;
        Ok(appmodel::register_application(&mut self.maps.write(), dag)?)
    }

    pub fn list_applications(&self) -> Vec<ApplicationDag> {
        self.maps.read().snapshot().dag_store.values().cloned().collect()
    }

    pub fn get_application(&self, application: &str) -> Result<ApplicationDag, PlatformError> {
        self.maps
            .read()
            .snapshot()
            .dag_store
            .get(application)
            .cloned()
            .ok_or_else(|| AppError::UnknownApplication(application.to_string()).into())
    }

    fn lookup(
        &self,
        application: &str,
        function: &str,
    ) -> Result<(ApplicationDag, NamespacedFunction), PlatformError> {
        let dag = self.get_application(application)?;
        let name = NamespacedFunction::new(application, function);
        if dag.function(function).is_none() {
            return Err(FunctionError::UnknownFunction(name.qualified()).into());
        }
        Ok((dag, name))
    }

    // Scheduling

    /// Current resources, fresh metrics snapshots and RTTs.
    pub fn cluster_view(&self) -> ClusterView {
        let resources = registry::list_resources(&self.maps.read());
        let snapshots = resources
            .iter()
            .filter_map(|r| {
                match fetch_snapshot(self.backends.metrics.as_ref(), r, self.config.staleness) {
                    Ok(s) => Some((r.resource_id, s)),
                    Err(e) => {
                        tracing::warn!(resource = %r.resource_id, error = %e, "metrics unavailable");
                        None
                    }
                }
            })
            .collect();
        ClusterView {
            resources,
            snapshots,
            rtt: self.rtt(),
        }
    }

    /// Placement for `function` under the current policy. Dependencies are
    /// anchored at their deployed instances.
    pub fn schedule(
        &self,
        application: &str,
        function: &str,
        data_urls: &[ObjectUrl],
    ) -> Result<Vec<ResourceId>, PlatformError> {
        let (dag, _) = self.lookup(application, function)?;
        let spec = dag.function(function).expect("looked up").clone();
        let candidates = self.maps.read().snapshot().candidate_resource.clone();
        let dependency_placements = spec
            .dependencies
            .iter()
            .map(|d| {
                let q = NamespacedFunction::new(application, d).qualified();
                (d.clone(), candidates.get(&q).cloned().unwrap_or_default())
            })
            .collect();
        let request = FunctionCreation {
            application: application.to_string(),
            function: spec,
            data_urls: data_urls.to_vec(),
            dependency_placements,
        };
        let view = self.cluster_view();
        let policy = self.policy.read().clone();
        Ok(policy.schedule(&request, &view)?)
    }

    // Functions

    /// Schedules `function` and deploys the archive on every placement. The
    /// candidate set ends up holding exactly the resources that host it.
    pub fn deploy_function(
        &self,
        application: &str,
        function: &str,
        package: &[u8],
        data_urls: &[ObjectUrl],
    ) -> Result<Vec<ResourceId>, PlatformError> {
        self.writable()?;
        let (_, name) = self.lookup(application, function)?;
        let descriptor = functions::read_package(package)?;
        let qualified = name.qualified();
        let lock = self.fn_lock(&qualified);
        let _guard = lock.lock();

        let placements = self.schedule(application, function, data_urls)?;
        let mut labels = descriptor.labels.clone();
        labels.insert("edgefaas.application".into(), application.to_string());
        labels.insert("edgefaas.function".into(), function.to_string());
        let deployment = FunctionDeployment {
            service: qualified.clone(),
            image: descriptor
                .image
                .clone()
                .unwrap_or_else(|| format!("edgefaas/{qualified}:latest")),
            handler: descriptor.handler.clone(),
            labels,
            synthetic: descriptor.synthetic.clone(),
        };
        let (records, previous) = {
            let maps = self.maps.read();
            let snap = maps.snapshot();
            (
                snap.resource_mapping.clone(),
                snap.candidate_resource.get(&qualified).cloned().unwrap_or_default(),
            )
        };

        let mut hosted = Vec::new();
        let mut failed = Vec::new();
        let mut reasons = Vec::new();
        for id in &placements {
            let outcome = match records.get(id) {
                Some(record) => self.backends.faas.deploy(record, &deployment),
                None => Err(BackendError::Unreachable(*id)),
            };
            match outcome {
                Ok(()) => hosted.push(*id),
                Err(e) => {
                    tracing::warn!(function = %qualified, resource = %id, error = %e, "deploy failed");
                    failed.push(*id);
                    reasons.push(e.to_string());
                }
            }
        }
        for id in previous.iter().filter(|id| !placements.contains(id)) {
            let removed = match records.get(id) {
                Some(record) => self.backends.faas.remove(record, &qualified),
                None => Ok(()),
            };
            match removed {
                Ok(()) | Err(BackendError::NoSuchFunction(_)) => {}
                Err(_) => hosted.push(*id),
            }
        }
        hosted.sort();
        hosted.dedup();
        let set = hosted.clone();
        self.maps.write().update_candidates(|c| {
            c.insert(qualified.clone(), set);
        })?;
        if !failed.is_empty() {
            return Err(FunctionError::PartialDeployFailure {
                function: qualified,
                failed,
                reasons,
            }
            .into());
        }
        Ok(hosted)
    }

    fn candidates_of(&self, qualified: &str) -> Result<Vec<ResourceId>, PlatformError> {
        self.maps
            .read()
            .snapshot()
            .candidate_resource
            .get(qualified)
            .cloned()
            .ok_or_else(|| FunctionError::UnknownFunction(qualified.to_string()).into())
    }

    pub fn delete_function(&self, application: &str, function: &str) -> Result<(), PlatformError> {
        self.writable()?;
        let (_, name) = self.lookup(application, function)?;
        let qualified = name.qualified();
        let lock = self.fn_lock(&qualified);
        let _guard = lock.lock();
        let ids = self.candidates_of(&qualified)?;
        let records = self.maps.read().snapshot().resource_mapping.clone();
        let mut survivors = Vec::new();
        let mut reasons = Vec::new();
        for id in ids {
            let outcome = match records.get(&id) {
                Some(record) => self.backends.faas.remove(record, &qualified),
                None => Ok(()),
            };
            match outcome {
                Ok(()) | Err(BackendError::NoSuchFunction(_)) => {}
                Err(e) => {
                    survivors.push(id);
                    reasons.push(e.to_string());
                }
            }
        }
        let kept = survivors.clone();
        self.maps.write().update_candidates(|c| {
            c.insert(qualified.clone(), kept);
        })?;
        if !survivors.is_empty() {
            return Err(FunctionError::PartialDeleteFailure {
                function: qualified,
                failed: survivors,
                reasons,
            }
            .into());
        }
        Ok(())
    }

    pub fn get_function(
        &self,
        application: &str,
        function: &str,
    ) -> Result<FunctionDescription, PlatformError> {
        let (_, name) = self.lookup(application, function)?;
        let qualified = name.qualified();
        let ids = self.candidates_of(&qualified)?;
        let records = self.maps.read().snapshot().resource_mapping.clone();
        let resources = ids
            .into_iter()
            .map(|id| {
                let outcome = match records.get(&id) {
                    Some(record) => self.backends.faas.describe(record, &qualified),
                    None => Err(BackendError::Unreachable(id)),
                };
                match outcome {
                    Ok(mut status) => {
                        status.url = format!("/function/{qualified}");
                        ResourceFunctionStatus {
                            resource_id: id,
                            status: Some(status),
                            error: None,
                        }
                    }
                    Err(e) => ResourceFunctionStatus {
                        resource_id: id,
                        status: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect();
        Ok(FunctionDescription {
            function: qualified,
            deployed: true,
            resources,
        })
    }

    /// Every function of the application in manifest order.
    pub fn list_functions(
        &self,
        application: &str,
    ) -> Result<Vec<FunctionDescription>, PlatformError> {
        let dag = self.get_application(application)?;
        dag.functions
            .iter()
            .map(|f| match self.get_function(application, &f.name) {
                Err(PlatformError::Function(FunctionError::UnknownFunction(q))) => {
                    Ok(FunctionDescription {
                        function: q,
                        deployed: false,
                        resources: Vec::new(),
                    })
                }
                other => other,
            })
            .collect()
    }

    fn dispatch(
        &self,
        name: &NamespacedFunction,
        record: &ResourceRecord,
        invocation_id: &str,
        payload: Value,
        sync: bool,
    ) -> Result<InvocationResult, FunctionError> {
        let envelope =
            InvocationEnvelope::new(name, record.resource_id, invocation_id, payload, sync);
        let reply = self
            .backends
            .faas
            .invoke(record, &name.qualified(), &envelope.to_bytes())
            .map_err(|e| FunctionError::InvokeFailure {
                resource_id: record.resource_id,
                reason: e.to_string(),
            })?;
        Ok(InvocationResult {
            resource_id: record.resource_id,
            invocation_id: invocation_id.to_string(),
            output: parse_output(&reply.body),
            latency: reply.latency,
        })
    }

    fn invoke_inner(
        &self,
        application: &str,
        function: &str,
        payload: Value,
        invoke_one: bool,
        invocation_id: &str,
        sync: bool,
    ) -> Result<Vec<InvocationResult>, PlatformError> {
        let (_, name) = self.lookup(application, function)?;
        let ids = self.candidates_of(&name.qualified())?;
        if ids.is_empty() {
            return Err(FunctionError::NotDeployed(name.qualified()).into());
        }
        let records = self.maps.read().snapshot().resource_mapping.clone();
        let targets = if invoke_one {
            let view = self.cluster_view();
            vec![functions::pick_least_loaded(&ids, &records, &view.snapshots)
                .expect("candidate set is non-empty")]
        } else {
            ids
        };
        targets
            .into_iter()
            .map(|id| {
                let record = records.get(&id).ok_or(FunctionError::InvokeFailure {
                    resource_id: id,
                    reason: "resource is no longer registered".into(),
                })?;
                Ok(self.dispatch(&name, record, invocation_id, payload.clone(), sync)?)
            })
            .collect()
    }

    /// Synchronous invocation on every candidate, or on the least loaded one.
    pub fn invoke(
        &self,
        application: &str,
        function: &str,
        payload: Value,
        invoke_one: bool,
    ) -> Result<Vec<InvocationResult>, PlatformError> {
        let id = functions::new_invocation_id();
        self.invoke_inner(application, function, payload, invoke_one, &id, true)
    }

    /// Starts the invocation in the background and returns its id at once.
    pub fn invoke_async(
        self: &Arc<Self>,
        application: &str,
        function: &str,
        payload: Value,
        invoke_one: bool,
    ) -> Result<String, PlatformError> {
        self.lookup(application, function)?;
        let id = functions::new_invocation_id();
        self.results.lock().insert(&id, AsyncState::Pending, Instant::now());
        let plane = Arc::clone(self);
        let (app, func, inv) = (application.to_string(), function.to_string(), id.clone());
        std::thread::spawn(move || {
            let state = match plane.invoke_inner(&app, &func, payload, invoke_one, &inv, false) {
                Ok(results) => AsyncState::Done { results },
                Err(e) => AsyncState::Failed {
                    error: e.to_string(),
                },
            };
            plane.results.lock().insert(&inv, state, Instant::now());
        });
        Ok(id)
    }

    pub fn invocation_result(&self, invocation_id: &str) -> Result<AsyncState, PlatformError> {
        self.results
            .lock()
            .get(invocation_id, Instant::now())
            .ok_or_else(|| FunctionError::UnknownInvocation(invocation_id.to_string()).into())
    }

    /// Hands a finished stage's outputs to `next`. Instances fed by several
    /// predecessor instances are invoked once per round, after the last
    /// expected completion.
    pub fn chain_invoke(
        &self,
        envelope: &InvocationEnvelope,
        next: &str,
        output_urls: &[ObjectUrl],
    ) -> Result<ChainOutcome, PlatformError> {
        let meta = &envelope.edgefaas;
        let (dag, _) = self.lookup(&meta.application, &meta.function)?;
        let next_spec = dag
            .function(next)
            .filter(|s| s.dependencies.contains(&meta.function))
            .ok_or_else(|| FunctionError::NotASuccessor {
                from: meta.function.clone(),
                next: next.to_string(),
            })?;
        let name = NamespacedFunction::new(&meta.application, next);
        let qualified = name.qualified();
        let (instances, candidates, records) = {
            let maps = self.maps.read();
            let snap = maps.snapshot();
            (
                snap.candidate_resource.get(&qualified).cloned().unwrap_or_default(),
                snap.candidate_resource.clone(),
                snap.resource_mapping.clone(),
            )
        };
        if instances.is_empty() {
            return Err(FunctionError::NotDeployed(qualified).into());
        }
        let rtt = self.rtt();
        let route = |from: ResourceId| match next_spec.reduce {
            Reduce::One if instances.len() == 1 => instances[0],
            _ => functions::route_to(from, &instances, &rtt).expect("instances non-empty"),
        };
        let target = route(meta.resource_id);
        let expected = next_spec
            .dependencies
            .iter()
            .flat_map(|d| {
                candidates
                    .get(&NamespacedFunction::new(&meta.application, d).qualified())
                    .cloned()
                    .unwrap_or_default()
            })
            .filter(|&p| route(p) == target)
            .count()
            .max(1);
        let outcome = self.barrier.lock().arrive(
            &qualified,
            target,
            expected,
            Sender {
                function: meta.function.clone(),
                resource_id: meta.resource_id,
            },
            output_urls.to_vec(),
            Instant::now(),
            self.config.barrier_timeout,
        )?;
        match outcome {
            BarrierOutcome::Waiting { arrived, expected } => Ok(ChainOutcome::Waiting {
                instance: target,
                arrived,
                expected,
            }),
            BarrierOutcome::Released(inputs) => {
                let record = records.get(&target).ok_or(FunctionError::InvokeFailure {
                    resource_id: target,
                    reason: "resource is no longer registered".into(),
                })?;
                let inputs: Vec<String> = inputs.iter().map(ToString::to_string).collect();
                let result = self.dispatch(
                    &name,
                    record,
                    &meta.invocation_id,
                    json!({ "inputs": inputs }),
                    meta.sync,
                )?;
                Ok(ChainOutcome::Invoked { result })
            }
        }
    }

    // Storage

    pub fn create_bucket(
        &self,
        application: &str,
        bucket: &str,
        hints: &PlacementHints,
    ) -> Result<ResourceId, PlatformError> {
        self.writable()?;
        Ok(storage::create_bucket(
            &mut self.maps.write(),
            self.backends.objects.as_ref(),
            application,
            bucket,
            hints,
            self.config.large_data_threshold,
        )?)
    }

    pub fn delete_bucket(&self, application: &str, bucket: &str) -> Result<(), PlatformError> {
        self.writable()?;
        Ok(storage::delete_bucket(
            &mut self.maps.write(),
            self.backends.objects.as_ref(),
            application,
            bucket,
        )?)
    }

    pub fn list_buckets(&self, application: &str) -> Vec<String> {
        storage::list_buckets(&self.maps.read(), application)
    }

    pub fn put_object(
        &self,
        application: &str,
        bucket: &str,
        object: &str,
        data: &[u8],
    ) -> Result<ObjectUrl, PlatformError> {
        self.writable()?;
        Ok(storage::put_bytes(
            &self.maps.read(),
            self.backends.objects.as_ref(),
            application,
            bucket,
            object,
            data,
        )?)
    }

    pub fn get_object(&self, url: &str) -> Result<Vec<u8>, PlatformError> {
        Ok(storage::get_bytes(
            &self.maps.read(),
            self.backends.objects.as_ref(),
            url,
        )?)
    }

    pub fn delete_object(
        &self,
        application: &str,
        bucket: &str,
        object: &str,
    ) -> Result<(), PlatformError> {
        self.writable()?;
        Ok(storage::delete_object(
            &self.maps.read(),
            self.backends.objects.as_ref(),
            object,
            application,
            bucket,
        )?)
    }

    pub fn list_objects(&self, application: &str, bucket: &str) -> Result<Vec<String>, PlatformError> {
        Ok(storage::list_objects(
            &self.maps.read(),
            self.backends.objects.as_ref(),
            application,
            bucket,
        )?)
    }
}
