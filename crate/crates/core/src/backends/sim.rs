//! In-process cluster fabric: function hosting, object stores and a link
//! model, all driven by virtual time.

use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    Behavior, BackendError, FaasProvider, FunctionDeployment, FunctionStatus, InvokeReply,
    ObjectStore,
};
use crate::aggregation::{weighted_average, WeightedVector};
use crate::functions::InvocationEnvelope;
use crate::registry::{ResourceId, ResourceManifest, ResourceRecord, Tier};
use crate::scheduler::RttMatrix;
use crate::storage::ObjectUrl;

/// One simulated cluster or device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResource {
    pub id: ResourceId,
    pub tier: Tier,
    pub node: u32,
    /// Per-node bytes.
    pub memory: u64,
    pub cpu: u32,
    pub storage: u64,
    pub gpunode: u32,
    pub gpu: u32,
}

impl SimResource {
    /// Registration manifest pointing at simulated endpoints.
    pub fn manifest(&self) -> ResourceManifest {
        let host = format!("sim-{}", self.id);
        ResourceManifest {
            name: self.tier.as_str().to_string(),
            node: self.node,
            memory: self.memory,
            cpu: self.cpu,
            storage: self.storage,
            gpunode: self.gpunode,
            gpu: self.gpu,
            gateway: format!("{host}:8080"),
            pwd: format!("gw-secret-{}", self.id),
            prometheus: format!("{host}:9090"),
            minio: format!("{host}:9000"),
            minio_access_key: format!("akey-{}", self.id),
            minio_secret_key: format!("skey-secret-{}", self.id),
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FabricTopology {
    pub resources: Vec<SimResource>,
    pub rtt_ms: RttMatrix,
    /// Symmetric link bandwidth, megabits per second.
    pub bandwidth_mbps: BTreeMap<(ResourceId, ResourceId), f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TopologyFile {
    resources: Vec<SimResourceFile>,
    #[serde(default)]
    rtt_ms: BTreeMap<String, f64>,
    #[serde(default)]
    bandwidth_mbps: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SimResourceFile {
    id: u32,
    tier: String,
    node: u32,
    memory: String,
    cpu: u32,
    storage: String,
    gpunode: u32,
    gpu: u32,
}

fn link_key(a: ResourceId, b: ResourceId) -> (ResourceId, ResourceId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn parse_pair(key: &str) -> Option<(ResourceId, ResourceId)> {
    let (a, b) = key.split_once('-')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn format_capacity(bytes: u64) -> String {
    const UNITS: [(&str, u32); 4] = [("TB", 40), ("GB", 30), ("MB", 20), ("KB", 10)];
    for (unit, shift) in UNITS {
        if bytes >= 1 << shift && bytes % (1 << shift) == 0 {
            return format!("{}{unit}", bytes >> shift);
        }
    }
    bytes.to_string()
}

impl FabricTopology {
    pub fn from_yaml(text: &str) -> Result<Self, String> {
        let file: TopologyFile = serde_yaml::from_str(text).map_err(|e| e.to_string())?;
        let mut resources = Vec::new();
        for r in file.resources {
            let tier = Tier::from_label(&r.tier).ok_or(format!("unknown tier `{}`", r.tier))?;
            let cap = |s: &str| {
                crate::registry::parse_capacity(s).ok_or(format!("bad capacity `{s}`"))
            };
            resources.push(SimResource {
                id: ResourceId(r.id),
                tier,
                node: r.node,
                memory: cap(&r.memory)?,
                cpu: r.cpu,
                storage: cap(&r.storage)?,
                gpunode: r.gpunode,
                gpu: r.gpu,
            });
        }
        resources.sort_by_key(|r| r.id);
        let known = |id: &ResourceId| resources.iter().any(|r| r.id == *id);
        let mut rtt_ms = RttMatrix::new();
        for (k, v) in file.rtt_ms {
            let (a, b) = parse_pair(&k).ok_or(format!("bad rtt key `{k}`"))?;
            if !known(&a) || !known(&b) {
                return Err(format!("rtt key `{k}` names an unknown resource"));
            }
            if !(v >= 0.0) {
                return Err(format!("rtt `{k}` must be non-negative"));
            }
            rtt_ms.set(a, b, v);
        }
        let mut bandwidth_mbps = BTreeMap::new();
        for (k, v) in file.bandwidth_mbps {
            let (a, b) = parse_pair(&k).ok_or(format!("bad bandwidth key `{k}`"))?;
            if !known(&a) || !known(&b) {
                return Err(format!("bandwidth key `{k}` names an unknown resource"));
            }
            if !(v > 0.0) {
                return Err(format!("bandwidth `{k}` must be positive"));
            }
            bandwidth_mbps.insert(link_key(a, b), v);
        }
        Ok(FabricTopology {
            resources,
            rtt_ms,
            bandwidth_mbps,
        })
    }

    pub fn to_yaml(&self) -> String {
        let file = TopologyFile {
            resources: self
                .resources
                .iter()
                .map(|r| SimResourceFile {
                    id: r.id.0,
                    tier: r.tier.as_str().into(),
                    node: r.node,
                    memory: format_capacity(r.memory),
                    cpu: r.cpu,
                    storage: format_capacity(r.storage),
                    gpunode: r.gpunode,
                    gpu: r.gpu,
                })
                .collect(),
            rtt_ms: self
                .rtt_ms
                .pairs()
                .map(|(a, b, v)| (format!("{a}-{b}"), v))
                .collect(),
            bandwidth_mbps: self
                .bandwidth_mbps
                .iter()
                .map(|((a, b), v)| (format!("{a}-{b}"), *v))
                .collect(),
        };
        serde_yaml::to_string(&file).expect("topology serializes")
    }

    pub fn resource(&self, id: ResourceId) -> Option<&SimResource> {
        self.resources.iter().find(|r| r.id == id)
    }

    pub fn bandwidth(&self, a: ResourceId, b: ResourceId) -> Option<f64> {
        self.bandwidth_mbps.get(&link_key(a, b)).copied()
    }

    fn direct_time(&self, bytes: u64, src: ResourceId, dst: ResourceId) -> Option<f64> {
        let bw = self.bandwidth(src, dst)?;
        let rtt = self.rtt_ms.get(src, dst);
        let rtt = if rtt.is_finite() { rtt } else { 0.0 };
        Some(bytes as f64 * 8.0 / (bw * 1e6) + rtt / 1000.0)
    }

    /// Seconds to move `bytes` from `src` to `dst`: serialization delay plus
    /// one RTT. Without a direct link, the fastest single intermediate hop
    /// is used.
    pub fn transfer_time(
        &self,
        bytes: u64,
        src: ResourceId,
        dst: ResourceId,
    ) -> Result<f64, BackendError> {
        if src == dst {
            return Ok(0.0);
        }
        if let Some(t) = self.direct_time(bytes, src, dst) {
            return Ok(t);
        }
        self.resources
            .iter()
            .filter(|hop| hop.id != src && hop.id != dst)
            .filter_map(|hop| {
                Some(self.direct_time(bytes, src, hop.id)? + self.direct_time(bytes, hop.id, dst)?)
            })
            .fold(None, |best: Option<f64>, t| Some(best.map_or(t, |b| b.min(t))))
            .ok_or(BackendError::NoLink { src, dst })
    }
}

#[derive(Debug, Clone)]
struct HostedFunction {
    deployment: FunctionDeployment,
    invocations: u64,
}

#[derive(Debug, Clone)]
struct StoredObject {
    version: u64,
    data: Vec<u8>,
}

#[derive(Debug, Clone)]
struct SimNode {
    tier: Tier,
    online: bool,
    functions: BTreeMap<String, HostedFunction>,
    buckets: BTreeMap<String, BTreeMap<String, StoredObject>>,
}

#[derive(Debug, Default)]
struct FabricState {
    nodes: BTreeMap<ResourceId, SimNode>,
    dispatched: u64,
}

/// Simulated fabric. Clones share state, so a restarted control plane sees
/// the same deployed functions and objects.
#[derive(Debug, Clone)]
pub struct SimFabric {
    topology: Arc<FabricTopology>,
    state: Arc<Mutex<FabricState>>,
}

impl SimFabric {
    pub fn new(topology: FabricTopology) -> Self {
        let nodes = topology
            .resources
            .iter()
            .map(|r| {
                (
                    r.id,
                    SimNode {
                        tier: r.tier,
                        online: true,
                        functions: BTreeMap::new(),
                        buckets: BTreeMap::new(),
                    },
                )
            })
            .collect();
        SimFabric {
            topology: Arc::new(topology),
            state: Arc::new(Mutex::new(FabricState {
                nodes,
                dispatched: 0,
            })),
        }
    }

    /// `n` single-node edge resources with ids `0..n` and no links.
    pub fn uniform(n: u32) -> Self {
        let resources = (0..n)
            .map(|i| SimResource {
                id: ResourceId(i),
                tier: Tier::Edge,
                node: 1,
                memory: 64 << 30,
                cpu: 32,
                storage: 400 << 30,
                gpunode: 0,
                gpu: 0,
            })
            .collect();
        SimFabric::new(FabricTopology {
            resources,
            rtt_ms: RttMatrix::new(),
            bandwidth_mbps: BTreeMap::new(),
        })
    }

    pub fn topology(&self) -> &FabricTopology {
        &self.topology
    }

    pub fn set_online(&self, id: ResourceId, online: bool) {
        if let Some(n) = self.state.lock().nodes.get_mut(&id) {
            n.online = online;
        }
    }

    /// Resources currently hosting `service`.
    pub fn hosts_of(&self, service: &str) -> Vec<ResourceId> {
        self.state
            .lock()
            .nodes
            .iter()
            .filter(|(_, n)| n.functions.contains_key(service))
            .map(|(id, _)| *id)
            .collect()
    }

    /// Total invocations dispatched to any hosted function.
    pub fn dispatched(&self) -> u64 {
        self.state.lock().dispatched
    }

    pub fn transfer_time(
        &self,
        bytes: u64,
        src: ResourceId,
        dst: ResourceId,
    ) -> Result<f64, BackendError> {
        self.topology.transfer_time(bytes, src, dst)
    }

    fn with_node<R>(
        &self,
        target: &ResourceRecord,
        f: impl FnOnce(&mut SimNode) -> Result<R, BackendError>,
    ) -> Result<R, BackendError> {
        let mut st = self.state.lock();
        match st.nodes.get_mut(&target.resource_id) {
            Some(node) if node.online => f(node),
            _ => Err(BackendError::Unreachable(target.resource_id)),
        }
    }

    fn read_input(&self, url: &str) -> Result<Vec<u8>, BackendError> {
        let url: ObjectUrl = url
            .parse()
            .map_err(|_| BackendError::Rejected(format!("bad input url `{url}`")))?;
        let st = self.state.lock();
        st.nodes
            .get(&url.resource_id)
            .filter(|n| n.online)
            .ok_or(BackendError::Unreachable(url.resource_id))?
            .buckets
            .get(&url.namespaced_bucket())
            .and_then(|b| b.get(&url.object))
            .map(|o| o.data.clone())
            .ok_or_else(|| BackendError::NoSuchObject(url.to_string()))
    }

    fn run_vector_average(&self, payload: &Value) -> Result<Value, BackendError> {
        let mut parts: Vec<WeightedVector> = Vec::new();
        if let Some(inputs) = payload.get("inputs").and_then(Value::as_array) {
            for u in inputs {
                let u = u
                    .as_str()
                    .ok_or_else(|| BackendError::Rejected("inputs must be urls".into()))?;
                let raw = self.read_input(u)?;
                parts.push(
                    serde_json::from_slice(&raw)
                        .map_err(|e| BackendError::Rejected(format!("{u}: {e}")))?,
                );
            }
        }
        if let Some(vectors) = payload.get("vectors") {
            let inline: Vec<WeightedVector> = serde_json::from_value(vectors.clone())
                .map_err(|e| BackendError::Rejected(e.to_string()))?;
            parts.extend(inline);
        }
        let avg = weighted_average(&parts).map_err(|e| BackendError::Rejected(e.to_string()))?;
        Ok(serde_json::to_value(avg).expect("vector serializes"))
    }
}

impl FaasProvider for SimFabric {
    fn deploy(
        &self,
        target: &ResourceRecord,
        deployment: &FunctionDeployment,
    ) -> Result<(), BackendError> {
        self.with_node(target, |node| {
            if let Some(syn) = &deployment.synthetic {
                if syn.behavior == Behavior::Delay && !syn.compute.contains_key(&node.tier) {
                    return Err(BackendError::Rejected(format!(
                        "compute table of {} has no {} entry",
                        deployment.service, node.tier
                    )));
                }
            }
            let invocations = node
                .functions
                .get(&deployment.service)
                .map_or(0, |f| f.invocations);
            node.functions.insert(
                deployment.service.clone(),
                HostedFunction {
                    deployment: deployment.clone(),
                    invocations,
                },
            );
            Ok(())
        })
    }

    fn remove(&self, target: &ResourceRecord, service: &str) -> Result<(), BackendError> {
        self.with_node(target, |node| {
            node.functions
                .remove(service)
                .map(|_| ())
                .ok_or_else(|| BackendError::NoSuchFunction(service.to_string()))
        })
    }

    fn describe(
        &self,
        target: &ResourceRecord,
        service: &str,
    ) -> Result<FunctionStatus, BackendError> {
        let id = target.resource_id;
        self.with_node(target, |node| {
            let f = node
                .functions
                .get(service)
                .ok_or_else(|| BackendError::NoSuchFunction(service.to_string()))?;
            Ok(FunctionStatus {
                name: service.to_string(),
                status: "Ready".into(),
                replicas: 1,
                invocation_count: f.invocations,
                image: f.deployment.image.clone(),
                url: format!("sim://{id}/function/{service}"),
                labels: f.deployment.labels.clone(),
            })
        })
    }

    fn invoke(
        &self,
        target: &ResourceRecord,
        service: &str,
        body: &[u8],
    ) -> Result<InvokeReply, BackendError> {
        let (synthetic, tier) = {
            let mut st = self.state.lock();
            let node = match st.nodes.get_mut(&target.resource_id) {
                Some(n) if n.online => n,
                _ => return Err(BackendError::Unreachable(target.resource_id)),
            };
            let tier = node.tier;
            let f = node
                .functions
                .get_mut(service)
                .ok_or_else(|| BackendError::NoSuchFunction(service.to_string()))?;
            f.invocations += 1;
            let synthetic = f.deployment.synthetic.clone();
            st.dispatched += 1;
            (synthetic, tier)
        };
        let payload = match serde_json::from_slice::<InvocationEnvelope>(body) {
            Ok(env) => env.payload,
            Err(_) => serde_json::from_slice(body)
                .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(body).into_owned())),
        };
        let synthetic = synthetic.unwrap_or_else(super::SyntheticFunction::echo);
        let latency = synthetic.compute.get(&tier).copied().unwrap_or(0.0);
        let out = match synthetic.behavior {
            Behavior::Echo | Behavior::Delay => payload,
            Behavior::FixedOutput { size } => json!({ "output_bytes": size }),
            Behavior::VectorAverage => self.run_vector_average(&payload)?,
        };
        Ok(InvokeReply {
            body: serde_json::to_vec(&out).expect("json value serializes"),
            latency,
        })
    }
}

impl ObjectStore for SimFabric {
    fn make_bucket(&self, target: &ResourceRecord, bucket: &str) -> Result<(), BackendError> {
        self.with_node(target, |node| {
            if node.buckets.contains_key(bucket) {
                return Err(BackendError::BucketExists(bucket.to_string()));
            }
            node.buckets.insert(bucket.to_string(), BTreeMap::new());
            Ok(())
        })
    }

    fn remove_bucket(&self, target: &ResourceRecord, bucket: &str) -> Result<(), BackendError> {
        self.with_node(target, |node| match node.buckets.get(bucket) {
            None => Err(BackendError::NoSuchBucket(bucket.to_string())),
            Some(objects) if !objects.is_empty() => {
                Err(BackendError::BucketNotEmpty(bucket.to_string()))
            }
            Some(_) => {
                node.buckets.remove(bucket);
                Ok(())
            }
        })
    }

    fn put_object(
        &self,
        target: &ResourceRecord,
        bucket: &str,
        object: &str,
        data: &[u8],
    ) -> Result<u64, BackendError> {
        self.with_node(target, |node| {
            let objects = node
                .buckets
                .get_mut(bucket)
                .ok_or_else(|| BackendError::NoSuchBucket(bucket.to_string()))?;
            let version = objects.get(object).map_or(1, |o| o.version + 1);
            objects.insert(
                object.to_string(),
                StoredObject {
                    version,
                    data: data.to_vec(),
                },
            );
            Ok(version)
        })
    }

    fn get_object(
        &self,
        target: &ResourceRecord,
        bucket: &str,
        object: &str,
    ) -> Result<Vec<u8>, BackendError> {
        self.with_node(target, |node| {
            node.buckets
                .get(bucket)
                .ok_or_else(|| BackendError::NoSuchBucket(bucket.to_string()))?
                .get(object)
                .map(|o| o.data.clone())
                .ok_or_else(|| BackendError::NoSuchObject(object.to_string()))
        })
    }

    fn list_objects(
        &self,
        target: &ResourceRecord,
        bucket: &str,
    ) -> Result<Vec<String>, BackendError> {
        self.with_node(target, |node| {
            Ok(node
                .buckets
                .get(bucket)
                .ok_or_else(|| BackendError::NoSuchBucket(bucket.to_string()))?
                .keys()
                .cloned()
                .collect())
        })
    }

    fn delete_object(
        &self,
        target: &ResourceRecord,
        bucket: &str,
        object: &str,
    ) -> Result<(), BackendError> {
        self.with_node(target, |node| {
            node.buckets
                .get_mut(bucket)
                .ok_or_else(|| BackendError::NoSuchBucket(bucket.to_string()))?
                .remove(object)
                .map(|_| ())
                .ok_or_else(|| BackendError::NoSuchObject(object.to_string()))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::SyntheticFunction;
    use crate::fixtures;

    fn record(id: u32) -> ResourceRecord {
        SimResource {
            id: ResourceId(id),
            tier: Tier::Edge,
            node: 1,
            memory: 1 << 30,
            cpu: 4,
            storage: 1 << 30,
            gpunode: 0,
            gpu: 0,
        }
        .manifest()
        .into_record(ResourceId(id))
    }

    fn deployment(synthetic: SyntheticFunction) -> FunctionDeployment {
        FunctionDeployment {
            service: "app.fn".into(),
            image: "example/fn:latest".into(),
            handler: "handler".into(),
            labels: BTreeMap::new(),
            synthetic: Some(synthetic),
        }
    }

    #[test]
    fn deploy_then_describe() {
        let fabric = SimFabric::uniform(2);
        fabric.deploy(&record(0), &deployment(SyntheticFunction::echo())).unwrap();
        let st = fabric.describe(&record(0), "app.fn").unwrap();
        assert_eq!((st.status.as_str(), st.replicas, st.invocation_count), ("Ready", 1, 0));
        assert!(matches!(
            fabric.describe(&record(1), "app.fn"),
            Err(BackendError::NoSuchFunction(_))
        ));
    }

    #[test]
    fn echo_after_compute_latency() {
        let fabric = SimFabric::uniform(1);
        let syn = SyntheticFunction {
            behavior: Behavior::Delay,
            compute: [(Tier::Edge, 2.5)].into(),
        };
        fabric.deploy(&record(0), &deployment(syn)).unwrap();
        let reply = fabric.invoke(&record(0), "app.fn", br#"{"x": 1}"#).unwrap();
        assert_eq!(reply.latency, 2.5);
        assert_eq!(serde_json::from_slice::<Value>(&reply.body).unwrap(), json!({"x": 1}));
        assert_eq!(fabric.describe(&record(0), "app.fn").unwrap().invocation_count, 1);
    }

    #[test]
    fn delay_without_tier_entry_is_rejected() {
        let fabric = SimFabric::uniform(1);
        let syn = SyntheticFunction {
            behavior: Behavior::Delay,
            compute: [(Tier::Cloud, 1.0)].into(),
        };
        assert!(matches!(
            fabric.deploy(&record(0), &deployment(syn)),
            Err(BackendError::Rejected(_))
        ));
    }

    #[test]
    fn offline_resource_is_unreachable() {
        let fabric = SimFabric::uniform(1);
        fabric.set_online(ResourceId(0), false);
        assert_eq!(
            fabric.deploy(&record(0), &deployment(SyntheticFunction::echo())),
            Err(BackendError::Unreachable(ResourceId(0)))
        );
        assert!(fabric.make_bucket(&record(0), "b").is_err());
        assert!(fabric.deploy(&record(7), &deployment(SyntheticFunction::echo())).is_err());
    }

    #[test]
    fn vector_average_inline() {
        let fabric = SimFabric::uniform(1);
        let syn = SyntheticFunction {
            behavior: Behavior::VectorAverage,
            compute: BTreeMap::new(),
        };
        fabric.deploy(&record(0), &deployment(syn)).unwrap();
        let body = json!({"vectors": [{"weights": [1.0, 0.0], "count": 1}, {"weights": [0.0, 4.0], "count": 3}]});
        let reply = fabric
            .invoke(&record(0), "app.fn", body.to_string().as_bytes())
            .unwrap();
        let out: WeightedVector = serde_json::from_slice(&reply.body).unwrap();
        assert_eq!(out.weights, vec![0.25, 3.0]);
        assert_eq!(out.count, 4);
    }

    #[test]
    fn object_versions_increase() {
        let fabric = SimFabric::uniform(1);
        fabric.make_bucket(&record(0), "app-b").unwrap();
        assert_eq!(fabric.put_object(&record(0), "app-b", "o", b"1").unwrap(), 1);
        assert_eq!(fabric.put_object(&record(0), "app-b", "o", b"2").unwrap(), 2);
        assert_eq!(fabric.get_object(&record(0), "app-b", "o").unwrap(), b"2");
        assert_eq!(
            fabric.remove_bucket(&record(0), "app-b"),
            Err(BackendError::BucketNotEmpty("app-b".into()))
        );
    }

    #[test]
    fn transfer_time_rules() {
        let topo = fixtures::reference_topology();
        let iot = ResourceId(0);
        let edge = ResourceId(8);
        let cloud = ResourceId(10);
        assert_eq!(topo.transfer_time(123, iot, iot).unwrap(), 0.0);
        let up_cloud = topo.transfer_time(92_000_000, iot, cloud).unwrap();
        assert!((up_cloud - 92.7).abs() / 92.7 < 0.01, "{up_cloud}");
        let up_edge = topo.transfer_time(92_000_000, iot, edge).unwrap();
        assert!((up_edge - 8.5).abs() / 8.5 < 0.01, "{up_edge}");
        // iot 0 and iot 1 have no direct link; the best hop is their edge.
        let via = topo.transfer_time(1_000, ResourceId(0), ResourceId(1)).unwrap();
        let expected = 2.0 * topo.transfer_time(1_000, ResourceId(0), edge).unwrap();
        assert!((via - expected).abs() < 1e-12);

        let isolated = FabricTopology {
            resources: SimFabric::uniform(2).topology().resources.clone(),
            rtt_ms: RttMatrix::new(),
            bandwidth_mbps: BTreeMap::new(),
        };
        assert!(matches!(
            isolated.transfer_time(1, ResourceId(0), ResourceId(1)),
            Err(BackendError::NoLink { .. })
        ));
    }

    #[test]
    fn transfer_time_monotonicity() {
        let base = fixtures::reference_topology();
        let (a, b) = (ResourceId(0), ResourceId(8));
        let t = |topo: &FabricTopology, bytes| topo.transfer_time(bytes, a, b).unwrap();
        assert!(t(&base, 2_000) > t(&base, 1_000));
        let mut slower = base.clone();
        slower.bandwidth_mbps.insert((a, b), base.bandwidth(a, b).unwrap() / 2.0);
        assert!(t(&slower, 1_000) > t(&base, 1_000));
        let mut farther = base.clone();
        farther.rtt_ms.set(a, b, 50.0);
        assert!(t(&farther, 1_000) > t(&base, 1_000));
    }

    #[test]
    fn topology_yaml_round_trip() {
        let topo = fixtures::reference_topology();
        let again = FabricTopology::from_yaml(&topo.to_yaml()).unwrap();
        assert_eq!(again, topo);
        assert!(FabricTopology::from_yaml("resources: []\nrtt_ms: {\"0-1\": 1.0}\n").is_err());
    }
}
