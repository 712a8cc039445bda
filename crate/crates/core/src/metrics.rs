//! Per-resource utilization snapshots.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{ResourceId, ResourceRecord};

pub const DEFAULT_STALENESS: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub resource_id: ResourceId,
    pub cpu_used: f64,
    pub memory_used: u64,
    /// Bytes per second.
    pub io_bandwidth_used: f64,
    pub gpu_used: f64,
    pub per_node_load: Vec<f64>,
    /// Sample time in provider clock seconds.
    pub timestamp: f64,
}

impl MetricsSnapshot {
    pub fn idle(resource: &ResourceRecord, timestamp: f64) -> Self {
        MetricsSnapshot {
            resource_id: resource.resource_id,
            cpu_used: 0.0,
            memory_used: 0,
            io_bandwidth_used: 0.0,
            gpu_used: 0.0,
            per_node_load: vec![0.0; resource.node as usize],
            timestamp,
        }
    }

    /// Fraction of total CPU in use; what invoke-one balancing compares.
    pub fn cpu_load(&self, resource: &ResourceRecord) -> f64 {
        let total = resource.total_cpu();
        if total > 0.0 {
            self.cpu_used / total
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Available {
    pub memory_free: u64,
    pub cpu_free: f64,
    pub gpu_free: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("metrics unavailable for resource {id}: {reason}")]
    MetricsUnavailable { id: ResourceId, reason: String },
    #[error("snapshot for resource {snapshot} does not belong to resource {resource}")]
    MismatchedResource {
        resource: ResourceId,
        snapshot: ResourceId,
    },
}

/// Source of utilization samples.
pub trait MetricsProvider: Send + Sync {
    fn fetch(&self, resource: &ResourceRecord) -> Result<MetricsSnapshot, MetricsError>;

    /// Current time on the clock that stamps snapshots.
    fn now(&self) -> f64;
}

/// Latest snapshot for `resource`, refusing samples older than `staleness`.
pub fn fetch_snapshot(
    provider: &dyn MetricsProvider,
    resource: &ResourceRecord,
    staleness: Duration,
) -> Result<MetricsSnapshot, MetricsError> {
    let snap = provider.fetch(resource)?;
    let age = provider.now() - snap.timestamp;
    if age > staleness.as_secs_f64() {
        return Err(MetricsError::MetricsUnavailable {
            id: resource.resource_id,
            reason: format!("snapshot is stale ({age:.1}s old)"),
        });
    }
    Ok(snap)
}

/// Capacity minus usage, component-wise, clamped at zero.
pub fn available(
    resource: &ResourceRecord,
    snap: &MetricsSnapshot,
) -> Result<Available, MetricsError> {
    if resource.resource_id != snap.resource_id {
        return Err(MetricsError::MismatchedResource {
            resource: resource.resource_id,
            snapshot: snap.resource_id,
        });
    }
    Ok(Available {
        memory_free: resource.total_memory().saturating_sub(snap.memory_used),
        cpu_free: (resource.total_cpu() - snap.cpu_used).max(0.0),
        gpu_free: (resource.total_gpu() - snap.gpu_used).max(0.0),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimLoad {
    pub cpu_used: f64,
    pub memory_used: u64,
    pub io_bandwidth_used: f64,
    pub gpu_used: f64,
    pub per_node_load: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
struct SimMetricsState {
    now: f64,
    loads: BTreeMap<ResourceId, (SimLoad, f64)>,
    unreachable: BTreeMap<ResourceId, bool>,
}

/// In-process provider that echoes a configured load table. Resources with
/// no configured load report idle at the current time.
#[derive(Debug, Clone, Default)]
pub struct SimMetrics {
    state: Arc<Mutex<SimMetricsState>>,
}

impl SimMetrics {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the load and stamps it with the current clock.
    pub fn set_load(&self, id: ResourceId, load: SimLoad) {
        let mut st = self.state.lock();
        let now = st.now;
        st.loads.insert(id, (load, now));
    }

    pub fn set_unreachable(&self, id: ResourceId, unreachable: bool) {
        self.state.lock().unreachable.insert(id, unreachable);
    }

    pub fn advance(&self, seconds: f64) {
        self.state.lock().now += seconds;
    }
}

impl MetricsProvider for SimMetrics {
    fn fetch(&self, resource: &ResourceRecord) -> Result<MetricsSnapshot, MetricsError> {
        let st = self.state.lock();
        let id = resource.resource_id;
        if st.unreachable.get(&id).copied().unwrap_or(false) {
            return Err(MetricsError::MetricsUnavailable {
                id,
                reason: "endpoint unreachable".into(),
            });
        }
        let Some((load, stamp)) = st.loads.get(&id) else {
            return Ok(MetricsSnapshot::idle(resource, st.now));
        };
        let nodes = resource.node as usize;
        let per_node_load = match &load.per_node_load {
            Some(v) => {
                let mut v = v.clone();
                v.resize(nodes, 0.0);
                v
            }
            None => {
                let frac = (load.cpu_used / resource.total_cpu()).clamp(0.0, 1.0);
                vec![frac; nodes]
            }
        };
        Ok(MetricsSnapshot {
            resource_id: id,
            cpu_used: load.cpu_used,
            memory_used: load.memory_used,
            io_bandwidth_used: load.io_bandwidth_used,
            gpu_used: load.gpu_used,
            per_node_load,
            timestamp: *stamp,
        })
    }

    fn now(&self) -> f64 {
        self.state.lock().now
    }
}

/// Prometheus instant queries, one per metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromQueries {
    pub cpu: String,
    pub memory: String,
    pub io: String,
    pub gpu: String,
    /// Must return one series per node.
    pub per_node: String,
}

impl Default for PromQueries {
    fn default() -> Self {
        PromQueries {
            cpu: r#"sum(rate(node_cpu_seconds_total{mode!="idle"}[1m]))"#.into(),
            memory: "sum(node_memory_MemTotal_bytes - node_memory_MemAvailable_bytes)".into(),
            io: "sum(rate(node_disk_read_bytes_total[1m]) + rate(node_disk_written_bytes_total[1m]))"
                .into(),
            gpu: "sum(DCGM_FI_DEV_GPU_UTIL) / 100".into(),
            per_node: r#"1 - avg by (instance) (rate(node_cpu_seconds_total{mode="idle"}[1m]))"#
                .into(),
        }
    }
}

/// Queries each resource's Prometheus endpoint over HTTP.
pub struct PrometheusMetrics {
    queries: PromQueries,
    agent: ureq::Agent,
    epoch: Instant,
    epoch_unix: f64,
}

impl PrometheusMetrics {
    pub fn new(queries: PromQueries) -> Self {
        PrometheusMetrics {
            queries,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(5))
                .build(),
            epoch: Instant::now(),
            epoch_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
        }
    }

    fn query(&self, resource: &ResourceRecord, q: &str) -> Result<Vec<(f64, f64)>, MetricsError> {
        let unavailable = |reason: String| MetricsError::MetricsUnavailable {
            id: resource.resource_id,
            reason,
        };
        let body: serde_json::Value = self
            .agent
            .get(&format!("http://{}/api/v1/query", resource.prometheus))
            .query("query", q)
            .call()
            .map_err(|e| unavailable(e.to_string()))?
            .into_json()
            .map_err(|e| unavailable(e.to_string()))?;
        parse_instant_vector(&body).ok_or_else(|| unavailable("unexpected response shape".into()))
    }
}

/// Extracts `(timestamp, value)` pairs from a Prometheus instant-query body.
pub fn parse_instant_vector(body: &serde_json::Value) -> Option<Vec<(f64, f64)>> {
    if body.get("status")?.as_str()? != "success" {
        return None;
    }
    let result = body.get("data")?.get("result")?.as_array()?;
    result
        .iter()
        .map(|series| {
            let pair = series.get("value")?.as_array()?;
            let ts = pair.first()?.as_f64()?;
            let v: f64 = pair.get(1)?.as_str()?.parse().ok()?;
            Some((ts, v))
        })
        .collect()
}

impl MetricsProvider for PrometheusMetrics {
    fn fetch(&self, resource: &ResourceRecord) -> Result<MetricsSnapshot, MetricsError> {
        let scalar = |q: &str| -> Result<(f64, f64), MetricsError> {
            Ok(self.query(resource, q)?.first().copied().unwrap_or((self.now(), 0.0)))
        };
        let (ts, cpu) = scalar(&self.queries.cpu)?;
        let (_, mem) = scalar(&self.queries.memory)?;
        let (_, io) = scalar(&self.queries.io)?;
        let (_, gpu) = scalar(&self.queries.gpu)?;
        let mut per_node: Vec<f64> = self
            .query(resource, &self.queries.per_node)?
            .into_iter()
            .map(|(_, v)| v.clamp(0.0, 1.0))
            .collect();
        per_node.resize(resource.node as usize, 0.0);
        Ok(MetricsSnapshot {
            resource_id: resource.resource_id,
            cpu_used: cpu.max(0.0),
            memory_used: mem.max(0.0) as u64,
            io_bandwidth_used: io.max(0.0),
            gpu_used: gpu.max(0.0),
            per_node_load: per_node,
            timestamp: ts,
        })
    }

    fn now(&self) -> f64 {
        self.epoch_unix + self.epoch.elapsed().as_secs_f64()
    }
}
